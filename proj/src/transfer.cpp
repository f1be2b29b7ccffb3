#include "chns/transfer.hpp"

#include <algorithm>
#include <iterator>
#include <unordered_map>

#include "chns/linear_solver.hpp"

namespace chns {

const char* to_string(XSpace x) {
  switch (x) {
    case XSpace::L2: return "L2";
    case XSpace::H1: return "H1";
    case XSpace::H01: return "H01";
  }
  return "?";
}

XSpace parse_xspace(const std::string& s) {
  if (s == "L2") return XSpace::L2;
  if (s == "H1") return XSpace::H1;
  if (s == "H01") return XSpace::H01;
  throw SpaceError("unknown inner product '" + s + "' (expected L2, H1 or H01)");
}

std::vector<OverlayCell> overlay(const Mesh& a, const Mesh& b) {
  if (!a.same_hierarchy(b)) throw SpaceError("overlay: meshes do not share a hierarchy");
  std::vector<OverlayCell> out;
  out.reserve(std::max(a.n_cells(), b.n_cells()));
  if (&a == &b) {
    for (int c = 0; c < a.n_cells(); ++c) out.push_back({a.cell_points(c), c, c});
    return out;
  }
  for (int c = 0; c < a.n_cells(); ++c) {
    const CellId& id = a.cell_ids()[c];
    if (b.has_strict_descendants(id)) continue;
    const int cb = b.find_ancestor_or_self(id);
    if (cb < 0) throw SpaceError("overlay: no common descendant");
    out.push_back({a.cell_points(c), c, cb});
  }
  for (int c = 0; c < b.n_cells(); ++c) {
    const CellId& id = b.cell_ids()[c];
    if (a.has_strict_descendants(id) || a.find_cell(id) >= 0) continue;
    const int ca = a.find_ancestor_or_self(id);
    if (ca < 0) throw SpaceError("overlay: no common descendant");
    out.push_back({b.cell_points(c), ca, c});
  }
  return out;
}

Field prolongate(const Field& f, const MeshPtr& to) {
  const FeSpace& src = *f.space;
  const Mesh& from = *src.mesh();
  if (&from == to.get()) return f;
  if (!is_refinement_of(*to, from)) throw SpaceError("prolongate: target does not refine the source mesh");
  SpacePtr dst = src.on(to);

  std::unordered_map<Point, int, PointHash> src_index;
  src_index.reserve(src.n_scalar());
  for (int k = 0; k < src.n_scalar(); ++k) src_index.emplace(src.dof_points()[k], k);

  Field out(dst);
  const int ns_src = src.n_scalar(), ns_dst = dst->n_scalar();
  std::vector<char> done(ns_dst, 0);
  for (int c = 0; c < to->n_cells(); ++c) {
    const auto& d = dst->cell_dofs()[c];
    int anc = -1;
    std::optional<CellGeometry> g;
    for (int i = 0; i < dst->n_local(); ++i) {
      const int k = d[i];
      if (done[k]) continue;
      done[k] = 1;
      const Point& x = dst->dof_points()[k];
      if (auto it = src_index.find(x); it != src_index.end()) {
        for (int comp = 0; comp < src.components(); ++comp)
          out.coeffs[comp * ns_dst + k] = f.coeffs[comp * ns_src + it->second];
        continue;
      }
      if (anc < 0) {
        anc = from.find_ancestor_or_self(to->cell_ids()[c]);
        g.emplace(from.cell_points(anc));
      }
      const Bary b = g->barycentric(x);
      for (int comp = 0; comp < src.components(); ++comp)
        out.coeffs[comp * ns_dst + k] = f.value(anc, b, comp);
    }
  }
  return out;
}

Field restrict_to(const Field& fine, const SpacePtr& coarse) {
  const FeSpace& fs = *fine.space;
  if (fs.degree() != coarse->degree() || fs.components() != coarse->components())
    throw SpaceError("restrict_to: layouts differ");
  if (!is_refinement_of(*fs.mesh(), *coarse->mesh()))
    throw SpaceError("restrict_to: source mesh does not refine the target mesh");
  std::unordered_map<Point, int, PointHash> idx;
  idx.reserve(fs.n_scalar());
  for (int k = 0; k < fs.n_scalar(); ++k) idx.emplace(fs.dof_points()[k], k);
  Field out(coarse);
  const int nf = fs.n_scalar(), nc = coarse->n_scalar();
  for (int k = 0; k < nc; ++k) {
    auto it = idx.find(coarse->dof_points()[k]);
    if (it == idx.end()) throw SpaceError("restrict_to: coarse dof point missing from fine space");
    for (int comp = 0; comp < fs.components(); ++comp)
      out.coeffs[comp * nc + k] = fine.coeffs[comp * nf + it->second];
  }
  return out;
}

Field l2_project(const Field& f, const SpacePtr& target) {
  const FeSpace& src = *f.space;
  if (src.components() != target->components()) throw SpaceError("l2_project: component mismatch");
  if (src.mesh().get() == target->mesh().get() && src.degree() == target->degree())
    return Field(target, f.coeffs);
  const int nl = target->n_local(), ns = target->n_scalar();
  Vec rhs = Vec::Zero(target->n_dof());
  double N[6];
  for (const auto& oc : overlay(*src.mesh(), *target->mesh())) {
    const CellGeometry go(oc.p);
    const CellGeometry gs(src.mesh()->cell_points(oc.cell_a));
    const CellGeometry gt(target->mesh()->cell_points(oc.cell_b));
    const auto& d = target->cell_dofs()[oc.cell_b];
    for (const auto& q : quad_rule(5)) {
      const Point x = go.map(q.bary);
      shape_values(target->degree(), gt.barycentric(x), N);
      const Bary bs = gs.barycentric(x);
      const double wa = q.weight * go.area;
      for (int comp = 0; comp < src.components(); ++comp) {
        const double v = f.value(oc.cell_a, bs, comp) * wa;
        for (int i = 0; i < nl; ++i) rhs[comp * ns + d[i]] += v * N[i];
      }
    }
  }
  SpMat M = mass_matrix(*target);
  if (target->has_dirichlet()) {
    apply_dirichlet(M, target->dirichlet_mask());
    for (int k = 0; k < target->n_dof(); ++k)
      if (target->dirichlet_mask()[k]) rhs[k] = 0.0;
  }
  return Field(target, solve_sparse(M, rhs));
}

double inner_product(const Field& f, const Field& g, XSpace x) {
  if (f.space->components() != g.space->components()) throw SpaceError("inner_product: component mismatch");
  const Mesh& ma = *f.space->mesh();
  const Mesh& mb = *g.space->mesh();
  const bool val = x != XSpace::H01, grad = x != XSpace::L2;
  double total = 0.0;
  for (const auto& oc : overlay(ma, mb)) {
    const CellGeometry go(oc.p);
    const CellGeometry ga(ma.cell_points(oc.cell_a));
    const CellGeometry gb(mb.cell_points(oc.cell_b));
    double cell = 0.0;
    for (const auto& q : quad_rule(5)) {
      const Point p = go.map(q.bary);
      const Bary ba = ga.barycentric(p), bb = gb.barycentric(p);
      double s = 0.0;
      for (int comp = 0; comp < f.space->components(); ++comp) {
        if (val) s += f.value(oc.cell_a, ba, comp) * g.value(oc.cell_b, bb, comp);
        if (grad) {
          const auto df = f.gradient(oc.cell_a, ba, ga, comp);
          const auto dg = g.gradient(oc.cell_b, bb, gb, comp);
          s += df[0] * dg[0] + df[1] * dg[1];
        }
      }
      cell += s * q.weight;
    }
    total += cell * go.area;
  }
  return total;
}

SpMat gram_matrix(const FeSpace& s, XSpace x) {
  switch (x) {
    case XSpace::L2: return mass_matrix(s);
    case XSpace::H01: return stiffness_matrix(s);
    case XSpace::H1: {
      SpMat m = mass_matrix(s);
      m += stiffness_matrix(s);
      return m;
    }
  }
  throw SpaceError("gram_matrix: unknown inner product");
}

SpMat cross_gram_matrix(const FeSpace& a, const FeSpace& b, XSpace x) {
  if (a.components() != b.components()) throw SpaceError("cross_gram_matrix: component mismatch");
  const Mesh& ma = *a.mesh();
  const Mesh& mb = *b.mesh();
  const bool val = x != XSpace::H01, grad = x != XSpace::L2;
  const int na = a.n_local(), nb = b.n_local();
  const int sa = a.n_scalar(), sb = b.n_scalar();
  Triplets t;
  double Na[6], Nb[6], dNa[6][2], dNb[6][2], local[6][6];
  for (const auto& oc : overlay(ma, mb)) {
    const CellGeometry go(oc.p);
    const CellGeometry ga(ma.cell_points(oc.cell_a));
    const CellGeometry gb(mb.cell_points(oc.cell_b));
    for (auto& row : local) std::fill(std::begin(row), std::end(row), 0.0);
    for (const auto& q : quad_rule(5)) {
      const Point p = go.map(q.bary);
      const Bary ba = ga.barycentric(p), bb = gb.barycentric(p);
      const double w = q.weight * go.area;
      shape_values(a.degree(), ba, Na);
      shape_values(b.degree(), bb, Nb);
      if (grad) {
        shape_grads(a.degree(), ba, ga, dNa);
        shape_grads(b.degree(), bb, gb, dNb);
      }
      for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) {
          double s = 0.0;
          if (val) s += Na[i] * Nb[j];
          if (grad) s += dNa[i][0] * dNb[j][0] + dNa[i][1] * dNb[j][1];
          local[i][j] += s * w;
        }
    }
    const auto& da = a.cell_dofs()[oc.cell_a];
    const auto& db = b.cell_dofs()[oc.cell_b];
    for (int comp = 0; comp < a.components(); ++comp)
      for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j) t.emplace_back(comp * sa + da[i], comp * sb + db[j], local[i][j]);
  }
  SpMat m(a.n_dof(), b.n_dof());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace chns
