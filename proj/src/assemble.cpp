#include "chns/assemble.hpp"

namespace chns {

void Coefficient::require_mesh(const Mesh& m) const {
  if (field_ && field_->space->mesh().get() != &m)
    throw SpaceError("coefficient field lives on a different mesh");
  if (field_ && field_->space->components() != 1) throw SpaceError("coefficient field must be scalar");
}

namespace {

template <class Kernel>
SpMat assemble_scalar_blocks(const FeSpace& s, Kernel&& kernel) {
  const int nl = s.n_local(), ns = s.n_scalar();
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(s.mesh()->n_cells()) * nl * nl * s.components());
  double loc[6][6];
  for (int c = 0; c < s.mesh()->n_cells(); ++c) {
    const CellGeometry g = s.geometry(c);
    for (auto& row : loc)
      for (double& v : row) v = 0.0;
    kernel(c, g, loc);
    const auto& d = s.cell_dofs()[c];
    for (int comp = 0; comp < s.components(); ++comp)
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) trip.emplace_back(comp * ns + d[i], comp * ns + d[j], loc[i][j]);
  }
  SpMat A(s.n_dof(), s.n_dof());
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

}  // namespace

SpMat mass_matrix(const FeSpace& s, const Coefficient& w) {
  w.require_mesh(*s.mesh());
  const int deg = s.degree(), nl = s.n_local();
  return assemble_scalar_blocks(s, [&](int c, const CellGeometry& g, double (*loc)[6]) {
    double N[6];
    for (const auto& q : quad_rule(5)) {
      shape_values(deg, q.bary, N);
      const double wq = w(c, q.bary, g.map(q.bary));
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) loc[i][j] += wq * (N[i] * N[j] * q.weight * g.area);
    }
  });
}

SpMat stiffness_matrix(const FeSpace& s, const Coefficient& w) {
  w.require_mesh(*s.mesh());
  const int deg = s.degree(), nl = s.n_local();
  return assemble_scalar_blocks(s, [&](int c, const CellGeometry& g, double (*loc)[6]) {
    double dN[6][2];
    for (const auto& q : quad_rule(5)) {
      shape_grads(deg, q.bary, g, dN);
      const double wq = w(c, q.bary, g.map(q.bary));
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j)
          loc[i][j] += wq * ((dN[i][0] * dN[j][0] + dN[i][1] * dN[j][1]) * q.weight * g.area);
    }
  });
}

SpMat divergence_matrix(const FeSpace& v, const FeSpace& p) {
  if (v.mesh().get() != p.mesh().get() || v.components() != 2 || p.components() != 1)
    throw SpaceError("divergence_matrix: needs vector velocity and scalar pressure on one mesh");
  const int nv = v.n_local(), np = p.n_local(), nsv = v.n_scalar();
  Triplets trip;
  double dN[6][2], Q[6];
  for (int c = 0; c < v.mesh()->n_cells(); ++c) {
    const CellGeometry g = v.geometry(c);
    double loc[6][2][6] = {};
    for (const auto& q : quad_rule(5)) {
      shape_grads(v.degree(), q.bary, g, dN);
      shape_values(p.degree(), q.bary, Q);
      const double wa = q.weight * g.area;
      for (int i = 0; i < np; ++i)
        for (int j = 0; j < nv; ++j)
          for (int d = 0; d < 2; ++d) loc[i][d][j] -= Q[i] * dN[j][d] * wa;
    }
    const auto& dv = v.cell_dofs()[c];
    const auto& dp = p.cell_dofs()[c];
    for (int i = 0; i < np; ++i)
      for (int d = 0; d < 2; ++d)
        for (int j = 0; j < nv; ++j) trip.emplace_back(dp[i], d * nsv + dv[j], loc[i][d][j]);
  }
  SpMat B(p.n_dof(), v.n_dof());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

SpMat convection_matrix(const FeSpace& v, const Field& w) {
  if (w.space->mesh().get() != v.mesh().get() || w.space->components() != 2)
    throw SpaceError("convection_matrix: transport field must be a vector field on the same mesh");
  const int nl = v.n_local(), ns = v.n_scalar();
  Triplets trip;
  double N[6], dN[6][2];
  for (int c = 0; c < v.mesh()->n_cells(); ++c) {
    const CellGeometry g = v.geometry(c);
    double loc[6][6] = {};
    for (const auto& q : quad_rule(5)) {
      shape_values(v.degree(), q.bary, N);
      shape_grads(v.degree(), q.bary, g, dN);
      const double w0 = w.value(c, q.bary, 0), w1 = w.value(c, q.bary, 1);
      const double wa = q.weight * g.area;
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) loc[i][j] += N[i] * (w0 * dN[j][0] + w1 * dN[j][1]) * wa;
    }
    const auto& d = v.cell_dofs()[c];
    for (int comp = 0; comp < 2; ++comp)
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j) trip.emplace_back(comp * ns + d[i], comp * ns + d[j], loc[i][j]);
  }
  SpMat N2(v.n_dof(), v.n_dof());
  N2.setFromTriplets(trip.begin(), trip.end());
  return N2;
}

Vec lumped_mass(const FeSpace& s) {
  const SpMat M = mass_matrix(*s.scalar());
  Vec out = Vec::Zero(M.rows());
  for (int k = 0; k < M.outerSize(); ++k)
    for (SpMat::InnerIterator it(M, k); it; ++it) out[it.row()] += it.value();
  return out;
}

Vec load_vector(const FeSpace& s, const std::function<double(const Point&)>& f) {
  if (s.components() != 1) throw SpaceError("scalar load on vector space");
  Vec b = Vec::Zero(s.n_dof());
  double N[6];
  for (int c = 0; c < s.mesh()->n_cells(); ++c) {
    const CellGeometry g = s.geometry(c);
    const auto& d = s.cell_dofs()[c];
    for (const auto& q : quad_rule(5)) {
      shape_values(s.degree(), q.bary, N);
      const double fv = f(g.map(q.bary)) * q.weight * g.area;
      for (int i = 0; i < s.n_local(); ++i) b[d[i]] += fv * N[i];
    }
  }
  return b;
}

Vec load_vector(const FeSpace& s, const std::function<std::array<double, 2>(const Point&)>& f) {
  if (s.components() != 2) throw SpaceError("vector load on scalar space");
  Vec b = Vec::Zero(s.n_dof());
  const int ns = s.n_scalar();
  double N[6];
  for (int c = 0; c < s.mesh()->n_cells(); ++c) {
    const CellGeometry g = s.geometry(c);
    const auto& d = s.cell_dofs()[c];
    for (const auto& q : quad_rule(5)) {
      shape_values(s.degree(), q.bary, N);
      const auto fv = f(g.map(q.bary));
      const double wa = q.weight * g.area;
      for (int i = 0; i < s.n_local(); ++i) {
        b[d[i]] += fv[0] * N[i] * wa;
        b[ns + d[i]] += fv[1] * N[i] * wa;
      }
    }
  }
  return b;
}

Operator assemble(OperatorKind kind, SpacePtr row, SpacePtr col, const Coefficient& w,
                  const Field* transport) {
  switch (kind) {
    case OperatorKind::Mass:
      if (!row->same_layout(*col)) throw SpaceError("assemble: mass needs equal spaces");
      return {kind, mass_matrix(*row, w), row, col};
    case OperatorKind::Stiffness:
      if (!row->same_layout(*col)) throw SpaceError("assemble: stiffness needs equal spaces");
      return {kind, stiffness_matrix(*row, w), row, col};
    case OperatorKind::Divergence:
      return {kind, divergence_matrix(*col, *row), row, col};
    case OperatorKind::Convection:
      if (!transport) throw SpaceError("assemble: convection needs a transport field");
      if (!row->same_layout(*col)) throw SpaceError("assemble: convection needs equal spaces");
      return {kind, convection_matrix(*row, *transport), row, col};
  }
  throw SpaceError("assemble: unknown operator kind");
}

double integrate(const Field& f) {
  const FeSpace& s = *f.space;
  double total = 0.0;
  for (int c = 0; c < s.mesh()->n_cells(); ++c) {
    const double area = s.mesh()->cell_area(c);
    for (const auto& q : quad_rule(5)) total += f.value(c, q.bary) * q.weight * area;
  }
  return total;
}

double integrate_product(const Field& f, const Field& g) {
  if (f.space->mesh().get() != g.space->mesh().get()) throw SpaceError("integrate_product: mesh mismatch");
  double total = 0.0;
  for (int c = 0; c < f.mesh().n_cells(); ++c) {
    const double area = f.mesh().cell_area(c);
    for (const auto& q : quad_rule(5))
      for (int comp = 0; comp < f.space->components(); ++comp)
        total += f.value(c, q.bary, comp) * g.value(c, q.bary, comp) * q.weight * area;
  }
  return total;
}

void append_block(Triplets& t, const SpMat& B, int r0, int c0, double scale) {
  for (int k = 0; k < B.outerSize(); ++k)
    for (SpMat::InnerIterator it(B, k); it; ++it)
      t.emplace_back(r0 + static_cast<int>(it.row()), c0 + static_cast<int>(it.col()), scale * it.value());
}

void apply_dirichlet(SpMat& A, const std::vector<char>& mask, int offset) {
  const int n = static_cast<int>(mask.size());
  auto fixed = [&](int k) { return k >= offset && k < offset + n && mask[k - offset]; };
  Triplets trip;
  trip.reserve(A.nonZeros());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      if (!fixed(static_cast<int>(it.row())) && !fixed(static_cast<int>(it.col())))
        trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < n; ++k)
    if (mask[k]) trip.emplace_back(offset + k, offset + k, 1.0);
  SpMat out(A.rows(), A.cols());
  out.setFromTriplets(trip.begin(), trip.end());
  A = std::move(out);
}

}  // namespace chns
