#include "chns/adaptivity.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "chns/transfer.hpp"

namespace chns {

long IndicatorVector::total_cells() const {
  long n = 0;
  for (const auto& e : eta) n += e.size();
  return n;
}

double IndicatorVector::sum() const {
  double s = 0.0;
  for (const auto& e : eta)
    for (double v : e) s += v;
  return s;
}

void MarkParams::validate() const {
  if (!(theta_r > 0.0 && theta_r < 1.0)) throw std::invalid_argument("theta_r must lie in (0,1)");
  if (!(theta_c > 0.0 && theta_c < 1.0)) throw std::invalid_argument("theta_c must lie in (0,1)");
  if (a_max < 1) throw std::invalid_argument("a_max must be positive");
}

namespace {

Field on_mesh(const Field& f, const MeshPtr& mesh) {
  if (f.space->mesh() == mesh) return f;
  if (!f.mesh().same_hierarchy(*mesh)) throw SpaceError("indicator input from a different hierarchy");
  if (is_refinement_of(*mesh, f.mesh())) return prolongate(f, mesh);
  return l2_project(f, f.space->on(mesh));
}

double grad_sq(const Field& f, int c, const CellGeometry& g) {
  const auto d = f.gradient(c, {1.0 / 3, 1.0 / 3, 1.0 / 3}, g);  // P1: constant per cell
  return d[0] * d[0] + d[1] * d[1];
}

// Adds ∫|∇f_i|² + h² ∫((f_i − f_{i−1})/τ + v·∇f_i)² cell by cell.
void add_sequence(std::vector<Vec>& eta, const std::vector<Field>& f, const std::vector<Field>& velocity,
                  double tau) {
  const auto& rule = quad_rule(5);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Field& cur = f[i];
    if (cur.space->degree() != 1 || cur.space->components() != 1)
      throw SpaceError("indicators expect scalar P1 fields");
    const MeshPtr& mesh = cur.space->mesh();
    Field prev, v;
    if (i > 0) prev = on_mesh(f[i - 1], mesh);
    if (!velocity.empty()) v = on_mesh(velocity.size() == 1 ? velocity[0] : velocity[i], mesh);
    for (int c = 0; c < mesh->n_cells(); ++c) {
      const CellGeometry g = cur.space->geometry(c);
      double e = grad_sq(cur, c, g) * g.area;
      if (i > 0 || v.space) {
        const auto grad = cur.gradient(c, {1.0 / 3, 1.0 / 3, 1.0 / 3}, g);
        double r2 = 0.0;
        for (const auto& q : rule) {
          double r = 0.0;
          if (i > 0) r += (cur.value(c, q.bary) - prev.value(c, q.bary)) / tau;
          if (v.space) r += v.value(c, q.bary, 0) * grad[0] + v.value(c, q.bary, 1) * grad[1];
          r2 += q.weight * r * r;
        }
        const double h = mesh->diameter(c);
        e += h * h * r2 * g.area;
      }
      eta[i][c] += e;
    }
  }
}

std::vector<CellRef> all_cells(const IndicatorVector& eta) {
  std::vector<CellRef> out;
  out.reserve(eta.total_cells());
  for (int i = 0; i < static_cast<int>(eta.eta.size()); ++i)
    for (int c = 0; c < eta.eta[i].size(); ++c) out.push_back({i, c});
  return out;
}

}  // namespace

IndicatorVector compute_indicators(const IndicatorInput& in) {
  const std::size_t K = in.phi.size();
  if (K == 0) throw std::invalid_argument("compute_indicators: empty trajectory");
  if (!(in.tau > 0.0)) throw std::invalid_argument("compute_indicators: tau must be positive");
  if (in.velocity.size() > 1 && in.velocity.size() != K)
    throw std::invalid_argument("compute_indicators: velocity needs zero, one or one per instant fields");
  if (!in.adjoint.empty() && in.adjoint.size() != K)
    throw std::invalid_argument("compute_indicators: adjoint needs one field per instant");

  IndicatorVector out;
  for (const auto& f : in.phi) out.eta.push_back(Vec::Zero(f.mesh().n_cells()));
  add_sequence(out.eta, in.phi, in.velocity, in.tau);
  if (!in.adjoint.empty()) {
    std::vector<Field> r;
    for (std::size_t i = 0; i < K; ++i) r.push_back(on_mesh(in.adjoint[i], in.phi[i].space->mesh()));
    add_sequence(out.eta, r, {}, in.tau);
  }
  return out;
}

std::vector<CellRef> dorfler_mark(const IndicatorVector& eta, double theta_r) {
  if (!(theta_r > 0.0 && theta_r < 1.0)) throw std::invalid_argument("dorfler_mark: theta_r must lie in (0,1)");
  const double target = theta_r * eta.sum();
  if (!(target > 0.0)) return {};
  std::vector<CellRef> order = all_cells(eta);
  // all_cells is already in (instant, cell) order, so a stable sort settles ties
  std::stable_sort(order.begin(), order.end(), [&](const CellRef& a, const CellRef& b) {
    return eta.eta[a.instant][a.cell] > eta.eta[b.instant][b.cell];
  });
  double acc = 0.0;
  std::size_t n = 0;
  for (; n < order.size() && acc < target; ++n) acc += eta.eta[order[n].instant][order[n].cell];
  order.resize(n);
  return order;
}

std::vector<CellRef> coarsen_mark(const IndicatorVector& eta, double theta_c, const std::vector<CellRef>& refined) {
  if (!(theta_c > 0.0 && theta_c < 1.0)) throw std::invalid_argument("coarsen_mark: theta_c must lie in (0,1)");
  const long A = eta.total_cells();
  if (A == 0) return {};
  const double threshold = theta_c / static_cast<double>(A) * eta.sum();
  std::vector<std::vector<char>> skip(eta.eta.size());
  for (std::size_t i = 0; i < eta.eta.size(); ++i) skip[i].assign(eta.eta[i].size(), 0);
  for (const auto& r : refined) skip.at(r.instant).at(r.cell) = 1;
  std::vector<CellRef> out;
  for (const auto& r : all_cells(eta))
    if (!skip[r.instant][r.cell] && eta.eta[r.instant][r.cell] <= threshold) out.push_back(r);
  return out;
}

std::vector<MeshPtr> adapt_meshes(const std::vector<MeshPtr>& meshes, const std::vector<CellRef>& refine,
                                  const std::vector<CellRef>& coarsen) {
  std::vector<std::vector<int>> target(meshes.size());
  std::vector<char> touched(meshes.size(), 0);
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    target[i].resize(meshes[i]->n_cells());
    for (int c = 0; c < meshes[i]->n_cells(); ++c) target[i][c] = static_cast<int>(meshes[i]->cell_ids()[c].depth);
  }
  for (const auto& r : coarsen) {
    int& t = target.at(r.instant).at(r.cell);
    if (t > 0) {
      --t;
      touched[r.instant] = 1;
    }
  }
  for (const auto& r : refine) {
    target.at(r.instant).at(r.cell) = static_cast<int>(meshes[r.instant]->cell_ids()[r.cell].depth) + 1;
    touched[r.instant] = 1;
  }
  std::vector<MeshPtr> out(meshes);
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    if (!touched[i]) continue;
    MeshPtr next = remesh(meshes[i], target[i]);
    // coarsening can be vetoed by siblings; keep the old object when nothing moved
    if (next->n_cells() == meshes[i]->n_cells() && is_refinement_of(*next, *meshes[i]) &&
        is_refinement_of(*meshes[i], *next))
      continue;
    out[i] = next;
  }
  return out;
}

AdaptResult adapt_loop(std::vector<MeshPtr> meshes, const IndicatorFn& solve, const MarkParams& mark,
                       int max_cycles) {
  mark.validate();
  if (meshes.empty()) throw std::invalid_argument("adapt_loop: no meshes");
  AdaptResult res;
  for (int cycle = 0;; ++cycle) {
    long cells = 0;
    for (const auto& m : meshes) cells += m->n_cells();
    if (cells > mark.a_max) {
      res.stop = AdaptStop::Budget;
      break;
    }
    if (cycle >= max_cycles) {
      res.stop = AdaptStop::CycleLimit;
      break;
    }
    const IndicatorVector eta = solve(meshes);
    if (eta.eta.size() != meshes.size()) throw std::invalid_argument("adapt_loop: one indicator vector per mesh");
    for (std::size_t i = 0; i < meshes.size(); ++i)
      if (eta.eta[i].size() != meshes[i]->n_cells())
        throw std::invalid_argument("adapt_loop: indicator size does not match mesh " + std::to_string(i));
    auto mr = dorfler_mark(eta, mark.theta_r);
    const auto mc = coarsen_mark(eta, mark.theta_c, mr);
    const auto next = adapt_meshes(meshes, mr, mc);
    res.cycles.push_back({cycle, cells, static_cast<long>(mr.size()), static_cast<long>(mc.size()), eta.sum()});
    res.refined.push_back(std::move(mr));
    const bool changed = !std::equal(next.begin(), next.end(), meshes.begin());
    meshes = next;
    if (!changed) {
      res.stop = AdaptStop::Stalled;
      break;
    }
  }
  res.meshes = std::move(meshes);
  return res;
}

void write_adapt_csv(std::ostream& os, const std::vector<AdaptCycle>& cycles) {
  os << "cycle,cells,refined,coarsened,eta_sum\n";
  char buf[128];
  for (const auto& c : cycles) {
    std::snprintf(buf, sizeof buf, "%d,%ld,%ld,%ld,%.17g\n", c.cycle, c.cells, c.refined, c.coarsened, c.eta_sum);
    os << buf;
  }
}

}  // namespace chns
