#include "chns/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "chns/transfer.hpp"

namespace chns {

ScalarFn ellipse_phase(Point center, double semi_x, double semi_y, double eps) {
  if (!(semi_x > 0.0) || !(semi_y > 0.0) || !(eps > 0.0)) throw std::invalid_argument("ellipse_phase: bad shape");
  return [=](const Point& p) {
    const double dx = (p.x - center.x) / semi_x, dy = (p.y - center.y) / semi_y;
    const double d = (1.0 - std::hypot(dx, dy)) * std::min(semi_x, semi_y);
    return std::tanh(d / (std::numbers::sqrt2 * eps));
  };
}

VectorFn split_vortex(double speed) {
  return [speed](const Point& p) -> std::array<double, 2> {
    const double pi = std::numbers::pi;
    const double sign = p.x <= 1.0 ? 1.0 : -1.0;
    return {sign * speed * std::sin(pi * p.x) * std::cos(pi * p.y),
            -sign * speed * std::sin(pi * p.y) * std::cos(pi * p.x)};
  };
}

VectorFn swirl(double scale) {
  return [scale](const Point& p) -> std::array<double, 2> {
    const double pi = std::numbers::pi;
    return {scale * (std::sin(pi * p.x) * std::cos(pi * p.y) + 0.5),
            scale * (-std::cos(pi * p.x) * std::sin(pi * p.y) + p.x)};
  };
}

int phase_components(const Field& phi, double level) {
  const FeSpace& s = *phi.space;
  if (s.degree() != 1 || s.components() != 1) throw SpaceError("phase_components: needs a scalar P1 field");
  std::vector<int> parent(s.n_dof());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (const auto& d : s.cell_dofs())
    for (int k = 0; k < 3; ++k)
      for (int l = k + 1; l < 3; ++l)
        if (phi.coeffs[d[k]] > level && phi.coeffs[d[l]] > level) parent[find(d[k])] = find(d[l]);
  int n = 0;
  for (int i = 0; i < s.n_dof(); ++i) n += phi.coeffs[i] > level && find(i) == i;
  return n;
}

VectorFn channel_vortex(double speed) {
  return [speed](const Point& p) -> std::array<double, 2> {
    const double pi = std::numbers::pi;
    return {-speed * std::sin(0.5 * pi * p.x) * std::cos(pi * p.y),
            0.5 * speed * std::cos(0.5 * pi * p.x) * std::sin(pi * p.y)};
  };
}

namespace {

bool touches_band(const Field& phi, int cell, double band) {
  const auto& d = phi.space->cell_dofs()[cell];
  double lo = phi.coeffs[d[0]], hi = lo;
  for (int k = 1; k < 3; ++k) {
    lo = std::min(lo, phi.coeffs[d[k]]);
    hi = std::max(hi, phi.coeffs[d[k]]);
  }
  return lo < band && hi > -band;
}

}  // namespace

MeshPtr band_mesh(const MeshPtr& current, const Field& phi, const BandAdaptivity& a) {
  if (phi.space->mesh() != current) throw SpaceError("band_mesh: phase field must live on the current mesh");
  if (a.levels <= 0) return current->root_ptr();
  const Mesh& m = *current;
  bool stale = false;
  for (int c = 0; c < m.n_cells() && !stale; ++c)
    stale = static_cast<int>(m.cell_ids()[c].depth) < a.levels && touches_band(phi, c, a.trigger);
  if (!stale) return current;
  std::vector<int> target(m.n_cells(), 0);
  for (int c = 0; c < m.n_cells(); ++c)
    if (touches_band(phi, c, a.band)) target[c] = a.levels;
  MeshPtr next = remesh(current, target);
  // keep the old object when nothing changed so that snapshots can share it
  if (next->cell_ids() == current->cell_ids()) return current;
  return next;
}

MeshPtr initial_band_mesh(const MeshPtr& root, const ScalarFn& phi, const BandAdaptivity& a) {
  MeshPtr m = root;
  if (a.levels <= 0) return m;
  // each pass resolves the band a little better; depth grows by at most `levels` per pass
  for (int pass = 0; pass < 3; ++pass) {
    const Field f = interpolate(FeSpace::create(m, 1), phi);
    const MeshPtr next = band_mesh(m, f, a);
    if (next == m) break;
    m = next;
  }
  return m;
}

namespace {

using MeshRule = std::function<MeshPtr(int instant, const MeshPtr& current, const PhaseState& s)>;

ChRun drive(const MeshPtr& first, const ScalarFn& phi_a, const VectorFn& velocity, const Potential& pot,
            const ChParams& prm, int K, const MeshRule& mesh_for, const SolverControls& ctl) {
  if (K < 1) throw std::invalid_argument("run_cahn_hilliard: need at least one instant");
  ChRun run;
  const Field v = interpolate(FeSpace::create(first->root_ptr(), 2, 2), velocity);
  MeshPtr mesh = first;
  PhaseState s = make_phase_state(interpolate(FeSpace::create(mesh, 1), phi_a), pot);
  if (!pot.smooth())
    for (auto& x : s.phi.coeffs) x = std::clamp(x, pot.lower, pot.upper);
  run.states.push_back(s);

  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 1; i < K; ++i) {
    const MeshPtr next = mesh_for(i, mesh, s);
    if (next != mesh) {
      s = transfer_state(s, FeSpace::create(next, 1), pot);
      mesh = next;
    }
    try {
      s = ch_step(s, v, pot, prm, ctl);
    } catch (const StepFailure& e) {
      throw StepFailure("step " + std::to_string(i) + ": " + e.what(), e.residual(), e.iterations());
    }
    run.states.push_back(s);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (const auto& st : run.states) {
    run.mass.push_back(integrate(st.phi));
    run.energy.push_back(ch_energy(st, pot, prm));
    const int nc = st.phi.mesh().n_cells();
    run.stats.min_cells = run.stats.min_cells ? std::min(run.stats.min_cells, nc) : nc;
    run.stats.max_cells = std::max(run.stats.max_cells, nc);
  }
  for (int i = 1; i < K; ++i) {
    run.stats.mass_drift = std::max(run.stats.mass_drift, std::abs(run.mass[i] - run.mass[i - 1]));
    run.stats.energy_growth = std::max(run.stats.energy_growth, run.energy[i] - run.energy[i - 1]);
  }
  run.stats.seconds_per_step = K > 1 ? secs / (K - 1) : 0.0;
  return run;
}

}  // namespace

ChRun run_cahn_hilliard(const MeshPtr& root, const ScalarFn& phi_a, const VectorFn& velocity, const Potential& pot,
                        const ChParams& prm, int K, const BandAdaptivity& adapt, const SolverControls& ctl) {
  if (!root->is_root()) throw MeshError("run_cahn_hilliard: expects the hierarchy root");
  const auto rule = [&](int, const MeshPtr& cur, const PhaseState& s) { return band_mesh(cur, s.phi, adapt); };
  return drive(initial_band_mesh(root, phi_a, adapt), phi_a, velocity, pot, prm, K, rule, ctl);
}

ChRun run_cahn_hilliard(const std::vector<MeshPtr>& meshes, const ScalarFn& phi_a, const VectorFn& velocity,
                        const Potential& pot, const ChParams& prm, const SolverControls& ctl) {
  if (meshes.empty()) throw std::invalid_argument("run_cahn_hilliard: need at least one instant");
  for (const auto& m : meshes)
    if (!m->same_hierarchy(*meshes.front())) throw MeshError("run_cahn_hilliard: meshes from different hierarchies");
  const auto rule = [&](int i, const MeshPtr&, const PhaseState&) { return meshes[i]; };
  return drive(meshes.front(), phi_a, velocity, pot, prm, static_cast<int>(meshes.size()), rule, ctl);
}

SnapshotSet phase_snapshots(const ChRun& run, XSpace x, const std::vector<double>& weights) {
  if (weights.size() != run.states.size()) throw std::invalid_argument("phase_snapshots: one weight per instant");
  SnapshotSet s;
  s.x = x;
  for (std::size_t i = 0; i < run.states.size(); ++i) s.add(run.states[i].phi, weights[i]);
  return s;
}

SnapshotSet phase_potential_snapshots(const ChRun& run, XSpace x, const std::vector<double>& weights,
                                      double mu_share) {
  if (!(mu_share > 0.0)) throw std::invalid_argument("phase_potential_snapshots: share must be positive");
  SnapshotSet s = phase_snapshots(run, x, weights);
  double phi_energy = 0.0, mu_energy = 0.0;
  for (std::size_t i = 0; i < run.states.size(); ++i) {
    phi_energy += weights[i] * inner_product(run.states[i].phi, run.states[i].phi, x);
    mu_energy += weights[i] * inner_product(run.states[i].mu, run.states[i].mu, x);
  }
  if (!(mu_energy > 0.0)) return s;
  const double scale = mu_share * phi_energy / mu_energy;
  for (std::size_t i = 0; i < run.states.size(); ++i) s.add(run.states[i].mu, scale * weights[i]);
  return s;
}

}  // namespace chns
