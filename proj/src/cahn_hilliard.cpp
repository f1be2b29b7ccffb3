#include "chns/cahn_hilliard.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "chns/linear_solver.hpp"
#include "chns/transfer.hpp"

namespace chns {

void ChParams::validate() const {
  if (!(sigma > 0.0) || !(eps > 0.0)) throw std::invalid_argument("ChParams: sigma and eps must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("ChParams: kappa must be nonnegative");
  if (!(mobility.base > 0.0) || !(mobility.bulk >= 0.0))
    throw std::invalid_argument("ChParams: mobility must be bounded below by a positive constant");
  if (!(tau > 0.0)) throw std::invalid_argument("ChParams: tau must be positive");
}

namespace {

constexpr double kRoundoffFloor = 1e-8;

Field nodal_slack(const Field& phi, const Potential& pot) {
  Field a(phi.space);
  if (pot.smooth())
    for (int j = 0; j < a.coeffs.size(); ++j) a.coeffs[j] = pot.eval(phi.coeffs[j]).d1;
  return a;
}

// Step data that does not depend on the new iterate.
struct ChSystem {
  SpacePtr space;
  int n = 0;
  SpMat M, A, Am;
  Vec L;
  Vec r1_fixed;  // -Mφ_o/τ - ∫φ_o v·∇ζ
  Vec r2_fixed;  // -pκMφ_o
  double g = 1.0, p = 1.0;

  ChSystem(const PhaseState& s, const Field& velocity, const ChParams& prm) : space(s.space()) {
    prm.validate();
    if (space->degree() != 1 || space->components() != 1) throw SpaceError("phase field must be scalar P1");
    n = space->n_dof();
    M = mass_matrix(*space);
    A = stiffness_matrix(*space);
    const Mobility mob = prm.mobility;
    Am = stiffness_matrix(*space, Coefficient(s.phi, [mob](double v) { return mob(v); }));
    L = lumped_mass(*space);
    g = prm.grad_scale();
    p = prm.pot_scale();
    const Vec Mphi = M * s.phi.coeffs;
    r1_fixed = -Mphi / prm.tau;
    if (velocity.space) r1_fixed -= transport_load(s.phi, velocity);
    r2_fixed = -p * prm.kappa * Mphi;
  }

  double dual_norm(const Vec& r) const {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += (r[j] * r[j] + r[n + j] * r[n + j]) / L[j];
    return std::sqrt(s);
  }

  // Residual with nodal slack a (already evaluated).
  Vec residual(const Vec& phi, const Vec& mu, const Vec& a, double tau) const {
    Vec r(2 * n);
    r.head(n) = M * phi / tau + r1_fixed + Am * mu;
    r.tail(n) = g * (A * phi) + p * L.cwiseProduct(a) + r2_fixed - M * mu;
    return r;
  }
};

}  // namespace

Vec transport_load(const Field& phi_old, const Field& velocity) {
  const FeSpace& s = *phi_old.space;
  const Mesh& pm = *s.mesh();
  const Mesh& vm = *velocity.space->mesh();
  if (velocity.space->components() != 2) throw SpaceError("transport velocity must be a vector field");
  Vec b = Vec::Zero(s.n_dof());
  double dN[6][2];
  for (const auto& oc : overlay(pm, vm)) {
    const CellGeometry go(oc.p);
    const CellGeometry gp(pm.cell_points(oc.cell_a));
    const bool same = &pm == &vm;
    std::optional<CellGeometry> gv;
    if (!same) gv.emplace(vm.cell_points(oc.cell_b));
    shape_grads(1, {1.0 / 3, 1.0 / 3, 1.0 / 3}, gp, dN);
    const auto& d = s.cell_dofs()[oc.cell_a];
    double flux[2] = {0.0, 0.0};
    for (const auto& q : quad_rule(5)) {
      const Point x = go.map(q.bary);
      const Bary bp = same ? q.bary : gp.barycentric(x);
      const Bary bv = same ? q.bary : gv->barycentric(x);
      const double ph = phi_old.value(oc.cell_a, bp) * q.weight * go.area;
      flux[0] += ph * velocity.value(oc.cell_b, bv, 0);
      flux[1] += ph * velocity.value(oc.cell_b, bv, 1);
    }
    for (int i = 0; i < 3; ++i) b[d[i]] += flux[0] * dN[i][0] + flux[1] * dN[i][1];
  }
  return b;
}

SpMat transport_matrix(const SpacePtr& phase, const Field& velocity) {
  const FeSpace& s = *phase;
  const Mesh& pm = *s.mesh();
  const Mesh& vm = *velocity.space->mesh();
  if (s.degree() != 1 || s.components() != 1) throw SpaceError("phase field must be scalar P1");
  if (velocity.space->components() != 2) throw SpaceError("transport velocity must be a vector field");
  Triplets t;
  double N[3], dN[6][2];
  for (const auto& oc : overlay(pm, vm)) {
    const CellGeometry go(oc.p);
    const CellGeometry gp(pm.cell_points(oc.cell_a));
    const bool same = &pm == &vm;
    std::optional<CellGeometry> gv;
    if (!same) gv.emplace(vm.cell_points(oc.cell_b));
    shape_grads(1, {1.0 / 3, 1.0 / 3, 1.0 / 3}, gp, dN);
    const auto& d = s.cell_dofs()[oc.cell_a];
    // flux[k] = ∫ ζ_k v over the overlay cell
    double flux[3][2] = {};
    for (const auto& q : quad_rule(5)) {
      const Point x = go.map(q.bary);
      const Bary bp = same ? q.bary : gp.barycentric(x);
      const Bary bv = same ? q.bary : gv->barycentric(x);
      shape_values(1, bp, N);
      const double w = q.weight * go.area;
      const double v0 = velocity.value(oc.cell_b, bv, 0), v1 = velocity.value(oc.cell_b, bv, 1);
      for (int k = 0; k < 3; ++k) {
        flux[k][0] += N[k] * v0 * w;
        flux[k][1] += N[k] * v1 * w;
      }
    }
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) t.emplace_back(d[i], d[k], flux[k][0] * dN[i][0] + flux[k][1] * dN[i][1]);
  }
  SpMat T(s.n_dof(), s.n_dof());
  T.setFromTriplets(t.begin(), t.end());
  return T;
}

PhaseState make_phase_state(Field phi, const Potential& pot) {
  PhaseState s;
  s.mu = Field(phi.space);
  s.slack = nodal_slack(phi, pot);
  if (!pot.smooth()) {
    for (int j = 0; j < phi.coeffs.size(); ++j) {
      if (phi.coeffs[j] >= pot.upper) s.active_plus.push_back(j);
      if (phi.coeffs[j] <= pot.lower) s.active_minus.push_back(j);
    }
  }
  s.phi = std::move(phi);
  return s;
}

PhaseState transfer_state(const PhaseState& s, const SpacePtr& target, const Potential& pot) {
  if (s.space()->mesh().get() == target->mesh().get()) return s;
  PhaseState out = make_phase_state(l2_project(s.phi, target), pot);
  out.mu = l2_project(s.mu, target);
  if (!pot.smooth()) {
    // projection can overshoot the obstacle by roundoff near plateaus
    for (int j = 0; j < out.phi.coeffs.size(); ++j)
      out.phi.coeffs[j] = std::clamp(out.phi.coeffs[j], pot.lower, pot.upper);
  }
  return out;
}

PhaseState ch_step_splitting(const PhaseState& s, const Field& velocity, const Potential& pot,
                             const ChParams& prm, const SolverControls& ctl) {
  if (!pot.smooth()) throw std::invalid_argument("ch_step_splitting needs a smooth potential");
  const ChSystem sys(s, velocity, prm);
  const int n = sys.n;
  Vec phi = s.phi.coeffs, mu = s.mu.coeffs;
  auto slack_of = [&](const Vec& ph) {
    Vec a(n);
    for (int j = 0; j < n; ++j) a[j] = pot.eval(ph[j]).d1;
    return a;
  };
  Vec r = sys.residual(phi, mu, slack_of(phi), prm.tau);
  double norm = sys.dual_norm(r);
  bool stalled = false;
  // The Jacobian only changes through Ψ₀″(φ); a factorization is reused while
  // it still contracts the residual by 4× per iteration.
  SparseLU lu;
  bool fresh = false;
  for (int it = 0; norm > ctl.tol && !stalled; ++it) {
    if (it >= ctl.max_newton) throw StepFailure("Cahn-Hilliard Newton did not converge", norm, it);
    if (!lu.ready()) {
      Triplets t;
      append_block(t, sys.M, 0, 0, 1.0 / prm.tau);
      append_block(t, sys.Am, 0, n);
      append_block(t, sys.A, n, 0, sys.g);
      for (int j = 0; j < n; ++j) t.emplace_back(n + j, j, sys.p * sys.L[j] * pot.eval(phi[j]).d2);
      append_block(t, sys.M, n, n, -1.0);
      SpMat J(2 * n, 2 * n);
      J.setFromTriplets(t.begin(), t.end());
      lu.factorize(J);
      fresh = true;
    }
    const Vec dx = lu.solve(-r);
    const Vec phi_f = phi + dx.head(n), mu_f = mu + dx.tail(n);
    const Vec r_f = sys.residual(phi_f, mu_f, slack_of(phi_f), prm.tau);
    const double n_f = sys.dual_norm(r_f);
    if (!fresh && !(n_f < 0.25 * norm)) {
      lu = SparseLU();  // stale: rebuild at the current iterate and retry
      continue;
    }
    fresh = false;
    if (n_f < norm) {
      stalled = n_f > 0.1 * norm && norm <= kRoundoffFloor;
      phi = phi_f;
      mu = mu_f;
      r = r_f;
      norm = n_f;
      continue;
    }
    double step = 0.5;
    for (;;) {
      const Vec phi_t = phi + step * dx.head(n), mu_t = mu + step * dx.tail(n);
      const Vec r_t = sys.residual(phi_t, mu_t, slack_of(phi_t), prm.tau);
      const double n_t = sys.dual_norm(r_t);
      if (n_t < norm || step < 1.0 / 1024) {
        // stiff penalties put a roundoff floor above tol; stop once Newton stalls there
        stalled = n_t > 0.1 * norm && norm <= kRoundoffFloor;
        phi = phi_t;
        mu = mu_t;
        r = r_t;
        norm = n_t;
        break;
      }
      step *= 0.5;
    }
    lu = SparseLU();
  }
  PhaseState out;
  out.phi = Field(s.space(), phi);
  out.mu = Field(s.space(), mu);
  out.slack = Field(s.space(), slack_of(phi));
  return out;
}

PhaseState ch_step_pdas(const PhaseState& s, const Field& velocity, const Potential& pot, const ChParams& prm,
                        const SolverControls& ctl) {
  if (pot.kind != PotentialKind::DoubleObstacle) throw std::invalid_argument("ch_step_pdas needs the double obstacle");
  const ChSystem sys(s, velocity, prm);
  const int n = sys.n;
  constexpr double c = 1.0;

  std::vector<signed char> state(n, 0);  // +1 upper active, -1 lower active
  for (int j : s.active_plus) state[j] = 1;
  for (int j : s.active_minus) state[j] = -1;

  Vec phi, mu, a = Vec::Zero(n);
  for (int it = 0;; ++it) {
    if (it >= ctl.max_active_set) throw StepFailure("active set iteration did not settle", sys.dual_norm(sys.residual(phi, mu, a, prm.tau)), it);
    Triplets t;
    append_block(t, sys.M, 0, 0, 1.0 / prm.tau);
    append_block(t, sys.Am, 0, n);
    Vec rhs(2 * n);
    rhs.head(n) = -sys.r1_fixed;
    rhs.tail(n) = -sys.r2_fixed;
    for (int k = 0; k < sys.A.outerSize(); ++k)
      for (SpMat::InnerIterator e(sys.A, k); e; ++e)
        if (!state[e.row()]) t.emplace_back(n + static_cast<int>(e.row()), static_cast<int>(e.col()), sys.g * e.value());
    for (int k = 0; k < sys.M.outerSize(); ++k)
      for (SpMat::InnerIterator e(sys.M, k); e; ++e)
        if (!state[e.row()]) t.emplace_back(n + static_cast<int>(e.row()), n + static_cast<int>(e.col()), -e.value());
    for (int j = 0; j < n; ++j) {
      if (!state[j]) continue;
      t.emplace_back(n + j, j, 1.0);
      rhs[n + j] = state[j] > 0 ? pot.upper : pot.lower;
    }
    SpMat J(2 * n, 2 * n);
    J.setFromTriplets(t.begin(), t.end());
    const Vec x = solve_sparse(J, rhs);
    phi = x.head(n);
    mu = x.tail(n);
    for (int j = 0; j < n; ++j) {
      if (state[j] > 0) phi[j] = pot.upper;
      if (state[j] < 0) phi[j] = pot.lower;
    }
    // recover the multiplier on active nodes from the second equation
    const Vec r2 = sys.g * (sys.A * phi) + sys.r2_fixed - sys.M * mu;
    for (int j = 0; j < n; ++j) a[j] = state[j] ? -r2[j] / (sys.p * sys.L[j]) : 0.0;

    bool same = true;
    for (int j = 0; j < n; ++j) {
      signed char next = 0;
      if (a[j] + c * (phi[j] - pot.upper) > 0.0) next = 1;
      else if (a[j] + c * (phi[j] - pot.lower) < 0.0) next = -1;
      if (next != state[j]) same = false;
      state[j] = next;
    }
    if (same) break;
  }

  const double res = sys.dual_norm(sys.residual(phi, mu, a, prm.tau));
  if (res > ctl.tol) throw StepFailure("active set step residual above tolerance", res, 0);
  PhaseState out;
  out.phi = Field(s.space(), phi);
  out.mu = Field(s.space(), mu);
  out.slack = Field(s.space(), a);
  for (int j = 0; j < n; ++j) {
    if (state[j] > 0) out.active_plus.push_back(j);
    if (state[j] < 0) out.active_minus.push_back(j);
  }
  return out;
}

PhaseState ch_step(const PhaseState& s, const Field& velocity, const Potential& pot, const ChParams& prm,
                   const SolverControls& ctl) {
  return pot.smooth() ? ch_step_splitting(s, velocity, pot, prm, ctl) : ch_step_pdas(s, velocity, pot, prm, ctl);
}

double ch_step_residual(const PhaseState& before, const PhaseState& after, const Field& velocity,
                        const Potential& pot, const ChParams& prm) {
  const ChSystem sys(before, velocity, prm);
  const Vec a = pot.smooth() ? nodal_slack(after.phi, pot).coeffs : after.slack.coeffs;
  return sys.dual_norm(sys.residual(after.phi.coeffs, after.mu.coeffs, a, prm.tau));
}

double ch_energy(const Field& phi, const Potential& pot, const ChParams& prm) {
  const FeSpace& s = *phi.space;
  const Vec& x = phi.coeffs;
  const SpMat A = stiffness_matrix(s);
  const SpMat M = mass_matrix(s);
  const Vec L = lumped_mass(s);
  double bulk = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double v = pot.eval(x[j]).value;
    if (std::isinf(v)) return kInfiniteEnergy;
    bulk += L[j] * v;
  }
  return 0.5 * prm.grad_scale() * x.dot(A * x) + prm.pot_scale() * (bulk - 0.5 * prm.kappa * x.dot(M * x));
}

}  // namespace chns
