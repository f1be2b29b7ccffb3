#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "chns/assemble.hpp"
#include "chns/potential.hpp"

namespace chns {

/// m(φ) = base · (1 + bulk · φ²/(1+φ²)); bounded, smooth, ≥ base.
struct Mobility {
  double base = 1.0;
  double bulk = 0.0;
  double operator()(double phi) const { return base * (1.0 + bulk * phi * phi / (1.0 + phi * phi)); }
  double d1(double phi) const {
    const double q = 1.0 + phi * phi;
    return base * bulk * 2.0 * phi / (q * q);
  }
};

struct ChParams {
  double sigma = 1.0;
  double eps = 0.02;
  double kappa = 1.0;
  Mobility mobility;
  double tau = 1e-3;
  /// true: σε on the gradient term and σ/ε on the potential; false: both 1.
  bool scaled = true;

  double grad_scale() const { return scaled ? sigma * eps : 1.0; }
  double pot_scale() const { return scaled ? sigma / eps : 1.0; }
  void validate() const;
};

struct PhaseState {
  Field phi;
  Field mu;
  Field slack;  // a ∈ ∂Ψ₀(φ), nodal
  std::vector<int> active_plus;
  std::vector<int> active_minus;

  const SpacePtr& space() const { return phi.space; }
};

struct SolverControls {
  double tol = 1e-10;
  int max_newton = 30;
  int max_active_set = 100;
};

class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, double residual, int iterations)
      : std::runtime_error(describe(what, residual, iterations)),
        residual_(residual),
        iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  static std::string describe(const std::string& what, double residual, int iterations) {
    char buf[96];
    std::snprintf(buf, sizeof buf, " (residual %.3e after %d iterations)", residual, iterations);
    return what + buf;
  }
  double residual_;
  int iterations_;
};

/// State with μ = 0 and a consistent nodal slack.
PhaseState make_phase_state(Field phi, const Potential& pot);
/// Moves a state to another mesh of the hierarchy (L² projection of φ, μ).
PhaseState transfer_state(const PhaseState& s, const SpacePtr& target, const Potential& pot);

/// Convex-concave splitting step with explicit transport; smooth potentials.
PhaseState ch_step_splitting(const PhaseState& s, const Field& velocity, const Potential& pot,
                             const ChParams& prm, const SolverControls& ctl = {});
/// Primal-dual active set step for the double obstacle.
PhaseState ch_step_pdas(const PhaseState& s, const Field& velocity, const Potential& pot,
                        const ChParams& prm, const SolverControls& ctl = {});
/// Dispatches on the potential kind.
PhaseState ch_step(const PhaseState& s, const Field& velocity, const Potential& pot, const ChParams& prm,
                   const SolverControls& ctl = {});

/// Residual norm of the step equations in the lumped dual norm.
double ch_step_residual(const PhaseState& before, const PhaseState& after, const Field& velocity,
                        const Potential& pot, const ChParams& prm);

/// Ginzburg-Landau energy: g/2 ∫|∇φ|² + p (Σ_j L_j Ψ₀(φ_j) − κ/2 ∫φ²).
double ch_energy(const Field& phi, const Potential& pot, const ChParams& prm);
inline double ch_energy(const PhaseState& s, const Potential& pot, const ChParams& prm) {
  return ch_energy(s.phi, pot, prm);
}

/// ∫ φ_old v·∇ζ_j for a velocity on any mesh of the same hierarchy.
Vec transport_load(const Field& phi_old, const Field& velocity);
/// Matrix T with T φ = transport_load(φ, velocity) for φ in `phase`.
SpMat transport_matrix(const SpacePtr& phase, const Field& velocity);

}  // namespace chns
