#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "chns/navier_stokes.hpp"

namespace chns {

/// Unknown layout of one coupled step on a single mesh:
/// [φ (P1) | μ (P1) | v (P2²) | p (P1) | λ], λ the zero-mean multiplier.
struct CoupledLayout {
  MeshPtr mesh;
  SpacePtr phase;     // P1
  SpacePtr velocity;  // P2 vector, zero trace
  int n1 = 0, nv = 0;

  static CoupledLayout create(const MeshPtr& mesh);
  /// Layout over existing spaces (same mesh).
  static CoupledLayout of(SpacePtr phase, SpacePtr velocity);
  int phi() const { return 0; }
  int mu() const { return n1; }
  int vel() const { return 2 * n1; }
  int pres() const { return 2 * n1 + nv; }
  int lam() const { return 3 * n1 + nv; }
  int size() const { return 3 * n1 + nv + 1; }
};

struct CoupledState {
  PhaseState phase;
  FlowState flow;
  Field phi_prev;  // φ at the instant before `phase`
  double lambda = 0.0;
};

/// Residual, Jacobian and the derivatives with respect to the earlier instants
/// of one step. In `Init` mode the phase pair is solved with a prescribed
/// velocity (decoupled start); in `Coupled` mode all unknowns are solved together.
class CoupledStep {
 public:
  enum class Mode { Init, Coupled };

  /// `cur` holds the instant the step starts from (φ, μ, v used; p, λ ignored).
  /// `phi_old` is the instant before it (unused in Init mode). `force` is the
  /// dual control load on the velocity space (may be empty).
  CoupledStep(const CoupledLayout& layout, Mode mode, const Vec& cur, const Vec& phi_old, const Vec& force,
              const Potential& pot, const ChParams& chp, const FluidParams& flp);

  Mode mode() const { return mode_; }
  /// Residual; `slack` supplies the obstacle multiplier (smooth potentials ignore it).
  Vec residual(const Vec& y, const Vec* slack = nullptr) const;
  /// Newton matrix at y. For the obstacle, `active` (±1/0 per phase dof) replaces
  /// μ-rows by the constraint rows φ_j = bound.
  SpMat jacobian(const Vec& y, const std::vector<signed char>* active = nullptr) const;
  /// ∂R/∂(state of `cur`), columns in the layout of `cur`.
  SpMat d_cur(const Vec& y) const;
  /// ∂R/∂φ_old, columns in the φ block of the layout.
  SpMat d_old(const Vec& y) const;
  /// Part of the momentum matrix produced by the diffusive mass flux ρ'·m∇μ_cur.
  SpMat flux_block() const;
  /// Momentum block, constant within the step.
  const SpMat& momentum_matrix() const { return momentum_; }

  /// Lumped dual norm of the residual: P1 rows weighted by 1/L, velocity rows by 1/diag(M).
  double norm(const Vec& r) const;

  struct Solution {
    Vec y;
    Vec slack;
    std::vector<signed char> active;
    int iterations = 0;
    double residual = 0.0;
  };
  /// Newton (smooth) or primal-dual active set (obstacle), warm-started from guess.
  Solution solve(const Vec& guess, const std::vector<signed char>& active_guess, const SolverControls& ctl) const;

 private:
  void assemble();
  Vec nonlinear(const Vec& phi) const;

  CoupledLayout L_;
  Mode mode_;
  Vec cur_, phi_old_, force_;
  Potential pot_;
  ChParams chp_;
  FluidParams flp_;
  SpMat lin_;        // everything except the nodal potential term
  SpMat momentum_;   // velocity block of lin_ (before Dirichlet rows)
  Vec fixed_;
  Vec lumped_;
  Vec weights_;
};

/// One coupled step. `force` is the dual control load (empty for none).
CoupledState chns_step(const CoupledState& s, const Vec& force, const Potential& pot, const ChParams& chp,
                       const FluidParams& flp, const SolverControls& ctl = {});
/// Decoupled start: (φ₀, μ₀) from φ_a transported by v_a; returns state with v = v_a.
CoupledState chns_init(const Field& phi_a, const Field& v_a, const Potential& pot, const ChParams& chp,
                       const FluidParams& flp, const SolverControls& ctl = {});

Vec pack(const CoupledLayout& layout, const CoupledState& s);
CoupledState unpack(const CoupledLayout& layout, const Vec& y, const Vec& phi_prev, const Vec& slack,
                    const std::vector<signed char>& active);

/// E(v, φ, φ_prev) = ∫ρ(φ_prev)|v|²/2 + Ginzburg-Landau energy of φ.
double total_energy(const CoupledState& s, const Potential& pot, const ChParams& chp, const FluidParams& flp);
double kinetic_energy(const Field& v, const Field& phi_prev, const FluidParams& flp);

struct EnergyReport {
  double energy_new = 0.0;
  double energy_old = 0.0;
  double kinetic_increment = 0.0;  // ½∫ρ(φ_{i-1})|v_{i+1}-v_i|²
  double gradient_increment = 0.0; // g/2 ∫|∇(φ_{i+1}-φ_i)|²
  double viscous = 0.0;            // τ ∫2η(φ_i)|Dv_{i+1}|²
  double mobility = 0.0;           // τ ∫m(φ_i)|∇μ_{i+1}|²
  double kappa_increment = 0.0;    // pκ/2 ∫(φ_{i+1}-φ_i)²
  double work = 0.0;               // τ⟨u, v_{i+1}⟩ - τ∫ρ(φ_{i-1}) g v_{i+1,y}
  double lhs() const {
    return energy_new + kinetic_increment + gradient_increment + viscous + mobility + kappa_increment;
  }
  double rhs() const { return energy_old + work; }
  bool holds(double rel = 1e-8) const { return lhs() <= rhs() + rel * std::max(1.0, std::abs(energy_old)); }
};

EnergyReport energy_step_check(const CoupledState& before, const CoupledState& after, const Vec& force,
                               const Potential& pot, const ChParams& chp, const FluidParams& flp);

/// Per-step CSV log.
void write_step_header(std::ostream& os);
void write_step_row(std::ostream& os, int step, double time, const CoupledState& s, const EnergyReport& r);

}  // namespace chns
