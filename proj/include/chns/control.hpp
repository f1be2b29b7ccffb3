#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "chns/coupled.hpp"
#include "chns/linear_solver.hpp"

namespace chns {

/// Tensor-product cosine bump b(x) = cos²(π(x-cx)/2rx)·cos²(π(y-cy)/2ry) on the
/// rectangle |x-cx| < rx, |y-cy| < ry, acting on velocity component `component`.
struct Bump {
  double cx = 0.5, cy = 0.5;
  double rx = 0.25, ry = 0.25;
  int component = 1;
  double operator()(const Point& p) const;
};

/// Control representation: u = E c with c the coefficient vector of one time
/// instant. E maps into velocity coefficients; G = EᵀME is the L² Gram matrix
/// and F = PME (P drops Dirichlet rows) the load entering the momentum equation.
class ControlBasis {
 public:
  /// Every interior velocity dof is a coefficient.
  static ControlBasis full(SpacePtr velocity);
  /// Nodal interpolants of `amplitude`·bump; supports must lie inside the domain.
  static ControlBasis ansatz(SpacePtr velocity, std::vector<Bump> bumps, double amplitude = 1.0);

  bool is_full() const { return bumps_.empty(); }
  int size() const { return static_cast<int>(E_.cols()); }
  const SpacePtr& velocity() const { return velocity_; }
  const std::vector<Bump>& bumps() const { return bumps_; }
  double amplitude() const { return amplitude_; }
  const SpMat& expansion() const { return E_; }
  const SpMat& gram() const { return G_; }
  const SpMat& load() const { return F_; }

  Field expand(const Vec& c) const { return Field(velocity_, E_ * c); }
  Vec force(const Vec& c) const { return F_ * c; }
  /// G⁻¹d, the Riesz representative of a dual vector.
  Vec riesz(const Vec& d) const;

 private:
  void finish();
  SpacePtr velocity_;
  std::vector<Bump> bumps_;
  double amplitude_ = 1.0;
  SpMat E_, G_, F_;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> gram_factor_;
};

/// Coefficients of all controlled instants, row n-1 for instant n = 1..K-1.
using ControlCoeffs = Mat;

struct ObjectiveSpec {
  Field phi_d;        // desired terminal phase field, any mesh of the hierarchy
  double xi = 1e-11;  // control cost
};

/// Everything a forward solve needs: initial data, horizon, physics, control basis.
struct ControlProblem {
  CoupledLayout layout;
  Field phi_a, v_a;
  int K = 2;  // number of time instants, K-1 controlled steps
  ChParams chp;
  FluidParams flp;
  ControlBasis basis;
  ObjectiveSpec objective;
  SolverControls ctl;

  ControlCoeffs zero_control() const { return ControlCoeffs::Zero(K - 1, basis.size()); }
  void validate() const;
};

/// Packed states y_0..y_{K-1} (layout of CoupledLayout), with slacks and active sets.
struct Trajectory {
  std::vector<Vec> y;
  std::vector<Vec> slack;
  std::vector<std::vector<signed char>> active;
  Vec phi_a;  // φ before instant 0

  int size() const { return static_cast<int>(y.size()); }
  CoupledState state(const CoupledLayout& l, int n) const;
};

Trajectory forward_solve(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u);

/// Misfit data for ½‖φ - φ_d‖²: b_j = ∫φ_d ζ_j on the phase space and ‖φ_d‖².
struct Misfit {
  SpMat mass;
  Vec load;
  double target_sq = 0.0;
  static Misfit create(const CoupledLayout& l, const Field& phi_d);
  double value(const Vec& phi) const { return 0.5 * (phi.dot(mass * phi) - 2.0 * phi.dot(load) + target_sq); }
  Vec gradient(const Vec& phi) const { return mass * phi - load; }
};

double control_cost(const ControlProblem& prob, const ControlCoeffs& u);
double objective(const ControlProblem& prob, const Trajectory& traj, const ControlCoeffs& u);

/// Multipliers of the discrete step equations, one packed vector per instant.
/// Blocks: p (φ-equation), r (μ-equation), q (momentum), then pressure and
/// mean-value multipliers. λ_n = Ψ″(φ_n)·r_n.
struct AdjointState {
  std::vector<Vec> z;
  std::vector<Vec> lambda;
  std::vector<double> residual;  // ‖Jᵀz - rhs‖ per instant

  Vec p(const CoupledLayout& l, int n) const { return z[n].segment(l.phi(), l.n1); }
  Vec r(const CoupledLayout& l, int n) const { return z[n].segment(l.mu(), l.n1); }
  Vec q(const CoupledLayout& l, int n) const { return z[n].segment(l.vel(), l.nv); }
};

AdjointState adjoint_solve(const ControlProblem& prob, const Trajectory& traj, const Potential& pot);

struct Gradient {
  ControlCoeffs dual;   // ∂J/∂c, row per instant
  ControlCoeffs riesz;  // G⁻¹ · dual
  double norm = 0.0;    // sqrt(Σ dualᵀ G⁻¹ dual)
};

Gradient reduced_gradient(const ControlProblem& prob, const AdjointState& adj, const ControlCoeffs& u);
/// Forward, adjoint and gradient in one call.
Gradient evaluate_gradient(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u,
                           double* J = nullptr, Trajectory* traj = nullptr, AdjointState* adj = nullptr);

/// Σ_n cᵀ G d over instants.
double control_inner(const ControlProblem& prob, const ControlCoeffs& a, const ControlCoeffs& b);

struct Stationarity {
  double r1 = 0.0;  // max_n |(a_n, r_n)|
  double r2 = 0.0;  // max(0, -min_n (λ_n, r_n))
};

Stationarity c_stationarity_residual(const ControlProblem& prob, const Trajectory& traj, const AdjointState& adj);

/// One row of the optimization log.
struct OptRecord {
  int level = 0;
  int iteration = 0;
  double objective = 0.0;
  double measure = 0.0;  // ‖g‖ (steepest descent) or ‖h‖ (descent method)
  double alpha = 0.0;    // Moreau-Yosida penalty, 0 for the obstacle
  double step = 0.0;
  double r1 = 0.0, r2 = 0.0;
  double certificate = 0.0;  // J'(h) + ‖h‖², descent method only
};

void write_opt_header(std::ostream& os);
void write_opt_row(std::ostream& os, const OptRecord& r);

struct DescentOptions {
  double tol = 1e-6;           // absolute stopping tolerance on ‖g‖ or ‖h‖
  double rel_tol = 0.0;        // steepest descent also stops at ‖g‖ ≤ rel_tol·‖g₀‖
  int max_iter = 200;
  double armijo = 1e-4;
  double backtrack = 0.5;
  double initial_step = 1.0;
  double min_step = 1e-12;
  bool barzilai_borwein = true;  // later initial steps from the BB quotient
};

struct DescentResult {
  ControlCoeffs u;
  Trajectory traj;
  double objective = 0.0;
  double measure = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
  std::vector<OptRecord> log;
  AdjointState adjoint;  // at the returned iterate
};

/// Armijo steepest descent in the L² metric of the controls; smooth potentials.
DescentResult steepest_descent(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u0,
                               const DescentOptions& opt = {}, int level = 0);

struct PenalizationOptions {
  double alpha0 = 1e-1;
  double factor = 0.1;
  int max_levels = 6;
  double tol_c = 1e-3;
  DescentOptions descent;
};

struct PenalizationResult {
  ControlCoeffs u;
  Trajectory traj;
  std::vector<double> alphas;
  std::vector<Stationarity> residuals;
  std::vector<double> objectives;
  bool converged = false;
  std::vector<OptRecord> log;
};

/// Steepest descent for Moreau-Yosida(α) with α decreasing until the
/// C-stationarity residuals drop below tol_c.
PenalizationResult penalization_loop(const ControlProblem& prob, const ControlCoeffs& u0,
                                     const PenalizationOptions& opt = {});

/// Derivative of the single-step (K = 2) solution map in direction h.
struct DirectionalDerivative {
  Vec dy;                    // packed (δφ, δμ, δv, δp, δλ)
  bool regularized = false;  // biactive set found; Moreau-Yosida derivative used
  double residual = 0.0;
};

/// Linearization of the obstacle step at a solved state, restricted to the
/// inactive set. Factorizes once and reuses the factorization for many directions.
class StepDerivative {
 public:
  StepDerivative(const ControlProblem& prob, const Potential& pot, const Trajectory& traj, const ControlCoeffs& u,
                 double fallback_alpha = 1e-4);
  bool biactive() const { return biactive_count_ > 0; }
  bool regularized() const { return regularized_; }
  int biactive_count() const { return biactive_count_; }
  /// Directional derivative for a direction h of the single control instant.
  DirectionalDerivative apply(const Vec& h) const;
  /// Dual gradient of J̄ at u: J̄′(h) = gᵀh for every h.
  Vec gradient() const { return grad_; }
  /// J̄′(h) from a directional derivative solve.
  double derivative(const Vec& h) const;

 private:
  const ControlProblem& prob_;
  Vec c_;
  Vec phi_;
  int biactive_count_ = 0;
  bool regularized_ = false;
  SpMat J_;
  std::shared_ptr<SparseLU> lu_;
  Vec misfit_grad_;
  Vec grad_;
};

/// Throws if the biactive set is nonempty; otherwise the strict-complementarity derivative.
DirectionalDerivative directional_derivative_solve(const ControlProblem& prob, const Potential& pot,
                                                   const Trajectory& traj, const ControlCoeffs& u, const Vec& h);

struct DescentMethodResult {
  ControlCoeffs u;
  Trajectory traj;
  double objective = 0.0;
  double h_norm = 0.0;
  int iterations = 0;
  int robustifications = 0;
  bool converged = false;
  bool certified = true;  // J̄′(h) + ‖h‖² ≤ 0 at every iteration
  std::string message;
  std::vector<OptRecord> log;
};

/// Descent method for the double-obstacle problem with K = 2: the direction
/// solves min J̄′(h) + ‖h‖² by conjugate gradients, then an Armijo step.
DescentMethodResult descent_method(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u0,
                                   const DescentOptions& opt = {});

class BiactiveSet : public std::runtime_error {
 public:
  explicit BiactiveSet(int count)
      : std::runtime_error("biactive set is nonempty (" + std::to_string(count) + " dofs)"), count_(count) {}
  int count() const { return count_; }

 private:
  int count_;
};

}  // namespace chns
