#pragma once

#include <vector>

#include "chns/cahn_hilliard.hpp"

namespace chns {

struct FluidParams {
  double rho1 = 1.0, rho2 = 1.0;
  double eta1 = 1.0, eta2 = 1.0;
  double gravity = 0.0;  // acts in -y
  double Re = 1.0;       // single-phase mode only
  double tau = 1e-3;

  double rho(double phi) const { return 0.5 * (rho1 + rho2) + 0.5 * (rho2 - rho1) * phi; }
  double drho() const { return 0.5 * (rho2 - rho1); }
  double eta(double phi) const { return 0.5 * (eta1 + eta2) + 0.5 * (eta2 - eta1) * phi; }
  double deta() const { return 0.5 * (eta2 - eta1); }
  void validate() const;
};

struct FlowState {
  Field v;  // P2 vector, zero trace
  Field p;  // P1, zero mean
};

/// Taylor-Hood spaces on one mesh plus the matrices every flow solve needs.
struct FlowSpaces {
  SpacePtr velocity;
  SpacePtr pressure;
  SpMat B;      // (Bv)_q = -∫ q div v
  Vec mean;     // ∫ q_j, the zero-mean constraint row
  static FlowSpaces create(const MeshPtr& mesh);
};

struct NsOptions {
  bool convection = true;  // false: Stokes limit
  double tol = 1e-10;
  int max_newton = 30;
};

/// Implicit Euler step: (v-v₀)/τ + c(v;v,·) + Re⁻¹(∇v,∇·) - (p, div ·) = f, b(v,q) = 0,
/// with the skew-symmetric convection c(w;v,ψ) = ½((w·∇)v,ψ) - ½((w·∇)ψ,v).
/// `force` is the dual vector ∫ f·ψ_i on the velocity space.
FlowState ns_step(const FlowState& prev, const Vec& force, const FluidParams& prm, const NsOptions& opt = {},
                  std::vector<double>* residual_history = nullptr);

/// max_q |b(v,q)| over the pressure basis.
double divergence_residual(const FlowSpaces& fs, const Field& v);
/// Skew convection matrix c(w;·,·) for a transport field w on the velocity mesh.
SpMat skew_convection(const FeSpace& velocity, const Field& w);

}  // namespace chns
