#pragma once

#include <limits>
#include <vector>

#include "chns/navier_stokes.hpp"
#include "chns/pod.hpp"

namespace chns {

/// Galerkin projection of the convex-concave splitting step onto one POD
/// basis used for both φ and μ. Linear operators are reduced once; the
/// nonlinearity (and a phase-dependent mobility) is evaluated at full order.
struct ChRom {
  SpacePtr space;  // common mesh of the basis
  Mat modes;       // n × ℓ
  Vec lumped;      // nodal weights of the full space
  SpMat xgram;      // Gram matrix of the basis inner product on `space`
  Mat mass, stiffness, transport, mobility;
  bool constant_mobility = true;
  ChParams prm;
  Potential pot;

  int dim() const { return static_cast<int>(modes.cols()); }
  /// X-orthogonal projection P_ℓ of a field of the hierarchy.
  Vec project(const Field& f) const;
  Field expand(const Vec& c) const { return Field(space, modes * c); }
};

ChRom ch_rom_build(const PodBasis& basis, int ell, const ChParams& prm, const Potential& pot, const Field& velocity);

struct RomState {
  Vec c;  // phase coefficients
  Vec w;  // chemical potential coefficients
};

/// One reduced splitting step; Newton to ctl.tol on the reduced residual.
RomState ch_rom_step(const ChRom& rom, const RomState& s, const SolverControls& ctl = {}, int* iterations = nullptr);
/// Instant 0 is P_ℓ φ_a with zero chemical potential, then K-1 steps.
std::vector<RomState> ch_rom_run(const ChRom& rom, const Field& phi_a, int K, const SolverControls& ctl = {});

/// argmin ½‖v − u‖²_X over zero-trace u with b(u, q) = 0 for all q.
Field div_free_project(const Field& v, const FlowSpaces& fs, XSpace x = XSpace::L2);
/// Tq with (Tq, φ)_{H¹₀} = b(φ, q) for all φ.
Field supremizer(const Field& q, const FlowSpaces& fs);

class SingularSaddle : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NsRomParams {
  double Re = 1.0;
  double tau = 1e-2;
  int steps = 10;
  Vec force;  // dual vector on the velocity space, zero if empty
  double tol = 1e-12;
  int max_newton = 30;
};

struct NsRomTrajectory {
  std::vector<Vec> velocity;  // reduced coefficients per instant
  std::vector<Vec> pressure;  // empty for the velocity-only model
  std::vector<double> kinetic_energy;
  Mat velocity_modes, pressure_modes;
  double saddle_condition = 0.0;  // σ_max/σ_min of the reduced divergence matrix
};

/// Velocity ROM on a weakly divergence-free basis: pressure and continuity drop out.
/// Refuses modes whose divergence residual exceeds 1e-8.
NsRomTrajectory ns_rom_velocity(const Mat& modes, const FlowSpaces& fs, const Field& v0, const NsRomParams& prm);
/// POD velocity modes projected onto the weakly divergence-free space and re-orthonormalized in X.
Mat project_velocity_basis(const PodBasis& basis, const FlowSpaces& fs);

/// Reduced divergence matrix and its extreme singular values.
struct SaddleCheck {
  Mat B;
  double sigma_min = 0.0, sigma_max = 0.0;
  bool singular = true;
  double condition() const { return sigma_min > 0.0 ? sigma_max / sigma_min : std::numeric_limits<double>::infinity(); }
};
SaddleCheck check_reduced_saddle(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs);

/// Velocity modes enriched by the supremizers of the pressure modes, then
/// L²-orthonormalized; columns with negligible remainder are dropped.
Mat enrich_with_supremizers(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs);

/// Velocity-pressure ROM. Throws SingularSaddle when the reduced divergence
/// matrix is rank deficient.
NsRomTrajectory ns_rom_velocity_pressure(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs,
                                         const Field& v0, const NsRomParams& prm);

}  // namespace chns
