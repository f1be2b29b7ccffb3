#pragma once

#include <array>
#include <functional>
#include <vector>

#include "chns/cahn_hilliard.hpp"
#include "chns/pod.hpp"

namespace chns {

using ScalarFn = std::function<double(const Point&)>;
using VectorFn = std::function<std::array<double, 2>(const Point&)>;

/// Equilibrium-like profile tanh(d/(√2 ε)) around an ellipse, +1 inside.
ScalarFn ellipse_phase(Point center, double semi_x, double semi_y, double eps);
/// Pair of counter-rotating cells on (0,2)×(0,1) that pulls a centered blob apart.
VectorFn split_vortex(double speed);
/// Single divergence-free cell on (0,2)×(0,1) with zero normal flux; the
/// upper half moves right at up to `speed`.
VectorFn channel_vortex(double speed);
/// Smooth body force on the unit square for driven-cavity style runs; not divergence-free.
VectorFn swirl(double scale);

/// Connected components of {φ > level} for a P1 field; positive vertices of
/// one cell belong to the same component.
int phase_components(const Field& phi, double level = 0.0);

/// Interface-band refinement: cells touching {|φ| < band} go `levels`
/// bisections below the root, all others back to the root. A mesh is kept
/// until the inner band {|φ| < trigger} reaches a cell above the target depth.
struct BandAdaptivity {
  int levels = 0;
  double band = 0.99;
  double trigger = 0.9;
};

MeshPtr band_mesh(const MeshPtr& current, const Field& phi, const BandAdaptivity& a);
/// Initial mesh resolving the band of an analytic phase field.
MeshPtr initial_band_mesh(const MeshPtr& root, const ScalarFn& phi, const BandAdaptivity& a);

struct ChRunStats {
  double mass_drift = 0.0;    // max_i |∫φ_{i+1} − ∫φ_i|
  double energy_growth = 0.0; // max_i (E_{i+1} − E_i), ≤ 0 without transport
  int min_cells = 0, max_cells = 0;
  double seconds_per_step = 0.0;
};

struct ChRun {
  std::vector<PhaseState> states;  // instants 0..K−1, each on its own mesh
  std::vector<double> mass, energy;
  ChRunStats stats;
};

/// Transported Cahn-Hilliard run with a fixed velocity field. With adaptivity,
/// the mesh for step i+1 is built from φ_i and the state is L²-projected onto it.
ChRun run_cahn_hilliard(const MeshPtr& root, const ScalarFn& phi_a, const VectorFn& velocity, const Potential& pot,
                        const ChParams& prm, int K, const BandAdaptivity& adapt = {},
                        const SolverControls& ctl = {});

/// Same run on prescribed meshes, one per instant (all of one hierarchy).
ChRun run_cahn_hilliard(const std::vector<MeshPtr>& meshes, const ScalarFn& phi_a, const VectorFn& velocity,
                        const Potential& pot, const ChParams& prm, const SolverControls& ctl = {});

/// Phase snapshots of a run with the given weights rule.
SnapshotSet phase_snapshots(const ChRun& run, XSpace x, const std::vector<double>& weights);
/// Phase snapshots followed by chemical-potential snapshots, the latter
/// rescaled so that they carry `mu_share` of the phase snapshots' weighted energy.
SnapshotSet phase_potential_snapshots(const ChRun& run, XSpace x, const std::vector<double>& weights,
                                      double mu_share = 0.01);

}  // namespace chns
