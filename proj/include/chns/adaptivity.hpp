#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "chns/fe_space.hpp"

namespace chns {

/// Per-cell error indicators, one vector per time instant.
struct IndicatorVector {
  std::vector<Vec> eta;

  long total_cells() const;
  /// Σ over instants and cells, accumulated in (instant, cell) order.
  double sum() const;
};

struct MarkParams {
  double theta_r = 0.7;
  double theta_c = 0.01;
  long a_max = 100000;
  void validate() const;
};

struct CellRef {
  int instant = 0;
  int cell = 0;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

/// Forward data of one trajectory for the indicators. `velocity` holds zero,
/// one (constant in time) or one field per instant; `adjoint` is empty or one
/// field per instant. Fields may live on any mesh of the hierarchy of `phi`.
struct IndicatorInput {
  std::vector<Field> phi;
  std::vector<Field> velocity;
  std::vector<Field> adjoint;
  double tau = 1.0;
};

/// η_T = ∫_T |∇φ_i|² + h_T² ∫_T ((φ_i − φ_{i−1})/τ + v·∇φ_i)², plus
/// ∫_T |∇r_i|² + h_T² ∫_T ((r_i − r_{i−1})/τ)² when an adjoint r is given.
IndicatorVector compute_indicators(const IndicatorInput& in);

/// Smallest set with Σ_M η ≥ θ Σ η: cells by descending η, ties by (instant, cell).
std::vector<CellRef> dorfler_mark(const IndicatorVector& eta, double theta_r);
/// Cells with η_T ≤ θ_c/A · Σ η, excluding `refined`; ordered by (instant, cell).
std::vector<CellRef> coarsen_mark(const IndicatorVector& eta, double theta_c,
                                  const std::vector<CellRef>& refined = {});

/// One bisection for refined cells, one level up for coarsened ones (where the
/// whole sibling group agrees), per instant. The root stays the same.
std::vector<MeshPtr> adapt_meshes(const std::vector<MeshPtr>& meshes, const std::vector<CellRef>& refine,
                                  const std::vector<CellRef>& coarsen);

struct AdaptCycle {
  int cycle = 0;
  long cells = 0;  // Σ_i |T^i| of the meshes the indicators were computed on
  long refined = 0;
  long coarsened = 0;
  double eta_sum = 0.0;
};

enum class AdaptStop { Budget, Stalled, CycleLimit };

struct AdaptResult {
  std::vector<MeshPtr> meshes;
  std::vector<AdaptCycle> cycles;
  std::vector<std::vector<CellRef>> refined;  // M_r of every cycle
  AdaptStop stop = AdaptStop::Budget;
};

/// Solves on the current meshes and returns the indicators.
using IndicatorFn = std::function<IndicatorVector(const std::vector<MeshPtr>&)>;

/// Solve, estimate, mark and adapt until Σ_i |T^i| > a_max. Also stops when a
/// cycle leaves every mesh unchanged or after `max_cycles` cycles.
AdaptResult adapt_loop(std::vector<MeshPtr> meshes, const IndicatorFn& solve, const MarkParams& mark,
                       int max_cycles = 50);

/// cycle,cells,refined,coarsened,eta_sum
void write_adapt_csv(std::ostream& os, const std::vector<AdaptCycle>& cycles);

}  // namespace chns
