#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace chns {

enum class PotentialKind { DoubleWell, MoreauYosida, RelaxedObstacle, DoubleObstacle };

/// Convex part Ψ₀ of the free energy. The concave part -κ/2 φ² lives in the
/// Cahn-Hilliard parameters.
struct Potential {
  PotentialKind kind = PotentialKind::DoubleWell;
  double alpha = 0.1;  // Moreau-Yosida penalty
  double r = 2.0;      // relaxed-obstacle exponent
  double s = 1.0;      // relaxed-obstacle scale
  double lower = -1.0;
  double upper = 1.0;

  static Potential double_well() { return {}; }
  static Potential moreau_yosida(double alpha);
  static Potential relaxed_obstacle(double r, double s = 1.0);
  static Potential double_obstacle(double lower = -1.0, double upper = 1.0);

  struct Eval {
    double value;
    double d1;
    double d2;
  };

  bool smooth() const { return kind != PotentialKind::DoubleObstacle; }
  /// Value and first two derivatives. For the obstacle, value is 0 inside the
  /// bounds and +inf outside, with zero derivatives.
  Eval eval(double phi) const;
  /// Subdifferential interval of the obstacle indicator at phi.
  std::pair<double, double> subgradient(double phi) const;
  std::string name() const;
};

inline constexpr double kInfiniteEnergy = std::numeric_limits<double>::infinity();

}  // namespace chns
