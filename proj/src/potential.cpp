#include "chns/potential.hpp"

#include <cmath>
#include <sstream>

namespace chns {

Potential Potential::moreau_yosida(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("Moreau-Yosida penalty must be positive");
  Potential p;
  p.kind = PotentialKind::MoreauYosida;
  p.alpha = alpha;
  return p;
}

Potential Potential::relaxed_obstacle(double r, double s) {
  if (!(r >= 2.0) || !(s > 0.0)) throw std::invalid_argument("relaxed obstacle needs r >= 2, s > 0");
  Potential p;
  p.kind = PotentialKind::RelaxedObstacle;
  p.r = r;
  p.s = s;
  return p;
}

Potential Potential::double_obstacle(double lower, double upper) {
  if (!(lower < 0.0 && 0.0 < upper)) throw std::invalid_argument("obstacle bounds must satisfy lower < 0 < upper");
  Potential p;
  p.kind = PotentialKind::DoubleObstacle;
  p.lower = lower;
  p.upper = upper;
  return p;
}

Potential::Eval Potential::eval(double phi) const {
  switch (kind) {
    case PotentialKind::DoubleWell:
      return {0.25 * phi * phi * phi * phi, phi * phi * phi, 3.0 * phi * phi};
    case PotentialKind::MoreauYosida: {
      const double up = std::max(0.0, phi - 1.0), lo = std::min(0.0, phi + 1.0);
      const double out = (phi > 1.0 || phi < -1.0) ? 1.0 : 0.0;
      return {(up * up + lo * lo) / (2.0 * alpha), (up + lo) / alpha, out / alpha};
    }
    case PotentialKind::RelaxedObstacle: {
      const double up = std::max(0.0, phi - 1.0), lo = std::max(0.0, -1.0 - phi);
      const double value = s / r * (std::pow(up, r) + std::pow(lo, r));
      const double d1 = s * (std::pow(up, r - 1.0) - std::pow(lo, r - 1.0));
      double d2 = 0.0;
      if (up > 0.0) d2 += s * (r - 1.0) * std::pow(up, r - 2.0);
      if (lo > 0.0) d2 += s * (r - 1.0) * std::pow(lo, r - 2.0);
      return {value, d1, d2};
    }
    case PotentialKind::DoubleObstacle:
      if (phi < lower || phi > upper) return {kInfiniteEnergy, 0.0, 0.0};
      return {0.0, 0.0, 0.0};
  }
  return {0.0, 0.0, 0.0};
}

std::pair<double, double> Potential::subgradient(double phi) const {
  if (kind != PotentialKind::DoubleObstacle) {
    const double d = eval(phi).d1;
    return {d, d};
  }
  const double inf = kInfiniteEnergy;
  if (phi < lower || phi > upper) return {inf, -inf};  // empty
  if (phi == lower) return {-inf, 0.0};
  if (phi == upper) return {0.0, inf};
  return {0.0, 0.0};
}

std::string Potential::name() const {
  std::ostringstream os;
  switch (kind) {
    case PotentialKind::DoubleWell: os << "double_well"; break;
    case PotentialKind::MoreauYosida: os << "moreau_yosida(alpha=" << alpha << ")"; break;
    case PotentialKind::RelaxedObstacle: os << "relaxed_obstacle(r=" << r << ",s=" << s << ")"; break;
    case PotentialKind::DoubleObstacle: os << "double_obstacle[" << lower << "," << upper << "]"; break;
  }
  return os.str();
}

}  // namespace chns
