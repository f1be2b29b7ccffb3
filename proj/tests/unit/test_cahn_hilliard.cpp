#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "chns/cahn_hilliard.hpp"

using namespace chns;

namespace {

SpacePtr unit_p1(int n) { return FeSpace::create(build_rect_mesh(n, n, {0, 0, 1, 1}), 1); }

SpacePtr unit_p2_vec(const MeshPtr& m) { return FeSpace::create(m, 2, 2, true); }

double mass(const Field& f) { return lumped_mass(*f.space).dot(f.coeffs); }

double l2_diff(const Field& a, const Field& b) {
  const Vec d = a.coeffs - b.coeffs;
  return std::sqrt(d.dot(mass_matrix(*a.space) * d));
}

// Disc of radius 0.25 with a linear ramp of width 0.1, clipped to ±1.
Field clipped_disc(const SpacePtr& s) {
  return interpolate(s, [](const Point& p) {
    const double r = std::hypot(p.x - 0.5, p.y - 0.5);
    return std::clamp((0.25 - r) / 0.05, -1.0, 1.0);
  });
}

ChParams base_params() {
  ChParams prm;
  prm.sigma = 1.0;
  prm.eps = 0.05;
  prm.mobility = {1e-2, 0.5};
  prm.tau = 1e-3;
  return prm;
}

}  // namespace

TEST(Potential, MoreauYosidaInsideIsZero) {
  const auto e = Potential::moreau_yosida(0.1).eval(0.5);
  EXPECT_EQ(e.value, 0.0);
  EXPECT_EQ(e.d1, 0.0);
  EXPECT_EQ(e.d2, 0.0);
}

TEST(Potential, MoreauYosidaOutside) {
  const auto e = Potential::moreau_yosida(0.1).eval(1.5);
  EXPECT_NEAR(e.value, 1.25, 1e-14);
  EXPECT_NEAR(e.d1, 5.0, 1e-14);
  EXPECT_NEAR(Potential::moreau_yosida(0.1).eval(-1.5).d1, -5.0, 1e-14);
}

TEST(Potential, DoubleWellAtOne) {
  const auto e = Potential::double_well().eval(1.0);
  EXPECT_DOUBLE_EQ(e.value, 0.25);
  EXPECT_DOUBLE_EQ(e.d1, 1.0);
  EXPECT_DOUBLE_EQ(e.d2, 3.0);
}

TEST(Potential, RelaxedObstacleFormula) {
  const auto e = Potential::relaxed_obstacle(3.0, 2.0).eval(-1.5);
  EXPECT_NEAR(e.value, 2.0 / 3.0 * 0.125, 1e-14);
  EXPECT_NEAR(e.d1, -2.0 * 0.25, 1e-14);
}

TEST(Potential, ObstacleOutsideIsInfinite) {
  const auto p = Potential::double_obstacle();
  EXPECT_EQ(p.eval(0.3).value, 0.0);
  EXPECT_TRUE(std::isinf(p.eval(1.2).value));
  const auto up = p.subgradient(1.0);
  EXPECT_EQ(up.first, 0.0);
  EXPECT_TRUE(std::isinf(up.second));
  const auto in = p.subgradient(0.0);
  EXPECT_EQ(in.first, 0.0);
  EXPECT_EQ(in.second, 0.0);
}

TEST(Potential, SecondDerivativeMatchesFiniteDifferences) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const Potential pots[] = {Potential::double_well(), Potential::moreau_yosida(0.1),
                            Potential::relaxed_obstacle(4.0, 1.5)};
  for (const auto& pot : pots) {
    for (int k = 0; k < 20; ++k) {
      double x = u(rng);
      // keep away from the kinks of the piecewise potentials
      if (std::abs(std::abs(x) - 1.0) < 1e-3) x += 0.01;
      const double h = 1e-6;
      const double fd = (pot.eval(x + h).d1 - pot.eval(x - h).d1) / (2 * h);
      const double d2 = pot.eval(x).d2;
      EXPECT_NEAR(fd, d2, 1e-6 * std::max(1.0, std::abs(d2))) << pot.name() << " at " << x;
      EXPECT_GE(d2, 0.0);
    }
  }
}

TEST(Potential, RejectsBadParameters) {
  EXPECT_THROW(Potential::moreau_yosida(0.0), std::invalid_argument);
  EXPECT_THROW(Potential::relaxed_obstacle(1.5), std::invalid_argument);
  EXPECT_THROW(Potential::double_obstacle(0.2, 1.0), std::invalid_argument);
}

TEST(CahnHilliard, ZeroIsStationary) {
  const SpacePtr s = unit_p1(6);
  const PhaseState z = make_phase_state(Field(s), Potential::double_well());
  const PhaseState next = ch_step(z, Field(unit_p2_vec(s->mesh())), Potential::double_well(), base_params());
  EXPECT_EQ(next.phi.coeffs.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(next.mu.coeffs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CahnHilliard, TransportConservesMass) {
  const SpacePtr s = unit_p1(12);
  const Field v = interpolate(unit_p2_vec(s->mesh()), [](const Point& p) {
    const double sx = std::sin(M_PI * p.x), sy = std::sin(M_PI * p.y);
    return std::array<double, 2>{sx * sx * 2 * sy * std::cos(M_PI * p.y), -sy * sy * 2 * sx * std::cos(M_PI * p.x)};
  });
  const Potential pot = Potential::double_well();
  PhaseState st = make_phase_state(
      interpolate(s, [](const Point& p) { return std::tanh((0.3 - std::hypot(p.x - 0.4, p.y - 0.5)) / 0.05); }), pot);
  const ChParams prm = base_params();
  const double m0 = mass(st.phi);
  for (int k = 0; k < 10; ++k) {
    PhaseState next = ch_step(st, v, pot, prm);
    EXPECT_LE(ch_step_residual(st, next, v, pot, prm), 1e-10);
    st = std::move(next);
    EXPECT_LE(std::abs(mass(st.phi) - m0), 1e-11);
  }
}

TEST(CahnHilliard, SplittingEnergyDecaysWithoutFlow) {
  const SpacePtr s = unit_p1(16);
  const Potential pot = Potential::double_well();
  for (double tau : {1e-4, 1e-3, 1e-2}) {
    ChParams prm = base_params();
    prm.tau = tau;
    PhaseState st = make_phase_state(interpolate(s, [](const Point& p) {
      return 0.6 * std::sin(3 * M_PI * p.x) * std::cos(2 * M_PI * p.y) + 0.1;
    }), pot);
    double e = ch_energy(st, pot, prm);
    for (int k = 0; k < 10; ++k) {
      st = ch_step(st, Field(), pot, prm);
      const double next = ch_energy(st, pot, prm);
      EXPECT_LE(next, e + 1e-12 * std::abs(e)) << "tau " << tau << " step " << k;
      e = next;
    }
  }
}

TEST(CahnHilliard, EnergyConstantStates) {
  const SpacePtr s = unit_p1(4);
  ChParams prm = base_params();
  prm.kappa = 0.7;
  const double scale = prm.sigma / prm.eps;
  EXPECT_NEAR(ch_energy(Field(s), Potential::double_well(), prm), 0.0, 1e-15);
  Field c(s, Vec::Constant(s->n_dof(), 0.4));
  EXPECT_NEAR(ch_energy(c, Potential::double_obstacle(), prm), scale * (-0.35 * 0.16), 1e-13);
  EXPECT_NEAR(ch_energy(c, Potential::double_well(), prm), scale * (0.25 * std::pow(0.4, 4) - 0.35 * 0.16), 1e-13);
  c.coeffs[0] = 1.1;
  EXPECT_TRUE(std::isinf(ch_energy(c, Potential::double_obstacle(), prm)));
}

TEST(CahnHilliard, PdasInactiveMatchesUnconstrainedStep) {
  const SpacePtr s = unit_p1(10);
  const Field phi0 = interpolate(s, [](const Point& p) { return 0.3 * std::cos(M_PI * p.x) * std::cos(M_PI * p.y); });
  ChParams prm = base_params();
  prm.tau = 1e-5;
  const Potential obstacle = Potential::double_obstacle();
  const Potential my = Potential::moreau_yosida(0.1);  // zero on [-1,1]
  const PhaseState a = ch_step_pdas(make_phase_state(phi0, obstacle), Field(), obstacle, prm);
  const PhaseState b = ch_step_splitting(make_phase_state(phi0, my), Field(), my, prm);
  EXPECT_TRUE(a.active_plus.empty());
  EXPECT_TRUE(a.active_minus.empty());
  EXPECT_LE((a.phi.coeffs - b.phi.coeffs).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((a.mu.coeffs - b.mu.coeffs).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(CahnHilliard, PdasPlateauFeasibleAndComplementary) {
  const SpacePtr s = unit_p1(16);
  const Potential pot = Potential::double_obstacle();
  const ChParams prm = base_params();
  PhaseState st = make_phase_state(clipped_disc(s), pot);
  const double m0 = mass(st.phi);
  for (int k = 0; k < 100; ++k) {
    PhaseState next = ch_step_pdas(st, Field(), pot, prm);
    EXPECT_LE(ch_step_residual(st, next, Field(), pot, prm), 1e-10);
    st = std::move(next);
    ASSERT_GE(st.phi.coeffs.minCoeff(), -1.0 - 1e-10);
    ASSERT_LE(st.phi.coeffs.maxCoeff(), 1.0 + 1e-10);
  }
  EXPECT_FALSE(st.active_plus.empty());
  EXPECT_FALSE(st.active_minus.empty());
  std::vector<char> act(s->n_dof(), 0);
  for (int j : st.active_plus) {
    EXPECT_GE(st.slack.coeffs[j], 0.0);
    act[j] = 1;
  }
  for (int j : st.active_minus) {
    EXPECT_LE(st.slack.coeffs[j], 0.0);
    EXPECT_EQ(act[j], 0);
    act[j] = 1;
  }
  for (int j = 0; j < s->n_dof(); ++j)
    if (!act[j]) EXPECT_EQ(st.slack.coeffs[j], 0.0);
  EXPECT_LE(std::abs(mass(st.phi) - m0), 1e-11);
}

TEST(CahnHilliard, MoreauYosidaApproachesObstacleSolution) {
  const SpacePtr s = unit_p1(16);
  ChParams prm = base_params();
  prm.tau = 5e-3;
  const Potential obstacle = Potential::double_obstacle();
  const Field phi0 = clipped_disc(s);
  const PhaseState exact = ch_step_pdas(make_phase_state(phi0, obstacle), Field(), obstacle, prm);
  ASSERT_FALSE(exact.active_plus.empty());
  double prev = INFINITY;
  SolverControls ctl;
  ctl.max_newton = 60;
  for (double alpha : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
    const Potential my = Potential::moreau_yosida(alpha);
    const PhaseState reg = ch_step_splitting(make_phase_state(phi0, my), Field(), my, prm, ctl);
    const double err = l2_diff(reg.phi, exact.phi);
    EXPECT_LT(err, prev) << "alpha " << alpha;
    prev = err;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(CahnHilliard, RejectsInvalidParameters) {
  const SpacePtr s = unit_p1(4);
  ChParams prm = base_params();
  prm.mobility.base = 0.0;
  const Potential pot = Potential::double_well();
  EXPECT_THROW(ch_step(make_phase_state(Field(s), pot), Field(), pot, prm), std::invalid_argument);
  EXPECT_THROW(ch_step_pdas(make_phase_state(Field(s), pot), Field(), pot, base_params()), std::invalid_argument);
}
