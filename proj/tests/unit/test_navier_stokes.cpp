#include <gtest/gtest.h>

#include <cmath>

#include "chns/navier_stokes.hpp"

using namespace chns;

namespace {

// Stream function a(x)a(y) with a = x²(1-x)²; derivatives of a.
double a0(double x) { return x * x * (1 - x) * (1 - x); }
double a1(double x) { return 2 * x * (1 - x) * (1 - 2 * x); }
double a2(double x) { return 2 * (1 - 6 * x + 6 * x * x); }
double a3(double x) { return 12 * (2 * x - 1); }

std::array<double, 2> exact_v(const Point& p) { return {a0(p.x) * a1(p.y), -a1(p.x) * a0(p.y)}; }

double l2_error(const Field& v, const std::function<std::array<double, 2>(const Point&)>& f) {
  double s = 0.0;
  for (int c = 0; c < v.mesh().n_cells(); ++c) {
    CellGeometry g(v.mesh().cell_points(c));
    for (const auto& q : quad_rule(5)) {
      const auto e = f(g.map(q.bary));
      const double d0 = v.value(c, q.bary, 0) - e[0], d1 = v.value(c, q.bary, 1) - e[1];
      s += (d0 * d0 + d1 * d1) * q.weight * g.area;
    }
  }
  return std::sqrt(s);
}

FlowState rest(const MeshPtr& m) {
  const FlowSpaces fs = FlowSpaces::create(m);
  return {Field(fs.velocity), Field(fs.pressure)};
}

double kinetic(const Field& v) { return 0.5 * v.coeffs.dot(mass_matrix(*v.space) * v.coeffs); }

}  // namespace

TEST(NavierStokes, RestStateStaysAtRest) {
  const MeshPtr m = build_rect_mesh(4, 4, {0, 0, 1, 1});
  const FlowState s = rest(m);
  const FlowState next = ns_step(s, Vec::Zero(s.v.coeffs.size()), FluidParams{});
  EXPECT_EQ(next.v.coeffs.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(next.p.coeffs.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NavierStokes, StokesManufacturedSolutionConverges) {
  FluidParams prm;
  prm.Re = 1.0;
  prm.tau = 1e10;
  NsOptions opt;
  opt.convection = false;
  const auto forcing = [](const Point& p) {
    const double lap0 = a2(p.x) * a1(p.y) + a0(p.x) * a3(p.y);
    const double lap1 = -(a3(p.x) * a0(p.y) + a1(p.x) * a2(p.y));
    return std::array<double, 2>{-lap0 + 3 * p.x * p.x, -lap1};
  };
  std::vector<double> err;
  for (int n : {4, 8, 16}) {
    const MeshPtr m = build_rect_mesh(n, n, {0, 0, 1, 1});
    const FlowState s = rest(m);
    Vec f = load_vector(*s.v.space, forcing);
    for (int i = 0; i < f.size(); ++i)
      if (s.v.space->dirichlet_mask()[i]) f[i] = 0.0;
    const FlowState out = ns_step(s, f, prm, opt);
    err.push_back(l2_error(out.v, exact_v));
    EXPECT_NEAR(integrate(out.p), 0.0, 1e-12);
  }
  for (size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 2.5) << "level " << k;
}

TEST(NavierStokes, NewtonConvergesAndStaysSolenoidal) {
  const MeshPtr m = build_rect_mesh(8, 8, {0, 0, 1, 1});
  FluidParams prm;
  prm.Re = 200.0;
  prm.tau = 0.05;
  FlowState s = rest(m);
  const FlowSpaces fs = FlowSpaces::create(m);
  Vec f = load_vector(*s.v.space, [](const Point& p) {
    return std::array<double, 2>{20 * std::sin(M_PI * p.y), 10 * std::cos(M_PI * p.x)};
  });
  for (int i = 0; i < f.size(); ++i)
    if (s.v.space->dirichlet_mask()[i]) f[i] = 0.0;
  for (int k = 0; k < 3; ++k) {
    std::vector<double> hist;
    s = ns_step(s, f, prm, {}, &hist);
    EXPECT_LE(hist.back(), 1e-10);
    EXPECT_LE(hist.size(), 8u);
    EXPECT_LE(divergence_residual(fs, s.v), 1e-10 * std::max(1.0, s.v.coeffs.norm()));
    EXPECT_NEAR(integrate(s.p), 0.0, 1e-12);
  }
  EXPECT_GT(s.v.coeffs.norm(), 1e-3);
}

TEST(NavierStokes, UnforcedKineticEnergyDecays) {
  const MeshPtr m = build_rect_mesh(8, 8, {0, 0, 1, 1});
  FluidParams prm;
  prm.Re = 1000.0;
  prm.tau = 0.1;
  FlowState s = rest(m);
  s.v = interpolate(s.v.space, [](const Point& p) {
    const auto e = exact_v(p);
    return std::array<double, 2>{40 * e[0], 40 * e[1]};
  });
  const Vec zero = Vec::Zero(s.v.coeffs.size());
  double e = kinetic(s.v);
  for (int k = 0; k < 5; ++k) {
    s = ns_step(s, zero, prm);
    const double next = kinetic(s.v);
    EXPECT_LE(next, e * (1 + 1e-12));
    e = next;
  }
}

TEST(NavierStokes, SkewConvectionIsAntisymmetric) {
  const MeshPtr m = build_rect_mesh(3, 3, {0, 0, 1, 1});
  const FlowState s = rest(m);
  const Field w = interpolate(s.v.space, [](const Point& p) { return std::array<double, 2>{p.y + 0.3, p.x * p.x}; });
  const SpMat N = skew_convection(*s.v.space, w);
  EXPECT_LE(Mat(N + SpMat(N.transpose())).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(FluidParams, DensityInterpolation) {
  FluidParams prm;
  prm.rho1 = 1000;
  prm.rho2 = 100;
  EXPECT_DOUBLE_EQ(prm.rho(-1.0), 1000.0);
  EXPECT_DOUBLE_EQ(prm.rho(1.0), 100.0);
  EXPECT_DOUBLE_EQ(prm.drho(), -450.0);
  prm.eta1 = -1.0;
  EXPECT_THROW(prm.validate(), std::invalid_argument);
}
