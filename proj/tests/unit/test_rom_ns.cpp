#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "chns/rom.hpp"

using namespace chns;

namespace {

std::array<double, 2> swirl(const Point& p) {
  return {std::sin(M_PI * p.x) * std::cos(M_PI * p.y) + 0.5, -std::cos(M_PI * p.x) * std::sin(M_PI * p.y) + p.x};
}

struct FlowRun {
  FlowSpaces fs;
  std::vector<FlowState> states;
  Vec force;
  FluidParams prm;
};

// Forced single-phase flow from rest; snapshots at every instant.
FlowRun forced_run(int n, int steps) {
  FlowRun r;
  r.fs = FlowSpaces::create(build_rect_mesh(n, n, {0, 0, 1, 1}));
  r.prm.Re = 20.0;
  r.prm.tau = 0.05;
  r.force = 10.0 * load_vector(*r.fs.velocity, swirl);
  FlowState s{Field(r.fs.velocity), Field(r.fs.pressure)};
  r.states.push_back(s);
  for (int k = 0; k < steps; ++k) {
    s = ns_step(s, r.force, r.prm);
    r.states.push_back(s);
  }
  return r;
}

Field random_velocity(const FlowSpaces& fs, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field f(fs.velocity);
  const auto& mask = fs.velocity->dirichlet_mask();
  for (int i = 0; i < f.coeffs.size(); ++i) f.coeffs[i] = mask[i] ? 0.0 : u(rng);
  return f;
}

Field random_pressure(const FlowSpaces& fs, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Field q(fs.pressure);
  for (auto& c : q.coeffs) c = u(rng);
  q.coeffs.array() -= q.coeffs.dot(fs.mean) / fs.mean.sum();
  return q;
}

double x_norm(const Field& f, XSpace x) { return std::sqrt(inner_product(f, f, x)); }

// Smallest nonzero β with B A⁻¹ Bᵀ q = β² M_p q, A the Dirichlet vector Laplacian.
double discrete_inf_sup(const FlowSpaces& fs) {
  const auto& mask = fs.velocity->dirichlet_mask();
  std::vector<int> interior;
  for (int i = 0; i < static_cast<int>(mask.size()); ++i)
    if (!mask[i]) interior.push_back(i);
  const Mat A = Mat(stiffness_matrix(*fs.velocity));
  const Mat B = Mat(fs.B);
  Mat Ai(interior.size(), interior.size()), Bi(B.rows(), interior.size());
  for (std::size_t a = 0; a < interior.size(); ++a) {
    Bi.col(a) = B.col(interior[a]);
    for (std::size_t b = 0; b < interior.size(); ++b) Ai(a, b) = A(interior[a], interior[b]);
  }
  const Mat S = Bi * Ai.ldlt().solve(Bi.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> eig(0.5 * (S + S.transpose()), Mat(mass_matrix(*fs.pressure)));
  return std::sqrt(eig.eigenvalues()[1]);  // [0] belongs to the constants
}

}  // namespace

TEST(DivFreeProjection, IdempotentLinearAndDivergenceFree) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  std::mt19937 rng(1);
  const Field v = random_velocity(fs, rng), w = random_velocity(fs, rng);
  for (XSpace x : {XSpace::L2, XSpace::H01}) {
    const Field pv = div_free_project(v, fs, x);
    EXPECT_LE(divergence_residual(fs, pv), 1e-10);
    const Field ppv = div_free_project(pv, fs, x);
    EXPECT_LT((ppv.coeffs - pv.coeffs).cwiseAbs().maxCoeff(), 1e-12 * pv.coeffs.cwiseAbs().maxCoeff());
    const Field combo(fs.velocity, Vec(2.0 * v.coeffs - 3.0 * w.coeffs));
    const Vec lin = 2.0 * pv.coeffs - 3.0 * div_free_project(w, fs, x).coeffs;
    EXPECT_LT((div_free_project(combo, fs, x).coeffs - lin).cwiseAbs().maxCoeff(), 1e-12 * lin.cwiseAbs().maxCoeff());
  }
}

TEST(DivFreeProjection, ClosestAmongSampledDivergenceFreeFields) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  std::mt19937 rng(2);
  const Field v = random_velocity(fs, rng);
  const Field pv = div_free_project(v, fs, XSpace::L2);
  const double best = x_norm(Field(fs.velocity, Vec(v.coeffs - pv.coeffs)), XSpace::L2);
  for (int k = 0; k < 10; ++k) {
    Field z = div_free_project(random_velocity(fs, rng), fs, XSpace::L2);
    z.coeffs = pv.coeffs + 0.3 * z.coeffs;  // a nearby competitor as well as distant ones
    if (k % 2) z = div_free_project(random_velocity(fs, rng), fs, XSpace::L2);
    EXPECT_LE(best, x_norm(Field(fs.velocity, Vec(v.coeffs - z.coeffs)), XSpace::L2));
  }
}

TEST(DivFreeProjection, InfSupViolationIsReported) {
  // P1 velocity on two triangles has no interior dofs at all
  const MeshPtr m = build_rect_mesh(1, 1, {0, 0, 1, 1});
  FlowSpaces fs;
  fs.velocity = FeSpace::create(m, 1, 2, true);
  fs.pressure = FeSpace::create(m, 1);
  fs.B = divergence_matrix(*fs.velocity, *fs.pressure);
  fs.mean = lumped_mass(*fs.pressure);
  EXPECT_THROW(div_free_project(Field(fs.velocity), fs), SingularSaddle);
}

TEST(Supremizer, ZeroAndLinear) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  std::mt19937 rng(3);
  EXPECT_EQ(supremizer(Field(fs.pressure), fs).coeffs.cwiseAbs().maxCoeff(), 0.0);
  const Field a = random_pressure(fs, rng), b = random_pressure(fs, rng);
  const Vec sum = supremizer(a, fs).coeffs + supremizer(b, fs).coeffs;
  const Vec joint = supremizer(Field(fs.pressure, Vec(a.coeffs + b.coeffs)), fs).coeffs;
  EXPECT_LT((sum - joint).cwiseAbs().maxCoeff(), 1e-12 * sum.cwiseAbs().maxCoeff());
}

TEST(Supremizer, RealizesTheDiscreteInfSupConstant) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  const double beta = discrete_inf_sup(fs);
  ASSERT_GT(beta, 0.05);
  std::mt19937 rng(4);
  for (int k = 0; k < 10; ++k) {
    const Field q = random_pressure(fs, rng);
    const Field t = supremizer(q, fs);
    const double b = q.coeffs.dot(fs.B * t.coeffs);
    const double ratio = b / (x_norm(t, XSpace::H01) * x_norm(q, XSpace::L2));
    EXPECT_GE(ratio, beta * (1.0 - 1e-10));
  }
}

TEST(VelocityRom, ZeroDataGivesZeroTrajectory) {
  const FlowRun run = forced_run(4, 4);
  SnapshotSet s;
  for (const auto& st : run.states) s.add(st.v, 1.0);
  const Mat V = project_velocity_basis(pod_basis(s, 3), run.fs);
  NsRomParams prm;
  prm.steps = 5;
  const NsRomTrajectory t = ns_rom_velocity(V, run.fs, Field(run.fs.velocity), prm);
  for (const auto& a : t.velocity) EXPECT_EQ(a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(VelocityRom, FullRankReproducesSnapshots) {
  const int steps = 6;
  const FlowRun run = forced_run(4, steps);
  SnapshotSet s;
  for (const auto& st : run.states) s.add(st.v, 1.0);
  const int rank = numerical_rank(pod_basis(s, 1).eigenvalues);
  ASSERT_EQ(rank, steps);
  const Mat V = project_velocity_basis(pod_basis(s, rank), run.fs);
  for (int j = 0; j < V.cols(); ++j) EXPECT_LE(divergence_residual(run.fs, Field(run.fs.velocity, Vec(V.col(j)))), 1e-10);
  NsRomParams prm;
  prm.Re = run.prm.Re;
  prm.tau = run.prm.tau;
  prm.steps = steps;
  prm.force = run.force;
  const NsRomTrajectory t = ns_rom_velocity(V, run.fs, run.states[0].v, prm);
  for (int n = 1; n <= steps; ++n) {
    const Vec rom = V * t.velocity[n];
    const Vec& fom = run.states[n].v.coeffs;
    EXPECT_LT((rom - fom).cwiseAbs().maxCoeff(), 1e-6 * fom.cwiseAbs().maxCoeff()) << "instant " << n;
  }
}

TEST(VelocityRom, UnforcedEnergyDoesNotIncrease) {
  const FlowRun run = forced_run(4, 6);
  SnapshotSet s;
  for (const auto& st : run.states) s.add(st.v, 1.0);
  const Mat V = project_velocity_basis(pod_basis(s, 4), run.fs);
  NsRomParams prm;
  prm.Re = run.prm.Re;
  prm.tau = run.prm.tau;
  prm.steps = 15;
  const NsRomTrajectory t = ns_rom_velocity(V, run.fs, run.states.back().v, prm);
  ASSERT_GT(t.kinetic_energy.front(), 0.0);
  for (std::size_t n = 1; n < t.kinetic_energy.size(); ++n)
    EXPECT_LE(t.kinetic_energy[n], t.kinetic_energy[n - 1] * (1.0 + 1e-14));
}

TEST(VelocityRom, RefusesNonSolenoidalModes) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  std::mt19937 rng(5);
  const Mat V = random_velocity(fs, rng).coeffs;
  EXPECT_THROW(ns_rom_velocity(V, fs, Field(fs.velocity), NsRomParams{}), SpaceError);
}

TEST(VelocityPressureRom, SolenoidalSnapshotsNeedSupremizers) {
  const FlowRun run = forced_run(4, 6);
  SnapshotSet vs, ps;
  for (std::size_t k = 1; k < run.states.size(); ++k) {
    vs.add(run.states[k].v, 1.0);
    ps.add(run.states[k].p, 1.0);
  }
  const Mat V = pod_basis(vs, 3).matrix();
  const Mat P = pod_basis(ps, 2).matrix();
  EXPECT_TRUE(check_reduced_saddle(V, P, run.fs).singular);

  NsRomParams prm;
  prm.Re = run.prm.Re;
  prm.tau = run.prm.tau;
  prm.steps = 4;
  prm.force = run.force;
  EXPECT_THROW(ns_rom_velocity_pressure(V, P, run.fs, run.states[0].v, prm), SingularSaddle);

  const Mat E = enrich_with_supremizers(V, P, run.fs);
  EXPECT_EQ(E.cols(), V.cols() + P.cols());
  const SaddleCheck enriched = check_reduced_saddle(E, P, run.fs);
  EXPECT_FALSE(enriched.singular);
  EXPECT_TRUE(std::isfinite(enriched.condition()));
  const NsRomTrajectory t = ns_rom_velocity_pressure(E, P, run.fs, run.states[0].v, prm);
  EXPECT_EQ(t.velocity.size(), 5u);
  EXPECT_EQ(t.pressure.size(), 5u);
  EXPECT_TRUE(std::isfinite(t.saddle_condition));
  for (const auto& a : t.velocity) EXPECT_LE((enriched.B * a).norm(), 1e-10);
}

TEST(VelocityPressureRom, CraftedRankDeficiencyIsDetectedAndRepaired) {
  const FlowSpaces fs = FlowSpaces::create(build_rect_mesh(4, 4, {0, 0, 1, 1}));
  std::mt19937 rng(6);
  Mat V(fs.velocity->n_dof(), 3), P(fs.pressure->n_dof(), 2);
  for (int j = 0; j < 3; ++j) V.col(j) = random_velocity(fs, rng).coeffs;
  for (int j = 0; j < 2; ++j) P.col(j) = random_pressure(fs, rng).coeffs;
  ASSERT_FALSE(check_reduced_saddle(V, P, fs).singular);

  // make every velocity mode b-orthogonal to the first pressure mode
  Vec w = fs.B.transpose() * P.col(0);
  const auto& mask = fs.velocity->dirichlet_mask();
  for (int i = 0; i < w.size(); ++i)
    if (mask[i]) w[i] = 0.0;
  for (int j = 0; j < V.cols(); ++j) V.col(j) -= w.dot(V.col(j)) / w.squaredNorm() * w;

  const SaddleCheck bare = check_reduced_saddle(V, P, fs);
  EXPECT_TRUE(bare.singular);
  EXPECT_LE(bare.sigma_min, 1e-12 * bare.sigma_max);

  const Mat E = enrich_with_supremizers(V, P, fs);
  EXPECT_EQ(E.cols(), V.cols() + P.cols());
  EXPECT_FALSE(check_reduced_saddle(E, P, fs).singular);
}
