#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chns/assemble.hpp"
#include "chns/linear_solver.hpp"
#include "chns/transfer.hpp"

using namespace chns;

namespace {

double area_sum(const Mesh& m) {
  double s = 0.0;
  for (int c = 0; c < m.n_cells(); ++c) s += m.cell_area(c);
  return s;
}

MeshPtr random_adapted(int seed, int rounds, MeshPtr start = nullptr) {
  std::mt19937 rng(seed);
  MeshPtr m = start ? start : build_rect_mesh(3, 2, {0, 0, 1.5, 1});
  for (int r = 0; r < rounds; ++r) {
    std::vector<int> marked;
    std::bernoulli_distribution pick(0.25);
    for (int c = 0; c < m->n_cells(); ++c)
      if (pick(rng)) marked.push_back(c);
    m = refine(m, marked);
  }
  return m;
}

// Quadrature on one mesh, independent of the overlay machinery.
double same_mesh_product(const Field& f, const Field& g, XSpace x) {
  double total = 0.0;
  for (int c = 0; c < f.mesh().n_cells(); ++c) {
    CellGeometry geo(f.mesh().cell_points(c));
    for (const auto& q : quad_rule(5)) {
      double s = 0.0;
      if (x != XSpace::H01) s += f.value(c, q.bary) * g.value(c, q.bary);
      if (x != XSpace::L2) {
        auto a = f.gradient(c, q.bary, geo), b = g.gradient(c, q.bary, geo);
        s += a[0] * b[0] + a[1] * b[1];
      }
      total += s * q.weight * geo.area;
    }
  }
  return total;
}

Vec random_vec(int n, int seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Vec v(n);
  for (int k = 0; k < n; ++k) v[k] = u(rng);
  return v;
}

}  // namespace

TEST(RectMesh, MinimalSplit) {
  auto m = build_rect_mesh(1, 1, {0, 0, 1, 1});
  EXPECT_EQ(m->n_vertices(), 4);
  EXPECT_EQ(m->n_cells(), 2);
  EXPECT_TRUE(m->is_conforming());
  EXPECT_EQ(m->parent(), nullptr);
}

TEST(RectMesh, TwoByOneAreas) {
  auto m = build_rect_mesh(2, 1, {0, 0, 2, 1});
  EXPECT_EQ(m->n_vertices(), 6);
  EXPECT_EQ(m->n_cells(), 4);
  for (int c = 0; c < m->n_cells(); ++c) EXPECT_DOUBLE_EQ(m->cell_area(c), 0.5);
  EXPECT_NEAR(area_sum(*m), 2.0, 1e-14);
}

TEST(RectMesh, PartitionAndOrientation) {
  for (auto [nx, ny] : {std::pair{5, 3}, {8, 8}, {1, 7}}) {
    auto m = build_rect_mesh(nx, ny, {-1, 0.5, 2, 1.25});
    EXPECT_EQ(m->n_cells(), 2 * nx * ny);
    EXPECT_NEAR(area_sum(*m), 3.0 * 0.75, 1e-14);
    EXPECT_TRUE(m->positively_oriented());
    EXPECT_TRUE(m->is_conforming());
  }
}

TEST(RectMesh, RejectsZeroSize) {
  EXPECT_THROW(build_rect_mesh(2, 2, {0, 0, 0, 1}), MeshError);
  EXPECT_THROW(build_rect_mesh(0, 2, {0, 0, 1, 1}), MeshError);
}

TEST(Refine, SingleCellWithClosure) {
  auto m = build_rect_mesh(1, 1, {0, 0, 1, 1});
  std::vector<int> marked{0};
  auto r = refine(m, marked);
  EXPECT_TRUE(r->is_conforming());
  EXPECT_TRUE(r->positively_oriented());
  EXPECT_GT(r->n_cells(), 2);
  EXPECT_EQ(r->parent(), m);
  for (int c = 0; c < r->n_cells(); ++c)
    EXPECT_TRUE(m->cell_ids()[r->cell_parent()[c]].is_ancestor_or_self_of(r->cell_ids()[c]));
  int children_of_0 = 0;
  for (int c = 0; c < r->n_cells(); ++c) children_of_0 += r->cell_parent()[c] == 0;
  EXPECT_GE(children_of_0, 2);
}

TEST(Refine, EmptyMarkIsIdentityChild) {
  auto m = build_rect_mesh(2, 2, {0, 0, 1, 1});
  auto r = refine(m, std::vector<int>{});
  EXPECT_EQ(r->n_cells(), m->n_cells());
  EXPECT_EQ(r->parent(), m);
  for (int c = 0; c < r->n_cells(); ++c) EXPECT_EQ(r->cell_parent()[c], c);
}

TEST(Refine, UniformDoubles) {
  auto m = build_rect_mesh(3, 2, {0, 0, 1, 1});
  auto r = refine_uniform(m);
  EXPECT_GE(r->n_cells(), 2 * m->n_cells());
  EXPECT_TRUE(r->is_conforming());
}

TEST(Refine, RandomAdaptiveStaysConformingAndNested) {
  for (int seed = 1; seed <= 5; ++seed) {
    auto m = random_adapted(seed, 6);
    EXPECT_TRUE(m->is_conforming());
    EXPECT_TRUE(m->positively_oriented());
    EXPECT_NEAR(area_sum(*m), 1.5, 1e-13);
    EXPECT_TRUE(is_refinement_of(*m, *m->parent()));
    for (int c = 0; c < m->n_cells(); ++c) {
      auto pp = m->parent()->cell_points(m->cell_parent()[c]);
      CellGeometry g(pp);
      for (auto p : m->cell_points(c)) {
        auto b = g.barycentric(p);
        for (double l : b) EXPECT_GE(l, -1e-12);
      }
    }
  }
}

TEST(Refine, ProlongRestrictIsIdentity) {
  auto parent = random_adapted(11, 3);
  std::vector<int> marked;
  for (int c = 0; c < parent->n_cells(); c += 3) marked.push_back(c);
  auto child = refine(parent, marked);
  for (int deg : {1, 2}) {
    for (int comps : {1, 2}) {
      auto sp = FeSpace::create(parent, deg, comps);
      Field f(sp, random_vec(sp->n_dof(), deg * 10 + comps));
      Field up = prolongate(f, child);
      Field back = restrict_to(up, sp);
      EXPECT_EQ((back.coeffs - f.coeffs).cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

TEST(Remesh, CoarsenRestoresAncestorLevel) {
  auto root = build_rect_mesh(2, 2, {0, 0, 1, 1});
  auto fine = refine_uniform(root, 2);
  std::vector<int> target(fine->n_cells(), 1);
  auto coarse = remesh(fine, target);
  EXPECT_TRUE(coarse->is_conforming());
  EXPECT_EQ(coarse->n_cells(), 2 * root->n_cells());
  std::vector<int> deeper(fine->n_cells());
  for (int c = 0; c < fine->n_cells(); ++c) deeper[c] = fine->centroid(c).x < 0.3 ? 4 : 2;
  auto mixed = remesh(fine, deeper);
  EXPECT_TRUE(mixed->is_conforming());
  EXPECT_GT(mixed->n_cells(), fine->n_cells());
  EXPECT_TRUE(is_refinement_of(*mixed, *root));
}

TEST(CommonRefinement, RefinesBothAndConforms) {
  auto root = build_rect_mesh(2, 2, {0, 0, 1, 1});
  std::vector<int> left, right;
  for (int c = 0; c < root->n_cells(); ++c) (root->centroid(c).x < 0.5 ? left : right).push_back(c);
  auto a = refine(refine(root, left), std::vector<int>{0, 1});
  auto b = refine(root, right);
  auto cr = common_refinement(a, b);
  EXPECT_TRUE(cr->is_conforming());
  EXPECT_TRUE(is_refinement_of(*cr, *a));
  EXPECT_TRUE(is_refinement_of(*cr, *b));
  EXPECT_EQ(static_cast<int>(overlay(*a, *b).size()), cr->n_cells());
}

TEST(Assemble, MassRowSumsAndTotal) {
  auto m = build_rect_mesh(4, 3, {0, 0, 2, 1});
  auto s = FeSpace::create(m, 1);
  SpMat M = mass_matrix(*s);
  Vec ones = Vec::Ones(s->n_dof());
  Vec rows = M * ones;
  EXPECT_NEAR(rows.sum(), 2.0, 1e-14);
  // lumped P1 mass of a vertex is a third of its patch area
  Vec patch = Vec::Zero(s->n_dof());
  for (int c = 0; c < m->n_cells(); ++c)
    for (int v : m->cells()[c]) patch[v] += m->cell_area(c) / 3.0;
  EXPECT_LT((rows - patch).cwiseAbs().maxCoeff(), 1e-15);
  auto s2 = FeSpace::create(m, 2);
  EXPECT_NEAR((mass_matrix(*s2) * Vec::Ones(s2->n_dof())).sum(), 2.0, 1e-13);
}

TEST(Assemble, StiffnessKillsConstants) {
  auto m = random_adapted(3, 3);
  for (int deg : {1, 2}) {
    auto s = FeSpace::create(m, deg);
    SpMat A = stiffness_matrix(*s);
    EXPECT_LE((A * Vec::Ones(s->n_dof())).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LE(SpMat(A - SpMat(A.transpose())).norm(), 1e-13);
  }
}

TEST(Assemble, WeightedMassIsExactMultiple) {
  auto m = build_rect_mesh(3, 3, {0, 0, 1, 1});
  auto s = FeSpace::create(m, 2);
  SpMat M = mass_matrix(*s);
  SpMat M2 = mass_matrix(*s, Coefficient(2.0));
  EXPECT_EQ(SpMat(M2 - 2.0 * M).norm(), 0.0);
}

TEST(Assemble, FieldCoefficientOnOtherMeshRejected) {
  auto a = build_rect_mesh(2, 2, {0, 0, 1, 1});
  auto b = build_rect_mesh(2, 2, {0, 0, 1, 1});
  Field w(FeSpace::create(a, 1));
  EXPECT_THROW(mass_matrix(*FeSpace::create(b, 1), Coefficient(w)), SpaceError);
}

TEST(Assemble, DivergenceConsistency) {
  auto m = random_adapted(5, 2);
  auto vs = FeSpace::create(m, 2, 2, true);
  auto ps = FeSpace::create(m, 1);
  SpMat B = divergence_matrix(*vs, *ps);
  Field v(vs, random_vec(vs->n_dof(), 1));
  for (int k = 0; k < vs->n_dof(); ++k)
    if (vs->dirichlet_mask()[k]) v.coeffs[k] = 0.0;
  Field q(ps, random_vec(ps->n_dof(), 2));
  double direct = 0.0;
  for (int c = 0; c < m->n_cells(); ++c) {
    CellGeometry g(m->cell_points(c));
    for (const auto& qp : quad_rule(5)) {
      double div = v.gradient(c, qp.bary, g, 0)[0] + v.gradient(c, qp.bary, g, 1)[1];
      direct -= q.value(c, qp.bary) * div * qp.weight * g.area;
    }
  }
  EXPECT_NEAR(q.coeffs.dot(B * v.coeffs), direct, 1e-12);
}

TEST(Prolongate, ConstantsAndLinears) {
  auto root = build_rect_mesh(2, 2, {0, 0, 1, 1});
  auto fine = random_adapted(7, 2);
  auto coarse = fine->parent()->parent();
  auto s = FeSpace::create(coarse, 1);
  Field one = interpolate(s, [](const Point&) { return 1.0; });
  Field up = prolongate(one, fine);
  EXPECT_EQ((up.coeffs.array() - 1.0).abs().maxCoeff(), 0.0);
  Field x = interpolate(s, [](const Point& p) { return p.x; });
  Field ux = prolongate(x, fine);
  for (int k = 0; k < up.space->n_dof(); ++k)
    EXPECT_NEAR(ux.coeffs[k], fine->vertices()[k].x, 1e-15);
  auto s2 = FeSpace::create(coarse, 2);
  Field f(s2, random_vec(s2->n_dof(), 4));
  Field uf = prolongate(f, fine);
  SpMat Mc = mass_matrix(*s2), Mf = mass_matrix(*uf.space);
  double nc = f.coeffs.dot(Mc * f.coeffs), nf = uf.coeffs.dot(Mf * uf.coeffs);
  EXPECT_NEAR(nc, nf, 1e-13 * nc);
  EXPECT_THROW(prolongate(Field(FeSpace::create(fine, 1)), root), SpaceError);
}

TEST(InnerProduct, CrossLevelMatchesDirectAssembly) {
  auto a = random_adapted(21, 3);
  auto root = a->root_ptr();
  std::vector<int> marked;
  for (int c = 0; c < root->n_cells(); c += 2) marked.push_back(c);
  auto b = refine(refine(root, marked), std::vector<int>{1, 2, 3});
  auto fa = interpolate(FeSpace::create(a, 1), [](const Point& p) { return std::sin(3 * p.x) * std::cos(2 * p.y); });
  auto gb = interpolate(FeSpace::create(b, 2), [](const Point& p) { return p.x * p.y - 0.3; });
  auto cr = common_refinement(a, b);
  Field fa_f = prolongate(fa, cr), gb_f = prolongate(gb, cr);
  for (XSpace x : {XSpace::L2, XSpace::H1, XSpace::H01}) {
    double direct = same_mesh_product(fa_f, gb_f, x);
    EXPECT_NEAR(inner_product(fa, gb, x), direct, 1e-12) << to_string(x);
    EXPECT_NEAR(inner_product(fa, gb, x), inner_product(gb, fa, x), 1e-14);
  }
  EXPECT_GT(inner_product(fa, fa, XSpace::L2), 0.0);
  Field fc = prolongate(fa, cr);
  EXPECT_NEAR(inner_product(fc, gb, XSpace::L2), inner_product(fa, gb, XSpace::L2), 1e-13);
  auto other = build_rect_mesh(2, 2, {0, 0, 1, 1});
  EXPECT_THROW(inner_product(fa, Field(FeSpace::create(other, 1)), XSpace::L2), SpaceError);
}

TEST(Transfer, L2ProjectionConservesMass) {
  auto a = random_adapted(31, 4);
  auto b = random_adapted(32, 4, a->root_ptr());
  auto f = interpolate(FeSpace::create(a, 1), [](const Point& p) { return std::tanh((p.x - 0.7) / 0.1); });
  Field g = l2_project(f, FeSpace::create(b, 1));
  EXPECT_NEAR(integrate(g), integrate(f), 1e-13);
}

TEST(SparseLU, TransposeSolve) {
  SpMat A(3, 3);
  Triplets t{{0, 0, 4}, {0, 1, 1}, {1, 1, 3}, {2, 0, 2}, {2, 2, 5}, {1, 2, -1}};
  A.setFromTriplets(t.begin(), t.end());
  SparseLU lu(A);
  Vec b(3);
  b << 1, 2, 3;
  EXPECT_LT((A * lu.solve(b) - b).norm(), 1e-14);
  EXPECT_LT((SpMat(A.transpose()) * lu.solve_transpose(b) - b).norm(), 1e-14);
  SpMat S(2, 2);
  Triplets ts{{0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}};
  S.setFromTriplets(ts.begin(), ts.end());
  EXPECT_THROW(SparseLU{S}, SingularMatrix);
}

TEST(SparseLU, BlockSystemRoundTrip) {
  auto s = FeSpace::create(build_rect_mesh(12, 12, {0, 0, 1, 1}), 1);
  const int n = s->n_dof();
  const SpMat M = mass_matrix(*s), A = stiffness_matrix(*s);
  Triplets t;
  append_block(t, M, 0, 0, 1e5);
  append_block(t, A, 0, n, 1e-2);
  append_block(t, A, n, 0, 0.05);
  append_block(t, M, n, n, -1.0);
  SpMat J(2 * n, 2 * n);
  J.setFromTriplets(t.begin(), t.end());
  const Vec x = random_vec(2 * n, 9);
  SparseLU lu(J);
  EXPECT_LT((lu.solve(J * x) - x).norm(), 1e-9 * x.norm());
  EXPECT_LT((lu.solve_transpose(SpMat(J.transpose()) * x) - x).norm(), 1e-9 * x.norm());
}
