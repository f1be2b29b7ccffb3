#include "chns/rom.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "chns/linear_solver.hpp"

namespace chns {

namespace {

Mat reduce(const Mat& P, const SpMat& A) { return P.transpose() * (A * P); }

Mat symmetric(const Mat& A) { return 0.5 * (A + A.transpose()); }

Vec on_space(const Field& f, const SpacePtr& space) {
  if (f.space->mesh() == space->mesh()) return f.coeffs;
  if (is_refinement_of(*space->mesh(), *f.space->mesh())) return prolongate(f, space->mesh()).coeffs;
  return l2_project(f, space).coeffs;
}

// Two sweeps of modified Gram-Schmidt in the X metric; drops columns whose
// remainder falls below `drop` times their original norm.
Mat orthonormalize(const Mat& V, const SpMat& X, double drop = 1e-10) {
  Mat Q(V.rows(), V.cols());
  int kept = 0;
  for (int j = 0; j < V.cols(); ++j) {
    Vec v = V.col(j);
    const double n0 = std::sqrt(std::max(0.0, v.dot(X * v)));
    if (!(n0 > 0.0)) continue;
    for (int sweep = 0; sweep < 2; ++sweep)
      for (int k = 0; k < kept; ++k) v -= Q.col(k).dot(X * v) * Q.col(k);
    const double n = std::sqrt(std::max(0.0, v.dot(X * v)));
    if (n <= drop * n0) continue;
    Q.col(kept++) = v / n;
  }
  return Q.leftCols(kept);
}

}  // namespace

Vec ChRom::project(const Field& f) const {
  const Vec y = on_space(f, space);
  const Vec rhs = modes.transpose() * (xgram * y);
  return (modes.transpose() * (xgram * modes)).ldlt().solve(rhs);
}

ChRom ch_rom_build(const PodBasis& basis, int ell, const ChParams& prm, const Potential& pot, const Field& velocity) {
  prm.validate();
  if (!pot.smooth()) throw std::invalid_argument("the reduced model needs a smooth potential");
  if (ell < 1 || ell > static_cast<int>(basis.modes.size())) throw std::invalid_argument("ch_rom_build: bad rank");
  ChRom rom;
  rom.space = basis.space();
  if (rom.space->degree() != 1 || rom.space->components() != 1) throw SpaceError("phase modes must be scalar P1");
  if (velocity.space && !velocity.mesh().same_hierarchy(*rom.space->mesh()))
    throw SpaceError("velocity and basis live on different hierarchies");
  rom.modes = basis.matrix().leftCols(ell);
  rom.prm = prm;
  rom.pot = pot;
  rom.xgram = gram_matrix(*rom.space, basis.x);
  rom.lumped = lumped_mass(*rom.space);
  rom.mass = symmetric(reduce(rom.modes, mass_matrix(*rom.space)));
  rom.stiffness = symmetric(reduce(rom.modes, stiffness_matrix(*rom.space)));
  rom.transport = velocity.space ? reduce(rom.modes, transport_matrix(rom.space, velocity)) : Mat::Zero(ell, ell);
  rom.constant_mobility = prm.mobility.bulk == 0.0;
  if (rom.constant_mobility) rom.mobility = prm.mobility.base * rom.stiffness;
  return rom;
}

RomState ch_rom_step(const ChRom& rom, const RomState& s, const SolverControls& ctl, int* iterations) {
  const int l = rom.dim();
  const ChParams& prm = rom.prm;
  const double g = prm.grad_scale(), p = prm.pot_scale(), tau = prm.tau;
  Mat Am = rom.mobility;
  if (!rom.constant_mobility) {
    const Mobility mob = prm.mobility;
    Am = symmetric(reduce(rom.modes, stiffness_matrix(*rom.space, Coefficient(rom.expand(s.c), [mob](double v) {
                                                                        return mob(v);
                                                                      }))));
  }
  const Vec fixed1 = -rom.mass * s.c / tau - rom.transport * s.c;
  const Vec fixed2 = -p * prm.kappa * (rom.mass * s.c);

  auto residual = [&](const Vec& c, const Vec& w) {
    const Vec phi = rom.modes * c;
    Vec a(phi.size());
    for (int j = 0; j < phi.size(); ++j) a[j] = rom.lumped[j] * rom.pot.eval(phi[j]).d1;
    Vec r(2 * l);
    r.head(l) = rom.mass * c / tau + fixed1 + Am * w;
    r.tail(l) = g * (rom.stiffness * c) + p * (rom.modes.transpose() * a) + fixed2 - rom.mass * w;
    return r;
  };

  Vec c = s.c, w = s.w;
  Vec r = residual(c, w);
  double norm = r.norm();
  int it = 0;
  for (; norm > ctl.tol; ++it) {
    if (it >= ctl.max_newton) throw StepFailure("reduced Cahn-Hilliard Newton did not converge", norm, it);
    const Vec phi = rom.modes * c;
    Vec d2(phi.size());
    for (int j = 0; j < phi.size(); ++j) d2[j] = rom.lumped[j] * rom.pot.eval(phi[j]).d2;
    Mat J(2 * l, 2 * l);
    J.topLeftCorner(l, l) = rom.mass / tau;
    J.topRightCorner(l, l) = Am;
    J.bottomLeftCorner(l, l) = g * rom.stiffness + p * (rom.modes.transpose() * d2.asDiagonal() * rom.modes);
    J.bottomRightCorner(l, l) = -rom.mass;
    const Vec dx = J.partialPivLu().solve(-r);
    double step = 1.0;
    for (;;) {
      const Vec ct = c + step * dx.head(l), wt = w + step * dx.tail(l);
      const Vec rt = residual(ct, wt);
      const double nt = rt.norm();
      if (nt < norm || step < 1.0 / 1024) {
        if (!(nt < norm)) throw StepFailure("reduced Cahn-Hilliard line search failed", nt, it + 1);
        c = ct;
        w = wt;
        r = rt;
        norm = nt;
        break;
      }
      step *= 0.5;
    }
  }
  if (iterations) *iterations = it;
  return {c, w};
}

std::vector<RomState> ch_rom_run(const ChRom& rom, const Field& phi_a, int K, const SolverControls& ctl) {
  if (K < 1) throw std::invalid_argument("ch_rom_run: need at least one instant");
  std::vector<RomState> out;
  out.reserve(K);
  out.push_back({rom.project(phi_a), Vec::Zero(rom.dim())});
  for (int n = 1; n < K; ++n) {
    try {
      out.push_back(ch_rom_step(rom, out.back(), ctl));
    } catch (const StepFailure& e) {
      throw StepFailure("reduced step " + std::to_string(n) + ": " + e.what(), e.residual(), e.iterations());
    }
  }
  return out;
}

Field div_free_project(const Field& v, const FlowSpaces& fs, XSpace x) {
  const FeSpace& vs = *fs.velocity;
  const Vec y = v.space->mesh() == vs.mesh() ? v.coeffs : prolongate(v, vs.mesh()).coeffs;
  const auto& mask = vs.dirichlet_mask();
  const int nv = vs.n_dof(), np = fs.pressure->n_dof(), n = nv + np + 1;
  const double scale = std::max(1.0, y.cwiseAbs().maxCoeff());
  for (int i = 0; i < nv; ++i)
    if (mask[i] && std::abs(y[i]) > 1e-14 * scale) throw SpaceError("div_free_project: velocity must vanish on the boundary");

  const SpMat X = gram_matrix(vs, x);
  Triplets t;
  append_block(t, X, 0, 0);
  append_block(t, fs.B, nv, 0);
  append_block(t, SpMat(fs.B.transpose()), 0, nv);
  for (int j = 0; j < np; ++j) {
    t.emplace_back(nv + j, nv + np, fs.mean[j]);
    t.emplace_back(nv + np, nv + j, fs.mean[j]);
  }
  SpMat K(n, n);
  K.setFromTriplets(t.begin(), t.end());
  apply_dirichlet(K, mask);
  Vec rhs = Vec::Zero(n);
  rhs.head(nv) = X * y;
  for (int i = 0; i < nv; ++i)
    if (mask[i]) rhs[i] = 0.0;
  try {
    return Field(fs.velocity, Vec(solve_sparse(K, rhs).head(nv)));
  } catch (const SingularMatrix& e) {
    throw SingularSaddle(std::string("divergence-free projection: ") + e.what());
  }
}

Field supremizer(const Field& q, const FlowSpaces& fs) {
  if (q.space->mesh() != fs.pressure->mesh() || q.space->n_dof() != fs.pressure->n_dof())
    throw SpaceError("supremizer: pressure must live on the reference pressure space");
  const auto& mask = fs.velocity->dirichlet_mask();
  SpMat A = stiffness_matrix(*fs.velocity);
  apply_dirichlet(A, mask);
  Vec rhs = fs.B.transpose() * q.coeffs;
  for (int i = 0; i < rhs.size(); ++i)
    if (mask[i]) rhs[i] = 0.0;
  return Field(fs.velocity, solve_sparse(A, rhs));
}

Mat project_velocity_basis(const PodBasis& basis, const FlowSpaces& fs) {
  Mat V(fs.velocity->n_dof(), static_cast<int>(basis.modes.size()));
  for (std::size_t j = 0; j < basis.modes.size(); ++j) V.col(j) = div_free_project(basis.modes[j], fs, basis.x).coeffs;
  return orthonormalize(V, gram_matrix(*fs.velocity, basis.x));
}

namespace {

// Reduced Navier-Stokes operators on velocity modes Φ.
struct ReducedFlow {
  Mat mass, stiffness;
  std::vector<Mat> convection;  // C_k = Φᵀ S(ψ_k) Φ
  Vec force;

  ReducedFlow(const Mat& V, const FlowSpaces& fs, const NsRomParams& prm) {
    const FeSpace& vs = *fs.velocity;
    mass = symmetric(reduce(V, mass_matrix(vs)));
    stiffness = symmetric(reduce(V, stiffness_matrix(vs)));
    for (int k = 0; k < V.cols(); ++k)
      convection.push_back(reduce(V, skew_convection(vs, Field(fs.velocity, Vec(V.col(k))))));
    force = prm.force.size() ? Vec(V.transpose() * prm.force) : Vec::Zero(V.cols());
    if (prm.force.size() && prm.force.size() != vs.n_dof()) throw SpaceError("NS ROM: force has wrong length");
  }

  Mat conv(const Vec& a) const {
    Mat C = Mat::Zero(a.size(), a.size());
    for (int k = 0; k < a.size(); ++k) C += a[k] * convection[k];
    return C;
  }
  Vec residual(const Vec& a, const Vec& a0, const NsRomParams& prm) const {
    return mass * (a - a0) / prm.tau + conv(a) * a + stiffness * a / prm.Re - force;
  }
  Mat jacobian(const Vec& a, const NsRomParams& prm) const {
    Mat J = mass / prm.tau + conv(a) + stiffness / prm.Re;
    for (int k = 0; k < a.size(); ++k) J.col(k) += convection[k] * a;
    return J;
  }
  double energy(const Vec& a) const { return 0.5 * a.dot(mass * a); }
};

void check_params(const NsRomParams& prm) {
  if (!(prm.tau > 0.0) || !(prm.Re > 0.0) || prm.steps < 0) throw std::invalid_argument("NS ROM: bad parameters");
}

}  // namespace

NsRomTrajectory ns_rom_velocity(const Mat& modes, const FlowSpaces& fs, const Field& v0, const NsRomParams& prm) {
  check_params(prm);
  for (int j = 0; j < modes.cols(); ++j) {
    const double res = divergence_residual(fs, Field(fs.velocity, Vec(modes.col(j))));
    if (res > 1e-8)
      throw SpaceError("velocity mode " + std::to_string(j) + " is not weakly divergence-free (residual " +
                       std::to_string(res) + ")");
  }
  const ReducedFlow rf(modes, fs, prm);
  NsRomTrajectory out;
  out.velocity_modes = modes;
  Vec a = rf.mass.ldlt().solve(modes.transpose() * (mass_matrix(*fs.velocity) * on_space(v0, fs.velocity)));
  out.velocity.push_back(a);
  out.kinetic_energy.push_back(rf.energy(a));
  for (int n = 0; n < prm.steps; ++n) {
    const Vec a0 = a;
    Vec r = rf.residual(a, a0, prm);
    const double scale = std::max(1.0, (rf.mass * a0 / prm.tau + rf.force).norm());
    for (int it = 0; r.norm() > prm.tol * scale; ++it) {
      if (it >= prm.max_newton) throw StepFailure("velocity ROM Newton did not converge", r.norm(), it);
      a -= rf.jacobian(a, prm).partialPivLu().solve(r);
      r = rf.residual(a, a0, prm);
    }
    out.velocity.push_back(a);
    out.kinetic_energy.push_back(rf.energy(a));
  }
  return out;
}

SaddleCheck check_reduced_saddle(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs) {
  SaddleCheck c;
  c.B = pressure_modes.transpose() * (fs.B * velocity_modes);
  if (c.B.size() == 0) return c;
  Eigen::JacobiSVD<Mat> svd(c.B);
  const Vec& s = svd.singularValues();
  c.sigma_max = s[0];
  c.sigma_min = pressure_modes.cols() > velocity_modes.cols() ? 0.0 : s[s.size() - 1];
  // Weakly solenoidal modes give a B_r made of roundoff, so a purely relative
  // test would pass; measure against the size the product could have.
  const double scale = std::max(c.sigma_max, pressure_modes.norm() * fs.B.norm() * velocity_modes.norm());
  c.singular = !(c.sigma_min > 1e-10 * scale);
  return c;
}

Mat enrich_with_supremizers(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs) {
  Mat V(velocity_modes.rows(), velocity_modes.cols() + pressure_modes.cols());
  V.leftCols(velocity_modes.cols()) = velocity_modes;
  for (int k = 0; k < pressure_modes.cols(); ++k)
    V.col(velocity_modes.cols() + k) = supremizer(Field(fs.pressure, Vec(pressure_modes.col(k))), fs).coeffs;
  return orthonormalize(V, mass_matrix(*fs.velocity));
}

NsRomTrajectory ns_rom_velocity_pressure(const Mat& velocity_modes, const Mat& pressure_modes, const FlowSpaces& fs,
                                         const Field& v0, const NsRomParams& prm) {
  check_params(prm);
  const SaddleCheck check = check_reduced_saddle(velocity_modes, pressure_modes, fs);
  if (check.singular)
    throw SingularSaddle("reduced saddle matrix is singular (sigma_min " + std::to_string(check.sigma_min) +
                         ", sigma_max " + std::to_string(check.sigma_max) + ")");
  const ReducedFlow rf(velocity_modes, fs, prm);
  const int lv = static_cast<int>(velocity_modes.cols()), lp = static_cast<int>(pressure_modes.cols());
  NsRomTrajectory out;
  out.velocity_modes = velocity_modes;
  out.pressure_modes = pressure_modes;
  out.saddle_condition = check.condition();
  Vec a = rf.mass.ldlt().solve(velocity_modes.transpose() *
                               (mass_matrix(*fs.velocity) * on_space(v0, fs.velocity)));
  Vec b = Vec::Zero(lp);
  out.velocity.push_back(a);
  out.pressure.push_back(b);
  out.kinetic_energy.push_back(rf.energy(a));
  for (int n = 0; n < prm.steps; ++n) {
    const Vec a0 = a;
    auto residual = [&]() {
      Vec r(lv + lp);
      r.head(lv) = rf.residual(a, a0, prm) + check.B.transpose() * b;
      r.tail(lp) = check.B * a;
      return r;
    };
    Vec r = residual();
    const double scale = std::max(1.0, (rf.mass * a0 / prm.tau + rf.force).norm());
    for (int it = 0; r.norm() > prm.tol * scale; ++it) {
      if (it >= prm.max_newton) throw StepFailure("velocity-pressure ROM Newton did not converge", r.norm(), it);
      Mat J = Mat::Zero(lv + lp, lv + lp);
      J.topLeftCorner(lv, lv) = rf.jacobian(a, prm);
      J.topRightCorner(lv, lp) = check.B.transpose();
      J.bottomLeftCorner(lp, lv) = check.B;
      Eigen::FullPivLU<Mat> lu(J);
      if (!lu.isInvertible()) throw SingularSaddle("reduced saddle Jacobian is singular at step " + std::to_string(n));
      const Vec d = lu.solve(-r);
      a += d.head(lv);
      b += d.tail(lp);
      r = residual();
    }
    out.velocity.push_back(a);
    out.pressure.push_back(b);
    out.kinetic_energy.push_back(rf.energy(a));
  }
  return out;
}

}  // namespace chns
