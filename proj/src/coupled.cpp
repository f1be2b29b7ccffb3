#include "chns/coupled.hpp"

#include <cstdio>

#include "chns/linear_solver.hpp"

namespace chns {

namespace {

constexpr double kRoundoffFloor = 1e-7;

// Per-cell data shared by the assembly loops.
struct CellFrame {
  const int* p1;
  const int* p2;
  CellGeometry g;
  double dZ[3][2];
  CellFrame(const FeSpace& ps, const FeSpace& vs, int c)
      : p1(ps.cell_dofs()[c].data()), p2(vs.cell_dofs()[c].data()), g(ps.geometry(c)) {
    shape_grads(1, {1.0 / 3, 1.0 / 3, 1.0 / 3}, g, dZ);
  }
};

struct QuadFrame {
  double Z[3], N[6], dN[6][2], w;
  QuadFrame(const CellFrame& cf, const QuadPoint& q) {
    shape_values(1, q.bary, Z);
    shape_values(2, q.bary, N);
    shape_grads(2, q.bary, cf.g, dN);
    w = q.weight * cf.g.area;
  }
  double p1(const CellFrame& cf, const Vec& x, int off = 0) const {
    return Z[0] * x[off + cf.p1[0]] + Z[1] * x[off + cf.p1[1]] + Z[2] * x[off + cf.p1[2]];
  }
  void p1_grad(const CellFrame& cf, const Vec& x, int off, double out[2]) const {
    out[0] = out[1] = 0.0;
    for (int a = 0; a < 3; ++a) {
      out[0] += cf.dZ[a][0] * x[off + cf.p1[a]];
      out[1] += cf.dZ[a][1] * x[off + cf.p1[a]];
    }
  }
  // Vector P2 value and gradient grad[c][d] = ∂_d v_c.
  void p2(const CellFrame& cf, const Vec& x, int off, int ns, double val[2], double grad[2][2]) const {
    for (int c = 0; c < 2; ++c) {
      val[c] = grad[c][0] = grad[c][1] = 0.0;
      for (int i = 0; i < 6; ++i) {
        const double xi = x[off + c * ns + cf.p2[i]];
        val[c] += N[i] * xi;
        grad[c][0] += dN[i][0] * xi;
        grad[c][1] += dN[i][1] * xi;
      }
    }
  }
};

}  // namespace

CoupledLayout CoupledLayout::create(const MeshPtr& mesh) {
  return of(FeSpace::create(mesh, 1), FeSpace::create(mesh, 2, 2, true));
}

CoupledLayout CoupledLayout::of(SpacePtr phase, SpacePtr velocity) {
  if (phase->mesh().get() != velocity->mesh().get()) throw SpaceError("coupled layout needs one mesh");
  if (phase->degree() != 1 || phase->components() != 1) throw SpaceError("phase space must be scalar P1");
  if (velocity->degree() != 2 || velocity->components() != 2 || !velocity->has_dirichlet())
    throw SpaceError("velocity space must be vector P2 with zero trace");
  CoupledLayout l;
  l.mesh = phase->mesh();
  l.phase = std::move(phase);
  l.velocity = std::move(velocity);
  l.n1 = l.phase->n_dof();
  l.nv = l.velocity->n_dof();
  return l;
}

CoupledStep::CoupledStep(const CoupledLayout& layout, Mode mode, const Vec& cur, const Vec& phi_old,
                         const Vec& force, const Potential& pot, const ChParams& chp, const FluidParams& flp)
    : L_(layout), mode_(mode), cur_(cur), phi_old_(phi_old), force_(force), pot_(pot), chp_(chp), flp_(flp) {
  chp_.validate();
  flp_.validate();
  if (cur_.size() != L_.size()) throw SpaceError("coupled step: state vector has wrong length");
  if (mode_ == Mode::Coupled && phi_old_.size() != L_.n1) throw SpaceError("coupled step: previous phase has wrong length");
  if (force_.size() != 0 && force_.size() != L_.nv) throw SpaceError("coupled step: force has wrong length");
  assemble();
}

void CoupledStep::assemble() {
  const FeSpace& ps = *L_.phase;
  const FeSpace& vs = *L_.velocity;
  const int n1 = L_.n1, nv = L_.nv, ns = nv / 2, N = L_.size();
  const int V = L_.vel(), P = L_.pres();
  const bool coupled = mode_ == Mode::Coupled;
  const double tau = chp_.tau, pot_scale = chp_.pot_scale(), dr = flp_.drho();
  const Mobility mob = chp_.mobility;

  Triplets t, tm, tmass;
  fixed_ = Vec::Zero(N);
  lumped_ = Vec::Zero(n1);
  Vec mv_diag = Vec::Zero(nv);

  for (int c = 0; c < L_.mesh->n_cells(); ++c) {
    const CellFrame cf(ps, vs, c);
    double Ml[3][3] = {}, Al[3][3] = {}, Aml[3][3] = {}, Tl[3][2][6] = {}, Cl[2][6][3] = {}, Bl[3][2][6] = {};
    double Kl[2][6][2][6] = {}, fv[2][6] = {};
    for (const auto& q : quad_rule(5)) {
      const QuadFrame qf(cf, q);
      const double w = qf.w;
      const double phc = qf.p1(cf, cur_);
      const double pho = coupled ? qf.p1(cf, phi_old_) : phc;
      const double m_c = mob(phc);
      for (int a = 0; a < 3; ++a) {
        lumped_[cf.p1[a]] += qf.Z[a] * w;
        for (int b = 0; b < 3; ++b) {
          const double gg = cf.dZ[a][0] * cf.dZ[b][0] + cf.dZ[a][1] * cf.dZ[b][1];
          Ml[a][b] += qf.Z[a] * qf.Z[b] * w;
          Al[a][b] += gg * w;
          Aml[a][b] += m_c * gg * w;
        }
        for (int k = 0; k < 2; ++k)
          for (int i = 0; i < 6; ++i) Tl[a][k][i] -= phc * qf.N[i] * cf.dZ[a][k] * w;
      }
      for (int i = 0; i < 6; ++i) mv_diag[cf.p2[i]] += qf.N[i] * qf.N[i] * w;
      if (!coupled) continue;

      double gmu_c[2], vc[2], gvc[2][2];
      qf.p1_grad(cf, cur_, L_.mu(), gmu_c);
      qf.p2(cf, cur_, V, ns, vc, gvc);
      const double rc = flp_.rho(phc), ro = flp_.rho(pho), eta = flp_.eta(phc), m_o = mob(pho);
      const double W[2] = {ro * vc[0] - dr * m_o * gmu_c[0], ro * vc[1] - dr * m_o * gmu_c[1]};
      for (int i = 0; i < 6; ++i) {
        const double Wdi = W[0] * qf.dN[i][0] + W[1] * qf.dN[i][1];
        for (int k = 0; k < 2; ++k) {
          for (int a = 0; a < 3; ++a) {
            Cl[k][i][a] += phc * cf.dZ[a][k] * qf.N[i] * w;
            Bl[a][k][i] -= qf.Z[a] * qf.dN[i][k] * w;
          }
          fv[k][i] -= ro * vc[k] * qf.N[i] / tau * w;
        }
        fv[1][i] += flp_.gravity * ro * qf.N[i] * w;
        for (int l = 0; l < 6; ++l) {
          const double Wdl = W[0] * qf.dN[l][0] + W[1] * qf.dN[l][1];
          const double dd = qf.dN[i][0] * qf.dN[l][0] + qf.dN[i][1] * qf.dN[l][1];
          const double diag = 0.5 * (rc + ro) / tau * qf.N[i] * qf.N[l] + 0.5 * (qf.N[i] * Wdl - qf.N[l] * Wdi) +
                              eta * dd;
          for (int k = 0; k < 2; ++k) {
            Kl[k][i][k][l] += diag * w;
            for (int e = 0; e < 2; ++e) Kl[k][i][e][l] += eta * qf.dN[l][k] * qf.dN[i][e] * w;
          }
        }
      }
    }

    for (int a = 0; a < 3; ++a) {
      const int ra = cf.p1[a];
      for (int b = 0; b < 3; ++b) {
        const int cb = cf.p1[b];
        tmass.emplace_back(ra, cb, Ml[a][b]);
        t.emplace_back(ra, cb, Ml[a][b] / tau);
        t.emplace_back(ra, n1 + cb, Aml[a][b]);
        t.emplace_back(n1 + ra, cb, chp_.grad_scale() * Al[a][b]);
        t.emplace_back(n1 + ra, n1 + cb, -Ml[a][b]);
      }
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 6; ++i) t.emplace_back(ra, V + k * ns + cf.p2[i], Tl[a][k][i]);
    }
    if (!coupled) continue;
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 6; ++i) {
        const int r = k * ns + cf.p2[i];
        fixed_[V + r] += fv[k][i];
        for (int a = 0; a < 3; ++a) {
          t.emplace_back(V + r, n1 + cf.p1[a], Cl[k][i][a]);
          t.emplace_back(V + r, P + cf.p1[a], Bl[a][k][i]);
          t.emplace_back(P + cf.p1[a], V + r, Bl[a][k][i]);
        }
        for (int e = 0; e < 2; ++e)
          for (int l = 0; l < 6; ++l) tm.emplace_back(r, e * ns + cf.p2[l], Kl[k][i][e][l]);
      }
  }

  SpMat M(n1, n1);
  M.setFromTriplets(tmass.begin(), tmass.end());
  const Vec Mphi = M * cur_.head(n1);
  fixed_.head(n1) = -Mphi / tau;
  fixed_.segment(n1, n1) = -pot_scale * chp_.kappa * Mphi;

  momentum_ = SpMat(nv, nv);
  const auto& mask = vs.dirichlet_mask();
  if (coupled) {
    momentum_.setFromTriplets(tm.begin(), tm.end());
    append_block(t, momentum_, V, V);
    for (int j = 0; j < n1; ++j) {
      t.emplace_back(P + j, L_.lam(), lumped_[j]);
      t.emplace_back(L_.lam(), P + j, lumped_[j]);
    }
    if (force_.size()) fixed_.segment(V, nv) -= force_;
    for (int i = 0; i < nv; ++i)
      if (mask[i]) fixed_[V + i] = 0.0;
  } else {
    // prescribed velocity, pressure and multiplier pinned to zero
    for (int k = V; k < N; ++k) t.emplace_back(k, k, 1.0);
    fixed_.segment(V, nv) = -cur_.segment(V, nv);
  }
  lin_ = SpMat(N, N);
  lin_.setFromTriplets(t.begin(), t.end());
  if (coupled) apply_dirichlet(lin_, mask, V);

  weights_ = Vec::Ones(N);
  for (int j = 0; j < n1; ++j) {
    weights_[j] = weights_[n1 + j] = weights_[P + j] = 1.0 / lumped_[j];
  }
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < ns; ++i) weights_[V + k * ns + i] = 1.0 / mv_diag[i];
}

double CoupledStep::norm(const Vec& r) const { return std::sqrt(r.cwiseAbs2().dot(weights_)); }

Vec CoupledStep::nonlinear(const Vec& phi) const {
  Vec out = Vec::Zero(L_.n1);
  if (pot_.smooth())
    for (int j = 0; j < L_.n1; ++j) out[j] = chp_.pot_scale() * lumped_[j] * pot_.eval(phi[j]).d1;
  return out;
}

Vec CoupledStep::residual(const Vec& y, const Vec* slack) const {
  Vec r = lin_ * y + fixed_;
  if (pot_.smooth()) r.segment(L_.n1, L_.n1) += nonlinear(y.head(L_.n1));
  else if (slack) r.segment(L_.n1, L_.n1) += chp_.pot_scale() * lumped_.cwiseProduct(*slack);
  return r;
}

SpMat CoupledStep::jacobian(const Vec& y, const std::vector<signed char>* active) const {
  const int n1 = L_.n1;
  SpMat J = lin_;
  Triplets t;
  if (pot_.smooth()) {
    for (int j = 0; j < n1; ++j) t.emplace_back(n1 + j, j, chp_.pot_scale() * lumped_[j] * pot_.eval(y[j]).d2);
  } else if (active) {
    const auto& act = *active;
    J.prune([&](int r, int, double) { return !(r >= n1 && r < 2 * n1 && act[r - n1]); });
    for (int j = 0; j < n1; ++j)
      if (act[j]) t.emplace_back(n1 + j, j, 1.0);
  }
  if (!t.empty()) {
    SpMat D(J.rows(), J.cols());
    D.setFromTriplets(t.begin(), t.end());
    J += D;
  }
  return J;
}

CoupledStep::Solution CoupledStep::solve(const Vec& guess, const std::vector<signed char>& active_guess,
                                         const SolverControls& ctl) const {
  const int n1 = L_.n1;
  const double tol = ctl.tol * std::max(1.0, norm(fixed_));
  Solution sol;
  sol.y = guess;
  sol.slack = Vec::Zero(n1);
  if (pot_.smooth()) {
    Vec r = residual(sol.y);
    double nr = norm(r);
    bool stalled = false;
    for (int it = 0; nr > tol && !stalled; ++it) {
      if (it >= ctl.max_newton) throw StepFailure("coupled Newton did not converge", nr, it);
      const Vec dy = solve_sparse(jacobian(sol.y), -r);
      double step = 1.0;
      for (;;) {
        const Vec y_t = sol.y + step * dy;
        const Vec r_t = residual(y_t);
        const double n_t = norm(r_t);
        if (n_t < nr || step < 1.0 / 1024) {
          stalled = n_t > 0.1 * nr && nr <= kRoundoffFloor * std::max(1.0, norm(fixed_));
          sol.y = y_t;
          r = r_t;
          nr = n_t;
          break;
        }
        step *= 0.5;
      }
      sol.iterations = it + 1;
    }
    for (int j = 0; j < n1; ++j) sol.slack[j] = pot_.eval(sol.y[j]).d1;
    sol.residual = nr;
    return sol;
  }

  // primal-dual active set with complementarity constant 1
  std::vector<signed char> act = active_guess;
  act.resize(n1, 0);
  for (int it = 0;; ++it) {
    if (it >= ctl.max_active_set)
      throw StepFailure("coupled active set iteration did not settle", norm(residual(sol.y, &sol.slack)), it);
    Vec rhs = -fixed_;
    for (int j = 0; j < n1; ++j)
      if (act[j]) rhs[n1 + j] = act[j] > 0 ? pot_.upper : pot_.lower;
    sol.y = solve_sparse(jacobian(sol.y, &act), rhs);
    for (int j = 0; j < n1; ++j) {
      if (act[j] > 0) sol.y[j] = pot_.upper;
      if (act[j] < 0) sol.y[j] = pot_.lower;
    }
    const Vec r = lin_ * sol.y + fixed_;
    bool same = true;
    for (int j = 0; j < n1; ++j) {
      const double a = act[j] ? -r[n1 + j] / (chp_.pot_scale() * lumped_[j]) : 0.0;
      sol.slack[j] = a;
      signed char next = 0;
      if (a + (sol.y[j] - pot_.upper) > 0.0) next = 1;
      else if (a + (sol.y[j] - pot_.lower) < 0.0) next = -1;
      if (next != act[j]) same = false;
      act[j] = next;
    }
    sol.iterations = it + 1;
    if (same) break;
  }
  sol.active = act;
  sol.residual = norm(residual(sol.y, &sol.slack));
  if (sol.residual > tol) throw StepFailure("coupled active set residual above tolerance", sol.residual, sol.iterations);
  return sol;
}

SpMat CoupledStep::d_cur(const Vec& y) const {
  const int N = L_.size();
  SpMat D(N, N);
  if (mode_ == Mode::Init) return D;
  const FeSpace& ps = *L_.phase;
  const FeSpace& vs = *L_.velocity;
  const int n1 = L_.n1, ns = L_.nv / 2, V = L_.vel();
  const double tau = chp_.tau, dr = flp_.drho(), de = flp_.deta(), kap = chp_.pot_scale() * chp_.kappa;
  const Mobility mob = chp_.mobility;
  const auto& mask = vs.dirichlet_mask();
  Triplets t;
  for (int c = 0; c < L_.mesh->n_cells(); ++c) {
    const CellFrame cf(ps, vs, c);
    double Pp[3][3] = {}, Vp[2][6][3] = {}, Vm[2][6][3] = {}, Vv[2][6][2][6] = {};
    for (const auto& q : quad_rule(5)) {
      const QuadFrame qf(cf, q);
      const double w = qf.w;
      const double phc = qf.p1(cf, cur_), pho = qf.p1(cf, phi_old_);
      const double ro = flp_.rho(pho), m_o = mob(pho), dm_c = mob.d1(phc);
      double gmu[2], v[2], gv[2][2];
      qf.p1_grad(cf, y, n1, gmu);
      qf.p2(cf, y, V, ns, v, gv);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double vda = v[0] * cf.dZ[a][0] + v[1] * cf.dZ[a][1];
          const double gmda = gmu[0] * cf.dZ[a][0] + gmu[1] * cf.dZ[a][1];
          Pp[a][b] += (-qf.Z[a] * qf.Z[b] / tau - qf.Z[b] * vda + dm_c * qf.Z[b] * gmda) * w;
        }
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 6; ++i) {
          double visc = 0.0;
          for (int d = 0; d < 2; ++d) visc += (gv[k][d] + gv[d][k]) * qf.dN[i][d];
          for (int b = 0; b < 3; ++b) {
            Vp[k][i][b] += qf.Z[b] * (0.5 * dr * v[k] * qf.N[i] / tau + de * visc + gmu[k] * qf.N[i]) * w;
            const double dzgv = cf.dZ[b][0] * gv[k][0] + cf.dZ[b][1] * gv[k][1];
            const double dzdn = cf.dZ[b][0] * qf.dN[i][0] + cf.dZ[b][1] * qf.dN[i][1];
            Vm[k][i][b] -= 0.5 * dr * m_o * (dzgv * qf.N[i] - dzdn * v[k]) * w;
          }
          for (int e = 0; e < 2; ++e)
            for (int l = 0; l < 6; ++l) {
              double val = 0.5 * ro * qf.N[l] * (gv[k][e] * qf.N[i] - qf.dN[i][e] * v[k]);
              if (e == k) val -= ro * qf.N[l] * qf.N[i] / tau;
              Vv[k][i][e][l] += val * w;
            }
        }
    }
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) t.emplace_back(cf.p1[a], cf.p1[b], Pp[a][b]);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 6; ++i) {
        const int r = k * ns + cf.p2[i];
        if (mask[r]) continue;
        for (int b = 0; b < 3; ++b) {
          t.emplace_back(V + r, cf.p1[b], Vp[k][i][b]);
          t.emplace_back(V + r, n1 + cf.p1[b], Vm[k][i][b]);
        }
        for (int e = 0; e < 2; ++e)
          for (int l = 0; l < 6; ++l) {
            const int col = e * ns + cf.p2[l];
            if (!mask[col]) t.emplace_back(V + r, V + col, Vv[k][i][e][l]);
          }
      }
  }
  // μ rows see φ_cur only through the explicit concave term
  const SpMat M = mass_matrix(ps);
  append_block(t, M, n1, 0, -kap);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SpMat CoupledStep::d_old(const Vec& y) const {
  const int N = L_.size();
  SpMat D(N, N);
  if (mode_ == Mode::Init) return D;
  const FeSpace& ps = *L_.phase;
  const FeSpace& vs = *L_.velocity;
  const int n1 = L_.n1, ns = L_.nv / 2, V = L_.vel();
  const double tau = chp_.tau, dr = flp_.drho();
  const Mobility mob = chp_.mobility;
  const auto& mask = vs.dirichlet_mask();
  Triplets t;
  for (int c = 0; c < L_.mesh->n_cells(); ++c) {
    const CellFrame cf(ps, vs, c);
    double Vo[2][6][3] = {};
    for (const auto& q : quad_rule(5)) {
      const QuadFrame qf(cf, q);
      const double w = qf.w;
      const double pho = qf.p1(cf, phi_old_);
      const double dm_o = mob.d1(pho);
      double gmu_c[2], vc[2], gvc[2][2], v[2], gv[2][2];
      qf.p1_grad(cf, cur_, n1, gmu_c);
      qf.p2(cf, cur_, V, ns, vc, gvc);
      qf.p2(cf, y, V, ns, v, gv);
      // ∂W/∂φ_old per unit Z_b
      const double dW[2] = {dr * vc[0] - dr * dm_o * gmu_c[0], dr * vc[1] - dr * dm_o * gmu_c[1]};
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 6; ++i) {
          const double dWgv = dW[0] * gv[k][0] + dW[1] * gv[k][1];
          const double dWdn = dW[0] * qf.dN[i][0] + dW[1] * qf.dN[i][1];
          double val = (0.5 * dr * v[k] - dr * vc[k]) * qf.N[i] / tau + 0.5 * (dWgv * qf.N[i] - dWdn * v[k]);
          if (k == 1) val += flp_.gravity * dr * qf.N[i];
          for (int b = 0; b < 3; ++b) Vo[k][i][b] += qf.Z[b] * val * w;
        }
    }
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 6; ++i) {
        const int r = k * ns + cf.p2[i];
        if (mask[r]) continue;
        for (int b = 0; b < 3; ++b) t.emplace_back(V + r, cf.p1[b], Vo[k][i][b]);
      }
  }
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SpMat CoupledStep::flux_block() const {
  const FeSpace& ps = *L_.phase;
  const FeSpace& vs = *L_.velocity;
  const int ns = L_.nv / 2;
  const double dr = flp_.drho();
  const Mobility mob = chp_.mobility;
  Triplets t;
  if (mode_ == Mode::Coupled) {
    for (int c = 0; c < L_.mesh->n_cells(); ++c) {
      const CellFrame cf(ps, vs, c);
      double Fl[6][6] = {};
      for (const auto& q : quad_rule(5)) {
        const QuadFrame qf(cf, q);
        double gmu_c[2];
        qf.p1_grad(cf, cur_, L_.n1, gmu_c);
        const double s = -dr * mob(qf.p1(cf, phi_old_));
        const double W[2] = {s * gmu_c[0], s * gmu_c[1]};
        for (int i = 0; i < 6; ++i)
          for (int l = 0; l < 6; ++l) {
            const double Wdl = W[0] * qf.dN[l][0] + W[1] * qf.dN[l][1];
            const double Wdi = W[0] * qf.dN[i][0] + W[1] * qf.dN[i][1];
            Fl[i][l] += 0.5 * (qf.N[i] * Wdl - qf.N[l] * Wdi) * qf.w;
          }
      }
      for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 6; ++i)
          for (int l = 0; l < 6; ++l) t.emplace_back(k * ns + cf.p2[i], k * ns + cf.p2[l], Fl[i][l]);
    }
  }
  SpMat F(L_.nv, L_.nv);
  F.setFromTriplets(t.begin(), t.end());
  return F;
}

Vec pack(const CoupledLayout& l, const CoupledState& s) {
  Vec y = Vec::Zero(l.size());
  y.segment(l.phi(), l.n1) = s.phase.phi.coeffs;
  y.segment(l.mu(), l.n1) = s.phase.mu.coeffs;
  if (s.flow.v.space) y.segment(l.vel(), l.nv) = s.flow.v.coeffs;
  if (s.flow.p.space) y.segment(l.pres(), l.n1) = s.flow.p.coeffs;
  y[l.lam()] = s.lambda;
  return y;
}

CoupledState unpack(const CoupledLayout& l, const Vec& y, const Vec& phi_prev, const Vec& slack,
                    const std::vector<signed char>& active) {
  CoupledState s;
  s.phase.phi = Field(l.phase, y.segment(l.phi(), l.n1));
  s.phase.mu = Field(l.phase, y.segment(l.mu(), l.n1));
  s.phase.slack = Field(l.phase, slack);
  for (int j = 0; j < static_cast<int>(active.size()); ++j) {
    if (active[j] > 0) s.phase.active_plus.push_back(j);
    if (active[j] < 0) s.phase.active_minus.push_back(j);
  }
  s.flow.v = Field(l.velocity, y.segment(l.vel(), l.nv));
  s.flow.p = Field(l.phase, y.segment(l.pres(), l.n1));
  s.phi_prev = Field(l.phase, phi_prev);
  s.lambda = y[l.lam()];
  return s;
}

namespace {

std::vector<signed char> active_vector(const PhaseState& s, int n) {
  std::vector<signed char> a(n, 0);
  for (int j : s.active_plus) a[j] = 1;
  for (int j : s.active_minus) a[j] = -1;
  return a;
}

}  // namespace

CoupledState chns_init(const Field& phi_a, const Field& v_a, const Potential& pot, const ChParams& chp,
                       const FluidParams& flp, const SolverControls& ctl) {
  const CoupledLayout l = CoupledLayout::of(phi_a.space, v_a.space);
  CoupledState s0;
  s0.phase = make_phase_state(phi_a, pot);
  s0.flow.v = v_a;
  const Vec cur = pack(l, s0);
  const CoupledStep step(l, CoupledStep::Mode::Init, cur, Vec(), Vec(), pot, chp, flp);
  const auto sol = step.solve(cur, active_vector(s0.phase, l.n1), ctl);
  return unpack(l, sol.y, phi_a.coeffs, sol.slack, sol.active);
}

CoupledState chns_step(const CoupledState& s, const Vec& force, const Potential& pot, const ChParams& chp,
                       const FluidParams& flp, const SolverControls& ctl) {
  const CoupledLayout l = CoupledLayout::of(s.phase.phi.space, s.flow.v.space);
  const Vec cur = pack(l, s);
  const CoupledStep step(l, CoupledStep::Mode::Coupled, cur, s.phi_prev.coeffs, force, pot, chp, flp);
  const auto sol = step.solve(cur, active_vector(s.phase, l.n1), ctl);
  return unpack(l, sol.y, s.phase.phi.coeffs, sol.slack, sol.active);
}

double kinetic_energy(const Field& v, const Field& phi_prev, const FluidParams& flp) {
  const SpMat M = mass_matrix(*v.space, Coefficient(phi_prev, [flp](double x) { return flp.rho(x); }));
  return 0.5 * v.coeffs.dot(M * v.coeffs);
}

double total_energy(const CoupledState& s, const Potential& pot, const ChParams& chp, const FluidParams& flp) {
  return kinetic_energy(s.flow.v, s.phi_prev, flp) + ch_energy(s.phase.phi, pot, chp);
}

EnergyReport energy_step_check(const CoupledState& before, const CoupledState& after, const Vec& force,
                               const Potential& pot, const ChParams& chp, const FluidParams& flp) {
  EnergyReport r;
  const double tau = chp.tau;
  r.energy_new = total_energy(after, pot, chp, flp);
  r.energy_old = total_energy(before, pot, chp, flp);
  Field dv(after.flow.v.space, after.flow.v.coeffs - before.flow.v.coeffs);
  r.kinetic_increment = kinetic_energy(dv, before.phi_prev, flp);
  const FeSpace& ps = *after.phase.phi.space;
  const Vec dphi = after.phase.phi.coeffs - before.phase.phi.coeffs;
  r.gradient_increment = 0.5 * chp.grad_scale() * dphi.dot(stiffness_matrix(ps) * dphi);
  r.kappa_increment = 0.5 * chp.pot_scale() * chp.kappa * dphi.dot(mass_matrix(ps) * dphi);
  const Mobility mob = chp.mobility;
  const SpMat Am = stiffness_matrix(ps, Coefficient(before.phase.phi, [mob](double x) { return mob(x); }));
  r.mobility = tau * after.phase.mu.coeffs.dot(Am * after.phase.mu.coeffs);

  const Field& v = after.flow.v;
  double visc = 0.0, grav = 0.0;
  for (int c = 0; c < v.mesh().n_cells(); ++c) {
    const CellGeometry g = v.space->geometry(c);
    for (const auto& q : quad_rule(5)) {
      const auto g0 = v.gradient(c, q.bary, g, 0), g1 = v.gradient(c, q.bary, g, 1);
      const double off = g0[1] + g1[0];
      const double sym2 = 2 * g0[0] * g0[0] + 2 * g1[1] * g1[1] + off * off;  // Σ (∂_d v_c + ∂_c v_d) ∂_d v_c
      const double wa = q.weight * g.area;
      visc += flp.eta(before.phase.phi.value(c, q.bary)) * sym2 * wa;
      grav += flp.rho(before.phi_prev.value(c, q.bary)) * v.value(c, q.bary, 1) * wa;
    }
  }
  r.viscous = tau * visc;
  r.work = -tau * flp.gravity * grav;
  if (force.size()) r.work += tau * force.dot(v.coeffs);
  return r;
}

void write_step_header(std::ostream& os) {
  os << "step,time,energy,energy_old,kinetic_increment,gradient_increment,viscous,mobility,"
        "kappa_increment,work,slack,mass,phi_min,phi_max\n";
}

void write_step_row(std::ostream& os, int step, double time, const CoupledState& s, const EnergyReport& r) {
  const Vec& phi = s.phase.phi.coeffs;
  const double mass = lumped_mass(*s.phase.phi.space).dot(phi);
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                step, time, r.energy_new, r.energy_old, r.kinetic_increment, r.gradient_increment, r.viscous,
                r.mobility, r.kappa_increment, r.work, r.rhs() - r.lhs(), mass, phi.minCoeff(), phi.maxCoeff());
  os << buf;
}

}  // namespace chns
