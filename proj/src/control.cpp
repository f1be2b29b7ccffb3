#include "chns/control.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <cmath>
#include <cstdio>
#include <limits>

#include "chns/transfer.hpp"

namespace chns {

double Bump::operator()(const Point& p) const {
  const double sx = (p.x - cx) / rx, sy = (p.y - cy) / ry;
  if (std::abs(sx) >= 1.0 || std::abs(sy) >= 1.0) return 0.0;
  const double a = std::cos(0.5 * M_PI * sx), b = std::cos(0.5 * M_PI * sy);
  return a * a * b * b;
}

ControlBasis ControlBasis::full(SpacePtr velocity) {
  ControlBasis cb;
  cb.velocity_ = std::move(velocity);
  const auto& mask = cb.velocity_->dirichlet_mask();
  Triplets t;
  int col = 0;
  for (int i = 0; i < cb.velocity_->n_dof(); ++i)
    if (!mask[i]) t.emplace_back(i, col++, 1.0);
  cb.E_ = SpMat(cb.velocity_->n_dof(), col);
  cb.E_.setFromTriplets(t.begin(), t.end());
  cb.finish();
  return cb;
}

ControlBasis ControlBasis::ansatz(SpacePtr velocity, std::vector<Bump> bumps, double amplitude) {
  if (bumps.empty()) throw std::invalid_argument("control ansatz needs at least one bump");
  if (!(amplitude > 0.0)) throw std::invalid_argument("control amplitude must be positive");
  const Rect& dom = velocity->mesh()->domain();
  for (const Bump& b : bumps) {
    if (b.component != 0 && b.component != 1) throw std::invalid_argument("bump component must be 0 or 1");
    if (!(b.rx > 0.0 && b.ry > 0.0) || b.cx - b.rx < dom.x0 || b.cx + b.rx > dom.x1 || b.cy - b.ry < dom.y0 ||
        b.cy + b.ry > dom.y1)
      throw std::invalid_argument("bump support must lie inside the domain");
  }
  ControlBasis cb;
  cb.velocity_ = std::move(velocity);
  cb.bumps_ = std::move(bumps);
  cb.amplitude_ = amplitude;
  const int n = cb.velocity_->n_dof(), ns = cb.velocity_->n_scalar();
  const auto& pts = cb.velocity_->dof_points();
  Triplets t;
  for (int j = 0; j < static_cast<int>(cb.bumps_.size()); ++j) {
    const Bump& b = cb.bumps_[j];
    for (int k = 0; k < ns; ++k) {
      const double v = b(pts[k]);
      if (v != 0.0) t.emplace_back(b.component * ns + k, j, amplitude * v);
    }
  }
  cb.E_ = SpMat(n, static_cast<int>(cb.bumps_.size()));
  cb.E_.setFromTriplets(t.begin(), t.end());
  cb.finish();
  return cb;
}

void ControlBasis::finish() {
  const SpMat M = mass_matrix(*velocity_);
  G_ = SpMat(E_.transpose() * M * E_);
  SpMat ME = M * E_;
  const auto& mask = velocity_->dirichlet_mask();
  ME.prune([&](int r, int, double) { return !mask[r]; });
  F_ = ME;
  gram_factor_ = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(G_);
  if (gram_factor_->info() != Eigen::Success) throw SingularMatrix("control Gram matrix is singular");
}

Vec ControlBasis::riesz(const Vec& d) const { return gram_factor_->solve(d); }

void ControlProblem::validate() const {
  if (K < 2) throw std::invalid_argument("control horizon needs K >= 2");
  if (!(objective.xi > 0.0)) throw std::invalid_argument("control cost xi must be positive");
  if (!objective.phi_d.space || !objective.phi_d.mesh().same_hierarchy(*layout.mesh))
    throw SpaceError("desired state must live on a mesh of the state hierarchy");
  if (!basis.velocity() || !basis.velocity()->same_layout(*layout.velocity))
    throw SpaceError("control basis must use the state velocity space");
  if (!phi_a.space || !phi_a.space->same_layout(*layout.phase) || !v_a.space ||
      !v_a.space->same_layout(*layout.velocity))
    throw SpaceError("initial data must live on the state spaces");
}

CoupledState Trajectory::state(const CoupledLayout& l, int n) const {
  const Vec prev = n == 0 ? phi_a : Vec(y[n - 1].head(l.n1));
  return unpack(l, y[n], prev, slack[n], active[n]);
}

namespace {

void record(Trajectory& tr, const CoupledLayout& l, const CoupledState& s) {
  tr.y.push_back(pack(l, s));
  tr.slack.push_back(s.phase.slack.coeffs);
  std::vector<signed char> a(l.n1, 0);
  for (int j : s.phase.active_plus) a[j] = 1;
  for (int j : s.phase.active_minus) a[j] = -1;
  tr.active.push_back(std::move(a));
}

Vec phi_old_of(const Trajectory& tr, const CoupledLayout& l, int n) {
  return n >= 2 ? Vec(tr.y[n - 2].head(l.n1)) : tr.phi_a;
}

// Step n rebuilt from the stored trajectory; n = 0 is the decoupled start.
CoupledStep step_of(const ControlProblem& prob, const Potential& pot, const Trajectory& tr, int n,
                    const Vec& force = Vec()) {
  const CoupledLayout& l = prob.layout;
  if (n > 0)
    return CoupledStep(l, CoupledStep::Mode::Coupled, tr.y[n - 1], phi_old_of(tr, l, n), force, pot, prob.chp,
                       prob.flp);
  Vec cur = Vec::Zero(l.size());
  cur.head(l.n1) = prob.phi_a.coeffs;
  cur.segment(l.vel(), l.nv) = prob.v_a.coeffs;
  return CoupledStep(l, CoupledStep::Mode::Init, cur, Vec(), Vec(), pot, prob.chp, prob.flp);
}

}  // namespace

Trajectory forward_solve(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u) {
  prob.validate();
  if (u.rows() != prob.K - 1 || u.cols() != prob.basis.size()) throw std::invalid_argument("control has wrong shape");
  const CoupledLayout& l = prob.layout;
  Trajectory tr;
  tr.phi_a = prob.phi_a.coeffs;
  CoupledState s = chns_init(prob.phi_a, prob.v_a, pot, prob.chp, prob.flp, prob.ctl);
  record(tr, l, s);
  for (int n = 1; n < prob.K; ++n) {
    try {
      s = chns_step(s, prob.basis.force(u.row(n - 1).transpose()), pot, prob.chp, prob.flp, prob.ctl);
    } catch (const StepFailure& e) {
      throw StepFailure("forward step " + std::to_string(n) + ": " + e.what(), e.residual(), e.iterations());
    }
    record(tr, l, s);
  }
  return tr;
}

Misfit Misfit::create(const CoupledLayout& l, const Field& phi_d) {
  Misfit m;
  m.mass = mass_matrix(*l.phase);
  m.load = m.mass * l2_project(phi_d, l.phase).coeffs;
  m.target_sq = inner_product(phi_d, phi_d, XSpace::L2);
  return m;
}

double control_inner(const ControlProblem& prob, const ControlCoeffs& a, const ControlCoeffs& b) {
  const SpMat& G = prob.basis.gram();
  double s = 0.0;
  for (int n = 0; n < a.rows(); ++n) s += a.row(n).dot(G * b.row(n).transpose());
  return s;
}

double control_cost(const ControlProblem& prob, const ControlCoeffs& u) {
  return 0.5 * prob.objective.xi * control_inner(prob, u, u);
}

double objective(const ControlProblem& prob, const Trajectory& traj, const ControlCoeffs& u) {
  const Misfit m = Misfit::create(prob.layout, prob.objective.phi_d);
  return m.value(traj.y.back().head(prob.layout.n1)) + control_cost(prob, u);
}

AdjointState adjoint_solve(const ControlProblem& prob, const Trajectory& traj, const Potential& pot) {
  const CoupledLayout& l = prob.layout;
  const int K = traj.size(), N = l.size(), n1 = l.n1;
  if (K != prob.K) throw std::invalid_argument("trajectory length differs from the horizon");
  const Misfit m = Misfit::create(l, prob.objective.phi_d);

  AdjointState adj;
  adj.z.assign(K, Vec::Zero(N));
  adj.lambda.assign(K, Vec::Zero(n1));
  adj.residual.assign(K, 0.0);
  // contributions of later steps to the right-hand side of instant n
  std::vector<Vec> rhs(K, Vec::Zero(N));
  rhs[K - 1].head(n1) = m.gradient(traj.y[K - 1].head(n1));

  for (int n = K - 1; n >= 0; --n) {
    const CoupledStep step = step_of(prob, pot, traj, n);
    const SpMat J = pot.smooth() ? step.jacobian(traj.y[n]) : step.jacobian(traj.y[n], &traj.active[n]);
    const SparseLU lu(J);
    adj.z[n] = -lu.solve_transpose(rhs[n]);
    adj.residual[n] = (J.transpose() * adj.z[n] + rhs[n]).norm() / std::max(1.0, rhs[n].norm());
    if (n >= 1) rhs[n - 1] += step.d_cur(traj.y[n]).transpose() * adj.z[n];
    if (n >= 2) rhs[n - 2].head(n1) += (step.d_old(traj.y[n]).transpose() * adj.z[n]).head(n1);
    if (pot.smooth())
      for (int j = 0; j < n1; ++j) adj.lambda[n][j] = pot.eval(traj.y[n][j]).d2 * adj.z[n][n1 + j];
  }
  return adj;
}

Gradient reduced_gradient(const ControlProblem& prob, const AdjointState& adj, const ControlCoeffs& u) {
  const CoupledLayout& l = prob.layout;
  const ControlBasis& cb = prob.basis;
  Gradient g;
  g.dual.resize(u.rows(), u.cols());
  g.riesz.resize(u.rows(), u.cols());
  double sq = 0.0;
  for (int n = 1; n <= u.rows(); ++n) {
    const Vec c = u.row(n - 1).transpose();
    const Vec d = prob.objective.xi * (cb.gram() * c) - cb.load().transpose() * adj.z[n].segment(l.vel(), l.nv);
    const Vec r = cb.riesz(d);
    g.dual.row(n - 1) = d.transpose();
    g.riesz.row(n - 1) = r.transpose();
    sq += d.dot(r);
  }
  g.norm = std::sqrt(std::max(0.0, sq));
  return g;
}

Gradient evaluate_gradient(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u, double* J,
                           Trajectory* traj, AdjointState* adj) {
  Trajectory tr = forward_solve(prob, pot, u);
  AdjointState a = adjoint_solve(prob, tr, pot);
  Gradient g = reduced_gradient(prob, a, u);
  if (J) *J = objective(prob, tr, u);
  if (traj) *traj = std::move(tr);
  if (adj) *adj = std::move(a);
  return g;
}

Stationarity c_stationarity_residual(const ControlProblem& prob, const Trajectory& traj, const AdjointState& adj) {
  const CoupledLayout& l = prob.layout;
  const Vec L = lumped_mass(*l.phase);
  Stationarity s;
  double lam_min = 0.0;
  for (int n = 0; n < traj.size(); ++n) {
    const Vec r = adj.r(l, n);
    s.r1 = std::max(s.r1, std::abs(L.dot(traj.slack[n].cwiseProduct(r))));
    lam_min = std::min(lam_min, L.dot(adj.lambda[n].cwiseProduct(r)));
  }
  s.r2 = std::max(0.0, -lam_min);
  return s;
}

void write_opt_header(std::ostream& os) {
  os << "level,iteration,objective,measure,alpha,step,r1,r2,certificate\n";
}

void write_opt_row(std::ostream& os, const OptRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.level, r.iteration,
                r.objective, r.measure, r.alpha, r.step, r.r1, r.r2, r.certificate);
  os << buf;
}

namespace {

double alpha_of(const Potential& pot) { return pot.kind == PotentialKind::MoreauYosida ? pot.alpha : 0.0; }

// Forward solve that reports failure instead of throwing (trial points of a line search).
std::optional<Trajectory> try_forward(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u) {
  try {
    return forward_solve(prob, pot, u);
  } catch (const StepFailure&) {
  } catch (const SingularMatrix&) {
  }
  return std::nullopt;
}

}  // namespace

DescentResult steepest_descent(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u0,
                               const DescentOptions& opt, int level) {
  if (!pot.smooth()) throw std::invalid_argument("steepest descent needs a smooth potential");
  DescentResult res;
  res.u = u0;
  double J = 0.0;
  Gradient g = evaluate_gradient(prob, pot, res.u, &J, &res.traj, &res.adjoint);
  const double g0 = g.norm;
  double t_next = opt.initial_step;
  OptRecord rec{level, 0, J, g.norm, alpha_of(pot), 0.0};
  res.log.push_back(rec);

  for (int it = 0;; ++it) {
    res.iterations = it;
    if (g.norm <= opt.tol || g.norm <= opt.rel_tol * g0) {
      res.converged = true;
      break;
    }
    if (it >= opt.max_iter) {
      res.message = "iteration limit reached";
      break;
    }
    const double slope = -g.norm * g.norm;
    double t = t_next;
    std::optional<Trajectory> trial;
    double J_trial = 0.0;
    for (;;) {
      const ControlCoeffs u_t = res.u - t * g.riesz;
      trial = try_forward(prob, pot, u_t);
      if (trial) {
        J_trial = objective(prob, *trial, u_t);
        if (J_trial <= J + opt.armijo * t * slope) break;
      }
      t *= opt.backtrack;
      if (t < opt.min_step) break;
    }
    if (t < opt.min_step) {
      res.message = "line search failed";
      break;
    }
    const ControlCoeffs u_new = res.u - t * g.riesz;
    AdjointState adj = adjoint_solve(prob, *trial, pot);
    const Gradient g_new = reduced_gradient(prob, adj, u_new);
    t_next = t;
    if (opt.barzilai_borwein) {
      // s = u_new - u, y = dual gradient change; BB quotient sᵀGs / sᵀy
      const ControlCoeffs s = u_new - res.u;
      const double sy = (s.array() * (g_new.dual - g.dual).array()).sum();
      const double bb = control_inner(prob, s, s) / sy;
      if (sy > 0.0 && std::isfinite(bb)) t_next = bb;
    }
    res.u = u_new;
    res.traj = std::move(*trial);
    res.adjoint = std::move(adj);
    g = g_new;
    J = J_trial;
    res.log.push_back({level, it + 1, J, g.norm, alpha_of(pot), t});
  }
  res.objective = J;
  res.measure = g.norm;
  return res;
}

PenalizationResult penalization_loop(const ControlProblem& prob, const ControlCoeffs& u0,
                                     const PenalizationOptions& opt) {
  if (!(opt.alpha0 > 0.0) || !(opt.factor > 0.0 && opt.factor < 1.0))
    throw std::invalid_argument("penalty schedule must start positive and decrease");
  PenalizationResult res;
  res.u = u0;
  double alpha = opt.alpha0;
  for (int level = 0; level < opt.max_levels; ++level, alpha *= opt.factor) {
    const Potential pot = Potential::moreau_yosida(alpha);
    DescentResult d = steepest_descent(prob, pot, res.u, opt.descent, level);
    const Stationarity st = c_stationarity_residual(prob, d.traj, d.adjoint);
    d.log.back().r1 = st.r1;
    d.log.back().r2 = st.r2;
    res.log.insert(res.log.end(), d.log.begin(), d.log.end());
    res.alphas.push_back(alpha);
    res.residuals.push_back(st);
    res.objectives.push_back(d.objective);
    res.u = std::move(d.u);
    res.traj = std::move(d.traj);
    if (st.r1 <= opt.tol_c && st.r2 <= opt.tol_c) {
      res.converged = true;
      break;
    }
  }
  return res;
}

namespace {

constexpr double kBiactiveTol = 1e-10;

int count_biactive(const Trajectory& tr, const Potential& pot, int n) {
  const Vec& y = tr.y[n];
  const Vec& a = tr.slack[n];
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  int count = 0;
  for (int j = 0; j < a.size(); ++j) {
    const bool on_bound = std::abs(y[j] - pot.upper) <= 1e-12 || std::abs(y[j] - pot.lower) <= 1e-12;
    if (on_bound && std::abs(a[j]) <= kBiactiveTol * scale) ++count;
  }
  return count;
}

}  // namespace

StepDerivative::StepDerivative(const ControlProblem& prob, const Potential& pot, const Trajectory& traj,
                               const ControlCoeffs& u, double fallback_alpha)
    : prob_(prob) {
  if (prob.K != 2 || traj.size() != 2) throw std::invalid_argument("directional derivative needs K = 2");
  if (pot.smooth()) throw std::invalid_argument("directional derivative is for the double obstacle");
  const CoupledLayout& l = prob.layout;
  c_ = u.row(0).transpose();
  phi_ = traj.y[1].head(l.n1);
  biactive_count_ = count_biactive(traj, pot, 1);
  const Vec force = prob.basis.force(c_);
  if (biactive_count_ == 0) {
    const CoupledStep step = step_of(prob, pot, traj, 1, force);
    J_ = step.jacobian(traj.y[1], &traj.active[1]);
  } else {
    regularized_ = true;
    const Potential reg = Potential::moreau_yosida(fallback_alpha);
    const CoupledStep step = step_of(prob, reg, traj, 1, force);
    const auto sol = step.solve(traj.y[1], {}, prob.ctl);
    J_ = step.jacobian(sol.y);
  }
  lu_ = std::make_shared<SparseLU>(J_);
  const Misfit m = Misfit::create(l, prob.objective.phi_d);
  misfit_grad_ = m.gradient(phi_);
  Vec rhs = Vec::Zero(l.size());
  rhs.head(l.n1) = misfit_grad_;
  const Vec w = lu_->solve_transpose(rhs);
  grad_ = prob.objective.xi * (prob.basis.gram() * c_) + prob.basis.load().transpose() * w.segment(l.vel(), l.nv);
}

DirectionalDerivative StepDerivative::apply(const Vec& h) const {
  const CoupledLayout& l = prob_.layout;
  Vec rhs = Vec::Zero(l.size());
  rhs.segment(l.vel(), l.nv) = prob_.basis.force(h);
  DirectionalDerivative d;
  d.dy = lu_->solve(rhs);
  d.regularized = regularized_;
  d.residual = (J_ * d.dy - rhs).norm() / std::max(1.0, rhs.norm());
  return d;
}

double StepDerivative::derivative(const Vec& h) const {
  const DirectionalDerivative d = apply(h);
  return misfit_grad_.dot(d.dy.head(prob_.layout.n1)) + prob_.objective.xi * c_.dot(prob_.basis.gram() * h);
}

DirectionalDerivative directional_derivative_solve(const ControlProblem& prob, const Potential& pot,
                                                   const Trajectory& traj, const ControlCoeffs& u, const Vec& h) {
  if (traj.size() == 2) {
    const int b = count_biactive(traj, pot, 1);
    if (b > 0) throw BiactiveSet(b);
  }
  return StepDerivative(prob, pot, traj, u).apply(h);
}

DescentMethodResult descent_method(const ControlProblem& prob, const Potential& pot, const ControlCoeffs& u0,
                                   const DescentOptions& opt) {
  if (pot.smooth()) throw std::invalid_argument("descent method is for the double obstacle");
  if (prob.K != 2) throw std::invalid_argument("descent method needs K = 2");
  constexpr double kFallbackAlpha = 1e-4;
  DescentMethodResult res;
  res.u = u0;
  res.traj = forward_solve(prob, pot, res.u);
  double J = objective(prob, res.traj, res.u);
  const SpMat G2 = 2.0 * prob.basis.gram();
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-14);
  cg.setMaxIterations(10 * prob.basis.size() + 100);
  cg.compute(G2);
  int failures = 0;

  for (int it = 0;; ++it) {
    res.iterations = it;
    const StepDerivative D(prob, pot, res.traj, res.u, kFallbackAlpha);
    const Vec h = cg.solve(-D.gradient());
    const double hn2 = h.dot(prob.basis.gram() * h);
    const double dJ = D.derivative(h);
    OptRecord rec{0, it, J, std::sqrt(hn2), 0.0, 0.0};
    rec.certificate = dJ + hn2;
    // J'(h) + ‖h‖² = -‖h‖² exactly for the minimizer; roundoff allowance only
    if (rec.certificate > 1e-10 * std::max(hn2, std::numeric_limits<double>::min())) res.certified = false;
    res.h_norm = rec.measure;
    if (rec.measure <= opt.tol) {
      res.log.push_back(rec);
      res.converged = true;
      break;
    }
    if (it >= opt.max_iter) {
      res.log.push_back(rec);
      res.message = "iteration limit reached";
      break;
    }
    double t = opt.initial_step;
    std::optional<Trajectory> trial;
    double J_trial = 0.0;
    for (; t >= opt.min_step; t *= opt.backtrack) {
      ControlCoeffs u_t = res.u;
      u_t.row(0) += t * h.transpose();
      trial = try_forward(prob, pot, u_t);
      if (!trial) continue;
      J_trial = objective(prob, *trial, u_t);
      if (J_trial <= J + opt.armijo * t * dJ) break;
    }
    if (t >= opt.min_step && trial) {
      res.u.row(0) += t * h.transpose();
      res.traj = std::move(*trial);
      J = J_trial;
      rec.step = t;
      res.log.push_back(rec);
      failures = 0;
      continue;
    }
    res.log.push_back(rec);
    // line search failed: one steepest-descent step on the regularized problem
    if (++failures > 1) {
      res.message = "descent and robustification stalled";
      break;
    }
    DescentOptions one = opt;
    one.max_iter = 1;
    const DescentResult sd = steepest_descent(prob, Potential::moreau_yosida(kFallbackAlpha), res.u, one);
    ++res.robustifications;
    std::optional<Trajectory> rob = try_forward(prob, pot, sd.u);
    const double J_rob = rob ? objective(prob, *rob, sd.u) : std::numeric_limits<double>::infinity();
    if (J_rob < J) {
      res.u = sd.u;
      res.traj = std::move(*rob);
      J = J_rob;
      failures = 0;
    } else {
      res.message = "descent and robustification stalled";
      break;
    }
  }
  res.objective = J;
  return res;
}

}  // namespace chns
