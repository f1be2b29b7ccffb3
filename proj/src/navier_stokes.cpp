#include "chns/navier_stokes.hpp"

#include <cmath>

#include "chns/linear_solver.hpp"

namespace chns {

void FluidParams::validate() const {
  if (!(rho1 > 0.0) || !(rho2 > 0.0)) throw std::invalid_argument("FluidParams: densities must be positive");
  if (!(eta1 > 0.0) || !(eta2 > 0.0)) throw std::invalid_argument("FluidParams: viscosities must be positive");
  if (!(Re > 0.0) || !(tau > 0.0)) throw std::invalid_argument("FluidParams: Re and tau must be positive");
}

FlowSpaces FlowSpaces::create(const MeshPtr& mesh) {
  FlowSpaces fs;
  fs.velocity = FeSpace::create(mesh, 2, 2, true);
  fs.pressure = FeSpace::create(mesh, 1);
  fs.B = divergence_matrix(*fs.velocity, *fs.pressure);
  fs.mean = lumped_mass(*fs.pressure);
  return fs;
}

SpMat skew_convection(const FeSpace& v, const Field& w) {
  SpMat N = convection_matrix(v, w);
  SpMat Nt = N.transpose();
  // ((w·∇)ψ_i, ψ_j) is the transpose entry of ((w·∇)ψ_j, ψ_i)
  return 0.5 * (N - Nt);
}

double divergence_residual(const FlowSpaces& fs, const Field& v) {
  return (fs.B * v.coeffs).cwiseAbs().maxCoeff();
}

FlowState ns_step(const FlowState& prev, const Vec& force, const FluidParams& prm, const NsOptions& opt,
                  std::vector<double>* history) {
  prm.validate();
  const MeshPtr& mesh = prev.v.space->mesh();
  const FlowSpaces fs = FlowSpaces::create(mesh);
  const int nv = fs.velocity->n_dof(), np = fs.pressure->n_dof(), n = nv + np + 1;
  if (force.size() != nv) throw SpaceError("ns_step: force has wrong length");
  const auto& mask = fs.velocity->dirichlet_mask();

  const SpMat Mv = mass_matrix(*fs.velocity);
  SpMat K = Mv / prm.tau;
  K += stiffness_matrix(*fs.velocity) / prm.Re;
  const Vec fixed_v = -Mv * prev.v.coeffs / prm.tau - force;

  Vec x = Vec::Zero(n);
  x.head(nv) = prev.v.coeffs;
  for (int i = 0; i < nv; ++i)
    if (mask[i]) x[i] = 0.0;

  auto residual = [&](const Vec& y) {
    Field v(fs.velocity, y.head(nv));
    Vec r(n);
    Vec rv = K * v.coeffs + fixed_v + fs.B.transpose() * y.segment(nv, np);
    if (opt.convection) rv += skew_convection(*fs.velocity, v) * v.coeffs;
    for (int i = 0; i < nv; ++i)
      if (mask[i]) rv[i] = y[i];
    r.head(nv) = rv;
    r.segment(nv, np) = fs.B * v.coeffs + fs.mean * y[n - 1];
    r[n - 1] = fs.mean.dot(y.segment(nv, np));
    return r;
  };

  Vec r = residual(x);
  double norm = r.norm();
  if (history) history->push_back(norm);
  for (int it = 0; norm > opt.tol; ++it) {
    if (it >= opt.max_newton) throw StepFailure("Navier-Stokes Newton did not converge", norm, it);
    Field v(fs.velocity, x.head(nv));
    SpMat Kv = K;
    if (opt.convection) {
      // derivative of c(v;v,·): c(v;δv,·) + c(δv;v,·)
      Kv += skew_convection(*fs.velocity, v);
      Triplets t;
      const int ns = fs.velocity->n_scalar();
      double N[6], dN[6][2];
      for (int c = 0; c < mesh->n_cells(); ++c) {
        const CellGeometry g = fs.velocity->geometry(c);
        const auto& d = fs.velocity->cell_dofs()[c];
        double loc[2][6][2][6] = {};
        for (const auto& q : quad_rule(5)) {
          shape_values(2, q.bary, N);
          shape_grads(2, q.bary, g, dN);
          const double wa = q.weight * g.area;
          double val[2], grad[2][2];
          for (int a = 0; a < 2; ++a) {
            val[a] = v.value(c, q.bary, a);
            auto gr = v.gradient(c, q.bary, g, a);
            grad[a][0] = gr[0];
            grad[a][1] = gr[1];
          }
          // ½ ((δ·∇)v, ψ) - ½ ((δ·∇)ψ, v) with δ = N_l e_e, ψ = N_i e_c
          for (int i = 0; i < 6; ++i)
            for (int cc = 0; cc < 2; ++cc)
              for (int l = 0; l < 6; ++l)
                for (int e = 0; e < 2; ++e)
                  loc[cc][i][e][l] += 0.5 * N[l] * (grad[cc][e] * N[i] - dN[i][e] * val[cc]) * wa;
        }
        for (int cc = 0; cc < 2; ++cc)
          for (int i = 0; i < 6; ++i)
            for (int e = 0; e < 2; ++e)
              for (int l = 0; l < 6; ++l) t.emplace_back(cc * ns + d[i], e * ns + d[l], loc[cc][i][e][l]);
      }
      SpMat D(nv, nv);
      D.setFromTriplets(t.begin(), t.end());
      Kv += D;
    }
    Triplets t;
    append_block(t, Kv, 0, 0);
    append_block(t, SpMat(fs.B.transpose()), 0, nv);
    append_block(t, fs.B, nv, 0);
    for (int j = 0; j < np; ++j) {
      t.emplace_back(nv + j, n - 1, fs.mean[j]);
      t.emplace_back(n - 1, nv + j, fs.mean[j]);
    }
    SpMat J(n, n);
    J.setFromTriplets(t.begin(), t.end());
    apply_dirichlet(J, mask);
    x += solve_sparse(J, -r);
    r = residual(x);
    norm = r.norm();
    if (history) history->push_back(norm);
  }
  FlowState out;
  out.v = Field(fs.velocity, x.head(nv));
  out.p = Field(fs.pressure, x.segment(nv, np));
  return out;
}

}  // namespace chns
