#include "chns/pod.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>

namespace chns {

void SnapshotSet::validate() const {
  if (items.empty()) throw SpaceError("snapshot set is empty");
  if (weights.size() != items.size()) throw SpaceError("one weight per snapshot required");
  bool positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw SpaceError("snapshot weights must be finite and nonnegative");
    positive = positive || w > 0.0;
  }
  if (!positive) throw SpaceError("snapshot weights are all zero");
  const FeSpace& first = *items.front().space;
  for (const auto& f : items) {
    if (!f.space) throw SpaceError("snapshot without a space");
    if (f.space->degree() != first.degree() || f.space->components() != first.components())
      throw SpaceError("snapshots must share degree and components");
    if (!f.mesh().same_hierarchy(*first.mesh()))
      throw SpaceError("snapshots belong to different mesh hierarchies");
  }
}

MeshPtr SnapshotSet::common_mesh() const {
  validate();
  std::vector<MeshPtr> meshes;
  for (const auto& f : items)
    if (std::find(meshes.begin(), meshes.end(), f.space->mesh()) == meshes.end()) meshes.push_back(f.space->mesh());
  return meshes.size() == 1 ? meshes.front() : common_refinement(meshes);
}

Mat SnapshotSet::prolongated(const MeshPtr& mesh) const {
  const SpacePtr target = items.front().space->on(mesh);
  Mat Y(target->n_dof(), size());
  for (int i = 0; i < size(); ++i) {
    const Field& f = items[i];
    Y.col(i) = f.space->mesh() == mesh ? f.coeffs : prolongate(f, mesh).coeffs;
  }
  return Y;
}

std::vector<double> trapezoid_weights(int K, double tau) {
  if (K < 1 || !(tau > 0.0)) throw std::invalid_argument("trapezoid_weights: need K ≥ 1 and tau > 0");
  std::vector<double> w(K, tau);
  if (K == 1) return w;
  w.front() = w.back() = 0.5 * tau;
  return w;
}

Mat snapshot_gramian(const SnapshotSet& s) {
  s.validate();
  // snapshots sharing a mesh are handled together
  std::vector<const Mesh*> order;
  std::map<const Mesh*, std::vector<int>> groups;
  for (int i = 0; i < s.size(); ++i) {
    const Mesh* m = s.items[i].space->mesh().get();
    auto [it, fresh] = groups.try_emplace(m);
    if (fresh) order.push_back(m);
    it->second.push_back(i);
  }
  auto stack = [&](const std::vector<int>& idx) {
    const SpacePtr& sp = s.items[idx.front()].space;
    Mat Y(sp->n_dof(), idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Field& f = s.items[idx[k]];
      if (f.space->n_dof() != sp->n_dof()) throw SpaceError("snapshots on one mesh must share the space");
      Y.col(k) = f.coeffs * std::sqrt(s.weights[idx[k]]);
    }
    return Y;
  };

  const int K = s.size();
  Mat G = Mat::Zero(K, K);
  for (std::size_t a = 0; a < order.size(); ++a) {
    const auto& ia = groups[order[a]];
    const Mat Ya = stack(ia);
    const FeSpace& sa = *s.items[ia.front()].space;
    for (std::size_t b = a; b < order.size(); ++b) {
      const auto& ib = groups[order[b]];
      const FeSpace& sb = *s.items[ib.front()].space;
      const SpMat C = a == b ? gram_matrix(sa, s.x) : cross_gram_matrix(sa, sb, s.x);
      const Mat block = Ya.transpose() * (C * stack(ib));
      for (std::size_t i = 0; i < ia.size(); ++i)
        for (std::size_t j = 0; j < ib.size(); ++j) {
          G(ia[i], ib[j]) = block(i, j);
          G(ib[j], ia[i]) = block(i, j);
        }
    }
  }
  return 0.5 * (G + G.transpose());
}

Mat snapshot_gramian_prolonged(const SnapshotSet& s) {
  const MeshPtr mesh = s.common_mesh();
  Mat Y = s.prolongated(mesh);
  for (int i = 0; i < s.size(); ++i) Y.col(i) *= std::sqrt(s.weights[i]);
  const SpMat X = gram_matrix(*s.items.front().space->on(mesh), s.x);
  const Mat G = Y.transpose() * (X * Y);
  return 0.5 * (G + G.transpose());
}

Mat PodBasis::matrix() const {
  Mat P(space()->n_dof(), static_cast<int>(modes.size()));
  for (std::size_t j = 0; j < modes.size(); ++j) P.col(j) = modes[j].coeffs;
  return P;
}

double PodBasis::tail(int l) const {
  double t = 0.0;
  for (int j = l; j < eigenvalues.size(); ++j) t += eigenvalues[j];
  return t;
}

Vec PodBasis::normalized() const { return eigenvalues / eigenvalues[0]; }

int numerical_rank(const Vec& eigenvalues) {
  if (eigenvalues.size() == 0 || !(eigenvalues[0] > 0.0)) return 0;
  int r = 0;
  while (r < eigenvalues.size() && eigenvalues[r] >= 1e-13 * eigenvalues[0]) ++r;
  return r;
}

namespace {

using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using LSpMat = Eigen::SparseMatrix<long double, Eigen::ColMajor, int>;

}  // namespace

PodBasis pod_basis(const SnapshotSet& s, int ell) {
  s.validate();
  const int K = s.size();
  if (ell < 1) throw std::invalid_argument("pod_basis: rank must be positive");
  const MeshPtr mesh = s.common_mesh();
  const SpacePtr space = s.items.front().space->on(mesh);
  Mat Y = s.prolongated(mesh);
  for (int i = 0; i < K; ++i) Y.col(i) *= std::sqrt(s.weights[i]);
  const SpMat X = gram_matrix(*space, s.x);

  // The tail Σ_{j>ℓ} λ_j can sit eight or more orders below λ₁; extended
  // precision keeps its absolute error well under that.
  const LMat Yl = Y.cast<long double>();
  const LSpMat Xl = X.cast<long double>();
  LMat G = Yl.transpose() * (Xl * Yl);
  G = (0.5L * (G + G.transpose())).eval();
  Eigen::SelfAdjointEigenSolver<LMat> eig(G);
  if (eig.info() != Eigen::Success) throw std::runtime_error("Gramian eigen decomposition failed");

  PodBasis b;
  b.x = s.x;
  b.ell = ell;
  b.eigenvalues = eig.eigenvalues().reverse().cast<double>();
  const Mat phi = eig.eigenvectors().rowwise().reverse().cast<double>();
  const int rank = numerical_rank(b.eigenvalues);
  if (ell > rank) throw RankError(ell, rank);

  Mat P = Y * phi.leftCols(ell);
  for (int j = 0; j < ell; ++j) P.col(j) /= std::sqrt(b.eigenvalues[j]);
  // Two Gram-Schmidt sweeps remove the roundoff amplified by small λ_j; the
  // spans of the leading modes are unchanged.
  for (int sweep = 0; sweep < 2; ++sweep)
    for (int j = 0; j < ell; ++j) {
      for (int k = 0; k < j; ++k) P.col(j) -= P.col(k).dot(X * P.col(j)) * P.col(k);
      P.col(j) /= std::sqrt(P.col(j).dot(X * P.col(j)));
    }
  for (int j = 0; j < ell; ++j) b.modes.emplace_back(space, P.col(j));
  return b;
}

double projection_error(const SnapshotSet& s, const PodBasis& b, int ell) {
  if (ell < 0 || ell > static_cast<int>(b.modes.size())) throw std::invalid_argument("projection_error: bad rank");
  const MeshPtr mesh = b.space()->mesh();
  const Mat Y = s.prolongated(mesh);
  const SpMat X = gram_matrix(*b.space(), s.x);
  const Mat P = b.matrix().leftCols(ell);
  const Mat XY = X * Y;
  const Mat E = Y - P * (P.transpose() * XY);
  double err = 0.0;
  for (int i = 0; i < s.size(); ++i) err += s.weights[i] * E.col(i).dot(X * E.col(i));
  return err;
}

PodBasis full_space_basis(const SpacePtr& space, XSpace x) {
  const Mat X = Mat(gram_matrix(*space, x));
  Eigen::SelfAdjointEigenSolver<Mat> eig(X);
  if (eig.info() != Eigen::Success || !(eig.eigenvalues()[0] > 0.0))
    throw SpaceError("full_space_basis: Gram matrix is not positive definite");
  PodBasis b;
  b.x = x;
  b.ell = space->n_dof();
  b.eigenvalues = Vec::Ones(b.ell);
  for (int j = 0; j < b.ell; ++j)
    b.modes.emplace_back(space, Vec(eig.eigenvectors().col(j) / std::sqrt(eig.eigenvalues()[j])));
  return b;
}

DecayReport eigen_decay_report(const Vec& smooth_spectrum, const Vec& nonsmooth_spectrum, int first, int last) {
  DecayReport r;
  r.smooth = smooth_spectrum / smooth_spectrum[0];
  r.nonsmooth = nonsmooth_spectrum / nonsmooth_spectrum[0];
  r.first = std::max(1, first);
  r.last = std::min<int>({last, static_cast<int>(r.smooth.size()), static_cast<int>(r.nonsmooth.size())});
  r.ordered = r.first <= r.last;
  for (int j = r.first; j <= r.last; ++j) r.ordered = r.ordered && r.smooth[j - 1] <= r.nonsmooth[j - 1];
  return r;
}

}  // namespace chns
