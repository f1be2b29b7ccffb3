#include "chns/linear_solver.hpp"

namespace chns {

void SparseLU::factorize(const SpMat& A) {
  lu_.reset();
  if (A.rows() != A.cols()) throw SingularMatrix("SparseLU: matrix is not square");
  auto lu = std::make_unique<Impl>();
  SpMat c = A;
  c.makeCompressed();
  lu->compute(c);
  if (lu->info() != Eigen::Success) throw SingularMatrix("SparseLU: factorization failed: " + lu->lastErrorMessage());
  n_ = static_cast<int>(A.rows());
  lu_ = std::move(lu);
}

Vec SparseLU::solve(const Vec& b) const {
  if (!lu_) throw SingularMatrix("SparseLU: solve before factorize");
  if (b.size() != n_) throw SingularMatrix("SparseLU: right-hand side size mismatch");
  return lu_->solve(b);
}

Vec SparseLU::solve_transpose(const Vec& b) const {
  if (!lu_) throw SingularMatrix("SparseLU: solve before factorize");
  if (b.size() != n_) throw SingularMatrix("SparseLU: right-hand side size mismatch");
  return lu_->transpose().solve(b);
}

Vec solve_sparse(const SpMat& A, const Vec& b) { return SparseLU(A).solve(b); }

}  // namespace chns
