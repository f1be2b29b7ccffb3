#pragma once

#include <Eigen/SparseLU>
#include <memory>
#include <stdexcept>

#include "chns/fe_space.hpp"

namespace chns {

class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse LU factorization supporting solves with A and with Aᵀ.
class SparseLU {
 public:
  SparseLU() = default;
  explicit SparseLU(const SpMat& A) { factorize(A); }

  void factorize(const SpMat& A);
  Vec solve(const Vec& b) const;
  Vec solve_transpose(const Vec& b) const;
  int size() const { return n_; }
  bool ready() const { return lu_ != nullptr; }

 private:
  using Impl = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;
  std::unique_ptr<Impl> lu_;
  int n_ = 0;
};

Vec solve_sparse(const SpMat& A, const Vec& b);

}  // namespace chns
