#pragma once

#include <functional>
#include <optional>

#include "chns/fe_space.hpp"

namespace chns {

/// Scalar weight inside a bilinear form: constant, function of position, or a
/// (possibly mapped) scalar field living on the assembly mesh.
class Coefficient {
 public:
  Coefficient() = default;
  Coefficient(double c) : constant_(c) {}
  Coefficient(std::function<double(const Point&)> f) : fn_(std::move(f)) {}
  Coefficient(Field f, std::function<double(double)> map = {})
      : field_(std::move(f)), map_(std::move(map)) {}

  double operator()(int cell, const Bary& b, const Point& x) const {
    if (field_) {
      const double v = field_->value(cell, b);
      return map_ ? map_(v) : v;
    }
    if (fn_) return fn_(x);
    return constant_;
  }
  void require_mesh(const Mesh& m) const;
  bool is_unit() const { return !field_ && !fn_ && constant_ == 1.0; }

 private:
  double constant_ = 1.0;
  std::function<double(const Point&)> fn_;
  std::optional<Field> field_;
  std::function<double(double)> map_;
};

enum class OperatorKind { Mass, Stiffness, Divergence, Convection };

struct Operator {
  OperatorKind kind;
  SpMat matrix;
  SpacePtr row_space;
  SpacePtr col_space;
};

/// ∫ w φ_j φ_i, block diagonal for vector spaces.
SpMat mass_matrix(const FeSpace& s, const Coefficient& w = {});
/// ∫ w ∇φ_j·∇φ_i, block diagonal for vector spaces.
SpMat stiffness_matrix(const FeSpace& s, const Coefficient& w = {});
/// (B v)_q = -∫ q div v; rows: scalar pressure space, columns: vector velocity space.
SpMat divergence_matrix(const FeSpace& velocity, const FeSpace& pressure);
/// ∫ (w·∇)v_j · ψ_i for a vector transport field w on the same mesh.
SpMat convection_matrix(const FeSpace& velocity, const Field& w);
/// Row sums of the scalar mass matrix, i.e. ∫ φ_i.
Vec lumped_mass(const FeSpace& s);
/// ∫ f·φ_i.
Vec load_vector(const FeSpace& s, const std::function<double(const Point&)>& f);
Vec load_vector(const FeSpace& s, const std::function<std::array<double, 2>(const Point&)>& f);

Operator assemble(OperatorKind kind, SpacePtr row, SpacePtr col, const Coefficient& w = {},
                  const Field* transport = nullptr);

/// Quadrature of ∫ f over the domain, and of ∫ f g.
double integrate(const Field& f);
double integrate_product(const Field& f, const Field& g);

/// Appends scale * B at block offset (r0, c0).
void append_block(Triplets& t, const SpMat& B, int r0, int c0, double scale = 1.0);

/// Replaces Dirichlet rows with identity rows and zeroes Dirichlet columns.
void apply_dirichlet(SpMat& A, const std::vector<char>& mask, int offset = 0);

}  // namespace chns
