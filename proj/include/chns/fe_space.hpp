#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "chns/mesh.hpp"

namespace chns {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplets = std::vector<Eigen::Triplet<double, int>>;
using Bary = std::array<double, 3>;

struct QuadPoint {
  Bary bary;
  double weight;  // fraction of the cell area; weights sum to 1
};

/// Symmetric triangle rules: degree 2 (3 points) and degree 5 (7 points).
const std::vector<QuadPoint>& quad_rule(int degree);

/// Geometry of one triangle: corner points, area, gradients of barycentrics.
struct CellGeometry {
  std::array<Point, 3> p;
  double area = 0.0;
  std::array<std::array<double, 2>, 3> grad_bary{};

  explicit CellGeometry(const std::array<Point, 3>& pts);
  Point map(const Bary& b) const;
  Bary barycentric(const Point& x) const;
};

constexpr int local_dofs(int degree) { return degree == 1 ? 3 : 6; }

/// Lagrange basis on a triangle in barycentric coordinates. Degree-2 local
/// order: three vertices, then midpoints of edges (0,1), (1,2), (2,0).
void shape_values(int degree, const Bary& b, double* out);
void shape_grads(int degree, const Bary& b, const CellGeometry& g, double (*out)[2]);

class FeSpace;
using SpacePtr = std::shared_ptr<const FeSpace>;

/// Lagrange space of degree 1 or 2 on one mesh, scalar or 2-vector.
/// Vector dofs are component-blocked: dof = comp * n_scalar + k.
class FeSpace {
 public:
  static SpacePtr create(MeshPtr mesh, int degree, int components = 1, bool dirichlet = false);

  const MeshPtr& mesh() const { return mesh_; }
  int degree() const { return degree_; }
  int components() const { return components_; }
  int n_local() const { return local_dofs(degree_); }
  int n_scalar() const { return static_cast<int>(points_.size()); }
  int n_dof() const { return n_scalar() * components_; }

  /// Scalar global dof indices per cell.
  const std::vector<std::array<int, 6>>& cell_dofs() const { return cell_dofs_; }
  const std::vector<Point>& dof_points() const { return points_; }
  const std::vector<char>& boundary_scalar() const { return boundary_; }
  /// Per-dof flag (size n_dof), set on boundary dofs when the space is Dirichlet.
  const std::vector<char>& dirichlet_mask() const { return dirichlet_; }
  bool has_dirichlet() const { return has_dirichlet_; }

  /// Same degree/components/boundary kind on another mesh.
  SpacePtr on(MeshPtr other) const;
  SpacePtr scalar() const;
  bool same_layout(const FeSpace& o) const {
    return mesh_.get() == o.mesh_.get() && degree_ == o.degree_ && components_ == o.components_;
  }

  CellGeometry geometry(int cell) const { return CellGeometry(mesh_->cell_points(cell)); }

 private:
  FeSpace() = default;
  MeshPtr mesh_;
  int degree_ = 1;
  int components_ = 1;
  bool has_dirichlet_ = false;
  std::vector<std::array<int, 6>> cell_dofs_;
  std::vector<Point> points_;
  std::vector<char> boundary_;
  std::vector<char> dirichlet_;
};

class SpaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Field {
  SpacePtr space;
  Vec coeffs;

  Field() = default;
  explicit Field(SpacePtr s) : space(std::move(s)), coeffs(Vec::Zero(space->n_dof())) {}
  Field(SpacePtr s, Vec c);

  const Mesh& mesh() const { return *space->mesh(); }
  /// Value of component `comp` inside `cell` at barycentric point b.
  double value(int cell, const Bary& b, int comp = 0) const;
  std::array<double, 2> gradient(int cell, const Bary& b, const CellGeometry& g, int comp = 0) const;
};

/// Nodal interpolation of a scalar or vector function.
Field interpolate(SpacePtr space, const std::function<double(const Point&)>& f);
Field interpolate(SpacePtr space, const std::function<std::array<double, 2>(const Point&)>& f);

}  // namespace chns
