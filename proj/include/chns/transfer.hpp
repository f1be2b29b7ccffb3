#pragma once

#include <string>

#include "chns/assemble.hpp"

namespace chns {

enum class XSpace { L2, H1, H01 };

const char* to_string(XSpace x);
XSpace parse_xspace(const std::string& s);

/// Cell of the coarsest common refinement of two meshes of one hierarchy,
/// with the indices of the cells of `a` and `b` that contain it.
struct OverlayCell {
  std::array<Point, 3> p;
  int cell_a;
  int cell_b;
};

std::vector<OverlayCell> overlay(const Mesh& a, const Mesh& b);

/// Exact representation of f on a refinement of its mesh.
Field prolongate(const Field& f, const MeshPtr& to);
/// Injection onto a coarser space whose dof points all belong to `fine`.
Field restrict_to(const Field& fine, const SpacePtr& coarse);
/// L² projection onto any space of the same hierarchy (conserves ∫f for
/// scalar spaces without Dirichlet constraints).
Field l2_project(const Field& f, const SpacePtr& target);

/// (f,g)_X evaluated cell by cell on the overlay of the two meshes.
double inner_product(const Field& f, const Field& g, XSpace x);
/// Matrix of (·,·)_X on a single space.
SpMat gram_matrix(const FeSpace& s, XSpace x);
/// Matrix of (ζ^a_i, ζ^b_j)_X between two spaces of one hierarchy, via the overlay.
SpMat cross_gram_matrix(const FeSpace& a, const FeSpace& b, XSpace x);

}  // namespace chns
