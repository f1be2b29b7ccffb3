#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace chns {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline Point midpoint(const Point& a, const Point& b) {
  return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
}

struct PointHash {
  std::size_t operator()(const Point& p) const noexcept;
};

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
  double area() const { return (x1 - x0) * (y1 - y0); }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool on_boundary(const Point& p) const {
    return p.x == x0 || p.x == x1 || p.y == y0 || p.y == y1;
  }
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Position of a triangle in the bisection forest rooted at the coarse mesh.
///
/// Bit k of `path` records which child was taken when going from depth k to
/// depth k+1. Two cells are nested iff one id is a prefix of the other.
struct CellId {
  std::uint32_t root = 0;
  std::uint32_t depth = 0;
  std::uint64_t path = 0;

  static constexpr std::uint32_t kMaxDepth = 60;

  CellId parent() const {
    return {root, depth - 1, path & prefix_mask(depth - 1)};
  }
  CellId child(int branch) const {
    return {root, depth + 1, path | (static_cast<std::uint64_t>(branch) << depth)};
  }
  CellId ancestor(std::uint32_t d) const { return {root, d, path & prefix_mask(d)}; }
  bool is_ancestor_or_self_of(const CellId& o) const {
    return root == o.root && depth <= o.depth && (o.path & prefix_mask(depth)) == path;
  }
  static std::uint64_t prefix_mask(std::uint32_t d) {
    return d >= 64 ? ~0ull : ((1ull << d) - 1ull);
  }
  friend bool operator==(const CellId&, const CellId&) = default;
};

/// Depth-first ordering of the bisection forest (ancestors before descendants).
bool dfs_less(const CellId& a, const CellId& b);

struct CellIdHash {
  std::size_t operator()(const CellId& id) const noexcept;
};

/// Conforming triangulation of a rectangle, produced from a coarse root mesh
/// by newest-vertex bisection.
///
/// Cell vertex order is (a, b, c): edge a-b is the refinement edge and c is the
/// newest vertex. All cells are counter-clockwise. Meshes are immutable once
/// built and shared through `std::shared_ptr<const Mesh>`.
class Mesh : public std::enable_shared_from_this<Mesh> {
 public:
  using Tri = std::array<int, 3>;
  using Edge = std::array<int, 2>;

  struct Leaf {
    CellId id;
    std::array<Point, 3> p;
  };

  static std::shared_ptr<const Mesh> from_leaves(std::vector<Leaf> leaves, Rect domain,
                                                 std::shared_ptr<const Mesh> root,
                                                 std::shared_ptr<const Mesh> parent);

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<Tri>& cells() const { return cells_; }
  const std::vector<CellId>& cell_ids() const { return ids_; }
  /// Local edge k joins local vertices k and (k+1) mod 3.
  const std::vector<Tri>& cell_edges() const { return cell_edges_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<char>& boundary_edge() const { return boundary_edge_; }
  const std::vector<char>& boundary_vertex() const { return boundary_vertex_; }

  int n_vertices() const { return static_cast<int>(vertices_.size()); }
  int n_cells() const { return static_cast<int>(cells_.size()); }
  int n_edges() const { return static_cast<int>(edges_.size()); }

  const Rect& domain() const { return domain_; }
  double cell_area(int c) const { return areas_[c]; }
  double signed_area(int c) const;
  std::array<Point, 3> cell_points(int c) const;
  Point centroid(int c) const;
  double diameter(int c) const;
  std::vector<Leaf> leaves() const;

  /// Parent mesh this one was derived from (null for a root mesh).
  const std::shared_ptr<const Mesh>& parent() const { return parent_; }
  /// Index into parent()->cells() of the parent cell containing each cell.
  const std::vector<int>& cell_parent() const { return cell_parent_; }
  const Mesh& root() const { return root_ ? *root_ : *this; }
  std::shared_ptr<const Mesh> root_ptr() const;
  bool is_root() const { return root_ == nullptr; }
  std::uint64_t uid() const { return uid_; }
  bool same_hierarchy(const Mesh& other) const { return root().uid() == other.root().uid(); }
  int max_depth() const;

  int find_cell(const CellId& id) const;
  /// Index of the cell of this mesh equal to or containing `id`, or -1.
  int find_ancestor_or_self(const CellId& id) const;
  /// True iff `id` is a strict ancestor of at least one cell of this mesh.
  bool has_strict_descendants(const CellId& id) const { return ancestors_.count(id) > 0; }

  bool is_conforming() const;
  bool positively_oriented() const;

 private:
  Mesh() = default;

  Rect domain_;
  std::vector<Point> vertices_;
  std::vector<Tri> cells_;
  std::vector<CellId> ids_;
  std::vector<double> areas_;
  std::vector<Tri> cell_edges_;
  std::vector<Edge> edges_;
  std::vector<char> boundary_edge_;
  std::vector<char> boundary_vertex_;
  std::vector<int> edge_cell_count_;
  std::shared_ptr<const Mesh> parent_;
  std::shared_ptr<const Mesh> root_;
  std::vector<int> cell_parent_;
  std::unordered_map<CellId, int, CellIdHash> index_;
  std::unordered_set<CellId, CellIdHash> ancestors_;
  std::uint64_t uid_ = 0;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Uniform triangulation with 2*nx*ny cells; diagonals alternate in a
/// checkerboard so that every diagonal is the refinement edge of both
/// adjacent triangles.
MeshPtr build_rect_mesh(int nx, int ny, Rect domain);

/// Bisects every marked cell once and closes hanging nodes.
MeshPtr refine(const MeshPtr& mesh, std::span<const int> marked);
MeshPtr refine_uniform(const MeshPtr& mesh, int times = 1);

/// Regenerates a mesh from the hierarchy root so that each region reaches the
/// requested bisection depth (relative to the root). Depths below the current
/// one coarsen a region only where all cells covering the coarser ancestor
/// agree. The result is conforming and nested in the root.
MeshPtr remesh(const MeshPtr& current, std::span<const int> target_depth);

/// Coarsest conforming mesh refining both a and b.
MeshPtr common_refinement(const MeshPtr& a, const MeshPtr& b);
MeshPtr common_refinement(std::span<const MeshPtr> meshes);

/// True iff every cell of `fine` lies in a cell of `coarse` (same hierarchy).
bool is_refinement_of(const Mesh& fine, const Mesh& coarse);

}  // namespace chns
