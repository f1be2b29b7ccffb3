#include "chns/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>

namespace chns {

namespace {

std::atomic<std::uint64_t> g_next_uid{1};

std::uint64_t bits_of(double v) {
  if (v == 0.0) v = 0.0;  // fold -0.0
  std::uint64_t b;
  std::memcpy(&b, &v, sizeof b);
  return b;
}

double cross(const Point& a, const Point& b, const Point& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

std::array<Mesh::Leaf, 2> bisect(const Mesh::Leaf& t) {
  const Point m = midpoint(t.p[0], t.p[1]);
  return {Mesh::Leaf{t.id.child(0), {t.p[2], t.p[0], m}},
          Mesh::Leaf{t.id.child(1), {t.p[1], t.p[2], m}}};
}

// Bisects flagged leaves, then keeps bisecting every leaf that carries a
// hanging node on one of its edges until the partition is conforming.
std::vector<Mesh::Leaf> close_conforming(std::vector<Mesh::Leaf> leaves,
                                         std::vector<char> flagged) {
  for (;;) {
    std::unordered_set<Point, PointHash> verts;
    verts.reserve(leaves.size() * 2);
    for (const auto& l : leaves)
      for (const auto& p : l.p) verts.insert(p);

    std::vector<Mesh::Leaf> next;
    next.reserve(leaves.size() + leaves.size() / 4);
    bool changed = false;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      const auto& l = leaves[k];
      bool split = flagged[k] != 0;
      for (int e = 0; e < 3 && !split; ++e)
        split = verts.count(midpoint(l.p[e], l.p[(e + 1) % 3])) > 0;
      if (split) {
        if (l.id.depth >= CellId::kMaxDepth) throw MeshError("bisection depth limit reached");
        auto kids = bisect(l);
        next.push_back(kids[0]);
        next.push_back(kids[1]);
        changed = true;
      } else {
        next.push_back(l);
      }
    }
    leaves = std::move(next);
    if (!changed) return leaves;
    flagged.assign(leaves.size(), 0);
  }
}

}  // namespace

std::size_t PointHash::operator()(const Point& p) const noexcept {
  std::uint64_t h = bits_of(p.x) * 0x9E3779B97F4A7C15ull;
  h ^= bits_of(p.y) + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

std::size_t CellIdHash::operator()(const CellId& id) const noexcept {
  std::uint64_t h = id.path * 0x9E3779B97F4A7C15ull;
  h ^= (static_cast<std::uint64_t>(id.root) << 8 | id.depth) + 0x632BE59BD9B4E019ull + (h << 6) +
       (h >> 2);
  return static_cast<std::size_t>(h);
}

bool dfs_less(const CellId& a, const CellId& b) {
  if (a.root != b.root) return a.root < b.root;
  const std::uint32_t d = std::min(a.depth, b.depth);
  const std::uint64_t diff = (a.path ^ b.path) & CellId::prefix_mask(d);
  if (diff != 0) {
    const int k = std::countr_zero(diff);
    return ((a.path >> k) & 1ull) < ((b.path >> k) & 1ull);
  }
  return a.depth < b.depth;
}

MeshPtr Mesh::from_leaves(std::vector<Leaf> leaves, Rect domain, MeshPtr root, MeshPtr parent) {
  if (leaves.empty()) throw MeshError("mesh without cells");
  std::sort(leaves.begin(), leaves.end(),
            [](const Leaf& a, const Leaf& b) { return dfs_less(a.id, b.id); });

  std::shared_ptr<Mesh> m(new Mesh());
  m->domain_ = domain;
  m->root_ = root;
  m->parent_ = parent;
  m->uid_ = g_next_uid.fetch_add(1);

  std::unordered_map<Point, int, PointHash> vindex;
  vindex.reserve(leaves.size());
  m->cells_.reserve(leaves.size());
  m->ids_.reserve(leaves.size());
  for (const auto& l : leaves) {
    Tri t{};
    for (int k = 0; k < 3; ++k) {
      auto [it, fresh] = vindex.try_emplace(l.p[k], static_cast<int>(m->vertices_.size()));
      if (fresh) m->vertices_.push_back(l.p[k]);
      t[k] = it->second;
    }
    m->cells_.push_back(t);
    m->ids_.push_back(l.id);
  }

  const int nc = m->n_cells();
  m->areas_.resize(nc);
  for (int c = 0; c < nc; ++c) m->areas_[c] = std::abs(m->signed_area(c));

  std::map<std::pair<int, int>, int> eindex;
  m->cell_edges_.resize(nc);
  for (int c = 0; c < nc; ++c) {
    for (int k = 0; k < 3; ++k) {
      int a = m->cells_[c][k], b = m->cells_[c][(k + 1) % 3];
      auto key = std::minmax(a, b);
      auto [it, fresh] = eindex.try_emplace({key.first, key.second}, m->n_edges());
      if (fresh) {
        m->edges_.push_back({key.first, key.second});
        m->edge_cell_count_.push_back(0);
      }
      m->edge_cell_count_[it->second]++;
      m->cell_edges_[c][k] = it->second;
    }
  }
  m->boundary_edge_.resize(m->edges_.size());
  for (std::size_t e = 0; e < m->edges_.size(); ++e)
    m->boundary_edge_[e] = m->edge_cell_count_[e] == 1;
  m->boundary_vertex_.resize(m->vertices_.size());
  for (std::size_t v = 0; v < m->vertices_.size(); ++v)
    m->boundary_vertex_[v] = domain.on_boundary(m->vertices_[v]);

  m->index_.reserve(nc);
  for (int c = 0; c < nc; ++c) {
    const CellId& id = m->ids_[c];
    m->index_.emplace(id, c);
    for (std::uint32_t d = 0; d < id.depth; ++d) m->ancestors_.insert(id.ancestor(d));
  }

  if (parent) {
    m->cell_parent_.resize(nc);
    for (int c = 0; c < nc; ++c) m->cell_parent_[c] = parent->find_ancestor_or_self(m->ids_[c]);
  }
  return m;
}

double Mesh::signed_area(int c) const {
  const auto& t = cells_[c];
  return 0.5 * cross(vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]);
}

std::array<Point, 3> Mesh::cell_points(int c) const {
  const auto& t = cells_[c];
  return {vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]};
}

Point Mesh::centroid(int c) const {
  auto p = cell_points(c);
  return {(p[0].x + p[1].x + p[2].x) / 3.0, (p[0].y + p[1].y + p[2].y) / 3.0};
}

double Mesh::diameter(int c) const {
  auto p = cell_points(c);
  double h = 0.0;
  for (int k = 0; k < 3; ++k)
    h = std::max(h, std::hypot(p[k].x - p[(k + 1) % 3].x, p[k].y - p[(k + 1) % 3].y));
  return h;
}

std::vector<Mesh::Leaf> Mesh::leaves() const {
  std::vector<Leaf> out(cells_.size());
  for (std::size_t c = 0; c < cells_.size(); ++c)
    out[c] = Leaf{ids_[c], cell_points(static_cast<int>(c))};
  return out;
}

std::shared_ptr<const Mesh> Mesh::root_ptr() const {
  return root_ ? root_ : shared_from_this();
}

int Mesh::max_depth() const {
  std::uint32_t d = 0;
  for (const auto& id : ids_) d = std::max(d, id.depth);
  return static_cast<int>(d);
}

int Mesh::find_cell(const CellId& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

int Mesh::find_ancestor_or_self(const CellId& id) const {
  for (std::int64_t d = id.depth; d >= 0; --d) {
    auto it = index_.find(id.ancestor(static_cast<std::uint32_t>(d)));
    if (it != index_.end()) return it->second;
  }
  return -1;
}

bool Mesh::positively_oriented() const {
  for (int c = 0; c < n_cells(); ++c)
    if (!(signed_area(c) > 0.0)) return false;
  return true;
}

bool Mesh::is_conforming() const {
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const int cnt = edge_cell_count_[e];
    if (cnt > 2) return false;
    if (cnt == 1) {
      const Point& a = vertices_[edges_[e][0]];
      const Point& b = vertices_[edges_[e][1]];
      const bool on_side = (a.x == b.x && (a.x == domain_.x0 || a.x == domain_.x1)) ||
                           (a.y == b.y && (a.y == domain_.y0 || a.y == domain_.y1));
      if (!on_side) return false;
    }
  }
  std::unordered_set<Point, PointHash> verts(vertices_.begin(), vertices_.end());
  for (const auto& e : edges_)
    if (verts.count(midpoint(vertices_[e[0]], vertices_[e[1]]))) return false;
  return true;
}

MeshPtr build_rect_mesh(int nx, int ny, Rect domain) {
  if (nx < 1 || ny < 1) throw MeshError("build_rect_mesh: nx and ny must be >= 1");
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
    throw MeshError("build_rect_mesh: zero-size domain");
  auto xs = [&](int i) { return i == nx ? domain.x1 : domain.x0 + domain.width() * i / nx; };
  auto ys = [&](int j) { return j == ny ? domain.y1 : domain.y0 + domain.height() * j / ny; };

  std::vector<Mesh::Leaf> leaves;
  leaves.reserve(2 * static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Point a{xs(i), ys(j)}, b{xs(i + 1), ys(j)}, c{xs(i + 1), ys(j + 1)}, d{xs(i), ys(j + 1)};
      const auto base = static_cast<std::uint32_t>(2 * (j * nx + i));
      if ((i + j) % 2 == 0) {
        leaves.push_back({CellId{base, 0, 0}, {c, a, b}});
        leaves.push_back({CellId{base + 1, 0, 0}, {a, c, d}});
      } else {
        leaves.push_back({CellId{base, 0, 0}, {b, d, a}});
        leaves.push_back({CellId{base + 1, 0, 0}, {d, b, c}});
      }
    }
  }
  return Mesh::from_leaves(std::move(leaves), domain, nullptr, nullptr);
}

MeshPtr refine(const MeshPtr& mesh, std::span<const int> marked) {
  auto leaves = mesh->leaves();
  std::vector<char> flag(leaves.size(), 0);
  for (int c : marked) {
    if (c < 0 || c >= mesh->n_cells()) throw MeshError("refine: marked cell out of range");
    flag[c] = 1;
  }
  leaves = close_conforming(std::move(leaves), std::move(flag));
  return Mesh::from_leaves(std::move(leaves), mesh->domain(), mesh->root_ptr(), mesh);
}

MeshPtr refine_uniform(const MeshPtr& mesh, int times) {
  MeshPtr m = mesh;
  for (int k = 0; k < times; ++k) {
    std::vector<int> all(m->n_cells());
    for (int c = 0; c < m->n_cells(); ++c) all[c] = c;
    m = refine(m, all);
  }
  return m;
}

MeshPtr remesh(const MeshPtr& current, std::span<const int> target_depth) {
  if (static_cast<int>(target_depth.size()) != current->n_cells())
    throw MeshError("remesh: one target depth per cell required");
  const Mesh& cur = *current;
  MeshPtr root = cur.root_ptr();

  std::unordered_map<CellId, int, CellIdHash> anc_target;
  for (int c = 0; c < cur.n_cells(); ++c) {
    const CellId& id = cur.cell_ids()[c];
    const int t = std::max(0, target_depth[c]);
    for (std::uint32_t d = 0; d < id.depth; ++d) {
      auto [it, fresh] = anc_target.try_emplace(id.ancestor(d), t);
      if (!fresh) it->second = std::max(it->second, t);
    }
  }

  std::vector<Mesh::Leaf> out;
  std::function<void(const Mesh::Leaf&, int)> walk = [&](const Mesh::Leaf& node, int inherited) {
    const int depth = static_cast<int>(node.id.depth);
    int goal;
    const int c = cur.find_cell(node.id);
    if (c >= 0) {
      goal = std::max(0, target_depth[c]);
    } else if (auto it = anc_target.find(node.id); it != anc_target.end()) {
      goal = it->second;
      if (goal > depth) {
        // descend toward the current leaves; deeper goals are re-read there
        for (const auto& k : bisect(node)) walk(k, -1);
        return;
      }
    } else {
      goal = inherited;
    }
    if (goal > depth) {
      if (node.id.depth >= CellId::kMaxDepth) throw MeshError("bisection depth limit reached");
      for (const auto& k : bisect(node)) walk(k, goal);
    } else {
      out.push_back(node);
    }
  };
  for (const auto& r : root->leaves()) walk(r, 0);

  out = close_conforming(std::move(out), std::vector<char>(out.size(), 0));
  return Mesh::from_leaves(std::move(out), cur.domain(), root, root);
}

MeshPtr common_refinement(const MeshPtr& a, const MeshPtr& b) {
  if (!a->same_hierarchy(*b)) throw MeshError("common_refinement: meshes from different hierarchies");
  if (a.get() == b.get()) return a;
  std::vector<Mesh::Leaf> leaves;
  leaves.reserve(a->n_cells() + b->n_cells());
  for (const auto& l : a->leaves())
    if (!b->has_strict_descendants(l.id)) leaves.push_back(l);
  for (const auto& l : b->leaves())
    if (!a->has_strict_descendants(l.id) && a->find_cell(l.id) < 0) leaves.push_back(l);
  leaves = close_conforming(std::move(leaves), std::vector<char>(leaves.size(), 0));
  return Mesh::from_leaves(std::move(leaves), a->domain(), a->root_ptr(), a);
}

MeshPtr common_refinement(std::span<const MeshPtr> meshes) {
  if (meshes.empty()) throw MeshError("common_refinement: no meshes");
  MeshPtr m = meshes[0];
  for (std::size_t k = 1; k < meshes.size(); ++k)
    if (!is_refinement_of(*m, *meshes[k])) m = common_refinement(m, meshes[k]);
  return m;
}

bool is_refinement_of(const Mesh& fine, const Mesh& coarse) {
  if (!fine.same_hierarchy(coarse)) return false;
  for (const auto& id : fine.cell_ids())
    if (coarse.find_ancestor_or_self(id) < 0) return false;
  return true;
}

}  // namespace chns
