#include "chns/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

namespace chns {

namespace {

std::string hex(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw FormatError("snapshot file truncated");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw FormatError("snapshot file: expected '" + w + "', found '" + got + "'");
  }
  double real() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw FormatError("snapshot file: bad number '" + w + "'");
    return v;
  }
  unsigned long long integer() {
    const std::string w = word();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(w.c_str(), &end, 10);
    if (w.empty() || end != w.c_str() + w.size() || w[0] == '-')
      throw FormatError("snapshot file: bad integer '" + w + "'");
    return v;
  }

 private:
  std::istream& is_;
};

void write_leaves(std::ostream& os, const Mesh& m) {
  os << "mesh " << m.n_cells() << '\n';
  for (const auto& l : m.leaves()) {
    os << l.id.root << ' ' << l.id.depth << ' ' << l.id.path;
    for (const auto& p : l.p) os << ' ' << hex(p.x) << ' ' << hex(p.y);
    os << '\n';
  }
}

std::vector<Mesh::Leaf> read_leaves(Reader& r) {
  r.expect("mesh");
  const auto n = r.integer();
  std::vector<Mesh::Leaf> leaves(n);
  for (auto& l : leaves) {
    l.id.root = static_cast<std::uint32_t>(r.integer());
    l.id.depth = static_cast<std::uint32_t>(r.integer());
    l.id.path = r.integer();
    if (l.id.depth > CellId::kMaxDepth) throw FormatError("snapshot file: cell depth out of range");
    for (auto& p : l.p) {
      p.x = r.real();
      p.y = r.real();
    }
  }
  return leaves;
}

}  // namespace

void write_vtk(std::ostream& os, const Mesh& mesh, const VtkData& data, const std::string& title) {
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.n_vertices() << " double\n";
  for (const auto& p : mesh.vertices()) os << sci(p.x) << ' ' << sci(p.y) << " 0\n";
  os << "CELLS " << mesh.n_cells() << ' ' << 4 * mesh.n_cells() << '\n';
  for (const auto& t : mesh.cells()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.n_cells() << '\n';
  for (int c = 0; c < mesh.n_cells(); ++c) os << "5\n";

  if (!data.point_fields.empty()) {
    os << "POINT_DATA " << mesh.n_vertices() << '\n';
    for (const auto& [name, f] : data.point_fields) {
      if (f.space->mesh().get() != &mesh) throw SpaceError("write_vtk: field '" + name + "' lives on another mesh");
      const int nc = f.space->components();
      Mat values = Mat::Zero(mesh.n_vertices(), nc);
      for (int c = 0; c < mesh.n_cells(); ++c)
        for (int k = 0; k < 3; ++k) {
          Bary b{0.0, 0.0, 0.0};
          b[k] = 1.0;
          for (int comp = 0; comp < nc; ++comp) values(mesh.cells()[c][k], comp) = f.value(c, b, comp);
        }
      if (nc == 1) {
        os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
        for (int v = 0; v < mesh.n_vertices(); ++v) os << sci(values(v, 0)) << '\n';
      } else {
        os << "VECTORS " << name << " double\n";
        for (int v = 0; v < mesh.n_vertices(); ++v) os << sci(values(v, 0)) << ' ' << sci(values(v, 1)) << " 0\n";
      }
    }
  }
  if (!data.cell_fields.empty()) {
    os << "CELL_DATA " << mesh.n_cells() << '\n';
    for (const auto& [name, v] : data.cell_fields) {
      if (v.size() != mesh.n_cells()) throw SpaceError("write_vtk: cell field '" + name + "' has wrong length");
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double x : v) os << sci(x) << '\n';
    }
  }
}

void write_snapshots(std::ostream& os, const SnapshotSet& s) {
  s.validate();
  const MeshPtr root = s.items.front().mesh().root_ptr();
  std::vector<MeshPtr> meshes{root};
  std::map<const Mesh*, int> index{{root.get(), 0}};
  for (const auto& f : s.items)
    if (index.emplace(f.space->mesh().get(), static_cast<int>(meshes.size())).second) meshes.push_back(f.space->mesh());

  const Rect& d = root->domain();
  os << "chns-snapshots 1\n";
  os << "x " << to_string(s.x) << '\n';
  os << "domain " << hex(d.x0) << ' ' << hex(d.y0) << ' ' << hex(d.x1) << ' ' << hex(d.y1) << '\n';
  os << "meshes " << meshes.size() << '\n';
  for (const auto& m : meshes) write_leaves(os, *m);
  os << "snapshots " << s.size() << '\n';
  for (int i = 0; i < s.size(); ++i) {
    const FeSpace& sp = *s.items[i].space;
    os << "snapshot " << index.at(sp.mesh().get()) << ' ' << sp.degree() << ' ' << sp.components() << ' '
       << (sp.has_dirichlet() ? 1 : 0) << ' ' << hex(s.weights[i]) << ' ' << sp.n_dof() << '\n';
    for (double c : s.items[i].coeffs) os << hex(c) << '\n';
  }
  if (!os) throw FormatError("write_snapshots: stream error");
}

SnapshotSet read_snapshots(std::istream& is) {
  Reader r(is);
  r.expect("chns-snapshots");
  if (r.integer() != 1) throw FormatError("snapshot file: unsupported version");
  SnapshotSet s;
  r.expect("x");
  try {
    s.x = parse_xspace(r.word());
  } catch (const std::exception& e) {
    throw FormatError(std::string("snapshot file: ") + e.what());
  }
  r.expect("domain");
  Rect d;
  d.x0 = r.real();
  d.y0 = r.real();
  d.x1 = r.real();
  d.y1 = r.real();
  r.expect("meshes");
  const auto n_mesh = r.integer();
  if (n_mesh < 1) throw FormatError("snapshot file: no meshes");
  std::vector<MeshPtr> meshes;
  meshes.push_back(Mesh::from_leaves(read_leaves(r), d, nullptr, nullptr));
  for (unsigned long long k = 1; k < n_mesh; ++k)
    meshes.push_back(Mesh::from_leaves(read_leaves(r), d, meshes[0], meshes[0]));

  r.expect("snapshots");
  const auto n_snap = r.integer();
  for (unsigned long long i = 0; i < n_snap; ++i) {
    r.expect("snapshot");
    const auto m = r.integer();
    const int degree = static_cast<int>(r.integer());
    const int comps = static_cast<int>(r.integer());
    const bool dirichlet = r.integer() != 0;
    const double w = r.real();
    const auto n = r.integer();
    if (m >= meshes.size()) throw FormatError("snapshot file: mesh index out of range");
    if ((degree != 1 && degree != 2) || (comps != 1 && comps != 2))
      throw FormatError("snapshot file: unsupported element");
    const SpacePtr sp = FeSpace::create(meshes[m], degree, comps, dirichlet);
    if (static_cast<unsigned long long>(sp.get()->n_dof()) != n)
      throw FormatError("snapshot file: coefficient count does not match the mesh");
    Vec c(static_cast<long>(n));
    for (auto& v : c) v = r.real();
    s.add(Field(sp, std::move(c)), w);
  }
  s.validate();
  return s;
}

void write_snapshots(const std::string& path, const SnapshotSet& s) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  write_snapshots(os, s);
}

SnapshotSet read_snapshots(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path);
  return read_snapshots(is);
}

}  // namespace chns
