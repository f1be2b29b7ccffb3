#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "chns/pod.hpp"

namespace chns {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Legacy ASCII VTK unstructured grid. Point fields are sampled at the mesh
/// vertices (vector fields get a zero z component); cell fields need one
/// value per cell.
struct VtkData {
  std::vector<std::pair<std::string, Field>> point_fields;
  std::vector<std::pair<std::string, Vec>> cell_fields;
};
void write_vtk(std::ostream& os, const Mesh& mesh, const VtkData& data, const std::string& title = "chns");

/// Text snapshot container: the hierarchy root, every distinct mesh once as
/// bisection-forest leaves, then per snapshot its mesh, weight and
/// coefficients. Floating-point values are written as hex floats so a
/// round trip is bit-exact.
void write_snapshots(std::ostream& os, const SnapshotSet& s);
SnapshotSet read_snapshots(std::istream& is);

void write_snapshots(const std::string& path, const SnapshotSet& s);
SnapshotSet read_snapshots(const std::string& path);

}  // namespace chns
