#include "chns/fe_space.hpp"

#include <cmath>

namespace chns {

const std::vector<QuadPoint>& quad_rule(int degree) {
  static const std::vector<QuadPoint> p2 = [] {
    const double a = 2.0 / 3.0, b = 1.0 / 6.0;
    return std::vector<QuadPoint>{{{a, b, b}, 1.0 / 3.0}, {{b, a, b}, 1.0 / 3.0}, {{b, b, a}, 1.0 / 3.0}};
  }();
  static const std::vector<QuadPoint> p5 = [] {
    const double s = std::sqrt(15.0);
    const double a1 = (6.0 - s) / 21.0, w1 = (155.0 - s) / 1200.0;
    const double a2 = (6.0 + s) / 21.0, w2 = (155.0 + s) / 1200.0;
    const double b1 = 1.0 - 2.0 * a1, b2 = 1.0 - 2.0 * a2;
    return std::vector<QuadPoint>{{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, 9.0 / 40.0},
                                  {{a1, a1, b1}, w1}, {{a1, b1, a1}, w1}, {{b1, a1, a1}, w1},
                                  {{a2, a2, b2}, w2}, {{a2, b2, a2}, w2}, {{b2, a2, a2}, w2}};
  }();
  return degree <= 2 ? p2 : p5;
}

CellGeometry::CellGeometry(const std::array<Point, 3>& pts) : p(pts) {
  const double det = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
  area = 0.5 * std::abs(det);
  const double inv = 1.0 / det;
  grad_bary[0] = {(p[1].y - p[2].y) * inv, (p[2].x - p[1].x) * inv};
  grad_bary[1] = {(p[2].y - p[0].y) * inv, (p[0].x - p[2].x) * inv};
  grad_bary[2] = {(p[0].y - p[1].y) * inv, (p[1].x - p[0].x) * inv};
}

Point CellGeometry::map(const Bary& b) const {
  return {b[0] * p[0].x + b[1] * p[1].x + b[2] * p[2].x, b[0] * p[0].y + b[1] * p[1].y + b[2] * p[2].y};
}

Bary CellGeometry::barycentric(const Point& x) const {
  const double det = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
  const double l1 = ((x.x - p[0].x) * (p[2].y - p[0].y) - (x.y - p[0].y) * (p[2].x - p[0].x)) / det;
  const double l2 = ((p[1].x - p[0].x) * (x.y - p[0].y) - (p[1].y - p[0].y) * (x.x - p[0].x)) / det;
  return {1.0 - l1 - l2, l1, l2};
}

void shape_values(int degree, const Bary& b, double* out) {
  if (degree == 1) {
    out[0] = b[0];
    out[1] = b[1];
    out[2] = b[2];
    return;
  }
  for (int i = 0; i < 3; ++i) out[i] = b[i] * (2.0 * b[i] - 1.0);
  for (int k = 0; k < 3; ++k) out[3 + k] = 4.0 * b[k] * b[(k + 1) % 3];
}

void shape_grads(int degree, const Bary& b, const CellGeometry& g, double (*out)[2]) {
  const auto& gl = g.grad_bary;
  if (degree == 1) {
    for (int i = 0; i < 3; ++i) {
      out[i][0] = gl[i][0];
      out[i][1] = gl[i][1];
    }
    return;
  }
  for (int i = 0; i < 3; ++i) {
    const double f = 4.0 * b[i] - 1.0;
    out[i][0] = f * gl[i][0];
    out[i][1] = f * gl[i][1];
  }
  for (int k = 0; k < 3; ++k) {
    const int j = (k + 1) % 3;
    out[3 + k][0] = 4.0 * (b[j] * gl[k][0] + b[k] * gl[j][0]);
    out[3 + k][1] = 4.0 * (b[j] * gl[k][1] + b[k] * gl[j][1]);
  }
}

SpacePtr FeSpace::create(MeshPtr mesh, int degree, int components, bool dirichlet) {
  if (degree != 1 && degree != 2) throw SpaceError("FeSpace: degree must be 1 or 2");
  if (components != 1 && components != 2) throw SpaceError("FeSpace: 1 or 2 components");
  std::shared_ptr<FeSpace> s(new FeSpace());
  s->mesh_ = std::move(mesh);
  s->degree_ = degree;
  s->components_ = components;
  s->has_dirichlet_ = dirichlet;
  const Mesh& m = *s->mesh_;
  const int nv = m.n_vertices();

  s->points_ = m.vertices();
  s->boundary_.assign(m.boundary_vertex().begin(), m.boundary_vertex().end());
  if (degree == 2) {
    for (int e = 0; e < m.n_edges(); ++e) {
      const auto& ed = m.edges()[e];
      s->points_.push_back(midpoint(m.vertices()[ed[0]], m.vertices()[ed[1]]));
      s->boundary_.push_back(m.boundary_edge()[e]);
    }
  }
  s->cell_dofs_.resize(m.n_cells());
  for (int c = 0; c < m.n_cells(); ++c) {
    auto& d = s->cell_dofs_[c];
    d.fill(-1);
    for (int k = 0; k < 3; ++k) d[k] = m.cells()[c][k];
    if (degree == 2)
      for (int k = 0; k < 3; ++k) d[3 + k] = nv + m.cell_edges()[c][k];
  }
  const int ns = s->n_scalar();
  s->dirichlet_.assign(static_cast<std::size_t>(ns) * components, 0);
  if (dirichlet)
    for (int comp = 0; comp < components; ++comp)
      for (int k = 0; k < ns; ++k) s->dirichlet_[comp * ns + k] = s->boundary_[k];
  return s;
}

SpacePtr FeSpace::on(MeshPtr other) const {
  if (other.get() == mesh_.get()) return create(mesh_, degree_, components_, has_dirichlet_);
  return create(std::move(other), degree_, components_, has_dirichlet_);
}

SpacePtr FeSpace::scalar() const { return create(mesh_, degree_, 1, false); }

Field::Field(SpacePtr s, Vec c) : space(std::move(s)), coeffs(std::move(c)) {
  if (coeffs.size() != space->n_dof()) throw SpaceError("Field: coefficient length mismatch");
}

double Field::value(int cell, const Bary& b, int comp) const {
  double N[6];
  shape_values(space->degree(), b, N);
  const auto& d = space->cell_dofs()[cell];
  const int off = comp * space->n_scalar();
  double v = 0.0;
  for (int k = 0; k < space->n_local(); ++k) v += N[k] * coeffs[off + d[k]];
  return v;
}

std::array<double, 2> Field::gradient(int cell, const Bary& b, const CellGeometry& g, int comp) const {
  double dN[6][2];
  shape_grads(space->degree(), b, g, dN);
  const auto& d = space->cell_dofs()[cell];
  const int off = comp * space->n_scalar();
  std::array<double, 2> gr{0.0, 0.0};
  for (int k = 0; k < space->n_local(); ++k) {
    gr[0] += dN[k][0] * coeffs[off + d[k]];
    gr[1] += dN[k][1] * coeffs[off + d[k]];
  }
  return gr;
}

Field interpolate(SpacePtr space, const std::function<double(const Point&)>& f) {
  Field out(space);
  const int ns = space->n_scalar();
  for (int comp = 0; comp < space->components(); ++comp)
    for (int k = 0; k < ns; ++k) out.coeffs[comp * ns + k] = f(space->dof_points()[k]);
  return out;
}

Field interpolate(SpacePtr space, const std::function<std::array<double, 2>(const Point&)>& f) {
  if (space->components() != 2) throw SpaceError("vector interpolation into scalar space");
  Field out(space);
  const int ns = space->n_scalar();
  for (int k = 0; k < ns; ++k) {
    auto v = f(space->dof_points()[k]);
    out.coeffs[k] = v[0];
    out.coeffs[ns + k] = v[1];
  }
  return out;
}

}  // namespace chns
