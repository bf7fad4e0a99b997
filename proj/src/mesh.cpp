#include "reflectsim/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "reflectsim/errors.hpp"

namespace reflectsim {

Facet make_facet(const Vec3& a, const Vec3& b, const Vec3& c) {
  Facet f;
  f.vertices = {a, b, c};
  f.centroid = (a + b + c) / 3.0;
  const Vec3 n = cross(b - a, c - a);
  const double len = n.norm();
  f.area = 0.5 * len;
  f.normal = n / len;
  return f;
}

double SurfaceMesh::total_area() const {
  double sum = 0.0;
  for (const auto& f : facets) sum += f.area;
  return sum;
}

double SurfaceMesh::max_edge() const {
  double longest = 0.0;
  for (const auto& f : facets) {
    for (int e = 0; e < 3; ++e) {
      longest = std::max(longest, distance(f.vertices[e], f.vertices[(e + 1) % 3]));
    }
  }
  return longest;
}

std::vector<Vec3> SurfaceMesh::centroids() const {
  std::vector<Vec3> out;
  out.reserve(facets.size());
  for (const auto& f : facets) out.push_back(f.centroid);
  return out;
}

SurfaceMesh mesh_panel(const Vec3& center, const Vec3& u, const Vec3& v, double width,
                       double height, double max_edge) {
  if (!(width > 0.0) || !(height > 0.0) || !(max_edge > 0.0)) {
    throw ValidationError("mesh_panel: width, height and max_edge must be positive");
  }
  // Cell sides no longer than max_edge/sqrt(2) keep the diagonal within bounds.
  const double cell = max_edge / std::sqrt(2.0);
  const int nu = std::max(1, static_cast<int>(std::ceil(width / cell - 1e-9)));
  const int nv = std::max(1, static_cast<int>(std::ceil(height / cell - 1e-9)));

  StructuredGrid grid;
  grid.u = u;
  grid.v = v;
  grid.du = width / nu;
  grid.dv = height / nv;
  grid.nu = nu;
  grid.nv = nv;
  grid.origin = center - u * (0.5 * width) - v * (0.5 * height);

  SurfaceMesh mesh;
  mesh.target_edge_length = max_edge;
  mesh.facets.reserve(2 * static_cast<std::size_t>(nu) * nv);
  auto corner = [&](int i, int j) { return grid.origin + u * (i * grid.du) + v * (j * grid.dv); };
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      const Vec3 p00 = corner(i, j), p10 = corner(i + 1, j);
      const Vec3 p01 = corner(i, j + 1), p11 = corner(i + 1, j + 1);
      mesh.facets.push_back(make_facet(p00, p10, p11));
      mesh.facets.push_back(make_facet(p00, p11, p01));
    }
  }
  // Exact planar normal for every facet.
  const Vec3 n = cross(u, v).normalized();
  for (auto& f : mesh.facets) f.normal = n;
  mesh.grid = grid;
  return mesh;
}

SurfaceMesh mesh_rectangle(double width, double height, double max_edge) {
  return mesh_panel(Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, width, height, max_edge);
}

}  // namespace reflectsim
