#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "reflectsim/vec3.hpp"

namespace reflectsim {

struct Facet {
  std::array<Vec3, 3> vertices;
  Vec3 centroid;
  double area{0.0};  // mm^2
  Vec3 normal;       // unit
};

// Layout of a mesh produced by mesh_rectangle: cell (i, j) owns facets
// 2*(j*nu + i) and 2*(j*nu + i) + 1, whose centroids sit at (2/3, 1/3) and
// (1/3, 2/3) of the cell in (u, v). Two congruent parallel grids therefore
// differ by a pure translation, which the lattice propagator exploits.
struct StructuredGrid {
  Vec3 origin;  // corner of cell (0, 0)
  Vec3 u{1, 0, 0};
  Vec3 v{0, 1, 0};
  double du{0}, dv{0};
  int nu{0}, nv{0};

  Vec3 normal() const { return cross(u, v); }
  Vec3 centroid(int i, int j, int sub) const {
    const double fu = sub == 0 ? 2.0 / 3.0 : 1.0 / 3.0;
    const double fv = sub == 0 ? 1.0 / 3.0 : 2.0 / 3.0;
    return origin + u * ((i + fu) * du) + v * ((j + fv) * dv);
  }
};

struct SurfaceMesh {
  std::vector<Facet> facets;
  double target_edge_length{0.0};
  std::optional<StructuredGrid> grid;

  std::size_t size() const { return facets.size(); }
  double total_area() const;
  double max_edge() const;
  std::vector<Vec3> centroids() const;
};

// Triangulates a width x height rectangle in the local z = 0 plane, centred on
// the origin, normal +z. Cells are split along the diagonal and sized so that
// every edge, diagonals included, is at most max_edge.
SurfaceMesh mesh_rectangle(double width, double height, double max_edge);

// Same triangulation placed in space: local x along u, local y along v,
// normal u x v. u and v must be orthonormal.
SurfaceMesh mesh_panel(const Vec3& center, const Vec3& u, const Vec3& v, double width,
                       double height, double max_edge);

Facet make_facet(const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace reflectsim
