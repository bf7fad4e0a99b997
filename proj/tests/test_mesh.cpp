#include "doctest.h"

#include <cmath>

#include "reflectsim/errors.hpp"
#include "reflectsim/mesh.hpp"

using namespace reflectsim;

TEST_CASE("single quad splits into two triangles") {
  const auto m = mesh_rectangle(10, 10, 20);
  CHECK(m.size() == 2);
  CHECK(m.total_area() == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("area is conserved") {
  const auto m = mesh_rectangle(200, 150, 2.48);
  CHECK(std::abs(m.total_area() - 30000.0) < 1e-6);
  const auto tilted = mesh_panel({3, -4, 7}, Vec3{1, 1, 0}.normalized(), {0, 0, 1}, 33.3, 12.1, 1.7);
  CHECK(std::abs(tilted.total_area() / (33.3 * 12.1) - 1.0) < 1e-9);
}

TEST_CASE("exhaustive edge scan on a large panel") {
  const auto m = mesh_rectangle(1000, 1000, 6.2);
  double longest = 0;
  for (const auto& f : m.facets) {
    for (int e = 0; e < 3; ++e) {
      const Vec3 d = f.vertices[e] - f.vertices[(e + 1) % 3];
      longest = std::max(longest, std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z));
    }
  }
  CHECK(longest <= 6.2);
  CHECK(std::abs(m.total_area() - 1e6) / 1e6 < 1e-9);
}

TEST_CASE("facets are consistent") {
  const auto m = mesh_panel({0, 0, 5}, {0, 1, 0}, {1, 0, 0}, 20, 30, 3);
  for (const auto& f : m.facets) {
    CHECK(f.area > 0);
    CHECK(std::abs(f.normal.norm() - 1.0) < 1e-12);
    CHECK(f.normal == Vec3{0, 0, -1});
    const Vec3 mean = (f.vertices[0] + f.vertices[1] + f.vertices[2]) / 3.0;
    CHECK((mean - f.centroid).norm() < 1e-12);
    // winding agrees with the stored normal
    CHECK(dot(cross(f.vertices[1] - f.vertices[0], f.vertices[2] - f.vertices[0]), f.normal) > 0);
  }
}

TEST_CASE("structured grid reproduces facet centroids") {
  const auto m = mesh_panel({1, 2, 3}, {1, 0, 0}, {0, 1, 0}, 12, 7, 2);
  REQUIRE(m.grid);
  const auto& g = *m.grid;
  for (int j = 0; j < g.nv; ++j)
    for (int i = 0; i < g.nu; ++i)
      for (int s = 0; s < 2; ++s)
        CHECK((g.centroid(i, j, s) - m.facets[2 * (j * g.nu + i) + s].centroid).norm() < 1e-12);
}

TEST_CASE("facet count agrees with an area/edge counting estimate") {
  const double lambda = 299.792458 / 24.16;
  const double e = lambda / 5;
  const auto m = mesh_rectangle(200, 150, e);
  // right triangles with legs e/sqrt(2): area e^2/4 each
  const double expected = 200.0 * 150.0 / (e * e / 4.0);
  CHECK(std::abs(static_cast<double>(m.size()) / expected - 1.0) < 0.05);
}

TEST_CASE("invalid panels are rejected") {
  CHECK_THROWS_AS(mesh_rectangle(0, 10, 1), ValidationError);
  CHECK_THROWS_AS(mesh_rectangle(10, 10, -1), ValidationError);
  CHECK_THROWS_AS(mesh_rectangle(10, std::nan(""), 1), ValidationError);
}
