#include "doctest.h"

#include "ces/geometry.hpp"

#include <cmath>
#include <numbers>
#include <map>
#include <set>
#include <sstream>

using namespace ces::geometry;

TEST_CASE("pore radius closed forms") {
  PoreShape circle;
  CHECK(pore_radius(circle, 0.3) == doctest::Approx(0.3989422804).epsilon(1e-10));
  CHECK(circle.r0() == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));

  // r0 = 1/sqrt(2.04 pi), times (1 + 0.2).
  PoreShape a{0.2, 0.0, 1.0};
  CHECK(pore_radius(a, 0.0) == doctest::Approx(0.4740140625).epsilon(1e-9));

  PoreShape collapsed{-1.0, 0.0, 1.0};
  CHECK(std::abs(pore_radius(collapsed, 0.0)) < 1e-15);
}

TEST_CASE("r0 normalisation is exact") {
  for (double alpha : {-0.3, 0.0, 0.17})
    for (double beta : {-0.2, 0.05, 0.3}) {
      PoreShape s{alpha, beta, 2.5};
      const double expected = 2.5 / std::sqrt(std::numbers::pi * (2 + alpha * alpha + beta * beta));
      CHECK(std::abs(s.r0() - expected) <= 1e-15 * expected);
    }
}

TEST_CASE("mirror symmetries of r(theta)") {
  for (double alpha : {-0.25, 0.1})
    for (double beta : {-0.1, 0.2}) {
      PoreShape s{alpha, beta, 1.0};
      for (int i = 0; i < 720; ++i) {
        const double t = 2.0 * std::numbers::pi * i / 720;
        const double r = pore_radius(s, t);
        CHECK(std::abs(r - pore_radius(s, -t)) < 1e-12);
        CHECK(std::abs(r - pore_radius(s, std::numbers::pi - t)) < 1e-12);
      }
    }
}

TEST_CASE("validity") {
  CHECK(is_valid_pore(PoreShape{0.0, 0.0, 1.0}));
  CHECK_FALSE(is_valid_pore(PoreShape{-1.0, 0.0, 1.0}));
  CHECK_FALSE(is_valid_pore(PoreShape{0.0, 0.9, 1.0}, 0.05));
  CHECK_FALSE(is_valid_pore(PoreShape{0.3, 0.0, 1.0}));  // ligament closes
  CHECK(ligament_width(PoreShape{}) == doctest::Approx(1.0 - 2.0 * PoreShape{}.r0()).epsilon(1e-6));
}

TEST_CASE("rejection sampling") {
  std::mt19937_64 rng(42), rng2(42);
  for (int i = 0; i < 20; ++i) {
    const auto a = sample_valid_pore(rng);
    const auto b = sample_valid_pore(rng2);
    CHECK(a.alpha == b.alpha);
    CHECK(a.beta == b.beta);
  }

  // Acceptance fraction of the default box, frozen from an independent grid oracle (0.7699).
  ValidityConfig cfg;
  cfg.theta_samples = 2000;
  std::mt19937_64 r(7);
  std::uniform_real_distribution<double> box(cfg.box_lo, cfg.box_hi);
  int accepted = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) accepted += is_valid_pore(PoreShape{box(r), box(r), 1.0}, cfg);
  CHECK(double(accepted) / draws == doctest::Approx(0.7699).epsilon(0.02));

  std::mt19937_64 r3(3);
  for (int i = 0; i < 10000; ++i) CHECK(is_valid_pore(sample_valid_pore(r3, cfg), cfg));

  ValidityConfig impossible;
  impossible.box_lo = 0.8;
  impossible.box_hi = 0.9;
  impossible.max_rejections = 50;
  CHECK_THROWS_AS(sample_valid_pore(r3, impossible), SamplingError);
}

TEST_CASE("pore polygon area converges to half the cell") {
  double previous = 1.0;
  for (int p : {16, 32, 64, 128}) {
    const double err = std::abs(polygon_area(pore_polygon(PoreShape{}, p)) - 0.5) / 0.5;
    CHECK(err < previous);
    if (p >= 64) CHECK(err < 0.01);
    previous = err;
  }
  // O(P^-2): doubling the resolution cuts the error by ~4.
  const double e64 = 0.5 - polygon_area(pore_polygon(PoreShape{}, 64));
  const double e128 = 0.5 - polygon_area(pore_polygon(PoreShape{}, 128));
  CHECK(e64 / e128 == doctest::Approx(4.0).epsilon(0.01));
}

namespace {
void check_mesh(const Mesh& mesh, double expected_area, double h) {
  for (int t = 0; t < mesh.num_triangles(); ++t) REQUIRE(mesh.signed_area(t) > 0.0);
  CHECK(mesh.max_edge_length() <= h * (1 + 1e-9));
  CHECK(mesh.total_area() == doctest::Approx(expected_area).epsilon(0.01));
  const double hw = 0.5 * mesh.width(), hh = 0.5 * mesh.height();
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const auto& p = mesh.vertices[v];
    const int m = mesh.markers[v];
    if (m & marker::left) CHECK(p.x() == -hw);
    if (m & marker::right) CHECK(p.x() == hw);
    if (m & marker::bottom) CHECK(p.y() == -hh);
    if (m & marker::top) CHECK(p.y() == hh);
  }
}
}  // namespace

TEST_CASE("single circular pore mesh") {
  const Mesh mesh = build_component_mesh({PoreShape{}}, 1, 64, 8);
  check_mesh(mesh, 0.5, 1.0 / 8);
  // Every vertex of the 64-gon is a mesh vertex and lies on r(theta).
  int on_curve = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (!(mesh.markers[v] & marker::pore)) continue;
    const auto& p = mesh.vertices[v];
    if (std::abs(p.norm() - pore_radius(PoreShape{}, std::atan2(p.y(), p.x()))) < 1e-12) ++on_curve;
  }
  CHECK(on_curve >= 64);
}

TEST_CASE("2x2 component mesh") {
  const Mesh mesh = build_component_mesh(std::vector<PoreShape>(4, PoreShape{}), 2, 64, 4);
  check_mesh(mesh, 2.0, 0.25);
  CHECK(mesh.width() == 2.0);
}

TEST_CASE("mixed pore shapes and coarse ladders") {
  std::mt19937_64 rng(11);
  std::vector<PoreShape> shapes;
  for (int i = 0; i < 4; ++i) shapes.push_back(sample_valid_pore(rng));
  for (auto [p, r] : {std::pair{4, 1}, {8, 2}, {16, 4}, {32, 8}}) {
    const Mesh mesh = build_component_mesh(shapes, 2, p, r);
    double pores = 0;
    for (const auto& s : shapes) pores += polygon_area(pore_polygon(s, p));
    check_mesh(mesh, 4.0 - pores, 1.0 / r);
  }
}

TEST_CASE("random valid pores mesh at every ladder level") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<PoreShape> shapes;
    for (int i = 0; i < 4; ++i) shapes.push_back(sample_valid_pore(rng));
    for (auto [p, r] : {std::pair{4, 1}, {8, 2}, {16, 4}, {32, 8}, {16, 2}, {64, 8}}) {
      const Mesh mesh = build_component_mesh(shapes, 2, p, r);
      for (int t = 0; t < mesh.num_triangles(); ++t) REQUIRE(mesh.signed_area(t) > 0.0);
      CHECK(mesh.max_edge_length() <= 1.0 / r * (1 + 1e-9));
    }
  }
}

TEST_CASE("component meshes have the square's mirror symmetries") {
  std::mt19937_64 rng(8);
  const PoreShape s = sample_valid_pore(rng);
  for (auto [p, r] : {std::pair{8, 2}, {32, 4}, {48, 12}}) {
    const Mesh mesh = build_component_mesh(std::vector<PoreShape>(4, s), 2, p, r);
    // Vertex images under x -> -x, y -> -y and the diagonal swap.
    for (int kind = 0; kind < 3; ++kind) {
      std::map<std::pair<long, long>, int> index;
      auto key = [](const Eigen::Vector2d& x) { return std::pair{std::lround(x.x() * 1e9), std::lround(x.y() * 1e9)}; };
      for (int v = 0; v < mesh.num_vertices(); ++v) index[key(mesh.vertices[v])] = v;
      REQUIRE(index.size() == static_cast<std::size_t>(mesh.num_vertices()));
      std::vector<int> image(mesh.num_vertices());
      for (int v = 0; v < mesh.num_vertices(); ++v) {
        const auto& x = mesh.vertices[v];
        const Eigen::Vector2d m = kind == 0 ? Eigen::Vector2d(-x.x(), x.y())
                                  : kind == 1 ? Eigen::Vector2d(x.x(), -x.y())
                                              : Eigen::Vector2d(x.y(), x.x());
        auto it = index.find(key(m));
        REQUIRE(it != index.end());
        CHECK((mesh.vertices[it->second] - m).norm() < 1e-12);
        image[v] = it->second;
      }
      std::set<std::array<int, 3>> tris, mapped;
      for (auto t : mesh.triangles) {
        std::sort(t.begin(), t.end());
        tris.insert(t);
        std::array<int, 3> u{image[t[0]], image[t[1]], image[t[2]]};
        std::sort(u.begin(), u.end());
        mapped.insert(u);
      }
      CHECK(tris == mapped);
    }
  }
}

TEST_CASE("pore resolutions that are not multiples of four") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<PoreShape> shapes;
    for (int i = 0; i < 4; ++i) shapes.push_back(sample_valid_pore(rng));
    for (auto [p, r] : {std::pair{6, 1}, {10, 2}, {18, 4}, {30, 8}, {33, 5}}) {
      const Mesh mesh = build_component_mesh(shapes, 2, p, r);
      double pores = 0;
      for (const auto& s : shapes) pores += polygon_area(pore_polygon(s, p));
      check_mesh(mesh, 4.0 - pores, 1.0 / r);
    }
  }
}

TEST_CASE("rectangular strip shares cell boundaries") {
  PoreGrid g = PoreGrid::uniform(4, 2, PoreShape{});
  const Mesh mesh = build_mesh(g, MeshParams{16, 3});
  check_mesh(mesh, 8.0 - 8 * polygon_area(pore_polygon(PoreShape{}, 16)), 1.0 / 3);
  // Vertices on the vertical line x = 0 must come from the shared lattice (no duplicates).
  std::vector<double> ys;
  for (const auto& p : mesh.vertices)
    if (p.x() == 0.0) ys.push_back(p.y());
  std::sort(ys.begin(), ys.end());
  CHECK(std::adjacent_find(ys.begin(), ys.end()) == ys.end());
}

TEST_CASE("meshing errors") {
  CHECK_THROWS_AS(build_component_mesh({PoreShape{0.0, 0.9, 1.0}}, 1, 32, 4), MeshingError);
  try {
    build_component_mesh({PoreShape{}, PoreShape{}, PoreShape{0.6, 0.0, 1.0}, PoreShape{}}, 2, 32, 4);
    FAIL("expected a meshing error");
  } catch (const MeshingError& e) {
    CHECK(e.pore_index() == 2);
  }
}

TEST_CASE("mesh text round trip") {
  const Mesh mesh = build_component_mesh({PoreShape{}}, 1, 16, 2);
  std::stringstream ss;
  write_mesh(ss, mesh);
  const Mesh back = read_mesh(ss);
  REQUIRE(back.num_vertices() == mesh.num_vertices());
  REQUIRE(back.num_triangles() == mesh.num_triangles());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    CHECK(back.vertices[v] == mesh.vertices[v]);
    CHECK(back.markers[v] == mesh.markers[v]);
  }
  std::stringstream bad("3 1\n0 0 0\n1 0 0\n");
  CHECK_THROWS(read_mesh(bad));
}
