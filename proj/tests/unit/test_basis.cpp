#include "doctest.h"

#include "ces/basis.hpp"
#include "ces/fem.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace ces;
using namespace ces::basis;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

VectorXd random_vector(long n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  VectorXd v(n);
  for (long i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// Displacements of the control points under x -> R x + t.
VectorXd rigid(const ControlLayout& layout, double theta, const Vector2d& t, const Vector2d& about) {
  const Eigen::Rotation2Dd R(theta);
  VectorXd u(layout.num_dofs());
  for (int j = 0; j < layout.num_points(); ++j) {
    const Vector2d& X = layout.positions()[j];
    u.segment<2>(2 * j) = R * (X - about) + about + t - X;
  }
  return u;
}

VectorXd affine(const ControlLayout& layout, const Eigen::Matrix2d& G) {
  VectorXd u(layout.num_dofs());
  for (int j = 0; j < layout.num_points(); ++j) u.segment<2>(2 * j) = G * layout.positions()[j];
  return u;
}

}  // namespace

TEST_CASE("control layout") {
  const ControlLayout layout(10, 2.0);
  CHECK(layout.num_points() == 36);
  CHECK(layout.num_dofs() == 72);
  const auto& P = layout.positions();
  CHECK(P[0] == Vector2d(-1.0, -1.0));
  CHECK(P[9] == Vector2d(1.0, -1.0));
  CHECK(P[18] == Vector2d(1.0, 1.0));
  CHECK(P[27] == Vector2d(-1.0, 1.0));
  CHECK(layout.face_point(left, 9) == 0);
  // Counter-clockwise walk.
  double area = 0.0;
  for (int j = 0; j < 36; ++j) area += P[j].x() * P[(j + 1) % 36].y() - P[(j + 1) % 36].x() * P[j].y();
  CHECK(0.5 * area == doctest::Approx(4.0));
  CHECK_THROWS(ControlLayout(3, 1.0));
}

TEST_CASE("not-a-knot spline weights") {
  // Reference values from an independent not-a-knot implementation.
  auto eval = [](int N, double length, double t, const std::vector<double>& y) {
    const Eigen::RowVectorXd w = spline_weights(N, length, t);
    return (w * Eigen::Map<const VectorXd>(y.data(), N)).value();
  };
  std::vector<double> y10;
  for (int k = 0; k < 10; ++k) {
    const double x = 2.0 * k / 9;
    y10.push_back(std::sin(3 * x) + 0.5 * x * x);
  }
  CHECK(eval(10, 2.0, 0.05, y10) == doctest::Approx(0.15372821383154703).epsilon(1e-12));
  CHECK(eval(10, 2.0, 0.37, y10) == doctest::Approx(0.9631133699439268).epsilon(1e-12));
  CHECK(eval(10, 2.0, 1.0, y10) == doctest::Approx(0.641033399800695).epsilon(1e-12));
  CHECK(eval(10, 2.0, 1.61, y10) == doctest::Approx(0.3038929326386818).epsilon(1e-12));
  CHECK(eval(10, 2.0, 1.99, y10) == doctest::Approx(1.6707985020075136).epsilon(1e-12));
  const std::vector<double> y4{0.3, -0.1, 0.7, 0.2};
  CHECK(eval(4, 1.0, 0.1, y4) == doctest::Approx(-0.09475).epsilon(1e-12));
  CHECK(eval(4, 1.0, 0.5, y4) == doctest::Approx(0.30625).epsilon(1e-12));
  CHECK(eval(4, 1.0, 0.9, y4) == doctest::Approx(0.63525).epsilon(1e-12));
  const std::vector<double> y6{1.0, -2.0, 0.5, 0.0, 3.0, -1.0};
  CHECK(eval(6, 1.0, 0.13, y6) == doctest::Approx(-2.2734812499999992).epsilon(1e-12));
  CHECK(eval(6, 1.0, 0.5, y6) == doctest::Approx(0.19375).epsilon(1e-12));
  CHECK(eval(6, 1.0, 0.77, y6) == doctest::Approx(2.6044354166666657).epsilon(1e-12));

  for (int k = 0; k < 10; ++k) {
    const Eigen::RowVectorXd w = spline_weights(10, 2.0, 2.0 * k / 9);
    for (int j = 0; j < 10; ++j) CHECK(std::abs(w[j] - (j == k)) < 1e-12);
  }
  // Cubics are reproduced exactly.
  std::vector<double> cubic;
  for (int k = 0; k < 7; ++k) {
    const double x = 3.0 * k / 6;
    cubic.push_back(1 - 2 * x + 0.5 * x * x * x);
  }
  for (double t : {0.1, 0.8, 1.7, 2.95}) CHECK(eval(7, 3.0, t, cubic) == doctest::Approx(1 - 2 * t + 0.5 * t * t * t).epsilon(1e-12));
}

TEST_CASE("spline map on a component mesh") {
  const auto mesh = geometry::build_component_mesh(std::vector<geometry::PoreShape>(4, geometry::PoreShape{}), 2, 16, 3);
  const SplineMap M = build_spline_map(mesh, 10);
  const ControlLayout layout(10, 2.0);
  CHECK(M.matrix.cols() == 72);
  const auto outer = geometry::outer_boundary_vertices(mesh);
  CHECK(M.matrix.rows() == 2 * static_cast<long>(outer.size()));

  VectorXd c(72);
  for (int j = 0; j < 36; ++j) c.segment<2>(2 * j) = Vector2d(0.3, -0.7);
  const VectorXd mc = M.matrix * c;
  for (long r = 0; r < mc.size(); ++r) CHECK(mc[r] == doctest::Approx(r % 2 ? -0.7 : 0.3).epsilon(1e-12));

  // Affine fields restrict to linear ramps on every face and are reproduced.
  const Eigen::Matrix2d G{{0.1, -0.2}, {0.05, 0.3}};
  const VectorXd mu = M.matrix * affine(layout, G);
  for (std::size_t r = 0; r < outer.size(); ++r) {
    const Vector2d expected = G * mesh.vertices[outer[r]];
    CHECK(std::abs(mu[2 * r] - expected.x()) < 1e-12);
    CHECK(std::abs(mu[2 * r + 1] - expected.y()) < 1e-12);
  }

  std::mt19937_64 rng(1);
  const VectorXd a = random_vector(72, 1.0, rng), b = random_vector(72, 1.0, rng);
  CHECK((M.matrix * (2.5 * a - 0.5 * b) - (2.5 * M.matrix * a - 0.5 * M.matrix * b)).norm() < 1e-12);
}

TEST_CASE("Procrustes alignment") {
  const ControlLayout layout(10, 2.0);
  const Procrustes P(layout);
  std::mt19937_64 rng(2);

  CHECK(P.align(rigid(layout, 0.0, {0.3, -0.2}, {0, 0})).aligned.norm() < 1e-14);
  const VectorXd rot = rigid(layout, std::numbers::pi / 6, {0.0, 0.0}, {0.0, 0.0});
  CHECK(P.align(rot).aligned.lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(P.align(rot).theta == doctest::Approx(-std::numbers::pi / 6));

  const VectorXd u = random_vector(72, 0.05, rng);
  const VectorXd a = P.align(u).aligned;
  CHECK((P.align(a).aligned - a).lpNorm<Eigen::Infinity>() < 1e-12);
  for (double th : {0.4, -1.2, 2.5}) {
    const Eigen::Rotation2Dd R(th);
    VectorXd moved(72);
    for (int j = 0; j < 36; ++j) {
      const Vector2d X = layout.positions()[j];
      moved.segment<2>(2 * j) = R * (X + u.segment<2>(2 * j)) + Vector2d(0.2, 0.7) - X;
    }
    CHECK(std::abs(P.align(moved).aligned.norm() - a.norm()) <= 1e-10 * a.norm());
  }

  // Aligned configurations have zero mean and no residual rotation.
  Vector2d mean = Vector2d::Zero();
  double spin = 0.0;
  for (int j = 0; j < 36; ++j) {
    mean += a.segment<2>(2 * j);
    const Vector2d X = layout.positions()[j];
    spin += X.x() * a[2 * j + 1] - X.y() * a[2 * j];
  }
  CHECK(mean.norm() < 1e-12);
  CHECK(std::abs(spin) < 1e-12);
}

TEST_CASE("Procrustes derivatives") {
  const ControlLayout layout(10, 2.0);
  const Procrustes P(layout);
  std::mt19937_64 rng(3);
  const VectorXd u = random_vector(72, 0.1, rng) + rigid(layout, 0.3, {0.1, 0.0}, {0, 0});
  const VectorXd v = random_vector(72, 1.0, rng), w = random_vector(72, 1.0, rng);
  const Eigen::MatrixXd J = P.jacobian(u);
  const double h = 1e-6;

  Eigen::MatrixXd fd(72, 72);
  for (int k = 0; k < 72; ++k) {
    VectorXd up = u, um = u;
    up[k] += h;
    um[k] -= h;
    fd.col(k) = (P.align(up).aligned - P.align(um).aligned) / (2 * h);
  }
  CHECK((J - fd).norm() / J.norm() < 1e-8);
  CHECK((P.vjp(u, w) - J.transpose() * w).norm() < 1e-12 * w.norm() * J.norm());

  const VectorXd jd = P.jdot_vjp(u, v, w);
  const VectorXd jd_fd = (P.vjp(VectorXd(u + h * v), w) - P.vjp(VectorXd(u - h * v), w)) / (2 * h);
  CHECK((jd - jd_fd).norm() / jd_fd.norm() < 1e-7);

  // Rigid directions are annihilated by J.
  const VectorXd tx = rigid(layout, 0.0, {1.0, 0.0}, {0, 0});
  CHECK((J * tx).norm() < 1e-12);
}

TEST_CASE("macro strain") {
  const ControlLayout layout(10, 2.0);
  CHECK(macro_strain(VectorXd::Zero(72), layout).norm() == 0.0);
  const Eigen::Matrix2d e = macro_strain(affine(layout, Eigen::Matrix2d{{0.0, 0.0}, {0.0, 0.07}}), layout);
  CHECK(e(0, 0) == doctest::Approx(0.0));
  CHECK(e(0, 1) == doctest::Approx(0.0));
  CHECK(e(1, 0) == doctest::Approx(0.0));
  CHECK(e(1, 1) == doctest::Approx(0.07).epsilon(1e-14));
  CHECK(macro_strain(rigid(layout, 0.0, {0.4, 0.0}, {0, 0}), layout).norm() < 1e-15);
  // Affine fields give the gradient back.
  const Eigen::Matrix2d G{{0.1, -0.03}, {0.02, -0.2}};
  CHECK((macro_strain(affine(layout, G), layout) - G.transpose()).norm() < 1e-14);

  std::mt19937_64 rng(4);
  const VectorXd a = random_vector(72, 1.0, rng), b = random_vector(72, 1.0, rng);
  CHECK((macro_strain(VectorXd(3 * a + b), layout) - 3 * macro_strain(a, layout) - macro_strain(b, layout)).norm() < 1e-13);
}

TEST_CASE("flips") {
  const ControlLayout layout(10, 2.0);
  std::mt19937_64 rng(5);
  const VectorXd u = random_vector(72, 1.0, rng);
  for (Axis ax : {Axis::horizontal, Axis::vertical}) {
    CHECK(flip(flip(u, ax, layout), ax, layout) == u);
    const auto perm = flip_permutation(ax, layout);
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (int j = 0; j < 36; ++j) CHECK(sorted[j] == j);
  }
  const VectorXd hv = flip(flip(u, Axis::horizontal, layout), Axis::vertical, layout);
  const VectorXd vh = flip(flip(u, Axis::vertical, layout), Axis::horizontal, layout);
  CHECK(hv == vh);

  const VectorXd squeeze = affine(layout, Eigen::Matrix2d{{0.02, 0.0}, {0.0, -0.1}});
  CHECK((flip(squeeze, Axis::horizontal, layout) - squeeze).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((flip(squeeze, Axis::vertical, layout) - squeeze).lpNorm<Eigen::Infinity>() < 1e-15);
  // Flipping commutes with the strain measure up to the sign of the off-diagonal terms.
  const Eigen::Matrix2d e = macro_strain(u, layout), eh = macro_strain(flip(u, Axis::horizontal, layout), layout);
  CHECK(std::abs(eh(0, 0) - e(0, 0)) < 1e-14);
  CHECK(std::abs(eh(1, 1) - e(1, 1)) < 1e-14);
  CHECK(std::abs(eh(0, 1) + e(0, 1)) < 1e-14);
}

TEST_CASE("collapsed energy is flip invariant") {
  std::mt19937_64 rng(6);
  const auto shape = geometry::sample_valid_pore(rng);
  const auto mesh =
      std::make_shared<geometry::Mesh>(geometry::build_component_mesh(std::vector<geometry::PoreShape>(4, shape), 2, 16, 2));
  const SplineMap M = build_spline_map(*mesh, 10);
  const ControlLayout layout(10, 2.0);
  fem::DirichletProblem prob(mesh, fem::Material{});
  fem::SolveSchedule s;
  s.load_steps = 2;
  s.relaxation = 1.0;
  const double tol = prob.default_residual_tol();

  const VectorXd u = 0.02 * random_vector(72, 1.0, rng) + affine(layout, Eigen::Matrix2d{{0.0, 0.0}, {0.0, -0.05}});
  const auto base = prob.solve(M.matrix * u, s);
  REQUIRE(base.converged);
  for (Axis ax : {Axis::horizontal, Axis::vertical}) {
    const auto f = prob.solve(M.matrix * flip(u, ax, layout), s);
    REQUIRE(f.converged);
    CHECK(std::abs(f.energy - base.energy) <= 2 * tol);
  }
}

TEST_CASE("boundary vector text round trip") {
  std::mt19937_64 rng(7);
  const VectorXd u = random_vector(72, 1.0, rng);
  std::stringstream ss;
  write_boundary_vector(ss, u);
  CHECK(read_boundary_vector(ss) == u);
  std::stringstream bad("0.1 0.2 x\n");
  CHECK_THROWS(read_boundary_vector(bad));
}
