#include "doctest.h"

#include "ces/composer.hpp"

#include <random>

using namespace ces;
using namespace ces::composer;
using geometry::PoreShape;

namespace {

surrogate::SurrogateParams random_params(std::uint64_t seed, int width = 32) {
  surrogate::ArchConfig arch;
  arch.width = width;
  auto p = surrogate::init_params(arch, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& b : p.biases)
    for (long i = 0; i < b.size(); ++i) b[i] = g(rng);
  return p;
}

std::vector<PoreShape> grid_of(int g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PoreShape> out;
  for (int i = 0; i < g * g; ++i) out.push_back(geometry::sample_valid_pore(rng));
  return out;
}

}  // namespace

TEST_CASE("assembly dof counts and gather maps") {
  const Assembly a4 = build_assembly(grid_of(4, 1), 4, 10, BoundaryCondition{});
  CHECK(a4.num_points() == 345);
  CHECK(a4.num_dofs() == 690);
  const Assembly a1 = build_assembly(grid_of(1, 1), 1, 10, BoundaryCondition{});
  CHECK(a1.num_dofs() == 72);

  std::vector<int> count(a4.num_points(), 0);
  for (const auto& gm : a4.gather) {
    REQUIRE(gm.size() == 72);
    for (std::size_t k = 0; k < gm.size(); k += 2) {
      CHECK(gm[k + 1] == gm[k] + 1);
      ++count[gm[k] / 2];
    }
  }
  // A point is shared by every component whose boundary square passes through it.
  const double half = 0.5 * a4.height(), side = a4.component_side();
  for (int i = 0; i < a4.num_points(); ++i) {
    const auto& p = a4.points[i];
    int expected = 0;
    for (int row = 0; row < 4; ++row)
      for (int col = 0; col < 4; ++col) {
        const double x0 = col * side - half, y0 = row * side - half;
        const bool inside = p.x() > x0 - 1e-12 && p.x() < x0 + side + 1e-12 && p.y() > y0 - 1e-12 && p.y() < y0 + side + 1e-12;
        if (inside) ++expected;
      }
    CHECK(count[i] == expected);
    const bool grid_corner = std::abs(std::remainder(p.x() + half, side)) < 1e-12 &&
                             std::abs(std::remainder(p.y() + half, side)) < 1e-12;
    if (grid_corner && std::abs(p.x()) < half - 1e-12 && std::abs(p.y()) < half - 1e-12) CHECK(count[i] == 4);
  }
  // Shared positions agree across components.
  const basis::ControlLayout layout = a4.layout();
  for (int c = 0; c < a4.num_components(); ++c) {
    const int row = c / 4, col = c % 4;
    const Eigen::Vector2d centre((col + 0.5) * side - half, (row + 0.5) * side - half);
    for (int j = 0; j < layout.num_points(); ++j)
      CHECK((a4.points[a4.gather[c][2 * j] / 2] - (centre + layout.positions()[j])).norm() < 1e-12);
  }
  // Loaded edges: 4 * 9 + 1 points each, loading component only.
  CHECK(a4.constrained.size() == 2 * 37);
  for (std::size_t k = 0; k < a4.constrained.size(); ++k) {
    const int d = a4.constrained[k];
    CHECK(d % 2 == 1);
    const double y = a4.points[d / 2].y();
    CHECK(a4.constrained_values[k] == doctest::Approx(y < 0 ? 0.125 * 8 / 2 : -0.125 * 8 / 2));
  }
  CHECK_THROWS(build_assembly(grid_of(2, 1), 3, 10, BoundaryCondition{}));
}

TEST_CASE("gather and scatter are transposes") {
  const Assembly a = build_assembly(grid_of(3, 2), 3, 10, BoundaryCondition{});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  VectorXd x(a.num_dofs());
  for (long i = 0; i < x.size(); ++i) x[i] = g(rng);
  for (int c = 0; c < a.num_components(); ++c) {
    VectorXd y(72), sy = VectorXd::Zero(a.num_dofs());
    for (long i = 0; i < 72; ++i) y[i] = g(rng);
    a.scatter_add(c, y, sy);
    CHECK(std::abs(a.component_vector(c, x).dot(y) - x.dot(sy)) < 1e-12);
  }
}

TEST_CASE("composed energy") {
  const auto params = random_params(4);
  const Assembly a1 = build_assembly(grid_of(1, 3), 1, 10, BoundaryCondition{});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.03);
  VectorXd u(72);
  for (long i = 0; i < 72; ++i) u[i] = g(rng);
  const ComposedEnergy e1 = composed_energy(a1, params, u);
  CHECK(e1.energy == surrogate::surrogate_energy(params, u, a1.xi[0]));
  VectorXd g1 = surrogate::surrogate_grad(params, u, a1.xi[0]);
  for (int d : a1.constrained) g1[d] = 0.0;
  CHECK((e1.gradient - g1).norm() <= 1e-14 * g1.norm());

  const Assembly a = build_assembly(grid_of(2, 5), 2, 10, BoundaryCondition{0.05});
  CHECK(composed_energy(a, params, VectorXd::Zero(a.num_dofs())).energy == 0.0);
  CHECK(composed_energy(a, params, VectorXd::Zero(a.num_dofs())).gradient.norm() == 0.0);
  VectorXd x = a.initial();
  for (int d : a.free_dofs) x[d] = g(rng);
  const ComposedEnergy e = composed_energy(a, params, x);
  const double h = 1e-6;
  VectorXd fd = VectorXd::Zero(a.num_dofs());
  for (int d : a.free_dofs) {
    VectorXd xp = x, xm = x;
    xp[d] += h;
    xm[d] -= h;
    fd[d] = (composed_energy(a, params, xp).energy - composed_energy(a, params, xm).energy) / (2 * h);
  }
  CHECK((e.gradient - fd).norm() / e.gradient.norm() < 1e-6);
}

TEST_CASE("L-BFGS on the composed energy") {
  const auto params = random_params(6);
  const Assembly zero = build_assembly(grid_of(2, 6), 2, 10, BoundaryCondition{0.0});
  const SolveResult z = solve_composed(zero, params);
  CHECK(z.converged);
  CHECK(z.iterations <= 1);
  CHECK(z.solution.norm() == 0.0);

  const Assembly a = build_assembly(grid_of(2, 6), 2, 10, BoundaryCondition{0.02});
  LbfgsOptions opt;
  opt.keep_trajectory = true;
  const SolveResult r1 = solve_composed(a, params, opt), r2 = solve_composed(a, params, opt);
  CHECK(r1.converged);
  REQUIRE(r1.trajectory.size() == r2.trajectory.size());
  CHECK(r1.trajectory.size() == static_cast<std::size_t>(r1.iterations) + 1);
  for (std::size_t k = 0; k < r1.trajectory.size(); ++k) CHECK(r1.trajectory[k] == r2.trajectory[k]);
  for (std::size_t k = 0; k < a.constrained.size(); ++k)
    CHECK(r1.solution[a.constrained[k]] == a.constrained_values[k]);
  CHECK(r1.energy < composed_energy(a, params, a.initial()).energy);

  // First move: steepest descent at step * min(1, 1 / |g|_1); later moves use the full step.
  const Assembly big = build_assembly(grid_of(2, 6), 2, 10, BoundaryCondition{0.2});
  const SolveResult rb = solve_composed(big, params, opt);
  REQUIRE(rb.trajectory.size() >= 2);
  const VectorXd g0 = composed_energy(big, params, big.initial()).gradient;
  REQUIRE(g0.lpNorm<1>() > 1.0);
  const VectorXd expected = big.initial() - opt.step / g0.lpNorm<1>() * g0;
  CHECK((rb.trajectory[1] - expected).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("frozen quadratic surrogate matches the dense QP minimizer") {
  // f = 0: each component contributes |R(u)|^2, whose Hessian at rest is 2 J0^T J0.
  auto params = random_params(7, 8);
  params.weights.back().setZero();
  params.biases.back().setZero();
  const double strain = 1e-4;
  const Assembly a = build_assembly(grid_of(4, 7), 4, 10, BoundaryCondition{strain});
  CHECK(a.num_dofs() == 690);
  const basis::Procrustes proc(a.layout());
  const Eigen::MatrixXd J0 = proc.jacobian(VectorXd::Zero(72));
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(690, 690);
  for (int c = 0; c < a.num_components(); ++c)
    for (int i = 0; i < 72; ++i)
      for (int j = 0; j < 72; ++j) Q(a.gather[c][i], a.gather[c][j]) += 2.0 * (J0.col(i).dot(J0.col(j)));
  const long nf = static_cast<long>(a.free_dofs.size()), nc = static_cast<long>(a.constrained.size());
  Eigen::MatrixXd Qff(nf, nf), Qfc(nf, nc);
  for (long i = 0; i < nf; ++i) {
    for (long j = 0; j < nf; ++j) Qff(i, j) = Q(a.free_dofs[i], a.free_dofs[j]);
    for (long j = 0; j < nc; ++j) Qfc(i, j) = Q(a.free_dofs[i], a.constrained[j]);
  }
  // The sliding mode is singular; take the minimum-norm solution.
  const VectorXd xf = Qff.completeOrthogonalDecomposition().solve(VectorXd(-Qfc * a.constrained_values));

  LbfgsOptions opt;
  opt.grad_tol = 1e-14;
  opt.rel_tol = 0.0;
  const SolveResult r = solve_composed(a, params, opt);
  CHECK(r.converged);
  VectorXd got(nf);
  for (long i = 0; i < nf; ++i) got[i] = r.solution[a.free_dofs[i]];
  // Remove the slide from both before comparing.
  VectorXd full_qp = a.initial(), full_got = r.solution;
  for (long i = 0; i < nf; ++i) full_qp[a.free_dofs[i]] = xf[i];
  double mq = 0.0, mg = 0.0;
  for (int i = 0; i < a.num_points(); ++i) {
    mq += full_qp[2 * i] / a.num_points();
    mg += full_got[2 * i] / a.num_points();
  }
  for (int i = 0; i < a.num_points(); ++i) {
    full_qp[2 * i] -= mq;
    full_got[2 * i] -= mg;
  }
  CHECK((full_got - full_qp).lpNorm<Eigen::Infinity>() < 1e-3 * full_qp.lpNorm<Eigen::Infinity>());
}

TEST_CASE("global flips act blockwise") {
  const int g = 3;
  const Assembly a = build_assembly(grid_of(g, 8), g, 10, BoundaryCondition{});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  VectorXd u(a.num_dofs());
  for (long i = 0; i < u.size(); ++i) u[i] = n(rng);
  const basis::ControlLayout layout = a.layout();
  const VectorXd fx = flip_global(a, u, FlipOp::x), fy = flip_global(a, u, FlipOp::y);
  for (int row = 0; row < g; ++row)
    for (int col = 0; col < g; ++col) {
      const int c = row * g + col;
      CHECK(a.component_vector(row * g + (g - 1 - col), fx) ==
            basis::flip(a.component_vector(c, u), basis::Axis::horizontal, layout));
      CHECK(a.component_vector((g - 1 - row) * g + col, fy) ==
            basis::flip(a.component_vector(c, u), basis::Axis::vertical, layout));
    }
  CHECK(flip_global(a, fx, FlipOp::x) == u);
  CHECK(flip_global(a, flip_global(a, u, FlipOp::xy), FlipOp::xy) == u);
}

TEST_CASE("comparison metrics") {
  const Assembly a = build_assembly(std::vector<PoreShape>(4), 2, 10, BoundaryCondition{});
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  VectorXd ref(a.num_dofs());
  for (long i = 0; i < ref.size(); ++i) ref[i] = n(rng);
  Comparison c = compare(a, ref, 2.0, ref, 2.0);
  CHECK(c.l2_error == 0.0);
  CHECK(c.rel_energy_error == 0.0);
  c = compare(a, flip_global(a, ref, FlipOp::y), 2.0, ref, 2.0);
  CHECK(c.l2_error < 1e-24);
  c = compare(a, flip_global(a, ref, FlipOp::xy), 2.2, ref, 2.0);
  CHECK(c.l2_error < 1e-24);
  CHECK(c.rel_energy_error == doctest::Approx(0.1));
  // Pre-flipping the candidate does not change the result.
  VectorXd cand = ref;
  for (long i = 0; i < cand.size(); ++i) cand[i] += 0.1 * n(rng);
  const double base = compare(a, cand, 1.0, ref, 1.0).l2_error;
  for (FlipOp op : {FlipOp::x, FlipOp::y, FlipOp::xy})
    CHECK(compare(a, flip_global(a, cand, op), 1.0, ref, 1.0).l2_error == doctest::Approx(base).epsilon(1e-12));
  // A transverse slide is not an error.
  VectorXd slid = ref;
  for (int i = 0; i < a.num_points(); ++i) slid[2 * i] += 0.3;
  CHECK(compare(a, slid, 1.0, ref, 1.0).l2_error < 1e-20);
}

TEST_CASE("FEA reference") {
  const Assembly zero = build_assembly(std::vector<PoreShape>(1), 1, 10, BoundaryCondition{0.0});
  FeaSpec spec;
  spec.mesh.pore_resolution = 16;
  spec.mesh.min_mesh_resolution = 2;
  const FeaReference z = fea_reference(zero, spec);
  REQUIRE(z.converged);
  CHECK(z.control_solution.norm() == 0.0);
  CHECK(z.energy == 0.0);

  const Assembly a = build_assembly(std::vector<PoreShape>(1), 1, 10, BoundaryCondition{0.04});
  double previous = std::numeric_limits<double>::infinity();
  for (int R : {1, 2, 4}) {
    spec.mesh.min_mesh_resolution = R;
    const FeaReference r = fea_reference(a, spec);
    REQUIRE(r.converged);
    CHECK(r.energy > 0.0);
    CHECK(r.energy <= previous + 1e-8);
    previous = r.energy;
    // Control points on the loaded edges carry the prescribed displacement.
    for (std::size_t k = 0; k < a.constrained.size(); ++k)
      CHECK(r.control_solution[a.constrained[k]] == doctest::Approx(a.constrained_values[k]).epsilon(1e-10));
    CHECK(r.attempts.size() == 25);
  }
}
