#include "ces/composer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace ces::composer {

std::vector<int> fea_constrained_dofs(const geometry::Mesh& mesh, const Assembly& assembly) {
  const bool y = assembly.bc.axis == LoadAxis::y;
  const int lo = y ? geometry::marker::bottom : geometry::marker::left;
  const int hi = y ? geometry::marker::top : geometry::marker::right;
  std::vector<int> dofs;
  int pin = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int m = mesh.markers[v];
    if (!(m & (lo | hi))) continue;
    dofs.push_back(2 * v + (y ? 1 : 0));
    const double offset = std::abs(y ? mesh.vertices[v].x() : mesh.vertices[v].y());
    if ((m & lo) && offset < best) {
      best = offset;
      pin = v;
    }
  }
  if (pin >= 0) dofs.push_back(2 * pin + (y ? 0 : 1));
  return dofs;
}

VectorXd fea_boundary_values(const geometry::Mesh& mesh, const Assembly& assembly, const std::vector<int>& constrained) {
  const bool y = assembly.bc.axis == LoadAxis::y;
  const double shift = 0.5 * assembly.bc.strain * assembly.height() * (assembly.bc.mode == Mode::compression ? 1.0 : -1.0);
  const int lo = y ? geometry::marker::bottom : geometry::marker::left;
  VectorXd b(constrained.size());
  for (std::size_t k = 0; k < constrained.size(); ++k) {
    const int d = constrained[k], v = d / 2;
    const bool loading = (d % 2 == 1) == y;
    b[k] = loading ? ((mesh.markers[v] & lo) ? shift : -shift) : 0.0;
  }
  return b;
}

VectorXd restrict_to_control_points(const geometry::Mesh& mesh, const VectorXd& displacement,
                                    const Assembly& assembly) {
  VectorXd out(assembly.num_dofs());
  const double scale = mesh.cell_side;
  for (int i = 0; i < assembly.num_points(); ++i) {
    const Eigen::Vector2d& p = assembly.points[i];
    bool found = false;
    for (const auto& tri : mesh.triangles) {
      const Eigen::Vector2d &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]], &c = mesh.vertices[tri[2]];
      Eigen::Matrix2d D;
      D << b - a, c - a;
      const Eigen::Vector2d l = D.inverse() * (p - a);
      const double tol = -1e-10 * scale;
      if (l.x() < tol || l.y() < tol || 1.0 - l.x() - l.y() < tol) continue;
      const double w[3] = {1.0 - l.x() - l.y(), l.x(), l.y()};
      out.segment<2>(2 * i).setZero();
      for (int k = 0; k < 3; ++k) out.segment<2>(2 * i) += w[k] * displacement.segment<2>(2 * tri[k]);
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("control point outside the mesh");
  }
  return out;
}

FeaReference fea_reference(const Assembly& assembly, const FeaSpec& spec) {
  FeaReference ref;
  auto mesh = std::make_shared<geometry::Mesh>(geometry::build_mesh(assembly.pore_grid(), spec.mesh));
  ref.mesh = mesh;
  ref.mesh_dofs = 2 * mesh->num_vertices();
  const auto constrained = fea_constrained_dofs(*mesh, assembly);
  const fem::DirichletProblem problem(mesh, spec.material, constrained);
  const VectorXd bvals = fea_boundary_values(*mesh, assembly, constrained);

  std::vector<std::pair<int, double>> grid;
  for (int ls : spec.load_steps)
    for (double lam : spec.relaxations) grid.emplace_back(ls, lam);
  std::stable_sort(grid.begin(), grid.end(), [](const auto& p, const auto& q) {
    return p.first != q.first ? p.first < q.first : p.second > q.second;
  });

  std::optional<fem::FemSolution> best;
  for (const auto& [ls, lam] : grid) {
    ScheduleAttempt at{ls, lam, false, 0, 0.0};
    if (best && ls >= best->newton_iterations) {
      ref.attempts.push_back(at);
      continue;
    }
    fem::SolveSchedule sched;
    sched.load_steps = ls;
    sched.relaxation = lam;
    if (best) sched.max_total_newton_iters = best->newton_iterations - 1;
    const auto t0 = std::chrono::steady_clock::now();
    fem::FemSolution sol = problem.solve(bvals, sched);
    at.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    at.converged = sol.converged;
    at.newton_iterations = sol.newton_iterations;
    ref.attempts.push_back(at);
    spdlog::debug("FEA schedule ({}, {}): converged {}, {} Newton iterations, {:.3f} s", ls, lam, sol.converged,
                  sol.newton_iterations, at.wall_time_s);
    if (sol.converged && (!best || sol.newton_iterations < best->newton_iterations)) {
      best = std::move(sol);
      ref.load_steps = ls;
      ref.relaxation = lam;
      ref.wall_time_s = at.wall_time_s;
    }
  }
  if (!best) {
    spdlog::info("FEA reference: no schedule converged on a mesh with {} dofs", ref.mesh_dofs);
    return ref;
  }
  ref.converged = true;
  ref.energy = best->energy;
  ref.newton_iterations = best->newton_iterations;
  ref.displacement = best->displacement;
  ref.control_solution = restrict_to_control_points(*mesh, best->displacement, assembly);
  spdlog::info("FEA reference ({} dofs): schedule ({}, {}) won with {} Newton iterations in {:.3f} s", ref.mesh_dofs,
               ref.load_steps, ref.relaxation, ref.newton_iterations, ref.wall_time_s);
  return ref;
}

}  // namespace ces::composer
