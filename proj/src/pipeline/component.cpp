#include "ces/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numbers>

namespace ces::pipeline {

namespace {

std::vector<geometry::PoreShape> four(const geometry::PoreShape& xi, double cell_side) {
  geometry::PoreShape s = xi;
  s.cell_side = cell_side;
  return std::vector<geometry::PoreShape>(4, s);
}

}  // namespace

ComponentModel::ComponentModel(const geometry::PoreShape& xi, const ComponentSpec& spec)
    : xi_(xi), layout_(spec.N, 2.0 * spec.cell_side) {
  auto mesh = std::make_shared<geometry::Mesh>(geometry::build_component_mesh(
      four(xi, spec.cell_side), 2, spec.mesh.pore_resolution, spec.mesh.min_mesh_resolution));
  spline_ = basis::build_spline_map(*mesh, spec.N);
  problem_ = std::make_unique<fem::DirichletProblem>(mesh, spec.material);
}

fem::FemSolution ComponentModel::solve(const VectorXd& u, const fem::FemSolution* warm) const {
  const VectorXd b = spline_.matrix * u;
  fem::SolveSchedule one, five, slow;
  one.load_steps = 1;
  one.relaxation = 1.0;
  five.load_steps = 5;
  five.relaxation = 1.0;
  if (warm && warm->converged) {
    fem::FemSolution sol = problem_->solve(b, one, warm->displacement);
    if (sol.converged) return sol;
    spdlog::debug("warm-started solve failed; retrying with 5 load steps");
    return problem_->solve(b, five);
  }
  fem::FemSolution sol = problem_->solve(b, one);
  if (sol.converged) return sol;
  sol = problem_->solve(b, five);
  if (sol.converged) return sol;
  return problem_->solve(b, slow);
}

VectorXd ComponentModel::collapsed_gradient(const fem::FemSolution& sol) const {
  return spline_.matrix.transpose() * problem_->collapsed_gradient(sol);
}

MatrixXd ComponentModel::collapsed_hessian(const fem::FemSolution& sol) const {
  return problem_->reduced_hessian(sol, spline_.matrix).matrix;
}

std::optional<SampleRecord> ComponentModel::label(const VectorXd& u, Source source, std::uint64_t seed,
                                                  const fem::FemSolution* warm) const {
  const fem::FemSolution sol = solve(u, warm);
  if (!sol.converged) return std::nullopt;
  SampleRecord r;
  r.u = u;
  r.xi = xi_;
  r.energy = sol.energy;
  r.grad = collapsed_gradient(sol);
  r.hessian = collapsed_hessian(sol);
  r.source = source;
  r.seed = seed;
  return r;
}

std::optional<DensityEval> shaping_logdensity(const ComponentModel* model, const VectorXd& u,
                                              const Eigen::Matrix2d& target, const ShapingOptions& options,
                                              const basis::ControlLayout& layout, const fem::FemSolution* warm) {
  const auto D = basis::macro_strain_operator(layout);
  const Eigen::Vector4d x = D * u;
  const Eigen::Vector4d mu(target(0, 0), target(0, 1), target(1, 0), target(1, 1));
  const Eigen::Vector4d prec = mu.cwiseAbs2().array() + options.sigma_floor;
  const Eigen::Vector4d r = x - mu;

  DensityEval out;
  out.logp = -0.5 * prec.dot(r.cwiseAbs2()) + 0.5 * prec.array().log().sum() - 2.0 * std::log(2.0 * std::numbers::pi);
  out.grad = -(D.transpose() * prec.cwiseProduct(r));
  out.energy_grad = VectorXd::Zero(u.size());
  if (!options.boltzmann) return out;
  if (!model) throw std::invalid_argument("the Boltzmann term needs a component model");

  auto sol = std::make_shared<fem::FemSolution>(model->solve(u, warm));
  if (!sol->converged) return std::nullopt;
  out.energy = sol->energy;
  out.energy_grad = model->collapsed_gradient(*sol);
  out.logp += options.energy_sign * out.energy / options.temperature;
  out.grad += (options.energy_sign / options.temperature) * out.energy_grad;
  out.solution = std::move(sol);
  return out;
}

}  // namespace ces::pipeline
