#include "ces/fem.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace ces::fem {

using Eigen::VectorXd;

std::vector<int> outer_boundary_dofs(const Mesh& mesh) {
  std::vector<int> dofs;
  for (int v : geometry::outer_boundary_vertices(mesh)) {
    dofs.push_back(2 * v);
    dofs.push_back(2 * v + 1);
  }
  return dofs;
}

bool SymmetricSolver::factorize(const SparseMatrix& A) {
  shift_ = 0.0;
  ldlt_.compute(A);
  if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite() && (ldlt_.vectorD().array() != 0.0).all())
    return true;
  const double mean_diag = A.diagonal().cwiseAbs().mean();
  double eps = 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
  SparseMatrix I(A.rows(), A.cols());
  I.setIdentity();
  for (int retry = 0; retry < 3; ++retry, eps *= 10.0) {
    ldlt_.compute(A + eps * I);
    if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite()) {
      shift_ = eps;
      spdlog::debug("tangent factorization regularized with shift {:.3e}", eps);
      return true;
    }
  }
  return false;
}

VectorXd SymmetricSolver::solve(const VectorXd& b) const { return ldlt_.solve(b); }
Eigen::MatrixXd SymmetricSolver::solve(const Eigen::MatrixXd& B) const { return ldlt_.solve(B); }

DirichletProblem::DirichletProblem(std::shared_ptr<const Mesh> mesh, Material material)
    : DirichletProblem(mesh, material, outer_boundary_dofs(*mesh)) {}

DirichletProblem::DirichletProblem(std::shared_ptr<const Mesh> mesh, Material material,
                                   std::vector<int> constrained_dofs)
    : mesh_(std::move(mesh)), material_(material), disc_(*mesh_), constrained_(std::move(constrained_dofs)) {
  material_.validate();
  slot_.assign(disc_.num_dofs(), 0);
  std::vector<char> fixed(disc_.num_dofs(), 0);
  for (std::size_t k = 0; k < constrained_.size(); ++k) {
    const int d = constrained_[k];
    if (d < 0 || d >= disc_.num_dofs() || fixed[d]) throw std::invalid_argument("bad constrained dof list");
    fixed[d] = 1;
    slot_[d] = -(1 + static_cast<int>(k));
  }
  for (int d = 0; d < disc_.num_dofs(); ++d)
    if (!fixed[d]) {
      slot_[d] = static_cast<int>(free_.size());
      free_.push_back(d);
    }
}

double DirichletProblem::default_residual_tol() const { return 1e-8 * material_.mu * mesh_->cell_side; }

VectorXd DirichletProblem::boundary_values_of(const VectorXd& u) const {
  VectorXd b(constrained_.size());
  for (std::size_t k = 0; k < constrained_.size(); ++k) b[k] = u[constrained_[k]];
  return b;
}

DirichletProblem::Blocks DirichletProblem::split(const SparseMatrix& K) const {
  using T = Eigen::Triplet<double>;
  std::vector<T> ii, ib, bb;
  for (int col = 0; col < K.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
      const int r = slot_[it.row()], c = slot_[it.col()];
      if (r >= 0 && c >= 0)
        ii.emplace_back(r, c, it.value());
      else if (r >= 0)
        ib.emplace_back(r, -c - 1, it.value());
      else if (c < 0)
        bb.emplace_back(-r - 1, -c - 1, it.value());
    }
  const int nf = static_cast<int>(free_.size()), nb = static_cast<int>(constrained_.size());
  Blocks out;
  out.ii.resize(nf, nf);
  out.ib.resize(nf, nb);
  out.bb.resize(nb, nb);
  out.ii.setFromTriplets(ii.begin(), ii.end());
  out.ib.setFromTriplets(ib.begin(), ib.end());
  out.bb.setFromTriplets(bb.begin(), bb.end());
  return out;
}

namespace {

VectorXd gather(const VectorXd& full, const std::vector<int>& dofs) {
  VectorXd out(dofs.size());
  for (std::size_t k = 0; k < dofs.size(); ++k) out[k] = full[dofs[k]];
  return out;
}

void scatter_add(VectorXd& full, const std::vector<int>& dofs, const VectorXd& part, double scale = 1.0) {
  for (std::size_t k = 0; k < dofs.size(); ++k) full[dofs[k]] += scale * part[k];
}

}  // namespace

FemSolution DirichletProblem::solve(const VectorXd& boundary_values, const SolveSchedule& schedule,
                                    const std::optional<VectorXd>& initial_guess) const {
  if (boundary_values.size() != static_cast<long>(constrained_.size()))
    throw std::invalid_argument("boundary value vector has the wrong length");
  if (schedule.load_steps < 1 || !(schedule.relaxation > 0.0) || schedule.relaxation > 1.0)
    throw std::invalid_argument("load_steps must be >= 1 and relaxation in (0, 1]");
  const double tol = schedule.residual_tol.value_or(default_residual_tol());

  FemSolution sol;
  sol.mesh = mesh_;
  VectorXd u = initial_guess ? *initial_guess : VectorXd::Zero(num_dofs());
  if (u.size() != num_dofs()) throw std::invalid_argument("initial guess has the wrong length");
  sol.displacement = u;
  if (!all_elements_valid(disc_, u)) {
    spdlog::debug("initial guess has inverted elements");
    return sol;
  }
  const VectorXd start = boundary_values_of(u);
  SymmetricSolver solver;

  for (int step = 1; step <= schedule.load_steps; ++step) {
    const VectorXd target = start + (static_cast<double>(step) / schedule.load_steps) * (boundary_values - start);
    const VectorXd delta = target - boundary_values_of(u);

    // Move the boundary; the interior follows the current tangent's linear response when that stays valid.
    if (delta.lpNorm<Eigen::Infinity>() > 0.0) {
      VectorXd moved = u;
      for (std::size_t k = 0; k < constrained_.size(); ++k) moved[constrained_[k]] = target[k];
      VectorXd predicted = moved;
      bool have_prediction = false;
      if (!free_.empty()) {
        const Blocks K = split(assemble(disc_, u, material_, true).tangent);
        if (solver.factorize(K.ii)) {
          scatter_add(predicted, free_, solver.solve(VectorXd(-(K.ib * delta))));
          have_prediction = all_elements_valid(disc_, predicted);
        }
      }
      if (have_prediction)
        u = predicted;
      else if (all_elements_valid(disc_, moved))
        u = moved;
      else {
        spdlog::debug("load step {}: boundary increment inverts elements", step);
        sol.displacement = u;
        sol.load_steps_used = step - 1;
        return sol;
      }
    }

    bool step_converged = false;
    for (int it = 0; it <= schedule.max_newton_iters; ++it) {
      const Assembly a = assemble(disc_, u, material_, true);
      const VectorXd r = gather(a.gradient, free_);
      const double rnorm = r.size() ? r.lpNorm<Eigen::Infinity>() : 0.0;
      sol.energy = a.energy;
      sol.residual_norm = rnorm;
      if (rnorm <= tol) {
        step_converged = true;
        break;
      }
      if (it == schedule.max_newton_iters) break;
      if (schedule.max_total_newton_iters && sol.newton_iterations >= *schedule.max_total_newton_iters) break;

      const Blocks K = split(a.tangent);
      if (!solver.factorize(K.ii)) {
        spdlog::debug("load step {}: tangent factorization failed", step);
        break;
      }
      VectorXd d = solver.solve(VectorXd(-r));
      // Indefinite tangent: shift the diagonal until the step descends.
      if (!(r.dot(d) < 0.0)) {
        const double mean_diag = K.ii.diagonal().cwiseAbs().mean();
        SparseMatrix I(K.ii.rows(), K.ii.cols());
        I.setIdentity();
        for (double sigma = 1e-4 * mean_diag; sigma < 1e8 * mean_diag && !(r.dot(d) < 0.0); sigma *= 10.0)
          if (solver.factorize(K.ii + sigma * I)) d = solver.solve(VectorXd(-r));
        if (!(r.dot(d) < 0.0)) d = -r;
      }

      double t = schedule.relaxation;
      bool accepted = false;
      for (int halving = 0; halving <= schedule.max_halvings; ++halving, t *= 0.5) {
        VectorXd trial = u;
        scatter_add(trial, free_, d, t);
        double e;
        try {
          e = assemble_energy(disc_, trial, material_);
        } catch (const InversionError&) {
          ++sol.step_halvings;
          continue;
        }
        if (e > a.energy + 1e-12 * std::abs(a.energy)) {
          ++sol.step_halvings;
          continue;
        }
        u = std::move(trial);
        accepted = true;
        break;
      }
      ++sol.newton_iterations;
      if (!accepted) {
        spdlog::debug("load step {}: no acceptable step after {} halvings (residual {:.3e})", step,
                     schedule.max_halvings, rnorm);
        break;
      }
    }
    sol.displacement = u;
    if (!step_converged) {
      sol.load_steps_used = step - 1;
      spdlog::debug("load step {} of {} did not converge (residual {:.3e}, tol {:.3e})", step, schedule.load_steps,
                   sol.residual_norm, tol);
      return sol;
    }
    sol.load_steps_used = step;
    sol.step_energies.push_back(sol.energy);
    spdlog::debug("load step {}/{}: energy {:.10e}, residual {:.3e}, newton iterations so far {}", step,
                  schedule.load_steps, sol.energy, sol.residual_norm, sol.newton_iterations);
  }
  sol.converged = true;
  return sol;
}

VectorXd DirichletProblem::collapsed_gradient(const FemSolution& solution) const {
  if (!solution.converged) throw std::logic_error("collapsed gradient needs a converged solution");
  return gather(assemble(disc_, solution.displacement, material_, false).gradient, constrained_);
}

ReducedHessian DirichletProblem::reduced_hessian(const FemSolution& solution) const {
  return reduced_hessian(solution,
                         Eigen::MatrixXd::Identity(static_cast<long>(constrained_.size()),
                                                   static_cast<long>(constrained_.size())));
}

ReducedHessian DirichletProblem::reduced_hessian(const FemSolution& solution, const Eigen::MatrixXd& basis) const {
  if (!solution.converged) throw std::logic_error("reduced Hessian needs a converged solution");
  if (basis.rows() != static_cast<long>(constrained_.size()))
    throw std::invalid_argument("basis rows must match the constrained dofs");
  const Blocks K = split(assemble(disc_, solution.displacement, material_, true).tangent);
  ReducedHessian out;
  out.matrix = basis.transpose() * (K.bb * basis);
  if (!free_.empty()) {
    SymmetricSolver solver;
    if (!solver.factorize(K.ii)) throw std::runtime_error("interior tangent block is singular");
    out.regularized = solver.regularized();
    const Eigen::MatrixXd coupling = K.ib * basis;
    out.matrix -= coupling.transpose() * solver.solve(coupling);
  }
  return out;
}

FemSolution solve_dirichlet(std::shared_ptr<const Mesh> mesh, const VectorXd& boundary_values,
                            const Material& material, const SolveSchedule& schedule,
                            const std::optional<VectorXd>& initial_guess) {
  return DirichletProblem(std::move(mesh), material).solve(boundary_values, schedule, initial_guess);
}

}  // namespace ces::fem
