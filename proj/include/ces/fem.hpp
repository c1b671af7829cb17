#pragma once

#include "ces/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ces::fem {

using geometry::Mesh;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Material {
  double mu = 1.0;
  double kappa = 10.0;
  int dim = 2;

  void validate() const;
};

class InversionError : public std::runtime_error {
 public:
  InversionError(int triangle, double det)
      : std::runtime_error("element " + std::to_string(triangle) + " inverted (det F = " + std::to_string(det) + ")"),
        triangle_(triangle) {}
  int triangle() const { return triangle_; }

 private:
  int triangle_;
};

/// W(F) = mu/2 (J^{-2/d} tr(F F^T) - d) + kappa/2 (J - 1)^2 with d = 2.
double energy_density(const Eigen::Matrix2d& F, const Material& material);

/// Density, first Piola-Kirchhoff stress and its derivative. F is flattened row-major
/// (F00, F01, F10, F11) for P and dP.
struct DensityDerivatives {
  double W = 0.0;
  Eigen::Vector4d P = Eigen::Vector4d::Zero();
  Eigen::Matrix4d dP = Eigen::Matrix4d::Zero();
};
DensityDerivatives density_derivatives(const Eigen::Matrix2d& F, const Material& material);

/// Per-triangle P1 shape gradients and reference areas.
class Discretization {
 public:
  explicit Discretization(const Mesh& mesh);

  int num_dofs() const { return 2 * num_vertices_; }
  int num_triangles() const { return static_cast<int>(area_.size()); }
  double area(int t) const { return area_[t]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  // Rows are the gradients of the three barycentric shape functions.
  const Eigen::Matrix<double, 3, 2>& gradients(int t) const { return grads_[t]; }

  Eigen::Matrix2d deformation_gradient(int t, const Eigen::VectorXd& u) const;

 private:
  int num_vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<double> area_;
  std::vector<Eigen::Matrix<double, 3, 2>> grads_;
};

struct Assembly {
  double energy = 0.0;
  Eigen::VectorXd gradient;  // over all 2 * num_vertices dofs, interleaved (ux, uy)
  SparseMatrix tangent;
};

/// Energy, exact gradient and consistent tangent. Throws InversionError.
Assembly assemble(const Discretization& disc, const Eigen::VectorXd& u, const Material& material,
                  bool with_tangent = true);
Assembly assemble(const Mesh& mesh, const Eigen::VectorXd& u, const Material& material);
double assemble_energy(const Discretization& disc, const Eigen::VectorXd& u, const Material& material);

struct SolveSchedule {
  int load_steps = 10;
  double relaxation = 0.1;
  // Per load step.
  int max_newton_iters = 400;
  // Residual infinity-norm bound. Unset means 1e-8 * mu * L0.
  std::optional<double> residual_tol;
  int max_halvings = 20;
  // Give up once this many Newton iterations have been spent across all steps.
  std::optional<int> max_total_newton_iters;
};

struct FemSolution {
  std::shared_ptr<const Mesh> mesh;
  Eigen::VectorXd displacement;
  double energy = 0.0;
  bool converged = false;
  int newton_iterations = 0;
  int load_steps_used = 0;
  int step_halvings = 0;
  double residual_norm = 0.0;
  // Energy at the end of each completed load step.
  std::vector<double> step_energies;
};

/// Sparse LDL^T of a symmetric matrix; on failure adds 1e-8 * mean|diag| (x10 per retry, 3 retries).
class SymmetricSolver {
 public:
  bool factorize(const SparseMatrix& A);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  bool regularized() const { return shift_ != 0.0; }
  double shift() const { return shift_; }

 private:
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  double shift_ = 0.0;
};

struct ReducedHessian {
  Eigen::MatrixXd matrix;
  bool regularized = false;
};

/// Energy minimisation with prescribed values on a set of constrained dofs.
class DirichletProblem {
 public:
  /// Constrains both components of every outer-square vertex, in outer_boundary_vertices order.
  DirichletProblem(std::shared_ptr<const Mesh> mesh, Material material);
  DirichletProblem(std::shared_ptr<const Mesh> mesh, Material material, std::vector<int> constrained_dofs);

  const Mesh& mesh() const { return *mesh_; }
  const Discretization& discretization() const { return disc_; }
  const Material& material() const { return material_; }
  const std::vector<int>& constrained_dofs() const { return constrained_; }
  const std::vector<int>& free_dofs() const { return free_; }
  int num_dofs() const { return disc_.num_dofs(); }

  double default_residual_tol() const;

  /// boundary_values follows constrained_dofs(). The initial guess supplies the start of the load path.
  FemSolution solve(const Eigen::VectorXd& boundary_values, const SolveSchedule& schedule,
                    const std::optional<Eigen::VectorXd>& initial_guess = std::nullopt) const;

  /// Reaction forces on the constrained dofs; equals the derivative of the collapsed energy.
  Eigen::VectorXd collapsed_gradient(const FemSolution& solution) const;
  /// Schur complement of the tangent onto the constrained dofs.
  ReducedHessian reduced_hessian(const FemSolution& solution) const;
  /// basis^T S basis with basis mapping reduced coordinates to constrained dofs; one solve per column.
  ReducedHessian reduced_hessian(const FemSolution& solution, const Eigen::MatrixXd& basis) const;

  Eigen::VectorXd boundary_values_of(const Eigen::VectorXd& u) const;

 private:
  struct Blocks {
    SparseMatrix ii, ib, bb;
  };
  Blocks split(const SparseMatrix& K) const;

  std::shared_ptr<const Mesh> mesh_;
  Material material_;
  Discretization disc_;
  std::vector<int> constrained_;
  std::vector<int> free_;
  std::vector<int> slot_;  // dof -> index in free_ (>= 0) or -(1 + index in constrained_)
};

/// Dofs (2v, 2v + 1) of every outer-square vertex.
std::vector<int> outer_boundary_dofs(const Mesh& mesh);

/// Convenience wrapper over DirichletProblem with the outer square fully constrained.
FemSolution solve_dirichlet(std::shared_ptr<const Mesh> mesh, const Eigen::VectorXd& boundary_values,
                            const Material& material, const SolveSchedule& schedule,
                            const std::optional<Eigen::VectorXd>& initial_guess = std::nullopt);

bool all_elements_valid(const Discretization& disc, const Eigen::VectorXd& u);

void write_solution(std::ostream& os, const FemSolution& solution);
FemSolution read_solution(std::istream& is);

}  // namespace ces::fem
