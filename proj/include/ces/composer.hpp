#pragma once

#include "ces/basis.hpp"
#include "ces/fem.hpp"
#include "ces/surrogate.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ces::composer {

using Eigen::VectorXd;

enum class LoadAxis { x, y };
enum class Mode { compression, tension };

/// Axial displacement of the two loaded skeleton edges: each moves by strain * height / 2.
struct BoundaryCondition {
  double strain = 0.125;
  LoadAxis axis = LoadAxis::y;
  Mode mode = Mode::compression;
};

/// g x g components of 2 x 2 pores sharing control points on the skeleton.
struct Assembly {
  int g = 1;
  int N = 10;
  double cell_side = 1.0;
  BoundaryCondition bc;
  std::vector<geometry::PoreShape> xi;  // per component, row-major, row 0 at the bottom
  std::vector<Eigen::Vector2d> points;  // rest positions, domain centred at the origin
  std::vector<std::vector<int>> gather;  // per component: global dof of each local dof
  std::vector<int> constrained;
  VectorXd constrained_values;
  std::vector<int> free_dofs;
  std::vector<int> mirror_x;  // point index under x -> -x
  std::vector<int> mirror_y;  // point index under y -> -y

  int num_points() const { return static_cast<int>(points.size()); }
  int num_dofs() const { return 2 * num_points(); }
  int num_components() const { return g * g; }
  double component_side() const { return 2.0 * cell_side; }
  double height() const { return g * component_side(); }
  basis::ControlLayout layout() const { return basis::ControlLayout(N, component_side()); }

  VectorXd component_vector(int c, const VectorXd& global) const;
  void scatter_add(int c, const VectorXd& local, VectorXd& global) const;
  /// Zero on free dofs, prescribed values on constrained ones.
  VectorXd initial() const;
  geometry::PoreGrid pore_grid() const;
};

Assembly build_assembly(const std::vector<geometry::PoreShape>& xi_grid, int g, int N, const BoundaryCondition& bc,
                        double cell_side = 1.0);

struct ComposedEnergy {
  double energy = 0.0;
  VectorXd gradient;  // zero on constrained dofs
};

ComposedEnergy composed_energy(const Assembly& assembly, const surrogate::SurrogateParams& params,
                               const VectorXd& global_u);

struct LbfgsOptions {
  double step = 0.25;
  int history = 10;
  double grad_tol = 1e-5;
  double rel_tol = 1e-9;
  int max_iters = 20000;
  bool keep_trajectory = false;
};

struct SolveResult {
  VectorXd solution;
  double energy = 0.0;
  int iterations = 0;
  std::vector<VectorXd> trajectory;
  bool converged = false;
  bool step_halved = false;
  double grad_norm = 0.0;
};

SolveResult solve_composed(const Assembly& assembly, const surrogate::SurrogateParams& params,
                           const LbfgsOptions& options = {});

struct FeaSpec {
  geometry::MeshParams mesh;
  fem::Material material;
  std::vector<int> load_steps{1, 2, 5, 10, 20};
  std::vector<double> relaxations{0.9, 0.7, 0.4, 0.1, 0.05};
};

struct ScheduleAttempt {
  int load_steps = 0;
  double relaxation = 0.0;
  bool converged = false;
  int newton_iterations = 0;
  double wall_time_s = 0.0;
};

struct FeaReference {
  bool converged = false;
  VectorXd control_solution;  // restricted to the assembly's control points
  double energy = 0.0;
  int load_steps = 0;
  double relaxation = 0.0;
  int newton_iterations = 0;
  double wall_time_s = 0.0;  // of the selected schedule
  int mesh_dofs = 0;
  std::shared_ptr<const geometry::Mesh> mesh;
  VectorXd displacement;
  std::vector<ScheduleAttempt> attempts;
};

/// Full-domain FEA under the assembly's boundary condition, over the schedule grid.
/// The schedule with the fewest Newton iterations wins.
FeaReference fea_reference(const Assembly& assembly, const FeaSpec& spec);

/// Constrained dofs of the full-domain problem: the loading component on the two loaded
/// edges plus the transverse component of one point, which removes the sliding mode.
std::vector<int> fea_constrained_dofs(const geometry::Mesh& mesh, const Assembly& assembly);
VectorXd fea_boundary_values(const geometry::Mesh& mesh, const Assembly& assembly,
                             const std::vector<int>& constrained);

/// P1 interpolation of a mesh displacement at the assembly's control points.
VectorXd restrict_to_control_points(const geometry::Mesh& mesh, const VectorXd& displacement,
                                    const Assembly& assembly);

struct Comparison {
  double l2_error = 0.0;          // squared l2 distance, minimised over the flip group
  double rel_energy_error = 0.0;  // |E - E*| / E*
};

enum class FlipOp { identity, x, y, xy };
VectorXd flip_global(const Assembly& assembly, const VectorXd& u, FlipOp op);

Comparison compare(const Assembly& assembly, const VectorXd& candidate, double candidate_energy,
                   const VectorXd& reference, double reference_energy);

}  // namespace ces::composer
