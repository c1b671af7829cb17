#include "ces/composer.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace ces::composer {

VectorXd Assembly::component_vector(int c, const VectorXd& global) const {
  const auto& idx = gather[c];
  VectorXd out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = global[idx[k]];
  return out;
}

void Assembly::scatter_add(int c, const VectorXd& local, VectorXd& global) const {
  const auto& idx = gather[c];
  for (std::size_t k = 0; k < idx.size(); ++k) global[idx[k]] += local[k];
}

VectorXd Assembly::initial() const {
  VectorXd u = VectorXd::Zero(num_dofs());
  for (std::size_t k = 0; k < constrained.size(); ++k) u[constrained[k]] = constrained_values[k];
  return u;
}

geometry::PoreGrid Assembly::pore_grid() const {
  geometry::PoreGrid grid;
  grid.cols = grid.rows = 2 * g;
  for (int py = 0; py < 2 * g; ++py)
    for (int px = 0; px < 2 * g; ++px) {
      geometry::PoreShape s = xi[(py / 2) * g + px / 2];
      s.cell_side = cell_side;
      grid.shapes.push_back(s);
    }
  return grid;
}

Assembly build_assembly(const std::vector<geometry::PoreShape>& xi_grid, int g, int N, const BoundaryCondition& bc,
                        double cell_side) {
  if (g < 1 || static_cast<int>(xi_grid.size()) != g * g)
    throw std::invalid_argument("pore-shape grid must hold g * g components");
  if (!(bc.strain >= 0.0) || !(cell_side > 0.0)) throw std::invalid_argument("strain must be >= 0 and cell side > 0");
  Assembly a;
  a.g = g;
  a.N = N;
  a.cell_side = cell_side;
  a.bc = bc;
  a.xi = xi_grid;
  const basis::ControlLayout layout = a.layout();
  const double side = a.component_side(), hs = side / (N - 1), half = 0.5 * a.height();
  const long M = static_cast<long>(g) * (N - 1);

  std::map<std::pair<long, long>, int> index;
  std::vector<std::pair<long, long>> keys;
  for (int row = 0; row < g; ++row)
    for (int col = 0; col < g; ++col) {
      const Eigen::Vector2d centre((col + 0.5) * side - half, (row + 0.5) * side - half);
      std::vector<int> dofs;
      for (const auto& X : layout.positions()) {
        const Eigen::Vector2d p = centre + X;
        const std::pair<long, long> key(std::lround((p.x() + half) / hs), std::lround((p.y() + half) / hs));
        auto [it, inserted] = index.try_emplace(key, static_cast<int>(keys.size()));
        if (inserted) keys.push_back(key);
        dofs.push_back(2 * it->second);
        dofs.push_back(2 * it->second + 1);
      }
      a.gather.push_back(std::move(dofs));
    }
  for (const auto& [kx, ky] : keys) {
    a.points.emplace_back(kx * hs - half, ky * hs - half);
    a.mirror_x.push_back(index.at({M - kx, ky}));
    a.mirror_y.push_back(index.at({kx, M - ky}));
  }

  const double shift = 0.5 * bc.strain * a.height() * (bc.mode == Mode::compression ? 1.0 : -1.0);
  std::vector<char> fixed(a.num_dofs(), 0);
  std::vector<double> values;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const long along = bc.axis == LoadAxis::y ? keys[i].second : keys[i].first;
    if (along != 0 && along != M) continue;
    const int dof = 2 * static_cast<int>(i) + (bc.axis == LoadAxis::y ? 1 : 0);
    a.constrained.push_back(dof);
    values.push_back(along == 0 ? shift : -shift);
    fixed[dof] = 1;
  }
  a.constrained_values = Eigen::Map<VectorXd>(values.data(), static_cast<long>(values.size()));
  for (int d = 0; d < a.num_dofs(); ++d)
    if (!fixed[d]) a.free_dofs.push_back(d);
  return a;
}

ComposedEnergy composed_energy(const Assembly& assembly, const surrogate::SurrogateParams& params,
                               const VectorXd& global_u) {
  if (global_u.size() != assembly.num_dofs()) throw std::invalid_argument("global vector has the wrong length");
  std::vector<VectorXd> us;
  for (int c = 0; c < assembly.num_components(); ++c) us.push_back(assembly.component_vector(c, global_u));
  const auto evals = surrogate::evaluate_batch(params, us, assembly.xi, true);
  ComposedEnergy out;
  out.gradient = VectorXd::Zero(assembly.num_dofs());
  for (int c = 0; c < assembly.num_components(); ++c) {
    out.energy += evals[c].energy;
    assembly.scatter_add(c, evals[c].grad, out.gradient);
  }
  for (int d : assembly.constrained) out.gradient[d] = 0.0;
  return out;
}

VectorXd flip_global(const Assembly& assembly, const VectorXd& u, FlipOp op) {
  if (op == FlipOp::identity) return u;
  if (op == FlipOp::xy) return flip_global(assembly, flip_global(assembly, u, FlipOp::x), FlipOp::y);
  const auto& perm = op == FlipOp::x ? assembly.mirror_x : assembly.mirror_y;
  const int normal = op == FlipOp::x ? 0 : 1;
  VectorXd out(u.size());
  for (int i = 0; i < assembly.num_points(); ++i) {
    out[2 * perm[i]] = u[2 * i];
    out[2 * perm[i] + 1] = u[2 * i + 1];
    out[2 * perm[i] + normal] = -u[2 * i + normal];
  }
  return out;
}

namespace {

// The transverse rigid slide is unconstrained; compare modulo it.
VectorXd remove_slide(const Assembly& a, VectorXd u) {
  const int t = a.bc.axis == LoadAxis::y ? 0 : 1;
  double mean = 0.0;
  for (int i = 0; i < a.num_points(); ++i) mean += u[2 * i + t];
  mean /= a.num_points();
  for (int i = 0; i < a.num_points(); ++i) u[2 * i + t] -= mean;
  return u;
}

}  // namespace

Comparison compare(const Assembly& assembly, const VectorXd& candidate, double candidate_energy,
                   const VectorXd& reference, double reference_energy) {
  if (candidate.size() != assembly.num_dofs() || reference.size() != assembly.num_dofs())
    throw std::invalid_argument("solutions do not match the assembly");
  Comparison c;
  const VectorXd ref = remove_slide(assembly, reference);
  c.l2_error = std::numeric_limits<double>::infinity();
  for (FlipOp op : {FlipOp::identity, FlipOp::x, FlipOp::y, FlipOp::xy})
    c.l2_error = std::min(c.l2_error, (remove_slide(assembly, flip_global(assembly, candidate, op)) - ref).squaredNorm());
  const double diff = std::abs(candidate_energy - reference_energy);
  c.rel_energy_error = reference_energy != 0.0 ? diff / std::abs(reference_energy)
                                               : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  return c;
}

}  // namespace ces::composer
