#include "ces/composer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <deque>

namespace ces::composer {

namespace {

VectorXd gather_free(const VectorXd& full, const std::vector<int>& free) {
  VectorXd out(free.size());
  for (std::size_t k = 0; k < free.size(); ++k) out[k] = full[free[k]];
  return out;
}

}  // namespace

SolveResult solve_composed(const Assembly& assembly, const surrogate::SurrogateParams& params,
                           const LbfgsOptions& options) {
  if (!(options.step > 0.0) || options.history < 1) throw std::invalid_argument("bad L-BFGS options");
  SolveResult res;
  VectorXd x = assembly.initial();
  ComposedEnergy cur = composed_energy(assembly, params, x);
  VectorXd g = gather_free(cur.gradient, assembly.free_dofs);
  std::deque<std::pair<VectorXd, VectorXd>> mem;  // (s, y)
  if (options.keep_trajectory) res.trajectory.push_back(x);

  for (int it = 0;; ++it) {
    res.grad_norm = g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.grad_norm <= options.grad_tol) {
      res.converged = true;
      break;
    }
    if (it == options.max_iters) break;

    // Two-loop recursion.
    VectorXd q = g;
    std::vector<double> alpha(mem.size());
    for (long i = static_cast<long>(mem.size()) - 1; i >= 0; --i) {
      const auto& [s, y] = mem[i];
      alpha[i] = s.dot(q) / y.dot(s);
      q -= alpha[i] * y;
    }
    if (!mem.empty()) q *= mem.back().first.dot(mem.back().second) / mem.back().second.squaredNorm();
    for (std::size_t i = 0; i < mem.size(); ++i) {
      const auto& [s, y] = mem[i];
      q += (alpha[i] - y.dot(q) / y.dot(s)) * s;
    }
    VectorXd d = -q;
    if (!(d.dot(g) < 0.0)) {
      mem.clear();
      d = -g;
    }

    // The first step is scaled by 1 / |g|_1 as in torch.optim.LBFGS.
    double t = it == 0 ? options.step * std::min(1.0, 1.0 / g.lpNorm<1>()) : options.step;
    VectorXd xn;
    ComposedEnergy next;
    for (int h = 0;; ++h) {
      xn = x;
      for (std::size_t k = 0; k < assembly.free_dofs.size(); ++k) xn[assembly.free_dofs[k]] += t * d[k];
      next = composed_energy(assembly, params, xn);
      if (std::isfinite(next.energy) && next.gradient.allFinite()) break;
      if (h == 60) {
        spdlog::warn("L-BFGS: non-finite energy persists at iteration {}", it);
        res.solution = x;
        res.energy = cur.energy;
        res.iterations = it;
        return res;
      }
      t *= 0.5;
      res.step_halved = true;
    }
    const VectorXd gn = gather_free(next.gradient, assembly.free_dofs);
    const VectorXd s = t * d, y = gn - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.emplace_back(s, y);
      if (static_cast<int>(mem.size()) > options.history) mem.pop_front();
    }
    const double change = std::abs(next.energy - cur.energy);
    x = std::move(xn);
    g = gn;
    cur = std::move(next);
    res.iterations = it + 1;
    if (options.keep_trajectory) res.trajectory.push_back(x);
    if (change <= options.rel_tol * std::max(std::abs(cur.energy), 1e-300)) {
      res.grad_norm = g.size() ? g.lpNorm<Eigen::Infinity>() : 0.0;
      res.converged = true;
      break;
    }
  }
  res.solution = x;
  res.energy = cur.energy;
  spdlog::debug("L-BFGS: {} iterations, energy {:.8e}, |g| {:.3e}, converged {}", res.iterations, res.energy,
                res.grad_norm, res.converged);
  return res;
}

}  // namespace ces::composer
