#include "ces/checks.hpp"

#include "ces/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <random>

namespace ces::checks {

using Eigen::Matrix2d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;
using geometry::PoreShape;

namespace {

VectorXd randn(long n, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, scale);
  VectorXd v(n);
  for (long i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

double rel(const VectorXd& a, const VectorXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

fem::SolveSchedule tight(int steps = 1, double relax = 1.0) {
  fem::SolveSchedule s;
  s.load_steps = steps;
  s.relaxation = relax;
  s.residual_tol = 1e-12;
  return s;
}

VectorXd affine_values(const fem::DirichletProblem& prob, const Matrix2d& G) {
  VectorXd b(prob.constrained_dofs().size());
  for (long k = 0; k < b.size(); ++k) {
    const int d = prob.constrained_dofs()[k];
    b[k] = (G * prob.mesh().vertices[d / 2])[d % 2];
  }
  return b;
}

VectorXd rigid(const basis::ControlLayout& layout, double theta, double tx, double ty) {
  const Eigen::Rotation2Dd R(theta);
  VectorXd u(layout.num_dofs());
  for (int j = 0; j < layout.num_points(); ++j) {
    const Vector2d X = layout.positions()[j];
    u.segment<2>(2 * j) = R * X + Vector2d(tx, ty) - X;
  }
  return u;
}

std::shared_ptr<const geometry::Mesh> cell_mesh(int p, int r, PoreShape s = {}) {
  return std::make_shared<geometry::Mesh>(geometry::build_component_mesh({s}, 1, p, r));
}

surrogate::SurrogateParams random_params(int width, std::uint64_t seed) {
  surrogate::ArchConfig arch;
  arch.width = width;
  auto p = surrogate::init_params(arch, seed);
  std::mt19937_64 rng(seed + 99);
  for (auto& b : p.biases) b = randn(b.size(), 0.1, rng);
  return p;
}

Outcome verdict(bool ok, std::string detail) { return {ok, std::move(detail)}; }

// ---------------------------------------------------------------------------

Outcome energy_densities(const Context&) {
  double worst = 0.0;
  for (const fem::Material m : {fem::Material{1.0, 10.0}, fem::Material{1.7, 6.0}, fem::Material{0.3, 45.0}}) {
    for (double g : {0.0, 0.05, 0.3, 1.2}) {
      const Matrix2d F{{1.0, g}, {0.0, 1.0}};
      const double want = 0.5 * m.mu * g * g;
      worst = std::max(worst, std::abs(fem::energy_density(F, m) - want) / std::max(want, 1.0));
    }
    for (double s : {0.5, 0.9, 1.0, 1.1, 2.0}) {
      const double want = 0.5 * m.kappa * (s * s - 1.0) * (s * s - 1.0);
      worst = std::max(worst, std::abs(fem::energy_density(s * Matrix2d::Identity(), m) - want) / std::max(want, 1.0));
    }
  }
  return verdict(worst <= 1e-12, fmt::format("max relative deviation {:.2e}", worst));
}

Outcome assembly_consistency(const Context&) {
  const auto mesh = cell_mesh(8, 2, {0.1, -0.05, 1.0});
  const fem::Material m;
  const fem::Discretization disc(*mesh);
  std::mt19937_64 rng(2);
  double worst_g = 0.0, worst_k = 0.0;
  for (int state = 0; state < 20; ++state) {
    const VectorXd u = randn(disc.num_dofs(), 0.003, rng);
    const auto a = fem::assemble(disc, u, m);
    const double h = 1e-6;
    VectorXd fd(disc.num_dofs());
    for (int i = 0; i < disc.num_dofs(); ++i) {
      VectorXd up = u, um = u;
      up[i] += h;
      um[i] -= h;
      fd[i] = (fem::assemble_energy(disc, up, m) - fem::assemble_energy(disc, um, m)) / (2 * h);
    }
    worst_g = std::max(worst_g, rel(a.gradient, fd));
    const VectorXd v = randn(disc.num_dofs(), 1.0, rng);
    const VectorXd gp = fem::assemble(disc, VectorXd(u + h * v), m, false).gradient;
    const VectorXd gm = fem::assemble(disc, VectorXd(u - h * v), m, false).gradient;
    worst_k = std::max(worst_k, rel(a.tangent * v, (gp - gm) / (2 * h)));
  }
  return verdict(worst_g < 1e-5 && worst_k < 1e-5,
                 fmt::format("{} dofs; residual rel err {:.2e}, tangent rel err {:.2e}", disc.num_dofs(), worst_g,
                             worst_k));
}

Outcome collapsed_derivatives(const Context&) {
  const auto mesh = cell_mesh(8, 2, {-0.1, 0.05, 1.0});
  fem::DirichletProblem prob(mesh, fem::Material{});
  const long nb = static_cast<long>(prob.constrained_dofs().size());
  std::mt19937_64 rng(3);
  const VectorXd b = randn(nb, 0.02, rng);
  const auto sol = prob.solve(b, tight(2));
  if (!sol.converged) return verdict(false, "base solve failed");
  const VectorXd g = prob.collapsed_gradient(sol);
  const MatrixXd H = prob.reduced_hessian(sol).matrix;

  const double h = 1e-5;
  VectorXd fd_g(nb);
  MatrixXd fd_h(nb, nb);
  for (long i = 0; i < nb; ++i) {
    VectorXd bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    const auto sp = prob.solve(bp, tight(), sol.displacement);
    const auto sm = prob.solve(bm, tight(), sol.displacement);
    if (!sp.converged || !sm.converged) return verdict(false, "perturbed solve failed");
    fd_g[i] = (sp.energy - sm.energy) / (2 * h);
    fd_h.col(i) = (prob.collapsed_gradient(sp) - prob.collapsed_gradient(sm)) / (2 * h);
  }
  const double eg = rel(g, fd_g);
  const double eh = (H - fd_h).norm() / fd_h.norm();

  const auto rest = prob.solve(VectorXd::Zero(nb), tight());
  const MatrixXd H0 = prob.reduced_hessian(rest).matrix;
  const double asym = (H0 - H0.transpose()).norm() / H0.norm();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(H0);
  const VectorXd ev = eig.eigenvalues();
  const double norm = ev.cwiseAbs().maxCoeff();
  int near_null = 0;
  for (long k = 0; k < nb; ++k) near_null += std::abs(ev[k]) < 1e-6 * norm;
  const bool psd = ev[0] > -1e-6 * norm;
  return verdict(eg < 1e-4 && eh < 1e-3 && asym < 1e-8 && psd && near_null == 3,
                 fmt::format("{} boundary dofs; gradient rel err {:.2e}, Hessian rel err {:.2e}, asymmetry {:.1e}, "
                             "min eig {:.2e}, near-null modes {}",
                             nb, eg, eh, asym, ev[0] / norm, near_null));
}

Outcome energy_decomposition(const Context&) {
  geometry::PoreGrid grid;
  grid.cols = 2;
  grid.rows = 1;
  grid.shapes = {PoreShape{0.1, 0.0, 1.0}, PoreShape{-0.1, 0.05, 1.0}};
  const auto strip = std::make_shared<geometry::Mesh>(geometry::build_mesh(grid, {16, 3}));
  fem::DirichletProblem whole(strip, fem::Material{});
  VectorXd b = affine_values(whole, Matrix2d{{-0.06, 0.02}, {0.01, 0.03}});
  for (long k = 0; k < b.size(); ++k) {
    const auto& X = strip->vertices[whole.constrained_dofs()[k] / 2];
    b[k] += 0.01 * std::sin(3.0 * X.x() + X.y());
  }
  const auto sol = whole.solve(b, tight(2));
  if (!sol.converged) return verdict(false, "strip solve failed");

  double sum = 0.0;
  for (int side = 0; side < 2; ++side) {
    auto sub = std::make_shared<geometry::Mesh>();
    sub->cell_side = 1.0;
    std::vector<int> map(strip->num_vertices(), -1), inverse;
    for (const auto& tri : strip->triangles) {
      const double cx = (strip->vertices[tri[0]].x() + strip->vertices[tri[1]].x() + strip->vertices[tri[2]].x()) / 3;
      if ((cx > 0) != (side == 1)) continue;
      std::array<int, 3> t{};
      for (int k = 0; k < 3; ++k) {
        if (map[tri[k]] < 0) {
          map[tri[k]] = static_cast<int>(inverse.size());
          inverse.push_back(tri[k]);
          sub->vertices.push_back(strip->vertices[tri[k]]);
          sub->markers.push_back(0);
        }
        t[k] = map[tri[k]];
      }
      sub->triangles.push_back(t);
    }
    std::vector<int> dofs;
    for (int v = 0; v < sub->num_vertices(); ++v) {
      if (!strip->on_outer_boundary(inverse[v]) && sub->vertices[v].x() != 0.0) continue;
      dofs.push_back(2 * v);
      dofs.push_back(2 * v + 1);
    }
    VectorXd trace(dofs.size());
    for (std::size_t k = 0; k < dofs.size(); ++k) trace[k] = sol.displacement[2 * inverse[dofs[k] / 2] + dofs[k] % 2];
    fem::DirichletProblem part(sub, fem::Material{}, dofs);
    const auto ps = part.solve(trace, tight());
    if (!ps.converged) return verdict(false, "cell solve failed");
    sum += ps.energy;
  }
  const double tol = whole.default_residual_tol();
  const double gap = std::abs(sum - sol.energy);
  return verdict(gap <= 5 * tol,
                 fmt::format("strip energy {:.10e}, sum of cells {:.10e}, gap {:.2e} (bound {:.1e})", sol.energy, sum,
                             gap, 5 * tol));
}

Outcome dof_counts(const Context&) {
  const basis::ControlLayout layout(10, 2.0);
  const auto one = composer::build_assembly({PoreShape{}}, 1, 10, {});
  const auto four = composer::build_assembly(std::vector<PoreShape>(16, PoreShape{}), 4, 10, {});
  const bool ok = layout.num_dofs() == 72 && one.num_dofs() == 72 && four.num_dofs() == 690;
  return verdict(ok, fmt::format("component {}, 1x1 assembly {}, 4x4 assembly {}", layout.num_dofs(), one.num_dofs(),
                                 four.num_dofs()));
}

Outcome pore_geometry(const Context&) {
  std::mt19937_64 rng(6);
  std::vector<PoreShape> shapes{PoreShape{}, PoreShape{0.2, 0.0}, PoreShape{-0.2, 0.1}};
  for (int i = 0; i < 5; ++i) shapes.push_back(geometry::sample_valid_pore(rng));
  double worst_area = 0.0, worst_sym = 0.0, circular = 0.0;
  for (const auto& s : shapes) {
    const double area = geometry::polygon_area(geometry::pore_polygon(s, 64));
    const double dev = std::abs(area - 0.5 * s.cell_side * s.cell_side) / (0.5 * s.cell_side * s.cell_side);
    if (s.alpha == 0.0 && s.beta == 0.0) circular = dev;
    worst_area = std::max(worst_area, dev);
    for (int k = 0; k < 100; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 100.0 + 0.01;
      const double r = geometry::pore_radius(s, t);
      for (double m : {geometry::pore_radius(s, -t), geometry::pore_radius(s, std::numbers::pi - t),
                       geometry::pore_radius(s, 0.5 * std::numbers::pi - t)})
        worst_sym = std::max(worst_sym, std::abs(m - r));
    }
  }
  return verdict(worst_area < 0.01 && worst_sym <= 1e-12,
                 fmt::format("worst area deviation {:.3f}% at 64 points (circular {:.3f}%), mirror deviation {:.1e}",
                             100 * worst_area, 100 * circular, worst_sym));
}

Outcome procrustes_flips(const Context&) {
  const basis::ControlLayout layout(10, 2.0);
  const basis::Procrustes P(layout);
  std::mt19937_64 rng(7);
  double annihilate = 0.0, idempotent = 0.0;
  bool involution = true;
  for (int i = 0; i < 10; ++i) {
    std::uniform_real_distribution<double> ang(-3.0, 3.0);
    annihilate = std::max(annihilate, P.align(rigid(layout, ang(rng), 0.5 * ang(rng), 0.5 * ang(rng))).aligned
                                          .lpNorm<Eigen::Infinity>());
    const VectorXd u = randn(72, 0.1, rng);
    const VectorXd a = P.align(u).aligned;
    idempotent = std::max(idempotent, (P.align(a).aligned - a).lpNorm<Eigen::Infinity>());
    for (auto ax : {basis::Axis::horizontal, basis::Axis::vertical})
      involution = involution && basis::flip(basis::flip(u, ax, layout), ax, layout) == u;
  }

  const auto shape = geometry::sample_valid_pore(rng);
  pipeline::ComponentSpec spec;
  spec.mesh = {16, 2};
  const pipeline::ComponentModel model(shape, spec);
  const auto& prob = model.problem();
  fem::SolveSchedule s;
  s.load_steps = 2;
  s.relaxation = 1.0;
  const double tol = prob.default_residual_tol();
  const Matrix2d squeeze{{0.0, 0.0}, {0.0, -0.05}};
  VectorXd u = 0.02 * randn(72, 1.0, rng);
  for (int j = 0; j < layout.num_points(); ++j) u.segment<2>(2 * j) += squeeze * layout.positions()[j];
  const auto base = prob.solve(model.spline().matrix * u, s);
  if (!base.converged) return verdict(false, "base solve failed");
  double gap = 0.0;
  for (auto ax : {basis::Axis::horizontal, basis::Axis::vertical}) {
    const auto f = prob.solve(model.spline().matrix * basis::flip(u, ax, layout), s);
    if (!f.converged) return verdict(false, "flipped solve failed");
    gap = std::max(gap, std::abs(f.energy - base.energy));
  }
  return verdict(annihilate <= 1e-10 && idempotent <= 1e-10 && involution && gap <= 2 * tol,
                 fmt::format("rigid residue {:.1e}, idempotence {:.1e}, involution {}, FEA flip gap {:.1e} (bound {:.1e})",
                             annihilate, idempotent, involution ? "exact" : "broken", gap, 2 * tol));
}

Outcome surrogate_differentiation(const Context&) {
  const auto p = random_params(128, 5);
  const basis::ControlLayout layout(10, 2.0);
  std::mt19937_64 rng(8);
  double eg = 0.0, eh = 0.0, es = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const VectorXd u = randn(72, 0.05, rng) + rigid(layout, 0.4 * trial, 0.1, 0.0);
    const PoreShape xi{-0.1 + 0.05 * trial, 0.07};
    const VectorXd g = surrogate::surrogate_grad(p, u, xi);
    const double h = 1e-6;
    VectorXd fd(72);
    for (int k = 0; k < 72; ++k) {
      VectorXd up = u, um = u;
      up[k] += h;
      um[k] -= h;
      fd[k] = (surrogate::surrogate_energy(p, up, xi) - surrogate::surrogate_energy(p, um, xi)) / (2 * h);
    }
    eg = std::max(eg, rel(g, fd));
    const VectorXd v = randn(72, 1.0, rng), w = randn(72, 1.0, rng);
    const VectorXd hv = surrogate::surrogate_hvp(p, u, xi, v);
    const VectorXd fd_hv = (surrogate::surrogate_grad(p, VectorXd(u + h * v), xi) -
                            surrogate::surrogate_grad(p, VectorXd(u - h * v), xi)) /
                           (2 * h);
    eh = std::max(eh, rel(hv, fd_hv));
    es = std::max(es, std::abs(w.dot(hv) - v.dot(surrogate::surrogate_hvp(p, u, xi, w))) /
                          std::max(1.0, std::abs(w.dot(hv))));
  }
  return verdict(eg < 1e-6 && eh < 1e-5 && es < 1e-8,
                 fmt::format("grad rel err {:.2e}, HVP rel err {:.2e}, HVP asymmetry {:.1e}", eg, eh, es));
}

SampleRecord self_record(const surrogate::SurrogateParams& p, const VectorXd& u, const PoreShape& xi) {
  SampleRecord r;
  r.u = u;
  r.xi = xi;
  r.energy = surrogate::surrogate_energy(p, u, xi);
  r.grad = surrogate::surrogate_grad(p, u, xi);
  r.hessian.resize(72, 72);
  for (int k = 0; k < 72; ++k) r.hessian.col(k) = surrogate::surrogate_hvp(p, u, xi, VectorXd::Unit(72, k));
  r.hessian = 0.5 * (r.hessian + r.hessian.transpose()).eval();
  return r;
}

Outcome loss_semantics(const Context&) {
  const auto p = random_params(32, 8);
  const auto q = random_params(32, 9);
  std::mt19937_64 rng(9);
  std::vector<SampleRecord> self, other;
  for (int i = 0; i < 8; ++i) {
    const VectorXd u = randn(72, 0.05, rng);
    const PoreShape xi{0.02 * i, -0.01 * i};
    self.push_back(self_record(p, u, xi));
    other.push_back(self_record(q, u, xi));
  }
  std::mt19937_64 r1(1);
  const auto zero = surrogate::loss(p, self, r1);

  auto anti = self;
  for (auto& r : anti) r.grad = -r.grad;
  std::mt19937_64 r2(1);
  const double l1_anti = surrogate::loss(p, anti, r2).l1;

  auto scaled = other;
  for (auto& r : scaled) {
    r.grad *= 1e3;
    r.hessian *= 1e3;
  }
  std::mt19937_64 ra(2), rb(2);
  const auto a = surrogate::loss(p, other, ra), b = surrogate::loss(p, scaled, rb);
  const double scale_gap = std::max(std::abs(a.l1 - b.l1), std::abs(a.l2 - b.l2));
  return verdict(std::abs(zero.total) <= 1e-10 && std::abs(l1_anti - 2.0) <= 1e-10 && scale_gap <= 1e-10,
                 fmt::format("self-target loss {:.1e}, antiparallel L1 {:.12f}, rescaling gap {:.1e}", zero.total,
                             l1_anti, scale_gap));
}

// ---------------------------------------------------------------------------
// Desk dataset, shared by the training and end-to-end criteria.

constexpr std::uint64_t kDeskSeed = 2024;
constexpr int kDeskCollectors = 80;

void desk_dataset(const Context& ctx, std::vector<SampleRecord>& train, std::vector<SampleRecord>& val) {
  const auto dir = ctx.work_dir / "desk" / "data";
  if (!std::filesystem::exists(dir / "manifest.txt")) {
    spdlog::info("collecting the desk dataset into {}", dir.string());
    pipeline::CollectConfig cfg;
    cfg.collectors = kDeskCollectors;
    cfg.seed = kDeskSeed;
    cfg.workers = ctx.workers;
    const auto recs = pipeline::collect(cfg);
    pipeline::split_train_val(recs, train, val);
    std::filesystem::remove_all(dir);
    pipeline::dataset_append(dir / "train.bin", train);
    pipeline::dataset_append(dir / "val.bin", val);
    pipeline::write_manifest(dir);
    return;
  }
  const auto manifest = pipeline::read_manifest(dir);
  for (const auto& [name, summary] : manifest)
    if (pipeline::file_sha256(dir / name) != summary.sha256)
      throw std::runtime_error("cached desk dataset " + (dir / name).string() + " does not match its manifest");
  train = pipeline::dataset_load(dir / "train.bin");
  val = pipeline::dataset_load(dir / "val.bin");
}

Outcome training_regression(const Context& ctx) {
  std::vector<SampleRecord> train, val;
  desk_dataset(ctx, train, val);
  const auto p0 = surrogate::init_params(surrogate::ArchConfig{}, 1);
  surrogate::TrainConfig cfg;
  cfg.epochs = 1 << 20;
  cfg.max_steps = 200;
  cfg.seed = 3;
  std::mt19937_64 r0(5), r1(5);
  const auto before = surrogate::loss(p0, train, r0);
  const auto g0 = surrogate::evaluate_metrics(p0, val, 3);
  const auto res = surrogate::train(p0, train, val, cfg);
  const auto after = surrogate::loss(res.params, train, r1);
  const auto g1 = surrogate::evaluate_metrics(res.params, val, 3);
  const double ratio = after.total / before.total;
  return verdict(!res.diverged && res.state.step == 200 && ratio < 0.5 && g1.g_sim > g0.g_sim,
                 fmt::format("{} train / {} val records; loss {:.4f} -> {:.4f} (ratio {:.3f}); val G-sim {:.4f} -> "
                             "{:.4f}; Hvp-sim {:.4f} -> {:.4f}",
                             train.size(), val.size(), before.total, after.total, ratio, g0.g_sim, g1.g_sim,
                             g0.hvp_sim, g1.hvp_sim));
}

Outcome hmc_checks(const Context&) {
  const basis::ControlLayout layout(10, 2.0);
  pipeline::ShapingOptions opt;
  opt.boltzmann = false;
  Matrix2d target;
  target << 0.2, -0.1, 0.15, -0.25;
  const pipeline::Density density = [&](const VectorXd& x, const pipeline::DensityEval&) {
    return pipeline::shaping_logdensity(nullptr, x, target, opt, layout);
  };

  std::mt19937_64 rng(11);
  const VectorXd x0 = randn(72, 1.0, rng), p0 = randn(72, 1.0, rng);
  const auto e0 = *density(x0, {});
  const auto fwd = pipeline::leapfrog(x0, p0, e0, 0.7, 25, density);
  const auto back = pipeline::leapfrog(fwd->x, -fwd->p, fwd->eval, 0.7, 25, density);
  const double reversal = std::max((back->x - x0).lpNorm<Eigen::Infinity>(), (back->p + p0).lpNorm<Eigen::Infinity>());

  // Exact HMC (unit momentum scale) on the Gaussian strain term alone.
  const auto D = basis::macro_strain_operator(layout);
  VectorXd x = VectorXd::Zero(72);
  pipeline::DensityEval cur = *density(x, {});
  pipeline::HmcConfig c;
  c.momentum_std = 1.0;
  c.path_length = 50.0;
  std::uniform_real_distribution<double> jitter(1.5, 2.5);
  auto advance = [&] {
    c.step_size = jitter(rng);
    auto s = pipeline::hmc_step(x, cur, c, density, rng);
    if (s && s->accepted) x = s->proposal.x, cur = s->proposal.eval;
  };
  for (int i = 0; i < 50; ++i) advance();
  const int batches = 20, per_batch = 25;
  MatrixXd means(4, batches);
  for (int b = 0; b < batches; ++b) {
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (int i = 0; i < per_batch; ++i) {
      advance();
      sum += D * x;
    }
    means.col(b) = sum / per_batch;
  }
  const Eigen::Vector4d mu(target(0, 0), target(0, 1), target(1, 0), target(1, 1));
  double worst_z = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double m = means.row(k).mean();
    const double se = std::sqrt((means.row(k).array() - m).square().sum() / (batches - 1) / batches);
    worst_z = std::max(worst_z, std::abs(m - mu[k]) / se);
  }

  static constexpr double temps[] = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1};
  bool in_range = true;
  std::mt19937_64 draws(12);
  for (int i = 0; i < 10000; ++i) {
    const auto h = pipeline::randomize_hmc_config(draws);
    in_range = in_range && h.step_size >= 0.005 && h.step_size <= 0.02 && h.path_length >= 0.05 &&
               h.path_length <= 0.3 && h.momentum_std >= 0.01 && h.momentum_std <= 0.3 &&
               std::find(std::begin(temps), std::end(temps), h.temperature) != std::end(temps);
  }
  return verdict(reversal <= 1e-8 && worst_z < 3.0 && in_range,
                 fmt::format("reversal error {:.1e}; worst strain-mean deviation {:.2f} SE over 500 samples; draws {}",
                             reversal, worst_z, in_range ? "within ranges" : "out of range"));
}

// ---------------------------------------------------------------------------

struct E2eConfig {
  double lr = 3e-4;
  long initial_steps = 4000;
  long steps_per_round = 1000;
  int rounds = 3;
  int scenarios_per_round = 8;
  double strain = 0.05;
  std::vector<geometry::MeshParams> ladder{{4, 1}, {8, 2}, {16, 4}, {32, 8}};
};

Outcome end_to_end(const Context& ctx) {
  const E2eConfig cfg;
  std::vector<SampleRecord> train, val;
  desk_dataset(ctx, train, val);

  surrogate::TrainConfig tc;
  tc.lr = cfg.lr;
  tc.epochs = 1 << 20;
  tc.seed = 3;
  tc.max_steps = cfg.initial_steps;
  auto res = surrogate::train(surrogate::init_params(surrogate::ArchConfig{}, 1), train, val, tc);
  std::mt19937_64 rng(99);
  long added = 0;
  for (int round = 1; round <= cfg.rounds; ++round) {
    for (int s = 0; s < cfg.scenarios_per_round; ++s) {
      const auto scenario = pipeline::draw_scenario(rng, 2);
      pipeline::DaggerOptions opt;
      opt.seed = static_cast<std::uint64_t>(round);
      const auto recs = pipeline::dagger_round(res.params, scenario, opt, rng);
      train.insert(train.end(), recs.begin(), recs.end());
      added += static_cast<long>(recs.size());
    }
    tc.max_steps = res.state.step + cfg.steps_per_round;
    res = surrogate::train(res.params, train, val, tc, res.state);
  }
  const auto metrics = surrogate::evaluate_metrics(res.params, val, 3);

  composer::BoundaryCondition bc;
  bc.strain = cfg.strain;
  bc.mode = composer::Mode::compression;
  const auto assembly = composer::build_assembly(std::vector<PoreShape>(4, PoreShape{}), 2, 10, bc);
  const auto ces = composer::solve_composed(assembly, res.params, {});
  std::vector<composer::FeaReference> refs;
  for (const auto& mesh : cfg.ladder) {
    composer::FeaSpec spec;
    spec.mesh = mesh;
    refs.push_back(composer::fea_reference(assembly, spec));
    if (!refs.back().converged) return verdict(false, fmt::format("FEA baseline ({}, {}) failed", mesh.pore_resolution,
                                                                  mesh.min_mesh_resolution));
  }
  const auto& truth = refs.back();
  const auto coarse = composer::compare(assembly, refs.front().control_solution, refs.front().energy,
                                        truth.control_solution, truth.energy);
  const auto mine = composer::compare(assembly, ces.solution, ces.energy, truth.control_solution, truth.energy);
  return verdict(mine.l2_error < coarse.l2_error && mine.rel_energy_error < 0.15,
                 fmt::format("{} DAgger records over {} rounds; val G-sim {:.3f}, Hvp-sim {:.3f}, E %err {:.1f}; "
                             "CES l2 {:.3e}, rel energy {:.3f} ({} L-BFGS its); coarsest mesh l2 {:.3e}, rel energy {:.3f}",
                             added, cfg.rounds, metrics.g_sim, metrics.hvp_sim, metrics.e_pct_err, mine.l2_error,
                             mine.rel_energy_error, ces.iterations, coarse.l2_error, coarse.rel_energy_error));
}

Outcome newton_robustness(const Context&) {
  composer::BoundaryCondition bc;
  bc.strain = 0.125;
  bc.mode = composer::Mode::compression;
  const auto assembly = composer::build_assembly({PoreShape{}}, 1, 10, bc);
  composer::FeaSpec spec;
  spec.mesh = {16, 4};
  const auto mesh = std::make_shared<geometry::Mesh>(geometry::build_mesh(assembly.pore_grid(), spec.mesh));
  const auto dofs = composer::fea_constrained_dofs(*mesh, assembly);
  const fem::DirichletProblem prob(mesh, spec.material, dofs);
  const VectorXd b = composer::fea_boundary_values(*mesh, assembly, dofs);

  fem::SolveSchedule slow, fast;
  fast.load_steps = 1;
  fast.relaxation = 0.9;
  const auto s_slow = prob.solve(b, slow);
  const auto s_fast = prob.solve(b, fast);

  const auto ref = composer::fea_reference(assembly, spec);
  int best = std::numeric_limits<int>::max();
  for (const auto& a : ref.attempts)
    if (a.converged) best = std::min(best, a.newton_iterations);
  const bool selector_ok = ref.converged && ref.newton_iterations == best;
  return verdict(s_slow.converged && selector_ok,
                 fmt::format("(10, 0.1): {} in {} Newton iterations; (1, 0.9): {}; selector picked ({}, {}) with {} "
                             "iterations over {} attempts",
                             s_slow.converged ? "converged" : "FAILED", s_slow.newton_iterations,
                             s_fast.converged ? "converged" : "failed (permitted)", ref.load_steps, ref.relaxation,
                             ref.newton_iterations, ref.attempts.size()));
}

}  // namespace

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "analytic energy densities", 1, false, energy_densities},
      {2, "assembly consistency", 30, false, assembly_consistency},
      {3, "collapsed derivatives", 300, false, collapsed_derivatives},
      {4, "energy decomposition", 120, false, energy_decomposition},
      {5, "dof counts", 1, false, dof_counts},
      {6, "pore geometry", 1, false, pore_geometry},
      {7, "Procrustes and flips", 120, false, procrustes_flips},
      {8, "surrogate differentiation", 30, false, surrogate_differentiation},
      {9, "loss semantics", 10, false, loss_semantics},
      {10, "training regression", 600, true, training_regression},
      {11, "HMC", 900, false, hmc_checks},
      {12, "end-to-end scaled experiment", 7200, true, end_to_end},
      {13, "Newton robustness", 600, false, newton_robustness},
  };
  return all;
}

Result run(const Criterion& criterion, const Context& context) {
  Result r;
  r.id = criterion.id;
  r.name = criterion.name;
  r.budget_s = criterion.budget_s;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Outcome o = criterion.run(context);
    r.passed = o.passed;
    r.detail = o.detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.seconds > r.budget_s) {
    r.passed = false;
    r.detail += fmt::format(" [over the {:.0f} s budget]", r.budget_s);
  }
  return r;
}

std::string format(const Result& r) {
  return fmt::format("criterion {:>2} {} {} ({:.2f} s): {}", r.id, r.passed ? "PASS" : "FAIL", r.name, r.seconds,
                     r.detail);
}

}  // namespace ces::checks
