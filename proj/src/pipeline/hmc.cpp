#include "ces/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace ces::pipeline {

int HmcConfig::leapfrog_steps() const {
  if (!(path_length > 0.0)) return 0;
  return std::max(1, static_cast<int>(std::lround(path_length / step_size)));
}

void HmcConfig::validate() const {
  if (!(step_size > 0.0) || !(path_length >= 0.0) || !(temperature > 0.0) || !(momentum_std > 0.0) ||
      samples_per_collector < 0 || max_failures < 0)
    throw std::invalid_argument("HMC hyperparameters must be positive");
}

HmcConfig randomize_hmc_config(std::mt19937_64& rng) {
  static constexpr double temperatures[] = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1};
  HmcConfig c;
  c.step_size = std::uniform_real_distribution<double>(0.005, 0.02)(rng);
  c.path_length = std::uniform_real_distribution<double>(0.05, 0.3)(rng);
  c.temperature = temperatures[std::uniform_int_distribution<int>(0, 6)(rng)];
  c.momentum_std = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
  return c;
}

std::optional<Trajectory> leapfrog(const VectorXd& x, const VectorXd& p, const DensityEval& start, double step,
                                   int steps, const Density& density) {
  Trajectory t{x, p, start};
  if (steps == 0) return t;
  t.p += 0.5 * step * t.eval.grad;
  for (int i = 1; i <= steps; ++i) {
    t.x += step * t.p;
    auto e = density(t.x, t.eval);
    if (!e) return std::nullopt;
    t.eval = std::move(*e);
    t.p += (i < steps ? step : 0.5 * step) * t.eval.grad;
  }
  return t;
}

std::optional<ChainStep> hmc_step(const VectorXd& x, const DensityEval& current, const HmcConfig& config,
                                  const Density& density, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, config.momentum_std);
  VectorXd p(x.size());
  for (long i = 0; i < p.size(); ++i) p[i] = normal(rng);
  const double log_u = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  auto traj = leapfrog(x, p, current, config.step_size, config.leapfrog_steps(), density);
  if (!traj) return std::nullopt;
  const double h0 = -current.logp + 0.5 * p.squaredNorm();
  const double h1 = -traj->eval.logp + 0.5 * traj->p.squaredNorm();
  ChainStep s{std::move(*traj), false};
  s.accepted = std::isfinite(h1) && log_u < h0 - h1;
  return s;
}

std::vector<SampleRecord> hmc_collect(const geometry::PoreShape& xi, const HmcConfig& config, std::mt19937_64& rng,
                                      const CollectorOptions& options) {
  config.validate();
  if (!options.shaping.boltzmann) throw std::invalid_argument("labelled collection needs the Boltzmann term");
  const ComponentModel model(xi, options.component);
  const auto& layout = model.layout();
  std::normal_distribution<double> strain(0.0, options.strain_std);
  Eigen::Matrix2d target;
  for (int i = 0; i < 4; ++i) target(i / 2, i % 2) = strain(rng);
  ShapingOptions shaping = options.shaping;
  shaping.temperature = config.temperature;

  const Density density = [&](const VectorXd& x, const DensityEval& prev) {
    return shaping_logdensity(&model, x, target, shaping, layout, prev.solution.get());
  };
  VectorXd x = VectorXd::Zero(layout.num_dofs());
  auto start = shaping_logdensity(&model, x, target, shaping, layout);
  if (!start) throw std::runtime_error("rest state failed to solve");
  DensityEval current = std::move(*start);

  std::vector<SampleRecord> out;
  int failures = 0, accepted = 0;
  while (static_cast<int>(out.size()) < config.samples_per_collector) {
    auto step = hmc_step(x, current, config, density, rng);
    if (!step) {
      if (++failures > config.max_failures) {
        spdlog::warn("collector {}: {} consecutive FEA failures, stopping with {} samples", options.seed, failures,
                     out.size());
        break;
      }
      spdlog::debug("collector {}: proposal rejected after an FEA failure", options.seed);
      continue;
    }
    failures = 0;
    const DensityEval& e = step->proposal.eval;
    SampleRecord r;
    r.u = step->proposal.x;
    r.xi = xi;
    r.energy = e.energy;
    r.grad = e.energy_grad;
    r.hessian = model.collapsed_hessian(*e.solution);
    r.source = step->accepted ? Source::hmc : Source::rejected_hmc;
    r.seed = options.seed;
    out.push_back(std::move(r));
    if (step->accepted) {
      ++accepted;
      x = step->proposal.x;
      current = step->proposal.eval;
    }
  }
  spdlog::info("collector {}: xi = ({:.4f}, {:.4f}), T = {}, {} samples, {} accepted", options.seed, xi.alpha, xi.beta,
               config.temperature, out.size(), accepted);
  return out;
}

int worker_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CES_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int collector_index(const CollectConfig& config, std::uint64_t record_seed) {
  return static_cast<int>(record_seed - config.seed * 1000003ULL);
}

std::vector<SampleRecord> collect(const CollectConfig& config) {
  const long target = static_cast<long>(config.collectors) * config.samples_per_collector - config.existing;
  const int workers = std::max(1, worker_count(config.workers));
  std::vector<SampleRecord> out;
  // Collectors that stop early are replaced by fresh ones until the count is reached.
  for (int base = config.first_collector; static_cast<long>(out.size()) < target; base += workers) {
    if (base > 100 * std::max(1, config.collectors)) throw std::runtime_error("collectors keep failing; giving up");
    std::vector<std::vector<SampleRecord>> parts(workers);
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&](int slot) {
      const int c = base + slot;
      try {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(c)};
        std::mt19937_64 rng(seq);
        const auto xi = geometry::sample_valid_pore(rng, config.validity, config.collector.component.cell_side);
        HmcConfig hc = randomize_hmc_config(rng);
        hc.samples_per_collector = config.samples_per_collector;
        CollectorOptions opt = config.collector;
        opt.seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(c);
        parts[slot] = hmc_collect(xi, hc, rng, opt);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    };
    std::vector<std::thread> pool;
    for (int slot = 1; slot < workers; ++slot) pool.emplace_back(run, slot);
    run(0);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    const std::size_t before = out.size();
    for (auto& part : parts)
      for (auto& r : part)
        if (static_cast<long>(out.size()) < target) out.push_back(std::move(r));
    if (config.on_batch) config.on_batch(std::span<const SampleRecord>(out).subspan(before));
  }
  return out;
}

}  // namespace ces::pipeline
