#include "ces/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

namespace ces::pipeline {

Scenario draw_scenario(std::mt19937_64& rng, int g, const geometry::ValidityConfig& validity, double max_strain,
                       double p_compression) {
  Scenario s;
  s.g = g;
  s.bc.strain = std::uniform_real_distribution<double>(0.0, max_strain)(rng);
  s.bc.mode = std::bernoulli_distribution(p_compression)(rng) ? composer::Mode::compression : composer::Mode::tension;
  s.xi.assign(g * g, geometry::sample_valid_pore(rng, validity));
  return s;
}

std::vector<SampleRecord> dagger_round(const surrogate::SurrogateParams& params, const Scenario& scenario,
                                       const DaggerOptions& options, std::mt19937_64& rng) {
  std::vector<SampleRecord> out;
  if (options.iterates <= 0) return out;
  const composer::Assembly assembly =
      composer::build_assembly(scenario.xi, scenario.g, options.component.N, scenario.bc, options.component.cell_side);
  composer::LbfgsOptions lb = options.lbfgs;
  lb.keep_trajectory = true;
  const composer::SolveResult res = composer::solve_composed(assembly, params, lb);

  std::vector<int> all(res.trajectory.size()), picks;
  std::iota(all.begin(), all.end(), 0);
  std::sample(all.begin(), all.end(), std::back_inserter(picks), options.iterates, rng);

  std::vector<std::pair<geometry::PoreShape, std::unique_ptr<ComponentModel>>> models;
  auto model_for = [&](const geometry::PoreShape& xi) -> const ComponentModel& {
    for (const auto& [s, m] : models)
      if (s.alpha == xi.alpha && s.beta == xi.beta) return *m;
    models.emplace_back(xi, std::make_unique<ComponentModel>(xi, options.component));
    return *models.back().second;
  };
  int failed = 0;
  for (int k : picks)
    for (int c = 0; c < assembly.num_components(); ++c) {
      auto r = model_for(scenario.xi[c]).label(assembly.component_vector(c, res.trajectory[k]), Source::dagger,
                                               options.seed);
      if (r)
        out.push_back(std::move(*r));
      else {
        ++failed;
        spdlog::info("DAgger: FEA failed on component {} of iterate {}; skipped", c, k);
      }
    }
  spdlog::info("DAgger round: strain {:.3f} ({}), {} L-BFGS iterations, {} records, {} failures", scenario.bc.strain,
               scenario.bc.mode == composer::Mode::compression ? "compression" : "tension", res.iterations,
               out.size(), failed);
  return out;
}

}  // namespace ces::pipeline
