#pragma once

#include "ces/pipeline.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ces::cli {

class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class SolverError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScenarioConfig {
  int grid = 2;
  double alpha = 0.0;
  double beta = 0.0;
  double strain = 0.125;
  composer::Mode mode = composer::Mode::compression;
  composer::LoadAxis axis = composer::LoadAxis::y;
  geometry::MeshParams mesh{32, 8};
};

struct BenchmarkConfig {
  int grid = 2;
  double strain = 0.125;
  int sampled_shapes = 6;
  std::vector<composer::Mode> modes{composer::Mode::compression, composer::Mode::tension};
  std::vector<geometry::MeshParams> ladder{{4, 1}, {8, 2}, {16, 4}, {32, 8}};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output = "run";
  int workers = 0;

  fem::Material material;
  geometry::ValidityConfig validity;
  pipeline::ComponentSpec component;

  int collectors = 8;
  int samples_per_collector = 25;
  double strain_std = 0.15;

  surrogate::ArchConfig arch;
  surrogate::TrainConfig train;
  std::uint64_t init_seed = 1;

  int dagger_rounds = 3;
  int dagger_scenarios = 8;
  int dagger_iterates = 4;
  int dagger_grid = 2;
  double dagger_max_strain = 0.3;
  double dagger_p_compression = 0.8;
  long dagger_steps = 1000;  // training steps after each round
  composer::LbfgsOptions lbfgs;

  std::vector<int> load_steps{1, 2, 5, 10, 20};
  std::vector<double> relaxations{0.9, 0.7, 0.4, 0.1, 0.05};

  ScenarioConfig scenario;
  BenchmarkConfig benchmark;

  /// Throws ValidationError.
  void validate() const;
  pipeline::CollectConfig collect_config() const;
  composer::FeaSpec fea_spec(const geometry::MeshParams& mesh) const;
};

/// INI file with sections [run], [material], [geometry], [collect], [surrogate], [dagger],
/// [fea], [scenario], [benchmark]. Unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path);
RunConfig default_config();
/// Writes the effective configuration in the same format.
void write_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace ces::cli
