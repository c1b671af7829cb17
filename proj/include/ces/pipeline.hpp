#pragma once

#include "ces/basis.hpp"
#include "ces/composer.hpp"
#include "ces/fem.hpp"
#include "ces/record.hpp"
#include "ces/surrogate.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ces::pipeline {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ComponentSpec {
  geometry::MeshParams mesh{32, 4};
  fem::Material material;
  int N = 10;
  double cell_side = 1.0;
};

/// One meshed 2 x 2-pore component with its spline boundary map: the FEA labeller.
class ComponentModel {
 public:
  ComponentModel(const geometry::PoreShape& xi, const ComponentSpec& spec = {});

  const geometry::PoreShape& xi() const { return xi_; }
  const basis::ControlLayout& layout() const { return layout_; }
  const basis::SplineMap& spline() const { return spline_; }
  const fem::DirichletProblem& problem() const { return *problem_; }

  /// Warm-started single-step solve, falling back to load-stepped solves from rest.
  fem::FemSolution solve(const VectorXd& u, const fem::FemSolution* warm = nullptr) const;
  /// d E / d u through the spline map.
  VectorXd collapsed_gradient(const fem::FemSolution& sol) const;
  MatrixXd collapsed_hessian(const fem::FemSolution& sol) const;
  /// Full label, or nothing when the solve fails.
  std::optional<SampleRecord> label(const VectorXd& u, Source source, std::uint64_t seed,
                                    const fem::FemSolution* warm = nullptr) const;

 private:
  geometry::PoreShape xi_;
  basis::ControlLayout layout_;
  basis::SplineMap spline_;
  std::unique_ptr<fem::DirichletProblem> problem_;
};

// ---------------------------------------------------------------------------
// Shaping density and HMC

struct ShapingOptions {
  double temperature = 1e-3;
  bool boltzmann = true;       // off: Gaussian strain term only, no FEA
  double energy_sign = -1.0;   // exp(energy_sign * E / T)
  double sigma_floor = 1e-4;   // added to the strain precision
};

struct DensityEval {
  double logp = 0.0;
  VectorXd grad;           // d logp / d u
  double energy = 0.0;     // collapsed energy (0 without the Boltzmann term)
  VectorXd energy_grad;
  std::shared_ptr<const fem::FemSolution> solution;
};

/// log of exp(sign E / T) * N(strain(u); target, diag(target^2 + floor)^-1), with gradient.
std::optional<DensityEval> shaping_logdensity(const ComponentModel* model, const VectorXd& u,
                                              const Eigen::Matrix2d& target, const ShapingOptions& options,
                                              const basis::ControlLayout& layout,
                                              const fem::FemSolution* warm = nullptr);

struct HmcConfig {
  double step_size = 0.01;
  double path_length = 0.1;
  double temperature = 1e-3;
  double momentum_std = 0.1;
  int samples_per_collector = 25;
  int max_failures = 10;  // consecutive failed proposals before the collector gives up

  int leapfrog_steps() const;
  void validate() const;
};

HmcConfig randomize_hmc_config(std::mt19937_64& rng);

using Density = std::function<std::optional<DensityEval>(const VectorXd& x, const DensityEval& previous)>;

struct Trajectory {
  VectorXd x, p;
  DensityEval eval;
};

/// Unit-mass leapfrog; nothing when the density cannot be evaluated along the way.
std::optional<Trajectory> leapfrog(const VectorXd& x, const VectorXd& p, const DensityEval& start, double step,
                                   int steps, const Density& density);

struct ChainStep {
  Trajectory proposal;
  bool accepted = false;
};

/// One HMC transition with momentum ~ N(0, momentum_std^2 I).
std::optional<ChainStep> hmc_step(const VectorXd& x, const DensityEval& current, const HmcConfig& config,
                                  const Density& density, std::mt19937_64& rng);

struct CollectorOptions {
  ComponentSpec component;
  double strain_std = 0.15;  // target macro strain entries ~ N(0, strain_std^2)
  ShapingOptions shaping;    // temperature comes from the HmcConfig
  std::uint64_t seed = 0;    // stored on every record
};

/// One HMC collector on a fixed pore shape. Rejected proposals are labelled too.
std::vector<SampleRecord> hmc_collect(const geometry::PoreShape& xi, const HmcConfig& config, std::mt19937_64& rng,
                                      const CollectorOptions& options = {});

struct CollectConfig {
  int collectors = 8;
  int samples_per_collector = 25;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: CES_WORKERS or hardware concurrency
  geometry::ValidityConfig validity;
  CollectorOptions collector;
  // Resuming: records already on disk and the first collector index still to run.
  long existing = 0;
  int first_collector = 0;
  // Called after each batch of collectors with its records, in collector order.
  std::function<void(std::span<const SampleRecord>)> on_batch;
};

int worker_count(int requested);
int collector_index(const CollectConfig& config, std::uint64_t record_seed);

/// Independent collectors with split seeds, concatenated in collector order.
/// Collector c of a run with seed s stamps its records with s * 1000003 + c.
std::vector<SampleRecord> collect(const CollectConfig& config);

// ---------------------------------------------------------------------------
// DAgger

struct Scenario {
  int g = 2;
  std::vector<geometry::PoreShape> xi;
  composer::BoundaryCondition bc;
};

/// Strain ~ U(0, max_strain), compression with probability p_compression, one pore shape for all components.
Scenario draw_scenario(std::mt19937_64& rng, int g, const geometry::ValidityConfig& validity = {},
                       double max_strain = 0.3, double p_compression = 0.8);

struct DaggerOptions {
  int iterates = 4;  // k trajectory samples per scenario
  ComponentSpec component;
  composer::LbfgsOptions lbfgs;
  std::uint64_t seed = 0;
};

std::vector<SampleRecord> dagger_round(const surrogate::SurrogateParams& params, const Scenario& scenario,
                                       const DaggerOptions& options, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Dataset files

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, long record) : std::runtime_error(what), record_(record) {}
  long record() const { return record_; }

 private:
  long record_;
};

void dataset_append(const std::filesystem::path& path, std::span<const SampleRecord> records);
std::vector<SampleRecord> dataset_load(const std::filesystem::path& path);

std::string file_sha256(const std::filesystem::path& path);

struct FileSummary {
  long records = 0;
  std::map<std::string, long> by_source;
  std::string sha256;
};

/// Counts and hashes for data/train.bin and data/val.bin, written to data/manifest.txt.
std::map<std::string, FileSummary> write_manifest(const std::filesystem::path& data_dir);
std::map<std::string, FileSummary> read_manifest(const std::filesystem::path& data_dir);

/// Every twelfth record goes to validation (11:1).
void split_train_val(std::span<const SampleRecord> records, std::vector<SampleRecord>& train,
                     std::vector<SampleRecord>& val);

}  // namespace ces::pipeline
