#pragma once

#include "ces/basis.hpp"
#include "ces/record.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ces::surrogate {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Features {
  bool scale_by_norm = true;  // E = |R(u)|^2 exp f; off: E = exp f - 1
  bool remove_rigid = true;   // Procrustes alignment before the network
  bool sobolev_g = true;      // gradient cosine loss
  bool sobolev_hvp = true;    // HVP cosine loss
};

struct ArchConfig {
  int N = 10;          // control points per face
  double side = 2.0;   // component side length
  int width = 128;
  int hidden_layers = 3;
  Features features;
};

/// Fully connected Swish network on (aligned u, alpha, beta) with a scalar output.
struct SurrogateParams {
  ArchConfig arch;
  std::vector<MatrixXd> weights;
  std::vector<VectorXd> biases;

  int boundary_dofs() const { return 8 * (arch.N - 1); }
  int input_dim() const { return boundary_dofs() + 2; }
  long num_parameters() const;
  bool all_finite() const;
};

/// He initialization (fan-in) with zero biases.
SurrogateParams init_params(const ArchConfig& arch, std::uint64_t seed);

VectorXd flatten(const SurrogateParams& params);
void unflatten(SurrogateParams& params, const VectorXd& flat);

/// Raw network output f(a, xi) for an already aligned boundary vector.
double network_output(const SurrogateParams& params, const VectorXd& a, const geometry::PoreShape& xi);

double surrogate_energy(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi);
VectorXd surrogate_grad(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi);
VectorXd surrogate_hvp(const SurrogateParams& params, const VectorXd& u, const geometry::PoreShape& xi,
                       const VectorXd& v);

struct Evaluation {
  double energy = 0.0;
  VectorXd grad;
};

/// Energies (and gradients) of many components in one network pass.
std::vector<Evaluation> evaluate_batch(const SurrogateParams& params, std::span<const VectorXd> us,
                                       std::span<const geometry::PoreShape> xis, bool with_grad);

struct LossOptions {
  double norm_floor = 1e-12;
};

struct LossReport {
  double l0 = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

class TargetError : public std::runtime_error {
 public:
  TargetError(const std::string& what, long record) : std::runtime_error(what), record_(record) {}
  long record() const { return record_; }

 private:
  long record_;
};

/// Losses on a batch. One direction v ~ N(0, I) is drawn from `rng` per record.
LossReport loss(const SurrogateParams& params, std::span<const SampleRecord> batch, std::mt19937_64& rng,
                const LossOptions& options = {});
/// Same losses plus d total / d params in flatten() order.
LossReport loss_and_gradient(const SurrogateParams& params, std::span<const SampleRecord> batch,
                             std::mt19937_64& rng, VectorXd& gradient, const LossOptions& options = {});

struct Metrics {
  double e_pct_err = 0.0;  // mean 100 |E - E*| / E*
  double g_sim = 0.0;      // mean gradient cosine similarity
  double hvp_sim = 0.0;    // mean HVP cosine similarity
};

Metrics evaluate_metrics(const SurrogateParams& params, std::span<const SampleRecord> records, std::uint64_t seed);

struct TrainConfig {
  double lr = 3e-4;
  int batch = 512;
  int epochs = 1;
  std::optional<long> max_steps;  // stop after this many Adam updates
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LossOptions loss;
};

struct AdamState {
  VectorXd m, v;
  long step = 0;
  int epoch = 0;  // epochs completed
};

struct EpochReport {
  int epoch = 0;
  long steps = 0;
  LossReport train;  // mean over the epoch's batches
  Metrics validation;
};

struct TrainResult {
  SurrogateParams params;
  AdamState state;
  std::vector<EpochReport> history;
  bool diverged = false;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Adam on the summed losses. Resumes from `state` when given.
TrainResult train(const SurrogateParams& params, std::span<const SampleRecord> train_set,
                  std::span<const SampleRecord> validation_set, const TrainConfig& config,
                  std::optional<AdamState> state = std::nullopt, const EpochCallback& on_epoch = {});

/// Binary checkpoint plus a "<path>.meta" text sidecar.
void save_checkpoint(const std::filesystem::path& path, const SurrogateParams& params,
                     const std::optional<AdamState>& state = std::nullopt,
                     const std::map<std::string, std::string>& meta = {});
struct Checkpoint {
  SurrogateParams params;
  std::optional<AdamState> state;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ces::surrogate
