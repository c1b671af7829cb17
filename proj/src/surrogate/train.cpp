#include "ces/surrogate.hpp"

#include "network.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

namespace ces::surrogate {

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

TrainResult train(const SurrogateParams& params, std::span<const SampleRecord> train_set,
                  std::span<const SampleRecord> validation_set, const TrainConfig& config,
                  std::optional<AdamState> state, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("training set is empty");
  if (config.batch < 1 || !(config.lr > 0.0)) throw std::invalid_argument("batch must be >= 1 and lr positive");

  TrainResult result;
  result.params = params;
  AdamState st = state.value_or(AdamState{});
  const long np = params.num_parameters();
  if (st.m.size() != np) {
    st.m = VectorXd::Zero(np);
    st.v = VectorXd::Zero(np);
  }
  VectorXd theta = flatten(params);
  VectorXd grad;
  const long n = static_cast<long>(train_set.size());

  for (int epoch = st.epoch; epoch < config.epochs; ++epoch) {
    if (config.max_steps && st.step >= *config.max_steps) break;
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0L);
    std::shuffle(order.begin(), order.end(), rng);

    EpochReport rep;
    rep.epoch = epoch + 1;
    int batches = 0;
    for (long start = 0; start < n; start += config.batch) {
      if (config.max_steps && st.step >= *config.max_steps) break;
      std::vector<const SampleRecord*> batch;
      for (long k = start; k < std::min(n, start + config.batch); ++k) batch.push_back(&train_set[order[k]]);
      const LossReport lr = detail::run_loss(result.params, batch, rng, &grad, config.loss);
      if (!std::isfinite(lr.total) || !grad.allFinite()) {
        spdlog::warn("training diverged at step {} (loss {}); keeping the last finite parameters", st.step, lr.total);
        result.diverged = true;
        result.state = st;
        return result;
      }
      ++st.step;
      st.m = config.beta1 * st.m + (1.0 - config.beta1) * grad;
      st.v = config.beta2 * st.v + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(st.step));
      theta.array() -= config.lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + config.eps);
      unflatten(result.params, theta);

      rep.train.l0 += lr.l0;
      rep.train.l1 += lr.l1;
      rep.train.l2 += lr.l2;
      rep.train.total += lr.total;
      ++batches;
    }
    if (batches) {
      rep.train.l0 /= batches;
      rep.train.l1 /= batches;
      rep.train.l2 /= batches;
      rep.train.total /= batches;
    }
    rep.steps = st.step;
    if (!validation_set.empty()) rep.validation = evaluate_metrics(result.params, validation_set, config.seed + 1);
    st.epoch = epoch + 1;
    spdlog::debug("epoch {}: loss {:.4e} (l0 {:.3e}, l1 {:.3e}, l2 {:.3e}), val E%err {:.2f}, G-sim {:.4f}, Hvp-sim {:.4f}",
                  rep.epoch, rep.train.total, rep.train.l0, rep.train.l1, rep.train.l2, rep.validation.e_pct_err,
                  rep.validation.g_sim, rep.validation.hvp_sim);
    result.history.push_back(rep);
    if (on_epoch) on_epoch(rep);
  }
  result.state = st;
  return result;
}

}  // namespace ces::surrogate
