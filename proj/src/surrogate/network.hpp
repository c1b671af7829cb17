#pragma once

#include "ces/surrogate.hpp"
#include "tape.hpp"

namespace ces::surrogate::detail {

struct Graph {
  int f = -1;   // 1 x B network output
  int gx = -1;  // d f / d input
  int hx = -1;  // (d^2 f / d input^2) V
  std::vector<int> weights, biases;
};

/// Records f, its input gradient and its input Hessian along the columns of V on the tape.
/// Parameters become tape variables when `trainable`.
Graph build_graph(Tape& tape, const SurrogateParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd* V,
                  bool need_grad, bool need_hvp, bool trainable);

}  // namespace ces::surrogate::detail

namespace ces::surrogate::detail {

LossReport run_loss(const SurrogateParams& params, const std::vector<const SampleRecord*>& records,
                    std::mt19937_64& rng, Eigen::VectorXd* gradient, const LossOptions& options);

}  // namespace ces::surrogate::detail
