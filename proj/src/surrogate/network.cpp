#include "network.hpp"

namespace ces::surrogate::detail {

Graph build_graph(Tape& tape, const SurrogateParams& params, const Eigen::MatrixXd& X, const Eigen::MatrixXd* V,
                  bool need_grad, bool need_hvp, bool trainable) {
  Graph g;
  const int L = static_cast<int>(params.weights.size());
  for (int l = 0; l < L; ++l) {
    g.weights.push_back(trainable ? tape.variable(params.weights[l]) : tape.constant(params.weights[l]));
    g.biases.push_back(trainable ? tape.variable(params.biases[l]) : tape.constant(params.biases[l]));
  }
  const long B = X.cols();
  const int hidden = L - 1;

  std::vector<int> z(hidden), s1(hidden), zdot(hidden);
  int h = tape.constant(X);
  for (int l = 0; l < hidden; ++l) {
    z[l] = tape.add_bias(tape.matmul(g.weights[l], h), g.biases[l]);
    h = tape.act(z[l], 0);
  }
  g.f = tape.add_bias(tape.matmul(g.weights[hidden], h), g.biases[hidden]);
  if (!need_grad && !need_hvp) return g;

  for (int l = 0; l < hidden; ++l) s1[l] = tape.act(z[l], 1);
  if (need_hvp) {
    int hdot = tape.constant(*V);
    for (int l = 0; l < hidden; ++l) {
      zdot[l] = tape.matmul(g.weights[l], hdot);
      hdot = tape.mul(s1[l], zdot[l]);
    }
  }

  // Reverse sweep for d f / dx, and its tangent along V.
  int gh = tape.matmul_tn(g.weights[hidden], tape.constant(Eigen::MatrixXd::Ones(1, B)));
  int ghdot = -1;
  for (int l = hidden - 1; l >= 0; --l) {
    const int delta = tape.mul(gh, s1[l]);
    if (need_hvp) {
      const int curv = tape.mul(gh, tape.mul(tape.act(z[l], 2), zdot[l]));
      const int ddot = ghdot < 0 ? curv : tape.add(tape.mul(ghdot, s1[l]), curv);
      ghdot = tape.matmul_tn(g.weights[l], ddot);
    }
    gh = tape.matmul_tn(g.weights[l], delta);
  }
  g.gx = gh;
  g.hx = ghdot;
  return g;
}

}  // namespace ces::surrogate::detail
