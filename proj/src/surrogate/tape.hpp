#pragma once

#include <Eigen/Dense>

#include <vector>

namespace ces::surrogate::detail {

// Swish x sigmoid(x) and its derivatives up to the third.
inline double swish(double z, int order) {
  const double p = 1.0 / (1.0 + std::exp(-z));
  const double dp = p * (1.0 - p);
  switch (order) {
    case 0: return z * p;
    case 1: return p + z * dp;
    case 2: return dp * (2.0 + z * (1.0 - 2.0 * p));
    default: return dp * ((1.0 - 2.0 * p) * (3.0 + z * (1.0 - 2.0 * p)) - 2.0 * z * dp);
  }
}

/// Reverse-mode tape over dense matrices. Columns are batch entries.
class Tape {
 public:
  using Mat = Eigen::MatrixXd;

  int constant(Mat value) { return push({std::move(value), {}, Op::leaf, -1, -1, 0, false}); }
  int variable(Mat value) { return push({std::move(value), {}, Op::leaf, -1, -1, 0, true}); }

  int matmul(int a, int b) { return push({val(a) * val(b), {}, Op::matmul, a, b, 0, needs(a) || needs(b)}); }
  int matmul_tn(int a, int b) {
    return push({val(a).transpose() * val(b), {}, Op::matmul_tn, a, b, 0, needs(a) || needs(b)});
  }
  // z + bias broadcast over columns.
  int add_bias(int z, int bias) {
    return push({val(z).colwise() + val(bias).col(0), {}, Op::add_bias, z, bias, 0, needs(z) || needs(bias)});
  }
  int add(int a, int b) { return push({val(a) + val(b), {}, Op::add, a, b, 0, needs(a) || needs(b)}); }
  int mul(int a, int b) {
    return push({val(a).cwiseProduct(val(b)), {}, Op::mul, a, b, 0, needs(a) || needs(b)});
  }
  int act(int z, int order) {
    return push({val(z).unaryExpr([order](double x) { return swish(x, order); }), {}, Op::act, z, -1, order,
                 needs(z)});
  }

  const Mat& val(int i) const { return nodes_[i].value; }
  const Mat& grad(int i) const { return nodes_[i].grad; }
  void seed(int i, const Mat& adjoint) { accumulate(i, adjoint); }

  void backward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs || n.grad.size() == 0 || n.op == Op::leaf) continue;
      const Mat& g = n.grad;
      switch (n.op) {
        case Op::matmul:
          if (needs(n.a)) accumulate(n.a, g * val(n.b).transpose());
          if (needs(n.b)) accumulate(n.b, val(n.a).transpose() * g);
          break;
        case Op::matmul_tn:
          if (needs(n.a)) accumulate(n.a, val(n.b) * g.transpose());
          if (needs(n.b)) accumulate(n.b, val(n.a) * g);
          break;
        case Op::add_bias:
          if (needs(n.a)) accumulate(n.a, g);
          if (needs(n.b)) accumulate(n.b, g.rowwise().sum());
          break;
        case Op::add:
          if (needs(n.a)) accumulate(n.a, g);
          if (needs(n.b)) accumulate(n.b, g);
          break;
        case Op::mul:
          if (needs(n.a)) accumulate(n.a, g.cwiseProduct(val(n.b)));
          if (needs(n.b)) accumulate(n.b, g.cwiseProduct(val(n.a)));
          break;
        case Op::act: {
          const int k = n.order + 1;
          accumulate(n.a, g.cwiseProduct(val(n.a).unaryExpr([k](double x) { return swish(x, k); })));
          break;
        }
        case Op::leaf: break;
      }
    }
  }

 private:
  enum class Op { leaf, matmul, matmul_tn, add_bias, add, mul, act };
  struct Node {
    Mat value;
    Mat grad;
    Op op;
    int a, b;
    int order;
    bool needs;
  };

  bool needs(int i) const { return nodes_[i].needs; }
  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  void accumulate(int i, const Mat& g) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  std::vector<Node> nodes_;
};

}  // namespace ces::surrogate::detail
