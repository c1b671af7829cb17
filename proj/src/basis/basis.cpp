#include "ces/basis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ces::basis {

using Eigen::Matrix2d;
using Eigen::Vector2d;
using Eigen::VectorXd;

ControlLayout::ControlLayout(int N, double side) : N_(N), side_(side) {
  if (N < 4) throw std::invalid_argument("not-a-knot splines need at least 4 control points per face");
  if (!(side > 0.0)) throw std::invalid_argument("component side must be positive");
  const double h = side / (N - 1), s = 0.5 * side;
  positions_.resize(num_points());
  for (int k = 0; k < N - 1; ++k) {
    positions_[face_point(bottom, k)] = {-s + k * h, -s};
    positions_[face_point(right, k)] = {s, -s + k * h};
    positions_[face_point(top, k)] = {s - k * h, s};
    positions_[face_point(left, k)] = {-s, s - k * h};
  }
}

Eigen::RowVectorXd spline_weights(int N, double length, double t) {
  if (N < 4) throw std::invalid_argument("not-a-knot splines need at least 4 knots");
  const double h = length / (N - 1);
  // Second derivatives m = S y: interior continuity rows plus not-a-knot ends.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N), R = Eigen::MatrixXd::Zero(N, N);
  A(0, 0) = 1.0, A(0, 1) = -2.0, A(0, 2) = 1.0;
  A(N - 1, N - 3) = 1.0, A(N - 1, N - 2) = -2.0, A(N - 1, N - 1) = 1.0;
  for (int i = 1; i < N - 1; ++i) {
    A(i, i - 1) = 1.0, A(i, i) = 4.0, A(i, i + 1) = 1.0;
    const double c = 6.0 / (h * h);
    R(i, i - 1) = c, R(i, i) = -2.0 * c, R(i, i + 1) = c;
  }
  const Eigen::MatrixXd S = A.partialPivLu().solve(R);

  int i = std::clamp(static_cast<int>(std::floor(t / h)), 0, N - 2);
  const double a = (i + 1) * h - t, b = t - i * h;
  Eigen::RowVectorXd w = (a * a * a / (6.0 * h) - a * h / 6.0) * S.row(i) +
                         (b * b * b / (6.0 * h) - b * h / 6.0) * S.row(i + 1);
  w[i] += a / h;
  w[i + 1] += b / h;
  return w;
}

SplineMap build_spline_map(const geometry::Mesh& mesh, int N) {
  if (mesh.pore_cols != mesh.pore_rows) throw std::invalid_argument("spline map needs a square component mesh");
  const ControlLayout layout(N, mesh.width());
  const double s = 0.5 * layout.side();
  const auto outer = geometry::outer_boundary_vertices(mesh);
  SplineMap map;
  map.N = N;
  map.matrix = Eigen::MatrixXd::Zero(2 * static_cast<long>(outer.size()), layout.num_dofs());
  for (std::size_t r = 0; r < outer.size(); ++r) {
    const Vector2d X = mesh.vertices[outer[r]];
    const int m = mesh.markers[outer[r]];
    int face;
    double t;
    if (m & geometry::marker::bottom)
      face = bottom, t = X.x() + s;
    else if (m & geometry::marker::top)
      face = top, t = s - X.x();
    else if (m & geometry::marker::right)
      face = right, t = X.y() + s;
    else
      face = left, t = s - X.y();
    const Eigen::RowVectorXd w = spline_weights(N, layout.side(), t);
    for (int k = 0; k < N; ++k) {
      const int p = layout.face_point(face, k);
      map.matrix(2 * r, 2 * p) += w[k];
      map.matrix(2 * r + 1, 2 * p + 1) += w[k];
    }
  }
  return map;
}

namespace {

Matrix2d rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return Matrix2d{{c, -s}, {s, c}};
}

Matrix2d rotation_derivative(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return Matrix2d{{-s, -c}, {c, -s}};
}

Vector2d point(const VectorXd& u, int j) { return u.segment<2>(2 * j); }

}  // namespace

struct Procrustes::State {
  std::vector<Vector2d> y;   // centred displaced points
  std::vector<Vector2d> dtheta;
  Vector2d centroid;
  double A = 0.0, B = 0.0, D = 0.0, theta = 0.0;
  Matrix2d R, dR;
  bool degenerate = false;
};

Procrustes::Procrustes(const ControlLayout& layout) {
  rest_centroid_.setZero();
  for (const auto& X : layout.positions()) rest_centroid_ += X;
  rest_centroid_ /= static_cast<double>(layout.num_points());
  for (const auto& X : layout.positions()) rest_.push_back(X - rest_centroid_);
}

Procrustes::State Procrustes::state(const VectorXd& u) const {
  const int n = static_cast<int>(rest_.size());
  if (u.size() != 2 * n) throw std::invalid_argument("boundary vector length does not match the layout");
  State st;
  st.centroid = rest_centroid_;
  for (int j = 0; j < n; ++j) st.centroid += point(u, j) / n;
  st.y.resize(n);
  for (int j = 0; j < n; ++j) {
    st.y[j] = rest_[j] + rest_centroid_ + point(u, j) - st.centroid;
    st.A += rest_[j].dot(st.y[j]);
    st.B += rest_[j].y() * st.y[j].x() - rest_[j].x() * st.y[j].y();
  }
  st.D = st.A * st.A + st.B * st.B;
  st.degenerate = !(st.D > 0.0);
  st.theta = st.degenerate ? 0.0 : std::atan2(st.B, st.A);
  st.R = rotation(st.theta);
  st.dR = rotation_derivative(st.theta);
  st.dtheta.assign(n, Vector2d::Zero());
  if (!st.degenerate)
    for (int k = 0; k < n; ++k) {
      const Vector2d dA = rest_[k], dB(rest_[k].y(), -rest_[k].x());
      st.dtheta[k] = (st.A * dB - st.B * dA) / st.D;
    }
  return st;
}

Alignment Procrustes::align(const VectorXd& u) const {
  const State st = state(u);
  Alignment out;
  out.theta = st.theta;
  out.degenerate = st.degenerate;
  out.translation = rest_centroid_ - st.R * st.centroid;
  out.aligned.resize(u.size());
  for (std::size_t j = 0; j < rest_.size(); ++j) out.aligned.segment<2>(2 * j) = st.R * st.y[j] - rest_[j];
  return out;
}

Eigen::MatrixXd Procrustes::jacobian(const VectorXd& u) const {
  const State st = state(u);
  const int n = static_cast<int>(rest_.size());
  Eigen::MatrixXd J(2 * n, 2 * n);
  for (int j = 0; j < n; ++j) {
    const Vector2d ry = st.dR * st.y[j];
    for (int k = 0; k < n; ++k)
      J.block<2, 2>(2 * j, 2 * k) = st.R * ((j == k) - 1.0 / n) + ry * st.dtheta[k].transpose();
  }
  return J;
}

VectorXd Procrustes::vjp(const VectorXd& u, const VectorXd& w) const {
  const State st = state(u);
  const int n = static_cast<int>(rest_.size());
  Vector2d wbar = Vector2d::Zero();
  double s1 = 0.0;
  for (int j = 0; j < n; ++j) {
    wbar += point(w, j) / n;
    s1 += (st.dR * st.y[j]).dot(point(w, j));
  }
  VectorXd out(2 * n);
  for (int k = 0; k < n; ++k) out.segment<2>(2 * k) = st.R.transpose() * (point(w, k) - wbar) + s1 * st.dtheta[k];
  return out;
}

VectorXd Procrustes::jdot_vjp(const VectorXd& u, const VectorXd& v, const VectorXd& w) const {
  const State st = state(u);
  const int n = static_cast<int>(rest_.size());
  VectorXd out = VectorXd::Zero(2 * n);
  if (st.degenerate) return out;

  Vector2d wbar = Vector2d::Zero(), vbar = Vector2d::Zero();
  double theta_dot = 0.0, A_dot = 0.0, B_dot = 0.0;
  for (int k = 0; k < n; ++k) {
    wbar += point(w, k) / n;
    vbar += point(v, k) / n;
    theta_dot += st.dtheta[k].dot(point(v, k));
    A_dot += rest_[k].dot(point(v, k));
    B_dot += rest_[k].y() * v[2 * k] - rest_[k].x() * v[2 * k + 1];
  }
  const double D_dot = 2.0 * (st.A * A_dot + st.B * B_dot);
  double s_rot = 0.0, s_dot = 0.0, s1 = 0.0;
  for (int j = 0; j < n; ++j) {
    s_rot += (st.R * st.y[j]).dot(point(w, j));
    s_dot += (st.dR * (point(v, j) - vbar)).dot(point(w, j));
    s1 += (st.dR * st.y[j]).dot(point(w, j));
  }
  for (int k = 0; k < n; ++k) {
    const Vector2d dA = rest_[k], dB(rest_[k].y(), -rest_[k].x());
    const Vector2d dtheta_dot = (A_dot * dB - B_dot * dA) / st.D - (st.A * dB - st.B * dA) * D_dot / (st.D * st.D);
    out.segment<2>(2 * k) = theta_dot * st.dR.transpose() * (point(w, k) - wbar) -
                            theta_dot * s_rot * st.dtheta[k] + s_dot * st.dtheta[k] + s1 * dtheta_dot;
  }
  return out;
}

Eigen::Matrix<double, 4, Eigen::Dynamic> macro_strain_operator(const ControlLayout& layout) {
  const int N = layout.points_per_face();
  Eigen::Matrix<double, 4, Eigen::Dynamic> G = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, layout.num_dofs());
  const double c = 1.0 / (N * layout.side());
  for (int k = 0; k < N; ++k) {
    const int r = layout.face_point(right, k), l = layout.face_point(left, k);
    const int t = layout.face_point(top, k), b = layout.face_point(bottom, k);
    for (int comp = 0; comp < 2; ++comp) {
      G(comp, 2 * r + comp) += c;
      G(comp, 2 * l + comp) -= c;
      G(2 + comp, 2 * t + comp) += c;
      G(2 + comp, 2 * b + comp) -= c;
    }
  }
  return G;
}

Matrix2d macro_strain(const VectorXd& u, const ControlLayout& layout) {
  if (u.size() != layout.num_dofs()) throw std::invalid_argument("boundary vector length does not match the layout");
  const Eigen::Vector4d e = macro_strain_operator(layout) * u;
  return Matrix2d{{e[0], e[1]}, {e[2], e[3]}};
}

std::vector<int> flip_permutation(Axis axis, const ControlLayout& layout) {
  const auto& P = layout.positions();
  const double tol = 1e-9 * layout.side();
  std::vector<int> perm(P.size(), -1);
  for (std::size_t k = 0; k < P.size(); ++k) {
    const Vector2d m = axis == Axis::horizontal ? Vector2d(-P[k].x(), P[k].y()) : Vector2d(P[k].x(), -P[k].y());
    for (std::size_t j = 0; j < P.size(); ++j)
      if ((P[j] - m).norm() < tol) perm[k] = static_cast<int>(j);
  }
  return perm;
}

VectorXd flip(const VectorXd& u, Axis axis, const ControlLayout& layout) {
  if (u.size() != layout.num_dofs()) throw std::invalid_argument("boundary vector length does not match the layout");
  const auto perm = flip_permutation(axis, layout);
  const int normal = axis == Axis::horizontal ? 0 : 1;
  VectorXd out(u.size());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    out[2 * perm[k]] = u[2 * k];
    out[2 * perm[k] + 1] = u[2 * k + 1];
    out[2 * perm[k] + normal] = -u[2 * k + normal];
  }
  return out;
}

void write_boundary_vector(std::ostream& os, const VectorXd& u) {
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (long i = 0; i < u.size(); ++i) os << (i ? " " : "") << u[i];
  os << '\n';
}

VectorXd read_boundary_vector(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("boundary vector: missing line");
  std::istringstream ls(line);
  std::vector<double> vals{std::istream_iterator<double>(ls), std::istream_iterator<double>()};
  if (!ls.eof()) throw std::runtime_error("boundary vector: bad number");
  return Eigen::Map<VectorXd>(vals.data(), static_cast<long>(vals.size()));
}

}  // namespace ces::basis
