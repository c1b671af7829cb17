#pragma once

#include "ces/geometry.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

namespace ces::basis {

/// Control points of one square component: N per face, corners shared, n = 4 (N - 1).
/// Canonical order runs counter-clockwise from the bottom-left corner (bottom, right, top,
/// left faces). A BoundaryVector interleaves (u1, u2) per control point.
class ControlLayout {
 public:
  ControlLayout(int N, double side);

  int points_per_face() const { return N_; }
  int num_points() const { return 4 * (N_ - 1); }
  int num_dofs() const { return 2 * num_points(); }
  double side() const { return side_; }

  /// Rest positions, component centred at the origin.
  const std::vector<Eigen::Vector2d>& positions() const { return positions_; }
  /// Index of the k-th point (k = 0 .. N-1) along face f, walking counter-clockwise.
  int face_point(int face, int k) const { return (face * (N_ - 1) + k) % num_points(); }

 private:
  int N_;
  double side_;
  std::vector<Eigen::Vector2d> positions_;
};

enum Face { bottom = 0, right = 1, top = 2, left = 3 };

/// Weights w with s(t) = sum_k w_k y_k for the not-a-knot cubic spline through
/// N evenly spaced knots on [0, length].
Eigen::RowVectorXd spline_weights(int N, double length, double t);

/// Linear map from a BoundaryVector to displacements of a mesh's outer-square vertices,
/// rows ordered as fem::outer_boundary_dofs (vertex order, then u1, u2).
struct SplineMap {
  int N = 0;
  Eigen::MatrixXd matrix;
};

SplineMap build_spline_map(const geometry::Mesh& mesh, int N);

struct Alignment {
  Eigen::VectorXd aligned;
  double theta = 0.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
  bool degenerate = false;
};

/// Optimal rigid motion of the displaced control points onto their rest positions.
class Procrustes {
 public:
  explicit Procrustes(const ControlLayout& layout);

  Alignment align(const Eigen::VectorXd& u) const;
  /// d aligned / d u, dense (2n x 2n).
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& u) const;
  /// J(u)^T w without forming J.
  Eigen::VectorXd vjp(const Eigen::VectorXd& u, const Eigen::VectorXd& w) const;
  /// (d/de J(u + e v))^T w at e = 0.
  Eigen::VectorXd jdot_vjp(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Eigen::VectorXd& w) const;

 private:
  struct State;
  State state(const Eigen::VectorXd& u) const;

  std::vector<Eigen::Vector2d> rest_;  // centred rest positions
  Eigen::Vector2d rest_centroid_;
};

/// (1/N) [[sum_rhs u1 - sum_lhs u1, sum_rhs u2 - sum_lhs u2],
///        [sum_top u1 - sum_bot u1, sum_top u2 - sum_bot u2]] / side.
Eigen::Matrix2d macro_strain(const Eigen::VectorXd& u, const ControlLayout& layout);
/// d macro_strain(u)_{ij} / du, row-major over (i, j).
Eigen::Matrix<double, 4, Eigen::Dynamic> macro_strain_operator(const ControlLayout& layout);

enum class Axis { horizontal, vertical };

/// Mirror across the vertical line (horizontal flip, x -> -x) or the horizontal line
/// (vertical flip, y -> -y); the normal displacement component changes sign.
Eigen::VectorXd flip(const Eigen::VectorXd& u, Axis axis, const ControlLayout& layout);
/// Control-point permutation of a flip: point k maps to flip_permutation[k].
std::vector<int> flip_permutation(Axis axis, const ControlLayout& layout);

void write_boundary_vector(std::ostream& os, const Eigen::VectorXd& u);
Eigen::VectorXd read_boundary_vector(std::istream& is);

}  // namespace ces::basis
