#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ces::geometry {

/// Polar pore profile r(theta) = r0 * (1 + alpha cos 4theta + beta cos 8theta),
/// with r0 chosen so the pore covers half of a square cell of side L0.
struct PoreShape {
  double alpha = 0.0;
  double beta = 0.0;
  double cell_side = 1.0;

  double r0() const;
};

double pore_radius(const PoreShape& shape, double theta);

struct ValidityConfig {
  double thickness_floor = 0.05;
  // Bounding box for rejection sampling of (alpha, beta).
  double box_lo = -0.3;
  double box_hi = 0.3;
  int max_rejections = 100000;
  // Angular samples used for min/max searches over theta.
  int theta_samples = 10000;
};

/// Smallest radius and largest axis-aligned half extent over a theta grid.
struct PoreExtent {
  double min_radius;
  double max_half_extent;
};

PoreExtent pore_extent(const PoreShape& shape, int theta_samples = 10000);

/// Ligament between neighbouring pores along the axes: L0 - 2 * half extent.
double ligament_width(const PoreShape& shape, int theta_samples = 10000);

bool is_valid_pore(const PoreShape& shape, const ValidityConfig& config = {});
inline bool is_valid_pore(const PoreShape& shape, double thickness_floor) {
  ValidityConfig c;
  c.thickness_floor = thickness_floor;
  return is_valid_pore(shape, c);
}

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform over the valid set by rejection from the configured box.
PoreShape sample_valid_pore(std::mt19937_64& rng, const ValidityConfig& config = {},
                            double cell_side = 1.0);

/// Counter-clockwise polygon with `resolution` vertices on r(theta), centred at `center`.
std::vector<Eigen::Vector2d> pore_polygon(const PoreShape& shape, int resolution,
                                          const Eigen::Vector2d& center = Eigen::Vector2d::Zero());

/// Shoelace area (positive for counter-clockwise loops).
double polygon_area(const std::vector<Eigen::Vector2d>& loop);

// ---------------------------------------------------------------------------
// Meshes

/// Vertex tags. Outer-square faces are bit flags so corners carry two faces.
namespace marker {
inline constexpr int interior = 0;
inline constexpr int bottom = 1;
inline constexpr int right = 2;
inline constexpr int top = 4;
inline constexpr int left = 8;
inline constexpr int pore = 16;
inline constexpr int outer = bottom | right | top | left;
}  // namespace marker

struct Mesh {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> markers;
  // Pores along x and y. Square components have cols == rows.
  int pore_cols = 1;
  int pore_rows = 1;
  double cell_side = 1.0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int pore_count() const { return pore_cols * pore_rows; }

  double width() const { return pore_cols * cell_side; }
  double height() const { return pore_rows * cell_side; }

  double signed_area(int t) const;
  double total_area() const;
  /// Longest edge over all triangles.
  double max_edge_length() const;
  bool on_outer_boundary(int v) const { return (markers[v] & marker::outer) != 0; }
};

/// Outer-square vertices in increasing index order.
std::vector<int> outer_boundary_vertices(const Mesh& mesh);

struct MeshParams {
  int pore_resolution = 32;
  int min_mesh_resolution = 4;
};

class MeshingError : public std::runtime_error {
 public:
  MeshingError(const std::string& what, int pore_index)
      : std::runtime_error(what), pore_index_(pore_index) {}
  int pore_index() const { return pore_index_; }

 private:
  int pore_index_;
};

/// Row-major grid of pore shapes, row 0 at the bottom.
struct PoreGrid {
  int cols = 1;
  int rows = 1;
  std::vector<PoreShape> shapes;

  static PoreGrid uniform(int cols, int rows, const PoreShape& shape);
  const PoreShape& at(int col, int row) const { return shapes[row * cols + col]; }
};

/// Triangulates the rectangle of pore cells minus the pore polygons. The domain
/// is centred at the origin; every cell boundary is a chain of mesh edges.
Mesh build_mesh(const PoreGrid& grid, const MeshParams& params);

/// Square component with pores_per_side x pores_per_side pores.
Mesh build_component_mesh(const std::vector<PoreShape>& shapes, int pores_per_side,
                          int pore_resolution, int min_mesh_resolution);

/// Characteristic element size bound enforced by build_mesh: L0 / min_mesh_resolution.
double target_element_size(double cell_side, int min_mesh_resolution);

void write_mesh(std::ostream& os, const Mesh& mesh);
Mesh read_mesh(std::istream& is);

}  // namespace ces::geometry
