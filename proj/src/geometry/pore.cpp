#include "ces/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ces::geometry {

double PoreShape::r0() const {
  return cell_side / std::sqrt(std::numbers::pi * (2.0 + alpha * alpha + beta * beta));
}

double pore_radius(const PoreShape& shape, double theta) {
  return shape.r0() * (1.0 + shape.alpha * std::cos(4.0 * theta) + shape.beta * std::cos(8.0 * theta));
}

PoreExtent pore_extent(const PoreShape& shape, int theta_samples) {
  PoreExtent e{std::numeric_limits<double>::infinity(), 0.0};
  for (int i = 0; i < theta_samples; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / theta_samples;
    const double r = pore_radius(shape, theta);
    e.min_radius = std::min(e.min_radius, r);
    e.max_half_extent =
        std::max({e.max_half_extent, std::abs(r * std::cos(theta)), std::abs(r * std::sin(theta))});
  }
  return e;
}

double ligament_width(const PoreShape& shape, int theta_samples) {
  return shape.cell_side - 2.0 * pore_extent(shape, theta_samples).max_half_extent;
}

bool is_valid_pore(const PoreShape& shape, const ValidityConfig& config) {
  if (!std::isfinite(shape.alpha) || !std::isfinite(shape.beta) || shape.cell_side <= 0.0) return false;
  const PoreExtent e = pore_extent(shape, config.theta_samples);
  const double floor = config.thickness_floor * shape.cell_side;
  return e.min_radius > floor && shape.cell_side - 2.0 * e.max_half_extent > floor;
}

PoreShape sample_valid_pore(std::mt19937_64& rng, const ValidityConfig& config, double cell_side) {
  std::uniform_real_distribution<double> box(config.box_lo, config.box_hi);
  for (int attempt = 0; attempt < config.max_rejections; ++attempt) {
    PoreShape s;
    s.alpha = box(rng);
    s.beta = box(rng);
    s.cell_side = cell_side;
    if (is_valid_pore(s, config)) return s;
  }
  throw SamplingError("no valid pore shape after " + std::to_string(config.max_rejections) +
                      " draws; check the validity box and thickness floor");
}

std::vector<Eigen::Vector2d> pore_polygon(const PoreShape& shape, int resolution,
                                          const Eigen::Vector2d& center) {
  std::vector<Eigen::Vector2d> loop;
  loop.reserve(resolution);
  for (int k = 0; k < resolution; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / resolution;
    const double r = pore_radius(shape, theta);
    loop.emplace_back(center + r * Eigen::Vector2d(std::cos(theta), std::sin(theta)));
  }
  return loop;
}

double polygon_area(const std::vector<Eigen::Vector2d>& loop) {
  double a = 0.0;
  const std::size_t n = loop.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = loop[i];
    const auto& q = loop[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

}  // namespace ces::geometry
