#pragma once

#include "ces/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace ces {

enum class Source : std::uint8_t { hmc = 0, dagger = 1, rejected_hmc = 2 };

std::string to_string(Source s);

/// One labelled component state: boundary displacement, pore shape and the collapsed
/// energy with its gradient and Hessian with respect to the boundary vector.
struct SampleRecord {
  Eigen::VectorXd u;
  geometry::PoreShape xi;
  double energy = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hessian;
  Source source = Source::hmc;
  std::uint64_t seed = 0;
};

}  // namespace ces
