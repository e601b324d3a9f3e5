#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace trajid {

// Lagged network inputs paired with their targets. Column k of `inputs` is the
// regressor u(k) and column k of `targets` is the measured y(k).
struct RegressorTable {
  Eigen::MatrixXd inputs;   // n x rows
  Eigen::MatrixXd targets;  // t x rows
  std::size_t first_index = 0;

  std::size_t rows() const { return static_cast<std::size_t>(inputs.cols()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(targets.rows()); }
};

}  // namespace trajid
