#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace vssf {

/// Dense row-major float32 array of shape [n, steps, width].
struct Array3 {
  std::size_t n = 0;
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Array3() = default;
  Array3(std::size_t n_, std::size_t steps_, std::size_t width_)
      : n(n_), steps(steps_), width(width_), data(n_ * steps_ * width_, 0.0f) {}

  float& at(std::size_t i, std::size_t t, std::size_t k) { return data[(i * steps + t) * width + k]; }
  float at(std::size_t i, std::size_t t, std::size_t k) const { return data[(i * steps + t) * width + k]; }
  /// Trajectory i as a steps x width double matrix.
  Eigen::MatrixXd block(std::size_t i) const;
  void set_block(std::size_t i, const Eigen::MatrixXd& rows);

  bool operator==(const Array3&) const = default;
};

/// n trajectories of per-sensor observations, inputs and ground-truth states.
struct Dataset {
  std::map<std::string, Array3> observations;  // sensor name -> [n, T, p]
  Array3 inputs;                               // [n, T-1, d]
  Array3 states;                               // [n, T, m]
  nlohmann::json environment;
  std::uint64_t seed = 0;

  std::size_t size() const { return states.n; }
  std::size_t horizon() const { return states.steps; }

  bool operator==(const Dataset&) const = default;
};

/// Throws ShapeMismatch unless all arrays agree on n and T.
void validate(const Dataset& d);

}  // namespace vssf
