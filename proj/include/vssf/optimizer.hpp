#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace vssf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates, one pair per parameter array.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Eigen::MatrixXd> first;
  std::vector<Eigen::MatrixXd> second;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const std::vector<Eigen::MatrixXd*>& params);

/// Bias-corrected Adam update applied in place to params[k] where trainable[k].
/// Throws ShapeMismatch / NonFiniteGradient (reported as NonFinite).
void adam_step(const std::vector<Eigen::MatrixXd*>& params, const std::vector<bool>& trainable,
               const std::vector<Eigen::MatrixXd>& grads, AdamState& state, const AdamConfig& config);

/// Rescales grads in place so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_global_norm(std::vector<Eigen::MatrixXd>& grads, double max_norm);

}  // namespace vssf
