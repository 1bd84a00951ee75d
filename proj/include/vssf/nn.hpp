#pragma once

#include <vector>

#include <Eigen/Dense>

#include "vssf/autodiff.hpp"
#include "vssf/rng.hpp"

namespace vssf::nn {

using Eigen::MatrixXd;

enum class Activation { kGelu, kTanh };

/// Dense MLP. Layer k maps rows of width weights[k].rows() to weights[k].cols();
/// every layer but the last is followed by the activation.
struct MlpParams {
  std::vector<MatrixXd> weights;  // in x out
  std::vector<MatrixXd> biases;   // 1 x out
  Activation activation = Activation::kGelu;

  Eigen::Index input_width() const { return weights.front().rows(); }
  Eigen::Index output_width() const { return weights.back().cols(); }
};

/// widths = {in, hidden..., out}. Weights ~ N(0, 1/fan_in), zero biases.
MlpParams make_mlp(const std::vector<Eigen::Index>& widths, Rng& rng, Activation activation = Activation::kGelu);

/// Throws ShapeMismatch when consecutive layers do not chain.
void validate(const MlpParams& params);

/// Row-batched forward pass in plain doubles.
MatrixXd mlp_forward(const MlpParams& params, const MatrixXd& input);

/// Taped parameters of one MLP.
struct MlpVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  Activation activation = Activation::kGelu;
};

ad::Var mlp_apply(const MlpVars& params, const ad::Var& input);

}  // namespace vssf::nn
