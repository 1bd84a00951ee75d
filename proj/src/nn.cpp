#include "vssf/nn.hpp"

#include <cmath>
#include <numbers>

#include "vssf/error.hpp"

namespace vssf::nn {

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

MatrixXd activate(const MatrixXd& x, Activation activation) {
  if (activation == Activation::kTanh) return x.array().tanh();
  return x.unaryExpr(&gelu);
}

ad::Var activate(const ad::Var& x, Activation activation) {
  return activation == Activation::kTanh ? ad::tanh(x) : ad::gelu(x);
}

}  // namespace

MlpParams make_mlp(const std::vector<Eigen::Index>& widths, Rng& rng, Activation activation) {
  require(widths.size() >= 2, ErrorKind::kShapeMismatch, "an MLP needs at least input and output widths");
  MlpParams p;
  p.activation = activation;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(widths[k]));
    MatrixXd w(widths[k], widths[k + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = stddev * normal(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(MatrixXd::Zero(1, widths[k + 1]));
  }
  return p;
}

void validate(const MlpParams& params) {
  require(!params.weights.empty() && params.weights.size() == params.biases.size(), ErrorKind::kShapeMismatch,
          "MLP layer lists are empty or unequal");
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    require(params.biases[k].rows() == 1 && params.biases[k].cols() == params.weights[k].cols(),
            ErrorKind::kShapeMismatch, "MLP bias shape");
    if (k > 0) {
      require(params.weights[k].rows() == params.weights[k - 1].cols(), ErrorKind::kShapeMismatch,
              "MLP layers do not chain");
    }
  }
}

MatrixXd mlp_forward(const MlpParams& params, const MatrixXd& input) {
  require(input.cols() == params.input_width(), ErrorKind::kShapeMismatch, "MLP input width");
  MatrixXd h = input;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    MatrixXd z = h * params.weights[k];
    z.rowwise() += params.biases[k].row(0);
    h = (k + 1 < params.weights.size()) ? activate(z, params.activation) : std::move(z);
  }
  return h;
}

ad::Var mlp_apply(const MlpVars& params, const ad::Var& input) {
  require(!params.weights.empty(), ErrorKind::kShapeMismatch, "empty MLP");
  require(input.cols() == params.weights.front().rows(), ErrorKind::kShapeMismatch, "MLP input width");
  ad::Var h = input;
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    ad::Var z = ad::add_row_broadcast(h * params.weights[k], params.biases[k]);
    h = (k + 1 < params.weights.size()) ? activate(z, params.activation) : z;
  }
  return h;
}

}  // namespace vssf::nn
