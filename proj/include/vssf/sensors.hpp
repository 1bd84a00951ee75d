#pragma once

#include <string>
#include <variant>
#include <vector>

#include "vssf/gaussian.hpp"
#include "vssf/nn.hpp"

namespace vssf {

/// x = C z + w_x, w_x ~ N(0, sigma_x). When `trainable`, C is learned.
struct LinearSensor {
  MatrixXd c;
  MatrixXd sigma_x;
  bool trainable = false;
};

/// Image-style sensor: an MLP encoder produces the evidence mean r_h(x), the
/// evidence precision is the constant (L^T L + eps I)^-1, and an MLP decoder
/// gives the generative mean of p(x | z) with fixed covariance.
struct NonlinearSensor {
  nn::MlpParams encoder;
  MatrixXd evidence_factor;
  double epsilon = 1e-4;
  nn::MlpParams decoder;
  MatrixXd decoder_sigma_x;
};

struct SensorModel {
  std::string name;
  std::variant<LinearSensor, NonlinearSensor> model;

  bool is_linear() const { return std::holds_alternative<LinearSensor>(model); }
  const LinearSensor& linear() const { return std::get<LinearSensor>(model); }
  const NonlinearSensor& nonlinear() const { return std::get<NonlinearSensor>(model); }
  /// Length of one observation vector.
  Eigen::Index observation_dim() const;
};

/// Information-form summary (lambda_e, eta_e) of one observation's evidence ratio.
struct SensorEvidence {
  VectorXd eta_e;
  MatrixXd lambda_e;
};

SensorEvidence linear_evidence(const LinearSensor& s, const VectorXd& x);
GaussianMoment linear_posterior(const LinearSensor& s, const VectorXd& x, const GaussianMoment& prior);
double linear_log_density(const LinearSensor& s, const VectorXd& x, const VectorXd& z);

/// (L^T L + eps I)^-1; PD for every L.
MatrixXd evidence_precision(const NonlinearSensor& s);
/// Evidence whose fusion with N(0, sigma_z) has mean exactly r_h(x).
SensorEvidence encode_evidence(const NonlinearSensor& s, const VectorXd& x, const MatrixXd& sigma_z);
/// Row-batched encoder: one evidence per row of `xs`.
std::vector<SensorEvidence> encode_evidence_batch(const NonlinearSensor& s, const MatrixXd& xs,
                                                  const MatrixXd& sigma_z);
double decode_log_density(const NonlinearSensor& s, const VectorXd& x, const VectorXd& z);

/// Builds an image sensor with MLP encoder/decoder of the given hidden widths,
/// L = I and decoder covariance noise_var * I.
NonlinearSensor make_nonlinear_sensor(Eigen::Index observation_dim, Eigen::Index state_dim,
                                      const std::vector<Eigen::Index>& hidden, double noise_var, Rng& rng);

}  // namespace vssf
