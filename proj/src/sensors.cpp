#include "vssf/sensors.hpp"

#include "vssf/error.hpp"

namespace vssf {

Eigen::Index SensorModel::observation_dim() const {
  if (is_linear()) return linear().c.rows();
  return nonlinear().encoder.input_width();
}

namespace {

void check_linear(const LinearSensor& s, const VectorXd& x) {
  require(s.sigma_x.rows() == s.c.rows() && s.sigma_x.cols() == s.c.rows(), ErrorKind::kDimensionMismatch,
          "sigma_x must be s x s");
  require(x.size() == s.c.rows(), ErrorKind::kDimensionMismatch, "observation length does not match C");
}

}  // namespace

SensorEvidence linear_evidence(const LinearSensor& s, const VectorXd& x) {
  check_linear(s, x);
  const MatrixXd ct_prec = s.c.transpose() * spd_inverse(s.sigma_x);
  return {ct_prec * x, symmetrize(ct_prec * s.c)};
}

GaussianMoment linear_posterior(const LinearSensor& s, const VectorXd& x, const GaussianMoment& prior) {
  require(prior.dim() == s.c.cols(), ErrorKind::kDimensionMismatch, "prior size does not match C");
  const SensorEvidence e = linear_evidence(s, x);
  return to_moment(product_info(to_info(prior), {e.eta_e, e.lambda_e}));
}

double linear_log_density(const LinearSensor& s, const VectorXd& x, const VectorXd& z) {
  check_linear(s, x);
  require(z.size() == s.c.cols(), ErrorKind::kDimensionMismatch, "state size does not match C");
  return log_density({s.c * z, s.sigma_x}, x);
}

MatrixXd evidence_precision(const NonlinearSensor& s) {
  const Eigen::Index m = s.evidence_factor.cols();
  const MatrixXd inner = s.evidence_factor.transpose() * s.evidence_factor + s.epsilon * MatrixXd::Identity(m, m);
  return spd_inverse(inner);
}

std::vector<SensorEvidence> encode_evidence_batch(const NonlinearSensor& s, const MatrixXd& xs,
                                                  const MatrixXd& sigma_z) {
  require(xs.cols() == s.encoder.input_width(), ErrorKind::kDimensionMismatch, "observation length does not match encoder");
  require(sigma_z.rows() == s.encoder.output_width() && sigma_z.cols() == sigma_z.rows(),
          ErrorKind::kDimensionMismatch, "sigma_z does not match encoder output");
  const MatrixXd lambda_e = evidence_precision(s);
  const MatrixXd scale = lambda_e + spd_inverse(sigma_z);
  const MatrixXd r_h = nn::mlp_forward(s.encoder, xs);
  std::vector<SensorEvidence> out;
  out.reserve(static_cast<std::size_t>(xs.rows()));
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out.push_back({scale * r_h.row(i).transpose(), lambda_e});
  }
  return out;
}

SensorEvidence encode_evidence(const NonlinearSensor& s, const VectorXd& x, const MatrixXd& sigma_z) {
  return encode_evidence_batch(s, x.transpose(), sigma_z).front();
}

double decode_log_density(const NonlinearSensor& s, const VectorXd& x, const VectorXd& z) {
  require(z.size() == s.decoder.input_width(), ErrorKind::kDimensionMismatch, "state size does not match decoder");
  require(x.size() == s.decoder.output_width(), ErrorKind::kDimensionMismatch, "observation length does not match decoder");
  const VectorXd mean = nn::mlp_forward(s.decoder, z.transpose()).row(0).transpose();
  return log_density({mean, s.decoder_sigma_x}, x);
}

NonlinearSensor make_nonlinear_sensor(Eigen::Index observation_dim, Eigen::Index state_dim,
                                      const std::vector<Eigen::Index>& hidden, double noise_var, Rng& rng) {
  std::vector<Eigen::Index> enc{observation_dim};
  enc.insert(enc.end(), hidden.begin(), hidden.end());
  enc.push_back(state_dim);
  std::vector<Eigen::Index> dec{state_dim};
  dec.insert(dec.end(), hidden.begin(), hidden.end());
  dec.push_back(observation_dim);
  NonlinearSensor s;
  s.encoder = nn::make_mlp(enc, rng);
  s.decoder = nn::make_mlp(dec, rng);
  s.evidence_factor = MatrixXd::Identity(state_dim, state_dim);
  s.decoder_sigma_x = noise_var * MatrixXd::Identity(observation_dim, observation_dim);
  return s;
}

}  // namespace vssf
