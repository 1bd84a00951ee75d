#include "vssf/filtering.hpp"

#include "vssf/error.hpp"

namespace vssf {

FilterBelief filter_step(const DynamicsParams& psi, const std::optional<GaussianMoment>& prev_posterior,
                         const std::optional<VectorXd>& u_prev, const EvidenceBundle& evidence) {
  GaussianMoment predicted;
  if (prev_posterior) {
    require(u_prev.has_value(), ErrorKind::kDimensionMismatch, "a propagation step needs an input");
    predicted = predict(psi, *prev_posterior, *u_prev);
  } else {
    predicted = prior_belief(psi);
  }
  if (evidence.empty()) return {predicted, predicted};

  GaussianInfo info = to_info(predicted);
  for (const SensorEvidence& e : evidence) {
    require(e.eta_e.size() == info.dim() && e.lambda_e.rows() == info.dim() && e.lambda_e.cols() == info.dim(),
            ErrorKind::kDimensionMismatch, "evidence dimension does not match the state");
    info.eta += e.eta_e;
    info.lambda += e.lambda_e;
  }
  info.lambda = symmetrize(info.lambda);
  return {std::move(predicted), to_moment(info)};
}

std::vector<FilterBelief> filter_forward(const DynamicsParams& psi, const std::vector<EvidenceBundle>& evidence_seq,
                                         const std::vector<VectorXd>& u_seq) {
  require(!evidence_seq.empty(), ErrorKind::kDimensionMismatch, "filter_forward needs at least one step");
  require(u_seq.size() + 1 == evidence_seq.size(), ErrorKind::kDimensionMismatch,
          "expected one input fewer than evidence steps");
  std::vector<FilterBelief> beliefs;
  beliefs.reserve(evidence_seq.size());
  beliefs.push_back(filter_step(psi, std::nullopt, std::nullopt, evidence_seq[0]));
  for (std::size_t t = 1; t < evidence_seq.size(); ++t) {
    beliefs.push_back(filter_step(psi, beliefs.back().posterior, u_seq[t - 1], evidence_seq[t]));
  }
  return beliefs;
}

double linear_marginal_log_likelihood(const DynamicsParams& psi, const std::vector<LinearSensor>& sensors,
                                      const std::vector<std::vector<VectorXd>>& x_seq,
                                      const std::vector<VectorXd>& u_seq) {
  require(!x_seq.empty() && u_seq.size() + 1 == x_seq.size(), ErrorKind::kDimensionMismatch,
          "expected one input fewer than observation steps");
  GaussianMoment belief = prior_belief(psi);
  double total = 0.0;
  for (std::size_t t = 0; t < x_seq.size(); ++t) {
    if (t > 0) belief = predict(psi, belief, u_seq[t - 1]);
    require(x_seq[t].size() == sensors.size(), ErrorKind::kDimensionMismatch, "one observation per sensor required");
    for (std::size_t j = 0; j < sensors.size(); ++j) {
      const LinearSensor& s = sensors[j];
      const VectorXd& x = x_seq[t][j];
      require(x.size() == s.c.rows() && s.c.cols() == belief.dim(), ErrorKind::kDimensionMismatch,
              "linear sensor shapes");
      const MatrixXd innovation_cov = symmetrize(s.c * belief.cov * s.c.transpose() + s.sigma_x);
      const VectorXd predicted_x = s.c * belief.mean;
      total += log_density({predicted_x, innovation_cov}, x);
      const MatrixXd gain = belief.cov * s.c.transpose() * spd_inverse(innovation_cov);
      belief.mean += gain * (x - predicted_x);
      const MatrixXd i_kc = MatrixXd::Identity(belief.dim(), belief.dim()) - gain * s.c;
      // Joseph form keeps the covariance PD.
      belief.cov = symmetrize(i_kc * belief.cov * i_kc.transpose() + gain * s.sigma_x * gain.transpose());
    }
  }
  return total;
}

}  // namespace vssf
