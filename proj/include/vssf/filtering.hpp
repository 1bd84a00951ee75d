#pragma once

#include <optional>
#include <vector>

#include "vssf/lgssm.hpp"
#include "vssf/sensors.hpp"

namespace vssf {

/// Filtering prior N(p_{t|t-1}, P_{t|t-1}) and posterior N(p_{t|t}, P_{t|t}) at one step.
struct FilterBelief {
  GaussianMoment predicted;
  GaussianMoment posterior;
};

/// Evidence from the sensors present at one step. Absent sensors are simply omitted.
using EvidenceBundle = std::vector<SensorEvidence>;

/// One propagate-and-fuse step. With no previous posterior the prediction is
/// the stationary prior N(0, sigma_z); otherwise u_prev drives the propagation.
FilterBelief filter_step(const DynamicsParams& psi, const std::optional<GaussianMoment>& prev_posterior,
                         const std::optional<VectorXd>& u_prev, const EvidenceBundle& evidence);

/// u_seq[t] drives z_t -> z_{t+1}, so u_seq has evidence_seq.size() - 1 entries.
std::vector<FilterBelief> filter_forward(const DynamicsParams& psi, const std::vector<EvidenceBundle>& evidence_seq,
                                         const std::vector<VectorXd>& u_seq);

/// Exact log p(X_{1:T} | u) for linear sensors via the prediction-error
/// decomposition; sensors are fused one at a time within each step.
/// x_seq[t][j] is the observation of sensors[j] at step t.
double linear_marginal_log_likelihood(const DynamicsParams& psi, const std::vector<LinearSensor>& sensors,
                                      const std::vector<std::vector<VectorXd>>& x_seq,
                                      const std::vector<VectorXd>& u_seq);

}  // namespace vssf
