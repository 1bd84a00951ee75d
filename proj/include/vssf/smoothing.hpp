#pragma once

#include <vector>

#include "vssf/filtering.hpp"

namespace vssf {

struct SmoothingSample {
  std::vector<VectorXd> trajectory;
  /// log q(z_{1:T}) under the backward factorization.
  double log_q = 0.0;
};

/// q(z_t | z_{t+1}) = N(l, L) with
///   L^-1   = P_{t|t}^-1 + A^T Sw^-1 A
///   L^-1 l = A^T Sw^-1 (z_{t+1} - B u_t) + P_{t|t}^-1 p_{t|t}.
GaussianMoment backward_conditional(const DynamicsParams& psi, const GaussianMoment& posterior_t,
                                    const VectorXd& u_t, const VectorXd& z_next);

/// Draws `count` trajectories: z_T from the last filtering posterior, then
/// z_t from the backward conditional for t = T-1 .. 1.
std::vector<SmoothingSample> sample_smoothing(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                              const std::vector<VectorXd>& u_seq, Rng& rng, std::size_t count);

double smoothing_log_density(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                             const std::vector<VectorXd>& u_seq, const std::vector<VectorXd>& trajectory);

/// Closed-form marginals of the backward factorization.
std::vector<GaussianMoment> smoothing_marginals(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                                const std::vector<VectorXd>& u_seq);

/// Rauch-Tung-Striebel smoother on covariance-form filter output.
std::vector<GaussianMoment> rts_smooth(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                       const std::vector<VectorXd>& u_seq);

}  // namespace vssf
