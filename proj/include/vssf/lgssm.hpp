#pragma once

#include <vector>

#include "vssf/gaussian.hpp"

namespace vssf {

/// Linear latent dynamics z_{t+1} = A z_t + B u_t + w_t, w_t ~ N(0, sigma_w),
/// with time-invariant prior z_t ~ N(0, sigma_z).
struct DynamicsParams {
  MatrixXd a;
  MatrixXd b;
  MatrixXd sigma_w;
  MatrixXd sigma_z;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
};

/// Validates shapes and positive definiteness. When `stationary_consistent`
/// is set, also checks sigma_z against A sigma_z A^T + sigma_w (relative
/// Frobenius tolerance 1e-6).
void validate(const DynamicsParams& psi, bool stationary_consistent = false);

GaussianMoment predict(const DynamicsParams& psi, const GaussianMoment& belief, const VectorXd& u);

double transition_log_density(const DynamicsParams& psi, const VectorXd& z_t, const VectorXd& u_t,
                              const VectorXd& z_next);

GaussianMoment prior_belief(const DynamicsParams& psi);

/// u_seq[t] drives z_t -> z_{t+1}; the returned trajectory has u_seq.size() + 1 states
/// (or `length` states when u_seq is empty and length is given).
std::vector<VectorXd> sample_trajectory(const DynamicsParams& psi, const std::vector<VectorXd>& u_seq,
                                        Rng& rng);

/// Solves sigma = A sigma A^T + sigma_w by doubling fixed-point iteration.
MatrixXd stationary_covariance(const MatrixXd& a, const MatrixXd& sigma_w);

double spectral_radius(const MatrixXd& a);

}  // namespace vssf
