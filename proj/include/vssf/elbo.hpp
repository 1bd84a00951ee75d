#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vssf/model.hpp"

namespace vssf {

struct ElboBreakdown {
  double total = 0.0;
  /// Monte-Carlo E_q[log q - log p_prior].
  double kl_term = 0.0;
  /// Monte-Carlo E_q[log p(X | z)].
  double recon_term = 0.0;
  std::vector<double> per_sensor_recon;
  std::size_t sample_count = 0;
  /// Standard error of `total` from the spread of per-sample values.
  double standard_error = 0.0;
  /// Mean trace of the filtering posterior covariances (collapse diagnostic).
  double mean_posterior_trace = 0.0;
  /// Mean Frobenius norm of the per-step summed evidence precision.
  double evidence_norm = 0.0;
};

/// log p(z_1) + sum_t log p(z_{t+1} | z_t, u_t).
double prior_log_density(const DynamicsParams& psi, const std::vector<VectorXd>& trajectory,
                         const std::vector<VectorXd>& u_seq);

struct ReconstructionTerms {
  double total = 0.0;
  std::vector<double> per_sensor;
};

/// sum_t sum_j log p(x_t^(j) | z_t) over the sensors present in `traj`.
ReconstructionTerms reconstruction_log_density(const Model& model, const Trajectory& traj,
                                               const std::vector<VectorXd>& trajectory);

struct ElboOptions {
  std::size_t sample_count = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Monte-Carlo ELBO averaged over samples and trajectories. Trajectory i
/// draws its noise from a stream derived from (seed, i), so the estimate is
/// a deterministic function of the parameters for a fixed seed. When
/// `gradients` is given it receives d total / d param for every entry of
/// parameters(model) (zeros for frozen entries).
ElboBreakdown elbo_estimate(const Model& model, std::span<const Trajectory> batch, const ElboOptions& options,
                            std::vector<MatrixXd>* gradients = nullptr);

}  // namespace vssf
