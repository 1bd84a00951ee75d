#include "vssf/smoothing.hpp"

#include <cmath>
#include <numbers>

#include "vssf/error.hpp"

namespace vssf {

namespace {

void check_lengths(const std::vector<FilterBelief>& beliefs, const std::vector<VectorXd>& u_seq) {
  require(!beliefs.empty() && u_seq.size() + 1 == beliefs.size(), ErrorKind::kDimensionMismatch,
          "expected one input fewer than filter beliefs");
}

/// Backward conditional mean is gain * z_next + offset with covariance cov.
struct BackwardKernel {
  MatrixXd gain;
  VectorXd offset;
  MatrixXd cov;
};

BackwardKernel backward_kernel(const DynamicsParams& psi, const GaussianMoment& posterior_t, const VectorXd& u_t) {
  require(posterior_t.dim() == psi.a.rows(), ErrorKind::kDimensionMismatch, "posterior size does not match A");
  require(u_t.size() == psi.b.cols(), ErrorKind::kDimensionMismatch, "input size does not match B");
  const MatrixXd post_prec = spd_inverse(posterior_t.cov);
  const MatrixXd at_sw_inv = psi.a.transpose() * spd_inverse(psi.sigma_w);
  const MatrixXd cov = spd_inverse(post_prec + at_sw_inv * psi.a);
  const MatrixXd gain = cov * at_sw_inv;
  const VectorXd offset = cov * (post_prec * posterior_t.mean) - gain * (psi.b * u_t);
  return {gain, offset, cov};
}

}  // namespace

GaussianMoment backward_conditional(const DynamicsParams& psi, const GaussianMoment& posterior_t,
                                    const VectorXd& u_t, const VectorXd& z_next) {
  require(z_next.size() == psi.a.rows(), ErrorKind::kDimensionMismatch, "next state size does not match A");
  const BackwardKernel k = backward_kernel(psi, posterior_t, u_t);
  return {k.gain * z_next + k.offset, k.cov};
}

std::vector<SmoothingSample> sample_smoothing(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                              const std::vector<VectorXd>& u_seq, Rng& rng, std::size_t count) {
  check_lengths(beliefs, u_seq);
  const std::size_t horizon = beliefs.size();
  // Kernels depend only on the filter output, so build them once for all samples.
  std::vector<BackwardKernel> kernels;
  std::vector<MatrixXd> chols;
  kernels.reserve(horizon - 1);
  for (std::size_t t = 0; t + 1 < horizon; ++t) {
    kernels.push_back(backward_kernel(psi, beliefs[t].posterior, u_seq[t]));
    chols.push_back(cholesky_lower(kernels.back().cov));
  }
  const GaussianMoment& last = beliefs.back().posterior;
  const MatrixXd last_chol = cholesky_lower(last.cov);
  const Eigen::Index m = last.dim();
  const double log_norm = -0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);

  std::vector<SmoothingSample> out(count);
  for (SmoothingSample& s : out) {
    s.trajectory.resize(horizon);
    VectorXd eps = standard_normal(rng, m);
    s.trajectory[horizon - 1] = last.mean + last_chol * eps;
    s.log_q = log_norm - 0.5 * eps.squaredNorm() - last_chol.diagonal().array().log().sum();
    for (std::size_t t = horizon - 1; t-- > 0;) {
      const BackwardKernel& k = kernels[t];
      eps = standard_normal(rng, m);
      s.trajectory[t] = k.gain * s.trajectory[t + 1] + k.offset + chols[t] * eps;
      s.log_q += log_norm - 0.5 * eps.squaredNorm() - chols[t].diagonal().array().log().sum();
    }
  }
  return out;
}

double smoothing_log_density(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                             const std::vector<VectorXd>& u_seq, const std::vector<VectorXd>& trajectory) {
  check_lengths(beliefs, u_seq);
  require(trajectory.size() == beliefs.size(), ErrorKind::kDimensionMismatch, "trajectory length mismatch");
  double total = log_density(beliefs.back().posterior, trajectory.back());
  for (std::size_t t = 0; t + 1 < beliefs.size(); ++t) {
    total += log_density(backward_conditional(psi, beliefs[t].posterior, u_seq[t], trajectory[t + 1]), trajectory[t]);
  }
  return total;
}

std::vector<GaussianMoment> smoothing_marginals(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                                const std::vector<VectorXd>& u_seq) {
  check_lengths(beliefs, u_seq);
  std::vector<GaussianMoment> out(beliefs.size());
  out.back() = beliefs.back().posterior;
  for (std::size_t t = beliefs.size() - 1; t-- > 0;) {
    const BackwardKernel k = backward_kernel(psi, beliefs[t].posterior, u_seq[t]);
    out[t].mean = k.gain * out[t + 1].mean + k.offset;
    out[t].cov = symmetrize(k.cov + k.gain * out[t + 1].cov * k.gain.transpose());
  }
  return out;
}

std::vector<GaussianMoment> rts_smooth(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                       const std::vector<VectorXd>& u_seq) {
  check_lengths(beliefs, u_seq);
  std::vector<GaussianMoment> out(beliefs.size());
  out.back() = beliefs.back().posterior;
  for (std::size_t t = beliefs.size() - 1; t-- > 0;) {
    const GaussianMoment& filt = beliefs[t].posterior;
    const GaussianMoment& pred = beliefs[t + 1].predicted;
    const MatrixXd smoother_gain = filt.cov * psi.a.transpose() * spd_inverse(pred.cov);
    out[t].mean = filt.mean + smoother_gain * (out[t + 1].mean - pred.mean);
    out[t].cov = symmetrize(filt.cov + smoother_gain * (out[t + 1].cov - pred.cov) * smoother_gain.transpose());
  }
  return out;
}

}  // namespace vssf
