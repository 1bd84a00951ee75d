#include "vssf/lgssm.hpp"

#include <cmath>

#include "vssf/error.hpp"

namespace vssf {

namespace {

void check_input(const DynamicsParams& psi, const VectorXd& u) {
  require(u.size() == psi.b.cols(), ErrorKind::kDimensionMismatch, "input size does not match B");
}

}  // namespace

void validate(const DynamicsParams& psi, bool stationary_consistent) {
  const Eigen::Index m = psi.a.rows();
  require(psi.a.cols() == m, ErrorKind::kDimensionMismatch, "A must be square");
  require(psi.b.rows() == m, ErrorKind::kDimensionMismatch, "B rows must equal state dimension");
  require(psi.sigma_w.rows() == m && psi.sigma_w.cols() == m, ErrorKind::kDimensionMismatch,
          "sigma_w shape");
  require(psi.sigma_z.rows() == m && psi.sigma_z.cols() == m, ErrorKind::kDimensionMismatch,
          "sigma_z shape");
  cholesky_lower(psi.sigma_w);
  cholesky_lower(psi.sigma_z);
  if (stationary_consistent) {
    const MatrixXd residual =
        psi.sigma_z - (psi.a * psi.sigma_z * psi.a.transpose() + psi.sigma_w);
    require(residual.norm() / psi.sigma_z.norm() < 1e-6, ErrorKind::kConfigMismatch,
            "sigma_z is not the stationary covariance of (A, sigma_w)");
  }
}

GaussianMoment predict(const DynamicsParams& psi, const GaussianMoment& belief, const VectorXd& u) {
  require(belief.dim() == psi.a.cols(), ErrorKind::kDimensionMismatch, "belief size does not match A");
  check_input(psi, u);
  return {psi.a * belief.mean + psi.b * u,
          symmetrize(psi.a * belief.cov * psi.a.transpose() + psi.sigma_w)};
}

double transition_log_density(const DynamicsParams& psi, const VectorXd& z_t, const VectorXd& u_t,
                              const VectorXd& z_next) {
  require(z_t.size() == psi.a.cols() && z_next.size() == psi.a.rows(),
          ErrorKind::kDimensionMismatch, "state size does not match A");
  check_input(psi, u_t);
  return log_density({psi.a * z_t + psi.b * u_t, psi.sigma_w}, z_next);
}

GaussianMoment prior_belief(const DynamicsParams& psi) {
  return {VectorXd::Zero(psi.sigma_z.rows()), psi.sigma_z};
}

std::vector<VectorXd> sample_trajectory(const DynamicsParams& psi, const std::vector<VectorXd>& u_seq,
                                        Rng& rng) {
  std::vector<VectorXd> z;
  z.reserve(u_seq.size() + 1);
  z.push_back(sample(prior_belief(psi), rng));
  const MatrixXd lw = cholesky_lower(psi.sigma_w);
  for (const VectorXd& u : u_seq) {
    check_input(psi, u);
    z.push_back(psi.a * z.back() + psi.b * u + lw * standard_normal(rng, psi.a.rows()));
  }
  return z;
}

double spectral_radius(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::EigenSolver<MatrixXd>(a, false).eigenvalues().cwiseAbs().maxCoeff();
}

MatrixXd stationary_covariance(const MatrixXd& a, const MatrixXd& sigma_w) {
  require(a.rows() == a.cols() && sigma_w.rows() == a.rows() && sigma_w.cols() == a.cols(),
          ErrorKind::kDimensionMismatch, "stationary_covariance shapes");
  require(spectral_radius(a) < 1.0 - 1e-9, ErrorKind::kNotStable,
          "spectral radius of A must be below 1");
  // Doubling: after k rounds sigma holds sum_{i < 2^k} A^i Q A^iT.
  MatrixXd sigma = symmetrize(sigma_w);
  MatrixXd power = a;
  for (int iter = 0; iter < 200; ++iter) {
    const MatrixXd next = symmetrize(sigma + power * sigma * power.transpose());
    const double change = (next - sigma).norm();
    sigma = next;
    power = power * power;
    if (change <= 1e-10 * std::max(1.0, sigma.norm()) && power.norm() < 1e-12) break;
  }
  // Polish with plain fixed-point sweeps so the residual meets the tolerance.
  for (int iter = 0; iter < 100; ++iter) {
    const MatrixXd next = symmetrize(a * sigma * a.transpose() + sigma_w);
    const double change = (next - sigma).norm();
    sigma = next;
    if (change < 1e-12 * std::max(1.0, sigma.norm())) break;
  }
  return sigma;
}

}  // namespace vssf
