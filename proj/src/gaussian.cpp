#include "vssf/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "vssf/error.hpp"

namespace vssf {

namespace {

void require_square(const MatrixXd& m, const char* what) {
  require(m.rows() == m.cols(), ErrorKind::kDimensionMismatch,
          std::string(what) + " must be square");
}

}  // namespace

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

MatrixXd cholesky_lower(const MatrixXd& m) {
  require_square(m, "covariance");
  MatrixXd s = symmetrize(m);
  if (!s.allFinite()) throw Error(ErrorKind::kNotPositiveDefinite, "matrix has non-finite entries");
  Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  const Eigen::Index n = s.rows();
  const double jitter = 1e-9 * std::abs(s.trace()) / static_cast<double>(std::max<Eigen::Index>(n, 1));
  s.diagonal().array() += jitter;
  llt.compute(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kNotPositiveDefinite, "Cholesky failed after jitter");
  }
  return llt.matrixL();
}

MatrixXd spd_inverse(const MatrixXd& m) {
  const MatrixXd l = cholesky_lower(m);
  const MatrixXd l_inv =
      l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(m.rows(), m.cols()));
  return symmetrize(l_inv.transpose() * l_inv);
}

double spd_logdet(const MatrixXd& m) {
  const MatrixXd l = cholesky_lower(m);
  return 2.0 * l.diagonal().array().log().sum();
}

GaussianMoment make_moment(VectorXd mean, MatrixXd cov) {
  require_square(cov, "covariance");
  require(mean.size() == cov.rows(), ErrorKind::kDimensionMismatch, "mean/covariance size");
  cholesky_lower(cov);
  return {std::move(mean), symmetrize(cov)};
}

GaussianInfo to_info(const GaussianMoment& g) {
  require(g.mean.size() == g.cov.rows(), ErrorKind::kDimensionMismatch, "mean/covariance size");
  MatrixXd lambda = spd_inverse(g.cov);
  VectorXd eta = lambda * g.mean;
  return {std::move(eta), std::move(lambda)};
}

GaussianMoment to_moment(const GaussianInfo& g) {
  require(g.eta.size() == g.lambda.rows(), ErrorKind::kDimensionMismatch, "eta/lambda size");
  MatrixXd cov = spd_inverse(g.lambda);
  VectorXd mean = cov * g.eta;
  return {std::move(mean), std::move(cov)};
}

GaussianInfo product_info(const GaussianInfo& a, const GaussianInfo& b) {
  require(a.dim() == b.dim() && a.lambda.rows() == b.lambda.rows(),
          ErrorKind::kDimensionMismatch, "product_info operands differ in dimension");
  return {a.eta + b.eta, symmetrize(a.lambda + b.lambda)};
}

double log_density(const GaussianMoment& g, const VectorXd& x) {
  require(x.size() == g.mean.size(), ErrorKind::kDimensionMismatch, "log_density point size");
  const MatrixXd l = cholesky_lower(g.cov);
  const VectorXd r = l.triangularView<Eigen::Lower>().solve(x - g.mean);
  const double half_logdet = l.diagonal().array().log().sum();
  const double n = static_cast<double>(x.size());
  return -0.5 * r.squaredNorm() - half_logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

VectorXd sample(const GaussianMoment& g, Rng& rng) {
  const MatrixXd l = cholesky_lower(g.cov);
  return g.mean + l * standard_normal(rng, g.dim());
}

}  // namespace vssf
