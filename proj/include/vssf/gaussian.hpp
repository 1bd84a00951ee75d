#pragma once

#include <Eigen/Dense>

#include "vssf/rng.hpp"

namespace vssf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Multivariate normal in moment form N(mean, cov).
struct GaussianMoment {
  VectorXd mean;
  MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

/// Multivariate normal in information form: lambda = cov^-1, eta = lambda * mean.
/// Evidence terms may carry a singular (PSD) lambda.
struct GaussianInfo {
  VectorXd eta;
  MatrixXd lambda;

  Eigen::Index dim() const { return eta.size(); }
};

MatrixXd symmetrize(const MatrixXd& m);

/// Cholesky factor of a symmetric PD matrix. The input is re-symmetrized first;
/// if the factorization fails, jitter 1e-9 * trace/m * I is added once before
/// giving up with NotPositiveDefinite.
MatrixXd cholesky_lower(const MatrixXd& m);

/// Inverse of a symmetric PD matrix through its Cholesky factor; result symmetric.
MatrixXd spd_inverse(const MatrixXd& m);

/// log det of a symmetric PD matrix.
double spd_logdet(const MatrixXd& m);

GaussianMoment make_moment(VectorXd mean, MatrixXd cov);

GaussianInfo to_info(const GaussianMoment& g);
GaussianMoment to_moment(const GaussianInfo& g);

/// Unnormalized density product: information vectors and matrices add.
GaussianInfo product_info(const GaussianInfo& a, const GaussianInfo& b);

double log_density(const GaussianMoment& g, const VectorXd& x);

VectorXd sample(const GaussianMoment& g, Rng& rng);

}  // namespace vssf
