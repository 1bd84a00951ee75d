#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vssf/autodiff.hpp"
#include "vssf/elbo.hpp"
#include "vssf/filtering.hpp"
#include "vssf/lgssm.hpp"
#include "vssf/model.hpp"
#include "vssf/rng.hpp"
#include "vssf/sensors.hpp"

namespace vssf::testing {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0);
MatrixXd random_spd(Eigen::Index m, Rng& rng, double floor = 0.1);
/// Random matrix rescaled to the given spectral radius.
MatrixXd random_stable(Eigen::Index m, Rng& rng, double radius = 0.9);

/// Stable system with Sigma_z at the stationary covariance.
DynamicsParams random_system(Eigen::Index m, Eigen::Index d, Rng& rng);
std::vector<LinearSensor> random_linear_sensors(Eigen::Index m, std::size_t count, Rng& rng);

struct LinearProblem {
  DynamicsParams psi;
  std::vector<LinearSensor> sensors;
  std::vector<VectorXd> states;
  std::vector<VectorXd> inputs;
  std::vector<std::vector<VectorXd>> observations;  // [t][j]
};

LinearProblem random_problem(Eigen::Index m, Eigen::Index d, std::size_t sensor_count, std::size_t horizon, Rng& rng);
std::vector<EvidenceBundle> linear_evidence_seq(const LinearProblem& p);
/// The problem as a model with fixed dynamics and sensors named s0, s1, ...
Model linear_model(const LinearProblem& p);
Trajectory linear_trajectory(const LinearProblem& p);

/// Textbook covariance-form Kalman filter; all sensors of a step are
/// stacked into one measurement update.
std::vector<FilterBelief> kalman_oracle(const LinearProblem& p);
/// Rauch-Tung-Striebel recursion written against the oracle's output.
std::vector<GaussianMoment> rts_oracle(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                       const std::vector<VectorXd>& inputs);
/// Log-likelihood from the stacked innovations of the oracle filter.
double kalman_log_likelihood(const LinearProblem& p);

/// Discretized Bayes filter/smoother for a scalar state on a uniform grid.
struct GridResult {
  VectorXd grid;
  std::vector<VectorXd> filtered;  // densities, integrate to 1
  std::vector<VectorXd> smoothed;
};
GridResult grid_oracle(double a, double b, double sigma_w, double sigma_z, double c, double sigma_x,
                       const std::vector<double>& inputs, const std::vector<double>& observations, double half_width,
                       std::size_t points);
/// Total-variation distance between a grid density and N(mean, var).
double tv_distance(const VectorXd& grid, const VectorXd& density, double mean, double var);

/// Worst relative error between elbo_estimate gradients and central
/// differences of its total, over every trainable parameter entry.
double elbo_gradient_check(Model& model, const std::vector<Trajectory>& batch, const ElboOptions& options,
                           double h = 1e-5, double floor = 1e-3);
/// Small model with one trainable linear sensor and one MLP image sensor,
/// with random trajectories of the given length (the linear sensor is absent
/// from the second trajectory).
struct MixedProblem {
  Model model;
  std::vector<Trajectory> batch;
};
MixedProblem mixed_problem(Eigen::Index m, std::size_t horizon, bool learn_dynamics, Rng& rng);

/// Fresh path under a per-process scratch directory.
std::filesystem::path scratch_path(const std::string& name);
std::string file_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::string& bytes);

double relative_error(double a, double b, double floor = 1e-6);
double max_abs_diff(const MatrixXd& a, const MatrixXd& b);

}  // namespace vssf::testing

namespace vssf::testing {

/// Builds a scalar graph from leaves holding the given values.
using GraphFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Largest relative error between reverse-mode gradients and central
/// differences over every entry of every input. The denominator is floored
/// so that entries with near-zero gradient are compared absolutely.
double gradient_check(const GraphFn& f, const std::vector<MatrixXd>& inputs, double h = 1e-5, double floor = 1e-3);

/// Contracts a matrix node with fixed random weights so every output entry
/// contributes a distinct amount to the scalar root.
ad::Var contract(ad::Tape& t, const ad::Var& v, std::uint64_t seed);
/// X X^T / m + I, so graphs can take unconstrained leaves into SPD-only ops.
ad::Var spd_from(ad::Tape& t, const ad::Var& x);
/// Well-conditioned lower-triangular matrix from an unconstrained leaf.
ad::Var lower_from(ad::Tape& t, const ad::Var& x);

/// One scalar graph per tape op, with the leaf shapes it expects.
struct OpCase {
  const char* name;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  GraphFn graph;
};
std::vector<OpCase> op_cases();

}  // namespace vssf::testing
