#pragma once

#include <string>
#include <vector>

#include "vssf/filtering.hpp"
#include "vssf/sensors.hpp"

namespace vssf {

/// All parameters of an L-VSSF model. Process noise is stored through its
/// lower Cholesky factor so it stays PD under gradient updates.
struct Model {
  MatrixXd a;
  MatrixXd b;
  MatrixXd sigma_w_chol;
  MatrixXd sigma_z;
  bool learn_dynamics = false;
  std::vector<SensorModel> sensors;

  Eigen::Index state_dim() const { return a.rows(); }
  Eigen::Index input_dim() const { return b.cols(); }
  DynamicsParams dynamics() const;
  /// Index of the named sensor; throws UnknownSensor.
  std::size_t sensor_index(const std::string& name) const;
};

Model make_model(const DynamicsParams& psi, std::vector<SensorModel> sensors, bool learn_dynamics);

struct ParamRef {
  std::string name;
  MatrixXd* value;
  bool trainable;
};

/// Every parameter array in a fixed order (the checkpoint and optimizer order).
std::vector<ParamRef> parameters(Model& model);

/// One trajectory as seen by a model: observations[j] holds one row per step
/// for model sensor j (zero rows when the sensor is absent), inputs one row
/// per transition.
struct Trajectory {
  std::vector<MatrixXd> observations;
  MatrixXd inputs;

  std::size_t length() const { return static_cast<std::size_t>(inputs.rows()) + 1; }
};

std::vector<VectorXd> input_sequence(const Trajectory& traj);

/// Plain-double evidence for every step from the present sensors.
std::vector<EvidenceBundle> model_evidence(const Model& model, const Trajectory& traj);

}  // namespace vssf
