#include "vssf/model.hpp"

#include "vssf/error.hpp"

namespace vssf {

DynamicsParams Model::dynamics() const {
  const MatrixXd l = sigma_w_chol.triangularView<Eigen::Lower>();
  return {a, b, l * l.transpose(), sigma_z};
}

std::size_t Model::sensor_index(const std::string& name) const {
  for (std::size_t j = 0; j < sensors.size(); ++j) {
    if (sensors[j].name == name) return j;
  }
  throw Error(ErrorKind::kUnknownSensor, "no sensor named '" + name + "'");
}

Model make_model(const DynamicsParams& psi, std::vector<SensorModel> sensors, bool learn_dynamics) {
  validate(psi);
  Model model;
  model.a = psi.a;
  model.b = psi.b;
  model.sigma_w_chol = cholesky_lower(psi.sigma_w);
  model.sigma_z = psi.sigma_z;
  model.learn_dynamics = learn_dynamics;
  model.sensors = std::move(sensors);
  for (const SensorModel& s : model.sensors) {
    if (s.is_linear()) {
      require(s.linear().c.cols() == psi.a.rows(), ErrorKind::kDimensionMismatch, "sensor C does not match state");
    } else {
      nn::validate(s.nonlinear().encoder);
      nn::validate(s.nonlinear().decoder);
      require(s.nonlinear().encoder.output_width() == psi.a.rows() &&
                  s.nonlinear().decoder.input_width() == psi.a.rows(),
              ErrorKind::kDimensionMismatch, "sensor networks do not match the state");
    }
  }
  return model;
}

namespace {

void add_mlp(std::vector<ParamRef>& out, const std::string& prefix, nn::MlpParams& mlp) {
  for (std::size_t k = 0; k < mlp.weights.size(); ++k) {
    out.push_back({prefix + "/w" + std::to_string(k), &mlp.weights[k], true});
    out.push_back({prefix + "/b" + std::to_string(k), &mlp.biases[k], true});
  }
}

}  // namespace

std::vector<ParamRef> parameters(Model& model) {
  std::vector<ParamRef> out;
  out.push_back({"dynamics/a", &model.a, model.learn_dynamics});
  out.push_back({"dynamics/b", &model.b, model.learn_dynamics});
  out.push_back({"dynamics/sigma_w_chol", &model.sigma_w_chol, model.learn_dynamics});
  out.push_back({"dynamics/sigma_z", &model.sigma_z, false});
  for (SensorModel& s : model.sensors) {
    const std::string prefix = "sensor/" + s.name;
    if (auto* lin = std::get_if<LinearSensor>(&s.model)) {
      out.push_back({prefix + "/c", &lin->c, lin->trainable});
      out.push_back({prefix + "/sigma_x", &lin->sigma_x, false});
    } else {
      auto& nl = std::get<NonlinearSensor>(s.model);
      add_mlp(out, prefix + "/encoder", nl.encoder);
      out.push_back({prefix + "/evidence_factor", &nl.evidence_factor, true});
      add_mlp(out, prefix + "/decoder", nl.decoder);
      out.push_back({prefix + "/decoder_sigma_x", &nl.decoder_sigma_x, false});
    }
  }
  return out;
}

std::vector<VectorXd> input_sequence(const Trajectory& traj) {
  std::vector<VectorXd> u;
  u.reserve(static_cast<std::size_t>(traj.inputs.rows()));
  for (Eigen::Index t = 0; t < traj.inputs.rows(); ++t) u.push_back(traj.inputs.row(t).transpose());
  return u;
}

std::vector<EvidenceBundle> model_evidence(const Model& model, const Trajectory& traj) {
  require(traj.observations.size() == model.sensors.size(), ErrorKind::kUnknownSensor,
          "trajectory must carry one observation block per model sensor");
  const std::size_t horizon = traj.length();
  std::vector<EvidenceBundle> evidence(horizon);
  for (std::size_t j = 0; j < model.sensors.size(); ++j) {
    const MatrixXd& obs = traj.observations[j];
    if (obs.rows() == 0) continue;
    require(static_cast<std::size_t>(obs.rows()) == horizon, ErrorKind::kDimensionMismatch,
            "observation rows must equal trajectory length");
    const SensorModel& s = model.sensors[j];
    if (s.is_linear()) {
      for (std::size_t t = 0; t < horizon; ++t) {
        evidence[t].push_back(linear_evidence(s.linear(), obs.row(static_cast<Eigen::Index>(t)).transpose()));
      }
    } else {
      std::vector<SensorEvidence> batch = encode_evidence_batch(s.nonlinear(), obs, model.sigma_z);
      for (std::size_t t = 0; t < horizon; ++t) evidence[t].push_back(std::move(batch[t]));
    }
  }
  return evidence;
}

}  // namespace vssf
