#include "vssf/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "vssf/error.hpp"
#include "vssf/json_util.hpp"
#include "vssf/parallel.hpp"

namespace vssf {

const char* to_string(Supervision s) {
  switch (s) {
    case Supervision::kNone: return "none";
    case Supervision::kPartial: return "partial";
    case Supervision::kFull: return "full";
  }
  return "none";
}

Supervision supervision_from_string(const std::string& s) {
  if (s == "none") return Supervision::kNone;
  if (s == "partial") return Supervision::kPartial;
  if (s == "full") return Supervision::kFull;
  throw Error(ErrorKind::kBadFlag, "supervision must be none, partial or full");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"adam_epsilon", adam.epsilon},
          {"batch_size", batch_size},
          {"steps", steps},
          {"sample_count", sample_count},
          {"seed", seed},
          {"supervision", to_string(supervision)},
          {"learn_dynamics", learn_dynamics},
          {"log_interval", log_interval},
          {"clip_norm", clip_norm},
          {"hidden", hidden},
          {"decoder_noise", decoder_noise},
          {"supervision_noise", supervision_noise}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.sample_count = j.value("sample_count", c.sample_count);
    c.seed = j.value("seed", c.seed);
    c.supervision = supervision_from_string(j.value("supervision", std::string("none")));
    c.learn_dynamics = j.value("learn_dynamics", c.learn_dynamics);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.hidden = j.value("hidden", c.hidden);
    c.decoder_noise = j.value("decoder_noise", c.decoder_noise);
    c.supervision_noise = j.value("supervision_noise", c.supervision_noise);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kBadFlag, std::string("config: ") + e.what());
  }
  require(c.adam.learning_rate > 0 && c.batch_size > 0 && c.sample_count > 0 && c.log_interval > 0,
          ErrorKind::kBadFlag, "rates and counts must be positive");
  return c;
}

Model build_model(const Dataset& d, const TrainConfig& config) {
  const DynamicsParams psi = dataset_dynamics(d);
  const Environment env = environment_from_json(d.environment);
  const Eigen::Index m = psi.state_dim();
  Rng rng = make_stream(config.seed, 0x5eed);

  std::vector<SensorModel> sensors;
  const std::string primary = primary_sensor_name(env);
  require(d.observations.count(primary) == 1, ErrorKind::kConfigMismatch, "dataset lacks sensor '" + primary + "'");
  const auto width = static_cast<Eigen::Index>(d.observations.at(primary).width);
  if (const auto* toy = std::get_if<LinearToyEnv>(&env)) {
    LinearSensor lin;
    std::normal_distribution<double> normal(0.0, 0.1);
    lin.c = MatrixXd(width, m);
    for (Eigen::Index k = 0; k < lin.c.size(); ++k) lin.c.data()[k] = normal(rng);
    lin.sigma_x = toy->measurement_noise * MatrixXd::Identity(width, width);
    lin.trainable = true;
    sensors.push_back({primary, lin});
  } else {
    sensors.push_back({primary, make_nonlinear_sensor(width, m, config.hidden, config.decoder_noise, rng)});
  }

  if (config.supervision != Supervision::kNone) {
    LinearSensor sup;
    if (config.supervision == Supervision::kFull) {
      sup.c = MatrixXd::Identity(m, m);
    } else {
      const std::vector<Eigen::Index> comps = position_components(env);
      sup.c = MatrixXd::Zero(static_cast<Eigen::Index>(comps.size()), m);
      for (std::size_t r = 0; r < comps.size(); ++r) sup.c(static_cast<Eigen::Index>(r), comps[r]) = 1.0;
    }
    sup.sigma_x = config.supervision_noise * MatrixXd::Identity(sup.c.rows(), sup.c.rows());
    sup.trainable = false;
    sensors.push_back({kSupervisionSensor, sup});
  }
  return make_model(psi, std::move(sensors), config.learn_dynamics);
}

std::vector<Trajectory> make_trajectories(const Model& model, const Dataset& d, bool with_supervision,
                                          std::size_t max_steps) {
  validate(d);
  const std::size_t steps = max_steps == 0 ? d.horizon() : std::min(max_steps, d.horizon());
  require(steps >= 1, ErrorKind::kConfigMismatch, "dataset has no steps");
  require(d.states.width == static_cast<std::size_t>(model.state_dim()) &&
              d.inputs.width == static_cast<std::size_t>(model.input_dim()),
          ErrorKind::kConfigMismatch, "dataset state/input dimensions do not match the model");
  const auto rows = static_cast<Eigen::Index>(steps);
  std::vector<Trajectory> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    Trajectory& traj = out[i];
    traj.inputs = d.inputs.block(i).topRows(rows - 1);
    for (const SensorModel& s : model.sensors) {
      if (s.name == kSupervisionSensor) {
        if (!with_supervision) {
          traj.observations.emplace_back(0, s.observation_dim());
          continue;
        }
        traj.observations.push_back(d.states.block(i).topRows(rows) * s.linear().c.transpose());
        continue;
      }
      const auto it = d.observations.find(s.name);
      require(it != d.observations.end(), ErrorKind::kConfigMismatch, "dataset lacks sensor '" + s.name + "'");
      require(static_cast<Eigen::Index>(it->second.width) == s.observation_dim(), ErrorKind::kConfigMismatch,
              "sensor '" + s.name + "' width does not match the dataset");
      traj.observations.push_back(it->second.block(i).topRows(rows));
    }
  }
  return out;
}

std::string format_progress(const TraceRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "step=%llu elbo=%.6g kl=%.6g recon=%.6g rho_A=%.6g",
                static_cast<unsigned long long>(row.step), row.elbo, row.kl, row.recon,
                row.diagnostics.spectral_radius_a);
  return buf;
}

namespace {

/// Minibatch for a step: a seed-derived permutation per epoch, sliced in order.
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::uint64_t seed, std::uint64_t step) {
  const std::size_t per_epoch = std::max<std::size_t>(1, n / batch);
  const std::uint64_t epoch = step / per_epoch;
  const std::size_t slot = static_cast<std::size_t>(step % per_epoch);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_stream(seed, 0xba7c4, epoch);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t begin = slot * batch;
  return {perm.begin() + static_cast<std::ptrdiff_t>(begin),
          perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, begin + batch))};
}

}  // namespace

TrainResult train(Checkpoint start, const Dataset& d, const TrainConfig& config, const ProgressFn& progress) {
  TrainResult result;
  Model& model = start.model;
  require(model.learn_dynamics == config.learn_dynamics, ErrorKind::kConfigMismatch,
          "checkpoint and config disagree on learn_dynamics");
  const bool has_sup = std::any_of(model.sensors.begin(), model.sensors.end(),
                                   [](const SensorModel& s) { return s.name == kSupervisionSensor; });
  require(has_sup == (config.supervision != Supervision::kNone), ErrorKind::kConfigMismatch,
          "model sensor suite does not match the supervision setting");
  const std::vector<Trajectory> trajectories = make_trajectories(model, d, true);
  require(!trajectories.empty(), ErrorKind::kConfigMismatch, "cannot train on an empty dataset");

  std::vector<ParamRef> refs = parameters(model);
  std::vector<Eigen::MatrixXd*> params;
  std::vector<bool> trainable;
  for (const ParamRef& r : refs) {
    params.push_back(r.value);
    trainable.push_back(r.trainable);
  }
  AdamState state = start.optimizer ? *start.optimizer : make_adam_state(params);
  require(state.first.size() == params.size(), ErrorKind::kConfigMismatch, "optimizer state does not match the model");

  ElboOptions options;
  options.sample_count = config.sample_count;
  options.threads = config.threads;

  std::uint64_t step = start.step;
  std::vector<Eigen::MatrixXd> grads;
  while (step < config.steps) {
    const std::vector<std::size_t> idx = batch_indices(trajectories.size(), config.batch_size, config.seed, step);
    std::vector<Trajectory> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) batch.push_back(trajectories[i]);
    options.seed = derive_seed(config.seed, 0xe1b0, step);

    ElboBreakdown elbo;
    try {
      elbo = elbo_estimate(model, batch, options, &grads);
      for (Eigen::MatrixXd& g : grads) g = -g;  // ascend the ELBO
      clip_global_norm(grads, config.clip_norm);
      adam_step(params, trainable, grads, state, config.adam);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNonFinite && e.kind() != ErrorKind::kNotPositiveDefinite) throw;
      result.aborted = e.what();
      break;
    }
    ++step;

    if (step % config.log_interval == 0 || step == config.steps) {
      TraceRow row;
      row.step = step;
      row.elbo = elbo.total;
      row.kl = elbo.kl_term;
      row.recon = elbo.recon_term;
      row.diagnostics = {spectral_radius(model.a), elbo.mean_posterior_trace, elbo.evidence_norm};
      if (row.diagnostics.alarm()) {
        result.events.push_back("collapse alarm at step " + std::to_string(step) + ": " + format_progress(row));
      }
      result.trace.push_back(row);
      if (progress) progress(row);
    }
  }
  start.step = step;
  start.optimizer = std::move(state);
  start.config = config.to_json();
  result.checkpoint = std::move(start);
  return result;
}

EvalResult evaluate_filter(const Model& model, const Dataset& eval, std::size_t horizon, std::size_t threads) {
  require(eval.size() > 0, ErrorKind::kMissingGroundTruth, "evaluation dataset is empty");
  require(eval.states.width == static_cast<std::size_t>(model.state_dim()), ErrorKind::kMissingGroundTruth,
          "evaluation dataset has no matching ground-truth states");
  require(eval.horizon() >= horizon && horizon >= 1, ErrorKind::kMissingGroundTruth,
          "evaluation trajectories are shorter than the horizon");
  const Environment env = environment_from_json(eval.environment);
  const std::vector<Trajectory> trajectories = make_trajectories(model, eval, false, horizon);
  const DynamicsParams psi = model.dynamics();
  const Eigen::Index m = model.state_dim();

  std::vector<MatrixXd> sq_errors(trajectories.size());  // horizon x m
  parallel_for(trajectories.size(), threads, [&](std::size_t i) {
    const std::vector<FilterBelief> beliefs =
        filter_forward(psi, model_evidence(model, trajectories[i]), input_sequence(trajectories[i]));
    const MatrixXd truth = eval.states.block(i);
    MatrixXd err(static_cast<Eigen::Index>(horizon), m);
    for (std::size_t t = 0; t < horizon; ++t) {
      err.row(static_cast<Eigen::Index>(t)) =
          (beliefs[t].posterior.mean - truth.row(static_cast<Eigen::Index>(t)).transpose()).array().square().transpose();
    }
    sq_errors[i] = std::move(err);
  });

  EvalResult out;
  out.position_components = position_components(env);
  MatrixXd total = MatrixXd::Zero(static_cast<Eigen::Index>(horizon), m);
  for (const MatrixXd& e : sq_errors) total += e;
  total /= static_cast<double>(trajectories.size());
  for (Eigen::Index k = 0; k < m; ++k) out.component_mse.push_back(total.col(k).mean());
  out.step_error.assign(horizon, 0.0);
  for (Eigen::Index k : out.position_components) {
    out.position_mse += out.component_mse[static_cast<std::size_t>(k)] / static_cast<double>(out.position_components.size());
    for (std::size_t t = 0; t < horizon; ++t) {
      out.step_error[t] += total(static_cast<Eigen::Index>(t), k) / static_cast<double>(out.position_components.size());
    }
  }
  return out;
}

}  // namespace vssf
