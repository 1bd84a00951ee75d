#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vssf/datastore.hpp"
#include "vssf/elbo.hpp"
#include "vssf/environments.hpp"
#include "vssf/optimizer.hpp"

namespace vssf {

enum class Supervision { kNone, kPartial, kFull };

const char* to_string(Supervision s);
Supervision supervision_from_string(const std::string& s);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t steps = 2000;
  std::size_t sample_count = 1;
  std::uint64_t seed = 0;
  Supervision supervision = Supervision::kNone;
  bool learn_dynamics = false;
  std::size_t threads = 1;
  std::size_t log_interval = 50;
  double clip_norm = 10.0;
  std::vector<Eigen::Index> hidden = {64, 64};
  double decoder_noise = 0.1;
  double supervision_noise = 0.05;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Name of the training-time linear sensor that observes ground-truth states.
inline constexpr const char* kSupervisionSensor = "supervision";

/// Model for a dataset: the dataset's dynamics (psi), its primary sensor, and
/// a supervision sensor (C selecting the position components for partial, the
/// identity for full; noise supervision_noise * I) when requested.
Model build_model(const Dataset& d, const TrainConfig& config);

/// Per-trajectory views of a dataset for a model. The supervision sensor is
/// fed from the ground-truth states only when `with_supervision` is set.
std::vector<Trajectory> make_trajectories(const Model& model, const Dataset& d, bool with_supervision,
                                          std::size_t max_steps = 0);

struct CollapseDiagnostics {
  double spectral_radius_a = 0.0;
  double mean_posterior_trace = 0.0;
  double evidence_norm = 0.0;

  /// Degenerate dynamics or vanishing posterior variance.
  bool alarm() const { return spectral_radius_a < 0.01 || mean_posterior_trace < 1e-6; }
};

struct TraceRow {
  std::uint64_t step = 0;
  double elbo = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  CollapseDiagnostics diagnostics;
};

std::string format_progress(const TraceRow& row);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
  std::vector<std::string> events;
  /// Set when training stopped on a non-finite value; checkpoint holds the last good state.
  std::optional<std::string> aborted;
};

using ProgressFn = std::function<void(const TraceRow&)>;

/// Maximizes the mean ELBO by minibatch Adam ascent from `start` (its step and
/// optimizer state, if any) up to config.steps. Deterministic for a fixed seed.
TrainResult train(Checkpoint start, const Dataset& d, const TrainConfig& config, const ProgressFn& progress = {});

struct EvalResult {
  std::vector<double> component_mse;      // per latent component
  double position_mse = 0.0;              // mean over the position components
  std::vector<double> step_error;         // per step, mean squared position error
  std::vector<Eigen::Index> position_components;
};

/// Image-only filtering (supervision sensors are dropped) over the first
/// `horizon` steps; errors of the posterior mean against ground truth.
EvalResult evaluate_filter(const Model& model, const Dataset& eval, std::size_t horizon, std::size_t threads = 1);

}  // namespace vssf
