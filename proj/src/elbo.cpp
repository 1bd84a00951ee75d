#include "vssf/elbo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "vssf/autodiff.hpp"
#include "vssf/error.hpp"
#include "vssf/parallel.hpp"

namespace vssf {

double prior_log_density(const DynamicsParams& psi, const std::vector<VectorXd>& trajectory,
                         const std::vector<VectorXd>& u_seq) {
  require(!trajectory.empty() && u_seq.size() + 1 == trajectory.size(), ErrorKind::kDimensionMismatch,
          "expected one input fewer than trajectory states");
  double total = log_density(prior_belief(psi), trajectory.front());
  for (std::size_t t = 0; t + 1 < trajectory.size(); ++t) {
    total += transition_log_density(psi, trajectory[t], u_seq[t], trajectory[t + 1]);
  }
  return total;
}

ReconstructionTerms reconstruction_log_density(const Model& model, const Trajectory& traj,
                                               const std::vector<VectorXd>& trajectory) {
  require(traj.observations.size() == model.sensors.size(), ErrorKind::kUnknownSensor,
          "trajectory must carry one observation block per model sensor");
  ReconstructionTerms out;
  out.per_sensor.assign(model.sensors.size(), 0.0);
  for (std::size_t j = 0; j < model.sensors.size(); ++j) {
    const MatrixXd& obs = traj.observations[j];
    if (obs.rows() == 0) continue;
    require(static_cast<std::size_t>(obs.rows()) == trajectory.size(), ErrorKind::kDimensionMismatch,
            "observation rows must equal trajectory length");
    const SensorModel& s = model.sensors[j];
    for (std::size_t t = 0; t < trajectory.size(); ++t) {
      const VectorXd x = obs.row(static_cast<Eigen::Index>(t)).transpose();
      out.per_sensor[j] += s.is_linear() ? linear_log_density(s.linear(), x, trajectory[t])
                                         : decode_log_density(s.nonlinear(), x, trajectory[t]);
    }
    out.total += out.per_sensor[j];
  }
  return out;
}

namespace {

using ad::Var;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct ConstParam {
  const MatrixXd* value;
  bool trainable;
};

std::vector<ConstParam> const_parameters(const Model& model) {
  // parameters() only hands out pointers; nothing is written through them here.
  auto refs = parameters(const_cast<Model&>(model));
  std::vector<ConstParam> out;
  out.reserve(refs.size());
  for (const ParamRef& r : refs) out.push_back({r.value, r.trainable});
  return out;
}

/// Positions of each sensor's arrays in the parameters() order.
struct SensorLayout {
  std::size_t c = 0;
  std::size_t sigma_x = 0;
  std::vector<std::size_t> encoder;  // w0, b0, w1, b1, ...
  std::size_t factor = 0;
  std::vector<std::size_t> decoder;
};

std::vector<SensorLayout> sensor_layout(const Model& model, std::size_t param_count) {
  std::vector<SensorLayout> out(model.sensors.size());
  std::size_t idx = 4;  // a, b, sigma_w_chol, sigma_z
  for (std::size_t j = 0; j < model.sensors.size(); ++j) {
    const SensorModel& s = model.sensors[j];
    if (s.is_linear()) {
      out[j].c = idx++;
      out[j].sigma_x = idx++;
      continue;
    }
    for (std::size_t k = 0; k < 2 * s.nonlinear().encoder.weights.size(); ++k) out[j].encoder.push_back(idx++);
    out[j].factor = idx++;
    for (std::size_t k = 0; k < 2 * s.nonlinear().decoder.weights.size(); ++k) out[j].decoder.push_back(idx++);
    out[j].sigma_x = idx++;
  }
  require(idx == param_count, ErrorKind::kConfigMismatch, "parameter layout out of sync");
  return out;
}

Var leaf(ad::Tape& tape, const ConstParam& p, bool want_grad) {
  return want_grad && p.trainable ? tape.variable(*p.value) : tape.constant(*p.value);
}

nn::MlpVars mlp_leaves(ad::Tape& tape, const std::vector<ConstParam>& params, const std::vector<std::size_t>& idx,
                       nn::Activation activation, bool want_grad, std::vector<std::pair<std::size_t, Var>>& leaves) {
  nn::MlpVars v;
  v.activation = activation;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Var x = leaf(tape, params[idx[k]], want_grad);
    leaves.emplace_back(idx[k], x);
    (k % 2 == 0 ? v.weights : v.biases).push_back(x);
  }
  return v;
}

bool any_trainable(const std::vector<ConstParam>& params, const std::vector<std::size_t>& idx) {
  return std::any_of(idx.begin(), idx.end(), [&](std::size_t k) { return params[k].trainable; });
}

bool is_diagonal(const MatrixXd& m) {
  return (m - MatrixXd(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
}

struct GaussianTerm {
  MatrixXd precision;
  bool diagonal = false;
  double log_norm = 0.0;  // per-row normalizing constant
};

GaussianTerm gaussian_term(const MatrixXd& sigma_x) {
  GaussianTerm g;
  g.precision = spd_inverse(sigma_x);
  g.diagonal = is_diagonal(g.precision);
  g.log_norm = -0.5 * spd_logdet(sigma_x) - 0.5 * static_cast<double>(sigma_x.rows()) * kLog2Pi;
  return g;
}

/// Per-row Mahalanobis distances of observed - mean, as a rows x 1 node.
Var row_quadratic(ad::Tape& tape, const MatrixXd& observed, const Var& mean, const GaussianTerm& g) {
  const Var residual = tape.constant(observed) - mean;
  if (g.diagonal) return ad::hadamard(residual, residual) * tape.constant(MatrixXd(g.precision.diagonal()));
  const Var weighted = residual * tape.constant(g.precision);
  return ad::hadamard(weighted, residual) * tape.constant(MatrixXd::Ones(observed.cols(), 1));
}

MatrixXd tile_rows(const MatrixXd& block, std::size_t copies) {
  MatrixXd out(block.rows() * static_cast<Eigen::Index>(copies), block.cols());
  for (std::size_t s = 0; s < copies; ++s) out.middleRows(static_cast<Eigen::Index>(s) * block.rows(), block.rows()) = block;
  return out;
}

/// Filtering, backward sampling, prior and linear-sensor terms of one
/// trajectory. Nonlinear encoders and decoders run batched outside; their
/// outputs enter as leaves (`encoded`) and their gradients flow back through
/// a surrogate root.
struct TrajectoryGraph {
  std::unique_ptr<ad::Tape> tape = std::make_unique<ad::Tape>();
  std::vector<std::pair<std::size_t, Var>> leaves;  // parameter index -> leaf
  std::vector<Var> encoded;                         // per sensor, T x m (nonlinear, present)
  Var states;                                       // (S*T) x m, rows ordered (sample, step)
  Var objective;                                    // without nonlinear reconstruction
  std::size_t horizon = 0;
  double recon = 0.0;
  std::vector<double> per_sensor;
  std::vector<double> sample_values;
  double posterior_trace = 0.0;
  double evidence_norm = 0.0;
  std::vector<MatrixXd> grads;
};

void build_trajectory(TrajectoryGraph& g, const Model& model, const std::vector<ConstParam>& params,
                      const std::vector<SensorLayout>& layout, const std::vector<MatrixXd>& encoded_values,
                      const Trajectory& traj, std::size_t sample_count, Rng rng, bool want_grad) {
  const std::size_t horizon = traj.length();
  const Eigen::Index m = model.state_dim();
  const Eigen::Index steps = static_cast<Eigen::Index>(horizon);
  ad::Tape& tape = *g.tape;
  g.horizon = horizon;

  const Var a = leaf(tape, params[0], want_grad);
  const Var b = leaf(tape, params[1], want_grad);
  const Var sw_factor = leaf(tape, params[2], want_grad);
  g.leaves = {{0, a}, {1, b}, {2, sw_factor}};

  const MatrixXd& sigma_z = model.sigma_z;
  const MatrixXd sigma_z_inv = spd_inverse(sigma_z);
  const Var sigma_w_factor = ad::tril(sw_factor);
  const Var sigma_w = sigma_w_factor * ad::transpose(sigma_w_factor);
  const Var sigma_w_chol = ad::cholesky(sigma_w);

  std::vector<Var> inputs;
  for (Eigen::Index t = 0; t < traj.inputs.rows(); ++t) {
    inputs.push_back(b * tape.constant(MatrixXd(traj.inputs.row(t).transpose())));
  }

  // Evidence: lambda (m x m) and rows of eta (T x m) per present sensor.
  const std::size_t n_sensors = model.sensors.size();
  std::vector<Var> lambdas(n_sensors), eta_rows(n_sensors), linear_c(n_sensors);
  g.encoded.assign(n_sensors, Var());
  std::vector<bool> present(n_sensors, false);
  for (std::size_t j = 0; j < n_sensors; ++j) {
    const SensorModel& s = model.sensors[j];
    const MatrixXd& obs = traj.observations[j];
    present[j] = obs.rows() > 0;
    if (!present[j]) continue;
    if (s.is_linear()) {
      const Var c = leaf(tape, params[layout[j].c], want_grad);
      g.leaves.emplace_back(layout[j].c, c);
      linear_c[j] = c;
      const Var ct_prec = ad::transpose(c) * tape.constant(spd_inverse(s.linear().sigma_x));
      lambdas[j] = ad::symmetrize(ct_prec * c);
      eta_rows[j] = tape.constant(obs) * ad::transpose(ct_prec);
    } else {
      const NonlinearSensor& nl = s.nonlinear();
      const Var factor = leaf(tape, params[layout[j].factor], want_grad);
      g.leaves.emplace_back(layout[j].factor, factor);
      const bool encoder_grad = want_grad && any_trainable(params, layout[j].encoder);
      const Var r_h = encoder_grad ? tape.variable(encoded_values[j]) : tape.constant(encoded_values[j]);
      g.encoded[j] = r_h;
      const Var inner = ad::symmetrize(ad::transpose(factor) * factor) +
                        tape.constant(MatrixXd(nl.epsilon * MatrixXd::Identity(m, m)));
      lambdas[j] = ad::spd_inverse(inner);
      eta_rows[j] = r_h * (lambdas[j] + tape.constant(sigma_z_inv));
    }
  }

  // Forward filter in information form.
  std::vector<Var> post_mean(horizon), post_cov(horizon), post_prec(horizon), post_eta(horizon);
  for (std::size_t t = 0; t < horizon; ++t) {
    Var pred_mean, pred_cov;
    if (t == 0) {
      pred_mean = tape.constant(MatrixXd::Zero(m, 1));
      pred_cov = tape.constant(sigma_z);
    } else {
      pred_mean = a * post_mean[t - 1] + inputs[t - 1];
      pred_cov = ad::symmetrize(a * post_cov[t - 1] * ad::transpose(a) + sigma_w);
    }
    Var prec = t == 0 ? tape.constant(sigma_z_inv) : ad::spd_inverse(pred_cov);
    Var eta = prec * pred_mean;
    MatrixXd evidence_total = MatrixXd::Zero(m, m);
    bool any = false;
    for (std::size_t j = 0; j < n_sensors; ++j) {
      if (!present[j]) continue;
      prec = prec + lambdas[j];
      eta = eta + ad::row(eta_rows[j], static_cast<Eigen::Index>(t));
      evidence_total += lambdas[j].value();
      any = true;
    }
    if (any) {
      post_cov[t] = ad::spd_inverse(prec);
      post_mean[t] = post_cov[t] * eta;
    } else {
      post_cov[t] = pred_cov;
      post_mean[t] = pred_mean;
    }
    post_prec[t] = prec;
    post_eta[t] = eta;
    g.posterior_trace += post_cov[t].value().trace() / static_cast<double>(horizon);
    g.evidence_norm += evidence_total.norm() / static_cast<double>(horizon);
  }

  // Backward kernels: z_t | z_{t+1} ~ N(gain z_{t+1} + offset, kernel_cov).
  std::vector<Var> gains(horizon), offsets(horizon), chols(horizon);
  Var log_det_sum = ad::sum_log_diag(chols[horizon - 1] = ad::cholesky(post_cov[horizon - 1]));
  if (horizon > 1) {
    const Var at_sw_inv = ad::transpose(a) * ad::spd_inverse(sigma_w);
    const Var info_gain = ad::symmetrize(at_sw_inv * a);
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      const Var kernel_cov = ad::spd_inverse(post_prec[t] + info_gain);
      chols[t] = ad::cholesky(kernel_cov);
      gains[t] = kernel_cov * at_sw_inv;
      offsets[t] = kernel_cov * (post_eta[t] - at_sw_inv * inputs[t]);
      log_det_sum = log_det_sum + ad::sum_log_diag(chols[t]);
    }
  }

  const Var prior_chol = tape.constant(cholesky_lower(sigma_z));
  const Var zero = tape.constant(MatrixXd::Zero(m, 1));

  g.sample_values.assign(sample_count, 0.0);
  std::vector<Var> all_states;
  all_states.reserve(sample_count * horizon);
  Var prior_sum;
  double eps_const = 0.0;
  for (std::size_t s = 0; s < sample_count; ++s) {
    std::vector<Var> z(horizon);
    double sample_const = 0.0;
    for (std::size_t t = horizon; t-- > 0;) {
      const VectorXd eps = standard_normal(rng, m);
      sample_const += -0.5 * eps.squaredNorm() - 0.5 * static_cast<double>(m) * kLog2Pi;
      const Var noise = chols[t] * tape.constant(MatrixXd(eps));
      z[t] = (t + 1 == horizon) ? post_mean[t] + noise : gains[t] * z[t + 1] + offsets[t] + noise;
    }
    Var prior = ad::gaussian_log_density_chol(z[0], zero, prior_chol);
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      prior = prior + ad::gaussian_log_density_chol(z[t + 1], a * z[t] + inputs[t], sigma_w_chol);
    }
    prior_sum = s == 0 ? prior : prior_sum + prior;
    // log q of this sample = sample_const - log_det_sum.
    g.sample_values[s] = prior.scalar() - (sample_const - log_det_sum.scalar());
    eps_const += sample_const;
    for (std::size_t t = 0; t < horizon; ++t) all_states.push_back(z[t]);
  }
  g.states = ad::stack_rows(all_states);

  const double inv_s = 1.0 / static_cast<double>(sample_count);
  g.per_sensor.assign(n_sensors, 0.0);
  Var objective = prior_sum * inv_s + log_det_sum;
  for (std::size_t j = 0; j < n_sensors; ++j) {
    if (!present[j] || !model.sensors[j].is_linear()) continue;
    const GaussianTerm term = gaussian_term(model.sensors[j].linear().sigma_x);
    const Var quad = row_quadratic(tape, tile_rows(traj.observations[j], sample_count),
                                   g.states * ad::transpose(linear_c[j]), term);
    const MatrixXd& q = quad.value();
    for (std::size_t s = 0; s < sample_count; ++s) {
      const double value =
          -0.5 * q.middleRows(static_cast<Eigen::Index>(s) * steps, steps).sum() + term.log_norm * static_cast<double>(steps);
      g.sample_values[s] += value;
      g.per_sensor[j] += value * inv_s;
    }
    g.recon += g.per_sensor[j];
    objective = objective + ad::sum(quad) * (-0.5 * inv_s);
    eps_const -= term.log_norm * static_cast<double>(steps * static_cast<Eigen::Index>(sample_count));
  }
  g.objective = add_constant(objective, -eps_const * inv_s);
}

}  // namespace

ElboBreakdown elbo_estimate(const Model& model, std::span<const Trajectory> batch, const ElboOptions& options,
                            std::vector<MatrixXd>* gradients) {
  require(options.sample_count >= 1, ErrorKind::kConfigMismatch, "sample count must be at least 1");
  require(!batch.empty(), ErrorKind::kConfigMismatch, "empty batch");
  const std::vector<ConstParam> params = const_parameters(model);
  const std::vector<SensorLayout> layout = sensor_layout(model, params.size());
  const bool want_grad = gradients != nullptr;
  const std::size_t n = batch.size();
  const std::size_t n_sensors = model.sensors.size();
  const std::size_t sample_count = options.sample_count;

  for (const Trajectory& traj : batch) {
    require(traj.observations.size() == n_sensors, ErrorKind::kUnknownSensor,
            "trajectory must carry one observation block per model sensor");
    require(traj.inputs.rows() == 0 || traj.inputs.cols() == model.input_dim(), ErrorKind::kDimensionMismatch,
            "input width does not match B");
    for (std::size_t j = 0; j < n_sensors; ++j) {
      const MatrixXd& obs = traj.observations[j];
      require(obs.rows() == 0 || (obs.rows() == static_cast<Eigen::Index>(traj.length()) &&
                                  obs.cols() == model.sensors[j].observation_dim()),
              ErrorKind::kDimensionMismatch, "observation block shape for sensor '" + model.sensors[j].name + "'");
    }
  }

  // Batched encoders: rows of every present trajectory stacked in index order.
  std::vector<std::vector<MatrixXd>> encoded(n, std::vector<MatrixXd>(n_sensors));
  std::vector<std::unique_ptr<ad::Tape>> encoder_tapes(n_sensors);
  std::vector<Var> encoder_out(n_sensors);
  std::vector<std::vector<std::pair<std::size_t, Var>>> encoder_leaves(n_sensors);
  for (std::size_t j = 0; j < n_sensors; ++j) {
    if (model.sensors[j].is_linear()) continue;
    Eigen::Index rows = 0;
    for (const Trajectory& traj : batch) rows += traj.observations[j].rows();
    if (rows == 0) continue;
    MatrixXd stacked(rows, model.sensors[j].observation_dim());
    Eigen::Index r = 0;
    for (const Trajectory& traj : batch) {
      stacked.middleRows(r, traj.observations[j].rows()) = traj.observations[j];
      r += traj.observations[j].rows();
    }
    encoder_tapes[j] = std::make_unique<ad::Tape>();
    ad::Tape& tape = *encoder_tapes[j];
    const nn::MlpVars enc = mlp_leaves(tape, params, layout[j].encoder, model.sensors[j].nonlinear().encoder.activation,
                                       want_grad, encoder_leaves[j]);
    encoder_out[j] = nn::mlp_apply(enc, tape.constant(std::move(stacked)));
    r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index len = batch[i].observations[j].rows();
      encoded[i][j] = encoder_out[j].value().middleRows(r, len);
      r += len;
    }
  }

  // Per-trajectory graphs.
  std::vector<TrajectoryGraph> graphs(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    build_trajectory(graphs[i], model, params, layout, encoded[i], batch[i], sample_count,
                     make_stream(options.seed, i), want_grad);
  });

  // Batched decoders over the sampled states; rows ordered (trajectory, sample, step).
  const double inv_s = 1.0 / static_cast<double>(sample_count);
  std::vector<std::vector<MatrixXd>> state_grads(n);  // per trajectory, summed over decoders
  std::vector<std::pair<std::size_t, MatrixXd>> shared_grads;
  for (std::size_t j = 0; j < n_sensors; ++j) {
    if (model.sensors[j].is_linear()) continue;
    Eigen::Index rows = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch[i].observations[j].rows() > 0) rows += graphs[i].states.rows();
    }
    if (rows == 0) continue;
    const NonlinearSensor& nl = model.sensors[j].nonlinear();
    const GaussianTerm term = gaussian_term(nl.decoder_sigma_x);
    MatrixXd states(rows, model.state_dim());
    MatrixXd observed(rows, nl.decoder_sigma_x.rows());
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch[i].observations[j].rows() == 0) continue;
      const Eigen::Index len = graphs[i].states.rows();
      states.middleRows(r, len) = graphs[i].states.value();
      observed.middleRows(r, len) = tile_rows(batch[i].observations[j], sample_count);
      r += len;
    }
    ad::Tape tape;
    std::vector<std::pair<std::size_t, Var>> leaves;
    const nn::MlpVars dec = mlp_leaves(tape, params, layout[j].decoder, nl.decoder.activation, want_grad, leaves);
    const Var z = want_grad ? tape.variable(std::move(states)) : tape.constant(std::move(states));
    const Var quad = row_quadratic(tape, observed, nn::mlp_apply(dec, z), term);
    const MatrixXd& q = quad.value();
    r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch[i].observations[j].rows() == 0) continue;
      const Eigen::Index steps = static_cast<Eigen::Index>(graphs[i].horizon);
      for (std::size_t s = 0; s < sample_count; ++s) {
        const double value = -0.5 * q.middleRows(r, steps).sum() + term.log_norm * static_cast<double>(steps);
        graphs[i].sample_values[s] += value;
        graphs[i].per_sensor[j] += value * inv_s;
        graphs[i].recon += value * inv_s;
        r += steps;
      }
    }
    if (!want_grad) continue;
    tape.backward(ad::sum(quad) * (-0.5 * inv_s));
    for (const auto& [k, v] : leaves) {
      if (params[k].trainable) shared_grads.emplace_back(k, v.grad());
    }
    const MatrixXd gz = z.grad();
    r = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (batch[i].observations[j].rows() == 0) continue;
      const Eigen::Index len = graphs[i].states.rows();
      state_grads[i].push_back(gz.middleRows(r, len));
      r += len;
    }
  }

  // Per-trajectory backward through a surrogate root that injects decoder gradients.
  if (want_grad) {
    parallel_for(n, options.threads, [&](std::size_t i) {
      TrajectoryGraph& g = graphs[i];
      ad::Tape& tape = *g.tape;
      Var root = g.objective;
      for (const MatrixXd& gz : state_grads[i]) root = root + ad::sum(ad::hadamard(tape.constant(gz), g.states));
      tape.backward(root);
    });
  }

  ElboBreakdown out;
  out.sample_count = sample_count;
  out.per_sensor_recon.assign(n_sensors, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double variance_sum = 0.0;
  for (const TrajectoryGraph& g : graphs) {
    double mean = 0.0;
    for (double v : g.sample_values) mean += v * inv_s;
    out.total += mean * inv_n;
    out.recon_term += g.recon * inv_n;
    for (std::size_t j = 0; j < n_sensors; ++j) out.per_sensor_recon[j] += g.per_sensor[j] * inv_n;
    if (sample_count > 1) {
      double var = 0.0;
      for (double v : g.sample_values) var += (v - mean) * (v - mean);
      variance_sum += var / static_cast<double>(sample_count - 1) * inv_s;
    }
    out.mean_posterior_trace += g.posterior_trace * inv_n;
    out.evidence_norm += g.evidence_norm * inv_n;
  }
  out.kl_term = out.recon_term - out.total;
  out.standard_error = std::sqrt(variance_sum) * inv_n;
  if (!std::isfinite(out.total)) throw Error(ErrorKind::kNonFinite, "ELBO is not finite");

  if (want_grad) {
    gradients->clear();
    for (const ConstParam& p : params) gradients->push_back(MatrixXd::Zero(p.value->rows(), p.value->cols()));
    // Fixed index order keeps the sum independent of the thread count.
    for (std::size_t i = 0; i < n; ++i) {
      const TrajectoryGraph& g = graphs[i];
      for (const auto& [k, v] : g.leaves) {
        if (params[k].trainable) (*gradients)[k] += v.grad() * inv_n;
      }
    }
    for (const auto& [k, gk] : shared_grads) (*gradients)[k] += gk * inv_n;
    for (std::size_t j = 0; j < n_sensors; ++j) {
      if (!encoder_tapes[j]) continue;
      const bool encoder_grad = any_trainable(params, layout[j].encoder);
      if (!encoder_grad) continue;
      MatrixXd gr(encoder_out[j].rows(), encoder_out[j].cols());
      Eigen::Index r = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Index len = batch[i].observations[j].rows();
        if (len == 0) continue;
        gr.middleRows(r, len) = graphs[i].encoded[j].grad();
        r += len;
      }
      ad::Tape& tape = *encoder_tapes[j];
      tape.backward(ad::sum(ad::hadamard(tape.constant(std::move(gr)), encoder_out[j])));
      for (const auto& [k, v] : encoder_leaves[j]) {
        if (params[k].trainable) (*gradients)[k] += v.grad() * inv_n;
      }
    }
  }
  return out;
}

}  // namespace vssf
