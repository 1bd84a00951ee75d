#include "vssf/environments.hpp"

#include <cmath>
#include <numbers>

#include "vssf/error.hpp"
#include "vssf/json_util.hpp"
#include "vssf/parallel.hpp"

namespace vssf {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kVisualScale = 3.14;

/// Continuous white-noise-acceleration covariance for one (position, velocity) pair.
MatrixXd wna_block(double dt, double scale) {
  MatrixXd q(2, 2);
  q << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
  return scale * scale * q;
}

struct TerrainFeatures {
  MatrixXd frequencies;  // K x 2
  VectorXd phases;
  double amplitude = 0.0;
};

TerrainFeatures terrain_features(const DoubleIntegratorEnv& env) {
  Rng rng(env.terrain_seed);
  std::normal_distribution<double> normal(0.0, 1.0 / env.terrain_length_scale);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  TerrainFeatures f;
  f.frequencies.resize(env.terrain_features, 2);
  f.phases.resize(env.terrain_features);
  for (int k = 0; k < env.terrain_features; ++k) {
    f.frequencies(k, 0) = normal(rng);
    f.frequencies(k, 1) = normal(rng);
    f.phases(k) = phase(rng);
  }
  f.amplitude = std::sqrt(2.0 / env.terrain_features);
  return f;
}

VectorXd render_patch(const DoubleIntegratorEnv& env, const TerrainFeatures& f, double x, double y) {
  const int p = env.patch_size;
  VectorXd out(p * p);
  const double centre = 0.5 * (p - 1);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const double px = x + (c - centre) * env.pixel_spacing;
      const double py = y + (centre - r) * env.pixel_spacing;
      const VectorXd arg = f.frequencies.col(0) * px + f.frequencies.col(1) * py + f.phases;
      const double field = f.amplitude * arg.array().cos().sum();
      out(r * p + c) = 0.5 + 0.5 * std::tanh(field);
    }
  }
  return out;
}

MatrixXd empirical_covariance(const std::vector<VectorXd>& xs) {
  const Eigen::Index m = xs.front().size();
  VectorXd mean = VectorXd::Zero(m);
  for (const VectorXd& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  MatrixXd cov = MatrixXd::Zero(m, m);
  for (const VectorXd& x : xs) cov += (x - mean) * (x - mean).transpose();
  return symmetrize(cov / static_cast<double>(xs.size() - 1));
}

VectorXd draw_inputs(Rng& rng, Eigen::Index d, double scale) { return scale * standard_normal(rng, d); }

}  // namespace

DynamicsParams pendulum_dynamics(const PendulumEnv& env) {
  MatrixXd a(2, 2);
  a << 1.0, env.dt, -env.omega * env.omega * env.dt, 1.0 - env.damping * env.dt;
  MatrixXd b(2, 1);
  b << 0.0, env.dt;
  MatrixXd sigma_w = wna_block(env.dt, env.process_noise);
  sigma_w(0, 0) += env.angle_noise * env.angle_noise * env.dt;
  require(spectral_radius(a) < 1.0 - 1e-9, ErrorKind::kNotStable, "pendulum discretization is not stable");
  // Random inputs are part of the data-generating process, so the stationary
  // prior accounts for them as well as for the process noise.
  const MatrixXd driven = sigma_w + env.input_scale * env.input_scale * b * b.transpose();
  return {a, b, sigma_w, stationary_covariance(a, driven)};
}

DynamicsParams integrator_dynamics(const DoubleIntegratorEnv& env) {
  const double dt = env.dt;
  MatrixXd a = MatrixXd::Identity(4, 4);
  a(0, 2) = dt;
  a(1, 3) = dt;
  MatrixXd b = MatrixXd::Zero(4, 2);
  b(0, 0) = b(1, 1) = 0.5 * dt * dt;
  b(2, 0) = b(3, 1) = dt;
  const MatrixXd q = wna_block(dt, env.process_noise);
  MatrixXd sigma_w = MatrixXd::Zero(4, 4);
  for (int axis = 0; axis < 2; ++axis) {
    sigma_w(axis, axis) = q(0, 0);
    sigma_w(axis, axis + 2) = sigma_w(axis + 2, axis) = q(0, 1);
    sigma_w(axis + 2, axis + 2) = q(1, 1);
  }
  VectorXd spread(4);
  spread << env.position_std, env.position_std, env.velocity_std, env.velocity_std;
  return {a, b, sigma_w, MatrixXd(spread.array().square().matrix().asDiagonal())};
}

DynamicsParams linear_toy_dynamics(const LinearToyEnv& env) {
  MatrixXd a(2, 2);
  a << 0.9, 0.2, -0.2, 0.85;
  MatrixXd b(2, 1);
  b << 0.0, 0.3;
  const MatrixXd sigma_w = env.process_noise * MatrixXd::Identity(2, 2);
  const MatrixXd driven = sigma_w + env.input_scale * env.input_scale * b * b.transpose();
  return {a, b, sigma_w, stationary_covariance(a, driven)};
}

MatrixXd linear_toy_c() {
  MatrixXd c(1, 2);
  c << 1.0, 0.5;
  return c;
}

VectorXd render_pendulum(const PendulumEnv& env, double theta) {
  const double visual = kVisualScale * std::tanh(theta / kVisualScale);
  const int p = env.image_size;
  const double centre = 0.5 * p;
  // Image y grows downwards; theta = 0 hangs straight down.
  const double ex = env.rod_length * std::sin(visual);
  const double ey = env.rod_length * std::cos(visual);
  const double len2 = ex * ex + ey * ey;
  VectorXd out(p * p);
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) {
      const double px = c + 0.5 - centre;
      const double py = r + 0.5 - centre;
      const double s = std::clamp((px * ex + py * ey) / len2, 0.0, 1.0);
      const double dx = px - s * ex;
      const double dy = py - s * ey;
      out(r * p + c) = std::exp(-(dx * dx + dy * dy) / (2.0 * env.rod_width * env.rod_width));
    }
  }
  return out;
}

VectorXd render_terrain_patch(const DoubleIntegratorEnv& env, double x, double y) {
  return render_patch(env, terrain_features(env), x, y);
}

std::string primary_sensor_name(const Environment& env) {
  return std::holds_alternative<LinearToyEnv>(env) ? "lin" : "image";
}

std::vector<Eigen::Index> position_components(const Environment& env) {
  if (std::holds_alternative<DoubleIntegratorEnv>(env)) return {0, 1};
  return {0};
}

Dataset generate(const Environment& env, std::size_t n, std::size_t horizon, std::uint64_t seed,
                 std::size_t threads) {
  require(horizon >= 1, ErrorKind::kConfigMismatch, "trajectory length must be at least 1");
  Dataset d;
  d.seed = seed;

  DynamicsParams psi;
  double input_scale = 0.0;
  if (const auto* p = std::get_if<PendulumEnv>(&env)) {
    psi = pendulum_dynamics(*p);
    input_scale = p->input_scale;
  } else if (const auto* g = std::get_if<DoubleIntegratorEnv>(&env)) {
    psi = integrator_dynamics(*g);
    input_scale = g->input_scale;
  } else {
    psi = linear_toy_dynamics(std::get<LinearToyEnv>(env));
    input_scale = std::get<LinearToyEnv>(env).input_scale;
  }
  const Eigen::Index m = psi.state_dim();
  const Eigen::Index du = psi.input_dim();

  // Latent trajectories.
  std::vector<std::vector<VectorXd>> states(n);
  std::vector<std::vector<VectorXd>> inputs(n);
  const MatrixXd lw = cholesky_lower(psi.sigma_w);
  const MatrixXd lz = cholesky_lower(psi.sigma_z);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, i);
    std::vector<VectorXd>& z = states[i];
    std::vector<VectorXd>& u = inputs[i];
    for (std::size_t t = 0; t + 1 < horizon; ++t) u.push_back(draw_inputs(rng, du, input_scale));
    z.push_back(lz * standard_normal(rng, m));
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      z.push_back(psi.a * z.back() + psi.b * u[t] + lw * standard_normal(rng, m));
    }
  });
  // The integrator has no stationary law; its prior is the empirical spread of the initial states.
  if (std::holds_alternative<DoubleIntegratorEnv>(env) && n >= 2) {
    std::vector<VectorXd> initial;
    for (const auto& z : states) initial.push_back(z.front());
    psi.sigma_z = empirical_covariance(initial);
  }

  d.states = Array3(n, horizon, static_cast<std::size_t>(m));
  d.inputs = Array3(n, horizon - 1, static_cast<std::size_t>(du));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < horizon; ++t) {
      for (Eigen::Index k = 0; k < m; ++k) d.states.at(i, t, k) = static_cast<float>(states[i][t](k));
    }
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      for (Eigen::Index k = 0; k < du; ++k) d.inputs.at(i, t, k) = static_cast<float>(inputs[i][t](k));
    }
  }

  const std::string sensor = primary_sensor_name(env);
  if (const auto* p = std::get_if<PendulumEnv>(&env)) {
    Array3 images(n, horizon, static_cast<std::size_t>(p->image_size * p->image_size));
    parallel_for(n, threads, [&](std::size_t i) {
      for (std::size_t t = 0; t < horizon; ++t) {
        const VectorXd img = render_pendulum(*p, states[i][t](0));
        for (Eigen::Index k = 0; k < img.size(); ++k) images.at(i, t, k) = static_cast<float>(img(k));
      }
    });
    d.observations[sensor] = std::move(images);
  } else if (const auto* g = std::get_if<DoubleIntegratorEnv>(&env)) {
    const TerrainFeatures features = terrain_features(*g);
    Array3 images(n, horizon, static_cast<std::size_t>(g->patch_size * g->patch_size));
    parallel_for(n, threads, [&](std::size_t i) {
      for (std::size_t t = 0; t < horizon; ++t) {
        const VectorXd img = render_patch(*g, features, states[i][t](0), states[i][t](1));
        for (Eigen::Index k = 0; k < img.size(); ++k) images.at(i, t, k) = static_cast<float>(img(k));
      }
    });
    d.observations[sensor] = std::move(images);
  } else {
    const LinearToyEnv& toy = std::get<LinearToyEnv>(env);
    const MatrixXd c = linear_toy_c();
    Array3 obs(n, horizon, static_cast<std::size_t>(c.rows()));
    for (std::size_t i = 0; i < n; ++i) {
      // Measurement noise uses its own stream so the latent draws above stay untouched.
      Rng rng = make_stream(seed, i, 1);
      for (std::size_t t = 0; t < horizon; ++t) {
        const VectorXd x = c * states[i][t] + std::sqrt(toy.measurement_noise) * standard_normal(rng, c.rows());
        for (Eigen::Index k = 0; k < x.size(); ++k) obs.at(i, t, k) = static_cast<float>(x(k));
      }
    }
    d.observations[sensor] = std::move(obs);
  }

  d.environment = describe(env);
  d.environment["dynamics"] = {{"a", matrix_to_json(psi.a)},
                               {"b", matrix_to_json(psi.b)},
                               {"sigma_w", matrix_to_json(psi.sigma_w)},
                               {"sigma_z", matrix_to_json(psi.sigma_z)}};
  return d;
}

nlohmann::json describe(const Environment& env) {
  if (const auto* p = std::get_if<PendulumEnv>(&env)) {
    return {{"kind", "pendulum"},       {"dt", p->dt},
            {"damping", p->damping},    {"omega", p->omega},
            {"process_noise", p->process_noise}, {"angle_noise", p->angle_noise},
            {"input_scale", p->input_scale},
            {"image_size", p->image_size},       {"rod_length", p->rod_length},
            {"rod_width", p->rod_width}};
  }
  if (const auto* g = std::get_if<DoubleIntegratorEnv>(&env)) {
    return {{"kind", "integrator"},
            {"dt", g->dt},
            {"process_noise", g->process_noise},
            {"input_scale", g->input_scale},
            {"position_std", g->position_std},
            {"velocity_std", g->velocity_std},
            {"position_bound", g->position_bound},
            {"patch_size", g->patch_size},
            {"pixel_spacing", g->pixel_spacing},
            {"terrain_length_scale", g->terrain_length_scale},
            {"terrain_features", g->terrain_features},
            {"terrain_seed", g->terrain_seed}};
  }
  const auto& toy = std::get<LinearToyEnv>(env);
  return {{"kind", "linear"},
          {"process_noise", toy.process_noise},
          {"measurement_noise", toy.measurement_noise},
          {"input_scale", toy.input_scale}};
}

Environment environment_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pendulum") {
      PendulumEnv p;
      p.dt = j.value("dt", p.dt);
      p.damping = j.value("damping", p.damping);
      p.omega = j.value("omega", p.omega);
      p.process_noise = j.value("process_noise", p.process_noise);
      p.angle_noise = j.value("angle_noise", p.angle_noise);
      p.input_scale = j.value("input_scale", p.input_scale);
      p.image_size = j.value("image_size", p.image_size);
      p.rod_length = j.value("rod_length", p.rod_length);
      p.rod_width = j.value("rod_width", p.rod_width);
      return p;
    }
    if (kind == "integrator") {
      DoubleIntegratorEnv g;
      g.dt = j.value("dt", g.dt);
      g.process_noise = j.value("process_noise", g.process_noise);
      g.input_scale = j.value("input_scale", g.input_scale);
      g.position_std = j.value("position_std", g.position_std);
      g.velocity_std = j.value("velocity_std", g.velocity_std);
      g.position_bound = j.value("position_bound", g.position_bound);
      g.patch_size = j.value("patch_size", g.patch_size);
      g.pixel_spacing = j.value("pixel_spacing", g.pixel_spacing);
      g.terrain_length_scale = j.value("terrain_length_scale", g.terrain_length_scale);
      g.terrain_features = j.value("terrain_features", g.terrain_features);
      g.terrain_seed = j.value("terrain_seed", g.terrain_seed);
      return g;
    }
    if (kind == "linear") {
      LinearToyEnv toy;
      toy.process_noise = j.value("process_noise", toy.process_noise);
      toy.measurement_noise = j.value("measurement_noise", toy.measurement_noise);
      toy.input_scale = j.value("input_scale", toy.input_scale);
      return toy;
    }
    throw Error(ErrorKind::kConfigMismatch, "unknown environment kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kCorruptHeader, std::string("environment descriptor: ") + e.what());
  }
}

DynamicsParams dataset_dynamics(const Dataset& d) {
  require(d.environment.contains("dynamics"), ErrorKind::kConfigMismatch, "dataset carries no dynamics");
  const auto& j = d.environment.at("dynamics");
  DynamicsParams psi{matrix_from_json(j.at("a")), matrix_from_json(j.at("b")), matrix_from_json(j.at("sigma_w")),
                     matrix_from_json(j.at("sigma_z"))};
  validate(psi);
  return psi;
}

}  // namespace vssf
