#pragma once

#include <variant>

#include "vssf/dataset.hpp"
#include "vssf/lgssm.hpp"

namespace vssf {

/// Damped linear pendulum with latent (theta, theta_dot); images show a rod at
/// the compressed angle 3.14 tanh(theta / 3.14).
struct PendulumEnv {
  double dt = 0.1;
  double damping = 0.1;
  double omega = 0.7;
  double process_noise = 0.2;
  /// Extra diffusion on the angle itself, per sqrt(second).
  double angle_noise = 0.1;
  double input_scale = 0.2;
  int image_size = 16;
  double rod_length = 6.0;  // pixels
  double rod_width = 0.7;   // pixels, Gaussian falloff
};

/// Planar double integrator with latent (x, y, xdot, ydot) observed through a
/// camera patch of a fixed procedural terrain.
struct DoubleIntegratorEnv {
  double dt = 0.1;
  double process_noise = 0.3;
  double input_scale = 0.3;
  double position_std = 1.5;
  double velocity_std = 0.5;
  double position_bound = 4.0;
  int patch_size = 16;
  double pixel_spacing = 0.05;
  double terrain_length_scale = 0.12;
  int terrain_features = 96;
  std::uint64_t terrain_seed = 1234;
};

/// Small stable 2-D system with one linear sensor; used for closed-form checks.
struct LinearToyEnv {
  double process_noise = 0.05;
  double measurement_noise = 0.1;
  double input_scale = 1.0;
};

using Environment = std::variant<PendulumEnv, DoubleIntegratorEnv, LinearToyEnv>;

DynamicsParams pendulum_dynamics(const PendulumEnv& env);
DynamicsParams integrator_dynamics(const DoubleIntegratorEnv& env);
DynamicsParams linear_toy_dynamics(const LinearToyEnv& env);
/// Sensor matrix and noise of the linear toy sensor.
Eigen::MatrixXd linear_toy_c();

/// Pixel intensities in [0, 1], row-major image_size x image_size.
Eigen::VectorXd render_pendulum(const PendulumEnv& env, double theta);
Eigen::VectorXd render_terrain_patch(const DoubleIntegratorEnv& env, double x, double y);

/// Name of the image-like sensor array produced by an environment.
std::string primary_sensor_name(const Environment& env);
/// Latent components that carry the interpretable position/angle.
std::vector<Eigen::Index> position_components(const Environment& env);

/// Seed-deterministic dataset; trajectory i draws from a stream derived from (seed, i).
Dataset generate(const Environment& env, std::size_t n, std::size_t horizon, std::uint64_t seed,
                 std::size_t threads = 1);

nlohmann::json describe(const Environment& env);
Environment environment_from_json(const nlohmann::json& j);
/// Dynamics recorded in a dataset's environment descriptor.
DynamicsParams dataset_dynamics(const Dataset& d);

}  // namespace vssf
