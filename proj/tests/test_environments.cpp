#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "vssf/environments.hpp"
#include "vssf/error.hpp"

using namespace vssf;
using namespace vssf::testing;

namespace {

// Covariance of z_T over many independent chains started from N(0, sigma_z)
// and driven by the same input distribution as the generator.
MatrixXd chain_covariance(const DynamicsParams& psi, double input_scale, int chains, int steps, Rng& rng) {
  const Eigen::LLT<MatrixXd> z_chol(psi.sigma_z);
  const Eigen::LLT<MatrixXd> w_chol(psi.sigma_w);
  const Eigen::Index m = psi.a.rows();
  MatrixXd cov = MatrixXd::Zero(m, m);
  for (int c = 0; c < chains; ++c) {
    VectorXd z = z_chol.matrixL() * standard_normal(rng, m);
    for (int t = 0; t < steps; ++t) {
      z = psi.a * z + psi.b * (input_scale * standard_normal(rng, psi.b.cols())) +
          w_chol.matrixL() * standard_normal(rng, m);
    }
    cov += z * z.transpose();
  }
  return cov / chains;
}

double column_sum(const VectorXd& img, int size, int col) {
  double s = 0.0;
  for (int r = 0; r < size; ++r) s += img(r * size + col);
  return s;
}

double correlation(const VectorXd& a, const VectorXd& b) {
  const VectorXd ca = a.array() - a.mean();
  const VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

}  // namespace

TEST_CASE("pendulum dynamics") {
  PendulumEnv env;
  const DynamicsParams psi = pendulum_dynamics(env);
  CHECK(psi.a(0, 1) == doctest::Approx(0.1));
  CHECK(psi.a(1, 0) == doctest::Approx(-0.049));
  CHECK(psi.a(1, 1) == doctest::Approx(0.99));
  CHECK(psi.b(0, 0) == 0.0);
  CHECK(psi.b(1, 0) == doctest::Approx(0.1));
  CHECK(spectral_radius(psi.a) <= 1.0);
  validate(psi);

  env.dt = 1e-7;
  const DynamicsParams tiny = pendulum_dynamics(env);
  CHECK(max_abs_diff(tiny.a, MatrixXd::Identity(2, 2)) < 1e-6);

  PendulumEnv unstable;
  unstable.damping = -1.0;
  CHECK_THROWS_AS(pendulum_dynamics(unstable), Error);
}

TEST_CASE("long simulations reach the stated stationary covariance") {
  Rng rng(1);
  {
    PendulumEnv env;
    const DynamicsParams psi = pendulum_dynamics(env);
    const MatrixXd cov = chain_covariance(psi, env.input_scale, 20000, 200, rng);
    CHECK((cov - psi.sigma_z).norm() / psi.sigma_z.norm() < 0.05);
  }
  {
    LinearToyEnv env;
    const DynamicsParams psi = linear_toy_dynamics(env);
    const MatrixXd cov = chain_covariance(psi, env.input_scale, 20000, 100, rng);
    CHECK((cov - psi.sigma_z).norm() / psi.sigma_z.norm() < 0.05);
  }
}

TEST_CASE("generated states have the stationary covariance") {
  PendulumEnv env;
  env.image_size = 4;
  const Dataset d = generate(env, 4000, 25, 3);
  const DynamicsParams psi = pendulum_dynamics(env);
  MatrixXd cov = MatrixXd::Zero(2, 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const MatrixXd s = d.states.block(i);
    cov += s.transpose() * s;
  }
  cov /= static_cast<double>(d.size() * d.horizon());
  CHECK((cov - psi.sigma_z).norm() / psi.sigma_z.norm() < 0.05);
}

TEST_CASE("pendulum rendering") {
  PendulumEnv env;
  const int p = env.image_size;
  const VectorXd rest = render_pendulum(env, 0.0);
  CHECK(rest.size() == p * p);
  CHECK(rest.minCoeff() >= 0.0);
  CHECK(rest.maxCoeff() <= 1.0);
  // At zero the rod hangs straight down the middle.
  for (int c = 0; c < p / 2; ++c) CHECK(column_sum(rest, p, c) == doctest::Approx(column_sum(rest, p, p - 1 - c)));
  CHECK(rest.tail(p * p / 2).sum() > 5 * rest.head(p * p / 2).sum());

  // Saturation: far angles stay distinct from each other's mirror and change
  // little once the compression has flattened out.
  const VectorXd far = render_pendulum(env, 10.0);
  const double mirror = (far - render_pendulum(env, -10.0)).norm();
  CHECK(mirror > 0.1);
  CHECK((far - render_pendulum(env, 20.0)).norm() < 0.5 * mirror);
  CHECK(far.allFinite());

  double worst = 0.0;
  for (double theta = -6.0; theta < 6.0; theta += 0.01)
    worst = std::max(worst, (render_pendulum(env, theta) - render_pendulum(env, theta + 1e-3)).norm());
  CHECK(worst < 0.1);
  CHECK(render_pendulum(env, 0.3) == render_pendulum(env, 0.3));
}

TEST_CASE("pendulum datasets") {
  PendulumEnv env;
  const Dataset one = generate(env, 1, 1, 4);
  CHECK(one.size() == 1);
  CHECK(one.horizon() == 1);
  CHECK(one.inputs.steps == 0);

  const Dataset d = generate(env, 6, 5, 9);
  const Array3& img = d.observations.at(primary_sensor_name(env));
  CHECK(img.n == 6);
  CHECK(img.steps == 5);
  CHECK(img.width == 256);
  CHECK(d.inputs.steps == 4);
  CHECK(d.inputs.width == 1);
  validate(d);

  // Images are a function of the angle alone.
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t t = 0; t < d.horizon(); ++t) {
      const VectorXd expected = render_pendulum(env, d.states.at(i, t, 0)).cast<float>().cast<double>();
      VectorXd got(256);
      for (int k = 0; k < 256; ++k) got(k) = img.at(i, t, k);
      CHECK(max_abs_diff(got, expected) < 1e-6);
    }
  }

  CHECK(generate(env, 6, 5, 9) == d);
  CHECK(generate(env, 6, 5, 9, 3) == d);
  CHECK(!(generate(env, 6, 5, 10) == d));
  CHECK(position_components(env) == std::vector<Eigen::Index>{0});
}

TEST_CASE("terrain patches") {
  DoubleIntegratorEnv env;
  const VectorXd a = render_terrain_patch(env, 0.3, -1.2);
  CHECK(a == render_terrain_patch(env, 0.3, -1.2));
  CHECK(a.size() == env.patch_size * env.patch_size);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() <= 1.0);

  Rng rng(5);
  std::uniform_real_distribution<double> pos(-env.position_bound, env.position_bound);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);
  const double width = env.patch_size * env.pixel_spacing;
  double total = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double x = pos(rng), y = pos(rng), phi = angle(rng);
    const double r = 2.5 * width;
    total += std::abs(correlation(render_terrain_patch(env, x, y),
                                  render_terrain_patch(env, x + r * std::cos(phi), y + r * std::sin(phi))));
  }
  CHECK(total / 100 < 0.2);

  // Small offsets: the patch distance grows with the offset.
  int monotone = 0;
  for (int k = 0; k < 50; ++k) {
    const double x = pos(rng), y = pos(rng), phi = angle(rng);
    double prev = 0.0;
    bool ok = true;
    for (int j = 1; j <= 5; ++j) {
      const double r = 0.004 * j;
      const double dist = (render_terrain_patch(env, x + r * std::cos(phi), y + r * std::sin(phi)) -
                           render_terrain_patch(env, x, y))
                              .norm();
      ok = ok && dist > prev;
      prev = dist;
    }
    monotone += ok ? 1 : 0;
  }
  CHECK(monotone == 50);
}

TEST_CASE("integrator datasets") {
  DoubleIntegratorEnv env;
  const DynamicsParams psi = integrator_dynamics(env);
  CHECK(psi.a.rows() == 4);
  CHECK(psi.b.cols() == 2);
  CHECK(spectral_radius(psi.a) <= 1.0);
  const Dataset d = generate(env, 3, 4, 2);
  CHECK(d.observations.at(primary_sensor_name(env)).width == 256);
  CHECK(d.states.width == 4);
  CHECK(position_components(env) == std::vector<Eigen::Index>{0, 1});
  CHECK(generate(env, 3, 4, 2) == d);

  // The integrator is only marginally stable; its prior describes the
  // initial states instead of a stationary law.
  DoubleIntegratorEnv cheap;
  cheap.patch_size = 2;
  const Dataset starts = generate(cheap, 20000, 1, 8);
  MatrixXd cov = MatrixXd::Zero(4, 4);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const MatrixXd s = starts.states.block(i);
    cov += s.transpose() * s;
  }
  cov /= static_cast<double>(starts.size());
  CHECK((cov - psi.sigma_z).norm() / psi.sigma_z.norm() < 0.05);
}

TEST_CASE("environment descriptors round trip") {
  PendulumEnv p;
  p.omega = 0.5;
  p.angle_noise = 0.05;
  const Environment back = environment_from_json(describe(p));
  REQUIRE(std::holds_alternative<PendulumEnv>(back));
  CHECK(std::get<PendulumEnv>(back).omega == 0.5);
  CHECK(std::get<PendulumEnv>(back).angle_noise == 0.05);
  CHECK(describe(back) == describe(p));

  const Dataset d = generate(p, 2, 3, 1);
  const DynamicsParams a = dataset_dynamics(d);
  const DynamicsParams b = pendulum_dynamics(p);
  CHECK(max_abs_diff(a.a, b.a) < 1e-15);
  CHECK(max_abs_diff(a.sigma_z, b.sigma_z) < 1e-12);

  CHECK(std::holds_alternative<DoubleIntegratorEnv>(environment_from_json(describe(DoubleIntegratorEnv{}))));
  CHECK(std::holds_alternative<LinearToyEnv>(environment_from_json(describe(LinearToyEnv{}))));
  CHECK_THROWS_AS(environment_from_json({{"kind", "airship"}}), Error);
}
