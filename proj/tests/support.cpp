#include "support.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include <unistd.h>

namespace vssf::testing {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = normal(rng);
  return m;
}

MatrixXd random_spd(Eigen::Index m, Rng& rng, double floor) {
  const MatrixXd g = random_matrix(m, m, rng);
  MatrixXd s = g * g.transpose() / static_cast<double>(m) + floor * MatrixXd::Identity(m, m);
  return 0.5 * (s + s.transpose());
}

MatrixXd random_stable(Eigen::Index m, Rng& rng, double radius) {
  const MatrixXd g = random_matrix(m, m, rng);
  const double rho = g.eigenvalues().cwiseAbs().maxCoeff();
  return g * (radius / rho);
}

DynamicsParams random_system(Eigen::Index m, Eigen::Index d, Rng& rng) {
  std::uniform_real_distribution<double> radius(0.3, 0.95);
  DynamicsParams psi;
  psi.a = random_stable(m, rng, radius(rng));
  psi.b = random_matrix(m, d, rng, 0.5);
  psi.sigma_w = random_spd(m, rng, 0.05) * 0.5;
  // Independent Lyapunov solve: vec(S) = (I - A (x) A)^-1 vec(Q).
  const Eigen::Index mm = m * m;
  MatrixXd kron(mm, mm);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) kron.block(i * m, j * m, m, m) = psi.a(i, j) * psi.a;
  }
  const VectorXd q = Eigen::Map<const VectorXd>(psi.sigma_w.data(), mm);
  const VectorXd s = (MatrixXd::Identity(mm, mm) - kron).lu().solve(q);
  MatrixXd sz = Eigen::Map<const MatrixXd>(s.data(), m, m);
  psi.sigma_z = 0.5 * (sz + sz.transpose());
  return psi;
}

std::vector<LinearSensor> random_linear_sensors(Eigen::Index m, std::size_t count, Rng& rng) {
  std::uniform_int_distribution<int> width(1, 3);
  std::vector<LinearSensor> out;
  for (std::size_t j = 0; j < count; ++j) {
    LinearSensor s;
    const Eigen::Index p = width(rng);
    s.c = random_matrix(p, m, rng);
    s.sigma_x = random_spd(p, rng, 0.05) * 0.3;
    out.push_back(s);
  }
  return out;
}

LinearProblem random_problem(Eigen::Index m, Eigen::Index d, std::size_t sensor_count, std::size_t horizon, Rng& rng) {
  LinearProblem p;
  p.psi = random_system(m, d, rng);
  p.sensors = random_linear_sensors(m, sensor_count, rng);
  for (std::size_t t = 0; t + 1 < horizon; ++t) p.inputs.push_back(random_matrix(d, 1, rng));
  const Eigen::LLT<MatrixXd> z_chol(p.psi.sigma_z);
  const Eigen::LLT<MatrixXd> w_chol(p.psi.sigma_w);
  VectorXd z = z_chol.matrixL() * random_matrix(m, 1, rng);
  for (std::size_t t = 0; t < horizon; ++t) {
    if (t > 0) z = p.psi.a * z + p.psi.b * p.inputs[t - 1] + w_chol.matrixL() * random_matrix(m, 1, rng);
    p.states.push_back(z);
    std::vector<VectorXd> xs;
    for (const LinearSensor& s : p.sensors) {
      const Eigen::LLT<MatrixXd> x_chol(s.sigma_x);
      xs.push_back(s.c * z + x_chol.matrixL() * random_matrix(s.c.rows(), 1, rng));
    }
    p.observations.push_back(xs);
  }
  return p;
}

std::vector<EvidenceBundle> linear_evidence_seq(const LinearProblem& p) {
  std::vector<EvidenceBundle> out;
  for (const auto& xs : p.observations) {
    EvidenceBundle bundle;
    for (std::size_t j = 0; j < p.sensors.size(); ++j) bundle.push_back(linear_evidence(p.sensors[j], xs[j]));
    out.push_back(bundle);
  }
  return out;
}

namespace {

struct Stacked {
  MatrixXd c;
  MatrixXd r;
  VectorXd x;
};

Stacked stack(const LinearProblem& p, std::size_t t) {
  Eigen::Index rows = 0;
  for (const LinearSensor& s : p.sensors) rows += s.c.rows();
  const Eigen::Index m = p.psi.a.rows();
  Stacked st{MatrixXd::Zero(rows, m), MatrixXd::Zero(rows, rows), VectorXd::Zero(rows)};
  Eigen::Index r = 0;
  for (std::size_t j = 0; j < p.sensors.size(); ++j) {
    const Eigen::Index k = p.sensors[j].c.rows();
    st.c.middleRows(r, k) = p.sensors[j].c;
    st.r.block(r, r, k, k) = p.sensors[j].sigma_x;
    st.x.segment(r, k) = p.observations[t][j];
    r += k;
  }
  return st;
}

}  // namespace

std::vector<FilterBelief> kalman_oracle(const LinearProblem& p) {
  std::vector<FilterBelief> out;
  const Eigen::Index m = p.psi.a.rows();
  VectorXd mean = VectorXd::Zero(m);
  MatrixXd cov = p.psi.sigma_z;
  for (std::size_t t = 0; t < p.observations.size(); ++t) {
    if (t > 0) {
      mean = p.psi.a * mean + p.psi.b * p.inputs[t - 1];
      cov = p.psi.a * cov * p.psi.a.transpose() + p.psi.sigma_w;
    }
    FilterBelief b;
    b.predicted = {mean, cov};
    const Stacked st = stack(p, t);
    if (st.c.rows() > 0) {
      const MatrixXd s = st.c * cov * st.c.transpose() + st.r;
      const MatrixXd k = cov * st.c.transpose() * s.inverse();
      mean = mean + k * (st.x - st.c * mean);
      const MatrixXd ikc = MatrixXd::Identity(m, m) - k * st.c;
      cov = ikc * cov * ikc.transpose() + k * st.r * k.transpose();
    }
    b.posterior = {mean, cov};
    out.push_back(b);
  }
  return out;
}

std::vector<GaussianMoment> rts_oracle(const DynamicsParams& psi, const std::vector<FilterBelief>& beliefs,
                                       const std::vector<VectorXd>& inputs) {
  const std::size_t n = beliefs.size();
  std::vector<GaussianMoment> out(n);
  out[n - 1] = beliefs[n - 1].posterior;
  for (std::size_t t = n - 1; t-- > 0;) {
    const MatrixXd& p = beliefs[t].posterior.cov;
    const MatrixXd pred_cov = psi.a * p * psi.a.transpose() + psi.sigma_w;
    const VectorXd pred_mean = psi.a * beliefs[t].posterior.mean + psi.b * inputs[t];
    const MatrixXd g = p * psi.a.transpose() * pred_cov.inverse();
    out[t].mean = beliefs[t].posterior.mean + g * (out[t + 1].mean - pred_mean);
    out[t].cov = p + g * (out[t + 1].cov - pred_cov) * g.transpose();
  }
  return out;
}

double kalman_log_likelihood(const LinearProblem& p) {
  const std::vector<FilterBelief> beliefs = kalman_oracle(p);
  double ll = 0.0;
  for (std::size_t t = 0; t < beliefs.size(); ++t) {
    const Stacked st = stack(p, t);
    if (st.c.rows() == 0) continue;
    const MatrixXd s = st.c * beliefs[t].predicted.cov * st.c.transpose() + st.r;
    const VectorXd e = st.x - st.c * beliefs[t].predicted.mean;
    ll += -0.5 * (e.dot(s.inverse() * e) + std::log(s.determinant()) +
                  static_cast<double>(e.size()) * std::log(2.0 * std::numbers::pi));
  }
  return ll;
}

namespace {

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

void normalize(VectorXd& density, double dx) {
  const double mass = (density.sum() - 0.5 * (density(0) + density(density.size() - 1))) * dx;
  density /= mass;
}

}  // namespace

GridResult grid_oracle(double a, double b, double sigma_w, double sigma_z, double c, double sigma_x,
                       const std::vector<double>& inputs, const std::vector<double>& observations, double half_width,
                       std::size_t points) {
  GridResult out;
  const auto n = static_cast<Eigen::Index>(points);
  out.grid = VectorXd::LinSpaced(n, -half_width, half_width);
  const double dx = out.grid(1) - out.grid(0);
  // kernel(i, j) = p(z' = grid_i | z = grid_j), without the input shift.
  MatrixXd kernel(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) kernel(i, j) = normal_pdf(out.grid(i), a * out.grid(j), sigma_w);
  }
  VectorXd weights = VectorXd::Constant(n, dx);
  weights(0) = weights(n - 1) = 0.5 * dx;

  auto transition = [&](const VectorXd& density, double u) {
    // Shift by b*u: evaluate the kernel with shifted targets via interpolation-free recomputation.
    if (b * u == 0.0) return VectorXd(kernel * density.cwiseProduct(weights));
    VectorXd out_density(n);
    const VectorXd w = density.cwiseProduct(weights);
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += normal_pdf(out.grid(i), a * out.grid(j) + b * u, sigma_w) * w(j);
      out_density(i) = acc;
    }
    return out_density;
  };

  std::vector<VectorXd> predicted;
  for (std::size_t t = 0; t < observations.size(); ++t) {
    VectorXd pred(n);
    if (t == 0) {
      for (Eigen::Index i = 0; i < n; ++i) pred(i) = normal_pdf(out.grid(i), 0.0, sigma_z);
    } else {
      pred = transition(out.filtered.back(), inputs[t - 1]);
    }
    normalize(pred, dx);
    predicted.push_back(pred);
    VectorXd post(n);
    for (Eigen::Index i = 0; i < n; ++i) post(i) = pred(i) * normal_pdf(observations[t], c * out.grid(i), sigma_x);
    normalize(post, dx);
    out.filtered.push_back(post);
  }

  const std::size_t horizon = observations.size();
  out.smoothed.assign(horizon, VectorXd());
  out.smoothed[horizon - 1] = out.filtered[horizon - 1];
  for (std::size_t t = horizon - 1; t-- > 0;) {
    const VectorXd ratio = out.smoothed[t + 1].cwiseQuotient(predicted[t + 1].cwiseMax(1e-300));
    const VectorXd w = ratio.cwiseProduct(weights);
    VectorXd back(n);
    const double shift = b * inputs[t];
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      if (shift == 0.0) {
        acc = kernel.col(j).dot(w);
      } else {
        for (Eigen::Index i = 0; i < n; ++i) acc += normal_pdf(out.grid(i), a * out.grid(j) + shift, sigma_w) * w(i);
      }
      back(j) = acc;
    }
    VectorXd s = out.filtered[t].cwiseProduct(back);
    normalize(s, dx);
    out.smoothed[t] = s;
  }
  return out;
}

double tv_distance(const VectorXd& grid, const VectorXd& density, double mean, double var) {
  const double dx = grid(1) - grid(0);
  double tv = 0.0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double w = (i == 0 || i + 1 == grid.size()) ? 0.5 * dx : dx;
    tv += std::abs(density(i) - normal_pdf(grid(i), mean, var)) * w;
  }
  return 0.5 * tv;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double max_abs_diff(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  return (a - b).cwiseAbs().maxCoeff();
}


Model linear_model(const LinearProblem& p) {
  std::vector<SensorModel> sensors;
  for (std::size_t j = 0; j < p.sensors.size(); ++j) sensors.push_back({"s" + std::to_string(j), p.sensors[j]});
  return make_model(p.psi, std::move(sensors), false);
}

Trajectory linear_trajectory(const LinearProblem& p) {
  Trajectory traj;
  const std::size_t horizon = p.states.size();
  for (std::size_t j = 0; j < p.sensors.size(); ++j) {
    MatrixXd rows(horizon, p.sensors[j].c.rows());
    for (std::size_t t = 0; t < horizon; ++t) rows.row(t) = p.observations[t][j].transpose();
    traj.observations.push_back(rows);
  }
  traj.inputs = MatrixXd(horizon - 1, p.psi.b.cols());
  for (std::size_t t = 0; t + 1 < horizon; ++t) traj.inputs.row(t) = p.inputs[t].transpose();
  return traj;
}

double gradient_check(const GraphFn& f, const std::vector<MatrixXd>& inputs, double h, double floor) {
  auto evaluate = [&](const std::vector<MatrixXd>& values, std::vector<MatrixXd>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& v : values) leaves.push_back(tape.variable(v));
    const ad::Var root = f(tape, leaves);
    if (grads != nullptr) {
      tape.backward(root);
      for (const auto& l : leaves) grads->push_back(l.grad());
    }
    return root.scalar();
  };
  std::vector<MatrixXd> analytic;
  evaluate(inputs, &analytic);
  std::vector<MatrixXd> values = inputs;
  double worst = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    for (Eigen::Index e = 0; e < values[k].size(); ++e) {
      const double x0 = values[k].data()[e];
      values[k].data()[e] = x0 + h;
      const double up = evaluate(values, nullptr);
      values[k].data()[e] = x0 - h;
      const double down = evaluate(values, nullptr);
      values[k].data()[e] = x0;
      const double fd = (up - down) / (2 * h);
      const double an = analytic[k].data()[e];
      worst = std::max(worst, std::abs(fd - an) / std::max(floor, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}


double elbo_gradient_check(Model& model, const std::vector<Trajectory>& batch, const ElboOptions& options, double h,
                           double floor) {
  std::vector<MatrixXd> grads;
  elbo_estimate(model, batch, options, &grads);
  auto refs = parameters(model);
  double worst = 0.0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (!refs[k].trainable) continue;
    for (Eigen::Index e = 0; e < refs[k].value->size(); ++e) {
      double& x = refs[k].value->data()[e];
      const double x0 = x;
      x = x0 + h;
      const double up = elbo_estimate(model, batch, options).total;
      x = x0 - h;
      const double down = elbo_estimate(model, batch, options).total;
      x = x0;
      const double fd = (up - down) / (2 * h);
      const double an = grads[k].data()[e];
      worst = std::max(worst, std::abs(fd - an) / std::max(floor, std::abs(fd) + std::abs(an)));
    }
  }
  return worst;
}

MixedProblem mixed_problem(Eigen::Index m, std::size_t horizon, bool learn_dynamics, Rng& rng) {
  const DynamicsParams psi = random_system(m, 1, rng);
  std::vector<SensorModel> sensors;
  sensors.push_back({"image", make_nonlinear_sensor(3, m, {4}, 0.3, rng)});
  auto& img = std::get<NonlinearSensor>(sensors.back().model);
  img.evidence_factor = MatrixXd::Identity(m, m) + 0.3 * random_matrix(m, m, rng);
  LinearSensor lin{random_matrix(1, m, rng), 0.2 * MatrixXd::Identity(1, 1), true};
  sensors.push_back({"position", lin});
  MixedProblem p{make_model(psi, std::move(sensors), learn_dynamics), {}};
  const auto t = static_cast<Eigen::Index>(horizon);
  for (int i = 0; i < 3; ++i) {
    Trajectory traj;
    traj.inputs = random_matrix(t - 1, 1, rng);
    traj.observations = {random_matrix(t, 3, rng), i == 1 ? MatrixXd(0, 1) : random_matrix(t, 1, rng)};
    p.batch.push_back(traj);
  }
  return p;
}


std::filesystem::path scratch_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vssf_tests_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::filesystem::remove(path);
  return path;
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}


ad::Var contract(ad::Tape& t, const ad::Var& v, std::uint64_t seed) {
  Rng rng(seed);
  return sum(hadamard(t.constant(random_matrix(v.rows(), v.cols(), rng)), v));
}

ad::Var spd_from(ad::Tape& t, const ad::Var& x) {
  const Eigen::Index m = x.rows();
  return x * transpose(x) * (1.0 / static_cast<double>(m)) + t.constant(MatrixXd::Identity(m, m));
}

ad::Var lower_from(ad::Tape& t, const ad::Var& x) {
  const Eigen::Index m = x.rows();
  return tril(x) * 0.3 + t.constant(2.0 * MatrixXd::Identity(m, m));
}

std::vector<OpCase> op_cases() {
  return {
      {"add", {{3, 2}, {3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, v[0] + v[1], 1); }},
      {"subtract", {{3, 2}, {3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, v[0] - v[1], 2); }},
      {"negate", {{2, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, -v[0], 3); }},
      {"matmul", {{3, 4}, {4, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, v[0] * v[1], 4); }},
      {"scalar multiply", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, 2.5 * v[0] * -0.5, 5); }},
      {"add_constant", {{2, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, add_constant(v[0], 0.7), 6); }},
      {"scale", {{1, 1}, {3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, scale(v[0], v[1]), 7); }},
      {"hadamard", {{3, 2}, {3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, hadamard(v[0], v[1]), 8); }},
      {"transpose", {{3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, transpose(v[0]), 9); }},
      {"sum", {{3, 2}}, [](ad::Tape&, const std::vector<ad::Var>& v) { return sum(hadamard(v[0], v[0])); }},
      {"squared_norm", {{4, 1}}, [](ad::Tape&, const std::vector<ad::Var>& v) { return squared_norm(v[0]); }},
      {"symmetrize", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, symmetrize(v[0]), 10); }},
      {"tril", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, tril(v[0]), 11); }},
      {"add_row_broadcast", {{4, 3}, {1, 3}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, add_row_broadcast(v[0], v[1]), 12); }},
      {"row", {{4, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, row(v[0], 2), 13); }},
      {"stack_rows", {{3, 1}, {3, 1}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, ad::stack_rows({v[0], v[1], v[0]}), 14); }},
      {"gelu", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, gelu(v[0] * 2.0), 15); }},
      {"tanh", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, tanh(v[0]), 16); }},
      {"exp", {{3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, exp(v[0]), 17); }},
      {"log", {{3, 2}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, log(add_constant(hadamard(v[0], v[0]), 0.5)), 18); }},
      {"cholesky", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, cholesky(spd_from(t, v[0])), 19); }},
      {"solve_lower", {{3, 3}, {3, 2}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, solve_lower(lower_from(t, v[0]), v[1]), 20); }},
      {"solve_lower_transpose", {{3, 3}, {3, 2}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, solve_lower_transpose(lower_from(t, v[0]), v[1]), 21); }},
      {"quadratic_form", {{3, 1}, {3, 3}}, [](ad::Tape&, const std::vector<ad::Var>& v) { return quadratic_form(v[0], v[1]); }},
      {"logdet", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return logdet(spd_from(t, v[0])); }},
      {"sum_log_diag", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return sum_log_diag(lower_from(t, v[0])); }},
      {"spd_inverse", {{3, 3}}, [](ad::Tape& t, const std::vector<ad::Var>& v) { return contract(t, spd_inverse(spd_from(t, v[0])), 22); }},
      {"gaussian_log_density", {{3, 1}, {3, 1}, {3, 3}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return gaussian_log_density(v[0], v[1], spd_from(t, v[2])); }},
      {"gaussian_log_density_chol", {{3, 1}, {3, 1}, {3, 3}},
       [](ad::Tape& t, const std::vector<ad::Var>& v) { return gaussian_log_density_chol(v[0], v[1], lower_from(t, v[2])); }},
  };
}


}  // namespace vssf::testing
