#include "vssf/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "vssf/datastore.hpp"
#include "vssf/environments.hpp"
#include "vssf/error.hpp"
#include "vssf/filtering.hpp"
#include "vssf/parallel.hpp"
#include "vssf/training.hpp"

namespace vssf {
namespace {

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::optional<std::string> env;
  std::optional<std::size_t> n;
  std::optional<std::size_t> horizon_T;
  std::optional<std::string> supervision;
  bool learn_dynamics = false;
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> threads;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadFlag:
      return kExitUsage;
    case ErrorKind::kNonFinite:
    case ErrorKind::kNotPositiveDefinite:
    case ErrorKind::kNotStable:
      return kExitNumerical;
    default:
      return kExitData;
  }
}

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIoError, "cannot open config " + path);
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    require(j.is_object(), ErrorKind::kBadFlag, "config must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kBadFlag, std::string("config: ") + e.what());
  }
}

/// Defaults < config file < flags.
nlohmann::json resolve(const std::string& command, const Flags& f) {
  nlohmann::json c = load_config(f.config_path);
  auto set_default = [&](const char* key, const nlohmann::json& v) {
    if (!c.contains(key)) c[key] = v;
  };
  set_default("seed", 0);
  if (f.seed) c["seed"] = *f.seed;
  if (f.threads) c["threads"] = *f.threads;
  c["threads"] = resolve_threads(c.value("threads", std::size_t{0}));
  if (!f.out.empty()) c["out"] = f.out;
  if (!f.dataset.empty()) c["dataset"] = f.dataset;
  if (!f.checkpoint.empty()) c["checkpoint"] = f.checkpoint;

  if (command == "gen") {
    nlohmann::json env = c.value("environment", nlohmann::json::object());
    if (f.env) env["kind"] = *f.env;
    if (!env.contains("kind")) env["kind"] = "pendulum";
    const std::string kind = env["kind"].get<std::string>();
    require(kind == "pendulum" || kind == "integrator" || kind == "linear", ErrorKind::kBadFlag,
            "--env must be pendulum, integrator or linear");
    set_default("n", 2000);
    set_default("T", kind == "integrator" ? 4 : 5);
    if (f.n) c["n"] = *f.n;
    if (f.horizon_T) c["T"] = *f.horizon_T;
    c["environment"] = describe(environment_from_json(env));
  }
  if (command == "train") {
    nlohmann::json t = c.value("train", nlohmann::json::object());
    t["seed"] = c["seed"];
    if (f.supervision) t["supervision"] = *f.supervision;
    if (f.learn_dynamics) t["learn_dynamics"] = true;
    if (f.samples) t["sample_count"] = *f.samples;
    if (f.steps) t["steps"] = *f.steps;
    c["train"] = TrainConfig::from_json(t).to_json();
  }
  if (command == "eval" && f.horizon) c["horizon"] = *f.horizon;
  return c;
}

std::string required(const nlohmann::json& c, const char* key, const char* flag) {
  require(c.contains(key) && !c[key].get<std::string>().empty(), ErrorKind::kBadFlag,
          std::string(flag) + " is required");
  return c[key].get<std::string>();
}

std::ofstream open_text(const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::kIoError, "cannot write " + path);
  out << std::setprecision(10);
  return out;
}

int cmd_gen(const nlohmann::json& c, std::ostream& out) {
  const std::string path = required(c, "out", "--out");
  const Environment env = environment_from_json(c["environment"]);
  const Dataset d = generate(env, c["n"].get<std::size_t>(), c["T"].get<std::size_t>(),
                             c["seed"].get<std::uint64_t>(), c["threads"].get<std::size_t>());
  write_dataset(d, path);
  out << "generated n=" << d.size() << " T=" << d.horizon() << " seed=" << d.seed << " sensors=";
  bool first = true;
  for (const auto& [name, arr] : d.observations) {
    out << (first ? "" : ",") << name << "[" << arr.width << "]";
    first = false;
  }
  out << " -> " << path << "\n";
  return kExitOk;
}

int cmd_train(const nlohmann::json& c, std::ostream& out, std::ostream& err) {
  const std::string path = required(c, "out", "--out");
  const Dataset d = read_dataset(required(c, "dataset", "--dataset"));
  TrainConfig config = TrainConfig::from_json(c["train"]);
  config.threads = c["threads"].get<std::size_t>();

  Checkpoint start;
  if (c.contains("checkpoint")) {
    start = read_checkpoint(c["checkpoint"].get<std::string>());
    out << "resuming from step " << start.step << "\n";
  } else {
    start.model = build_model(d, config);
  }
  std::ofstream trace = open_text(path + ".trace.txt");
  trace << "# step elbo kl recon rho_A\n";
  TrainResult result = train(std::move(start), d, config, [&](const TraceRow& row) {
    out << format_progress(row) << "\n";
    trace << row.step << " " << row.elbo << " " << row.kl << " " << row.recon << " "
          << row.diagnostics.spectral_radius_a << "\n";
  });
  for (const std::string& e : result.events) out << "event: " << e << "\n";
  write_checkpoint(result.checkpoint, path);
  out << "checkpoint step=" << result.checkpoint.step << " -> " << path << "\n";
  if (result.aborted) {
    err << "training aborted: " << *result.aborted << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_eval(const nlohmann::json& c, std::ostream& out) {
  const std::string path = required(c, "out", "--out");
  const Checkpoint ck = read_checkpoint(required(c, "checkpoint", "--checkpoint"));
  const Dataset d = read_dataset(required(c, "dataset", "--dataset"));
  const std::size_t horizon = c.value("horizon", d.horizon());
  const EvalResult r = evaluate_filter(ck.model, d, horizon, c["threads"].get<std::size_t>());

  std::ofstream metrics = open_text(path);
  metrics << "# component_mse";
  for (double v : r.component_mse) metrics << " " << v;
  metrics << "\n# position_mse " << r.position_mse << "\n# t position_sq_error\n";
  for (std::size_t t = 0; t < r.step_error.size(); ++t) metrics << t + 1 << " " << r.step_error[t] << "\n";
  out << "position_mse=" << r.position_mse << " horizon=" << horizon << " -> " << path << "\n";
  return kExitOk;
}

int cmd_export(const nlohmann::json& c, std::ostream& out) {
  const std::string path = required(c, "out", "--out");
  const Checkpoint ck = read_checkpoint(required(c, "checkpoint", "--checkpoint"));
  const Dataset d = read_dataset(required(c, "dataset", "--dataset"));
  const std::vector<Trajectory> trajs = make_trajectories(ck.model, d, false);
  const DynamicsParams psi = ck.model.dynamics();
  const Eigen::Index m = ck.model.state_dim();

  std::vector<std::vector<FilterBelief>> beliefs(trajs.size());
  parallel_for(trajs.size(), c["threads"].get<std::size_t>(), [&](std::size_t i) {
    beliefs[i] = filter_forward(psi, model_evidence(ck.model, trajs[i]), input_sequence(trajs[i]));
  });

  std::ofstream file = open_text(path);
  file << "trajectory step";
  for (Eigen::Index k = 0; k < m; ++k) file << " true_" << k;
  for (Eigen::Index k = 0; k < m; ++k) file << " mean_" << k;
  for (Eigen::Index k = 0; k < m; ++k) file << " var_" << k;
  file << "\n";
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const MatrixXd truth = d.states.block(i);
    for (std::size_t t = 0; t < beliefs[i].size(); ++t) {
      const GaussianMoment& post = beliefs[i][t].posterior;
      file << i << " " << t + 1;
      for (Eigen::Index k = 0; k < m; ++k) file << " " << truth(static_cast<Eigen::Index>(t), k);
      for (Eigen::Index k = 0; k < m; ++k) file << " " << post.mean(k);
      for (Eigen::Index k = 0; k < m; ++k) file << " " << post.cov(k, k);
      file << "\n";
    }
  }
  out << "exported " << d.size() * d.horizon() << " rows -> " << path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational state-space filters with linear latent dynamics"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path, "JSON config file");
    sub->add_option("--seed", f.seed, "Root seed");
    sub->add_option("--out", f.out, "Output path");
    sub->add_option("--threads", f.threads, "Worker threads (default: VSSF_THREADS or all cores)");
  };
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  common(gen);
  gen->add_option("--env", f.env, "Environment")->check(CLI::IsMember({"pendulum", "integrator", "linear"}));
  gen->add_option("--n", f.n, "Number of trajectories");
  gen->add_option("--T", f.horizon_T, "Trajectory length");

  CLI::App* tr = app.add_subcommand("train", "Train a model");
  common(tr);
  tr->add_option("--dataset", f.dataset, "Training dataset");
  tr->add_option("--checkpoint", f.checkpoint, "Checkpoint to resume from");
  tr->add_option("--supervision", f.supervision, "Supervision")->check(CLI::IsMember({"none", "partial", "full"}));
  tr->add_flag("--learn-dynamics", f.learn_dynamics, "Learn A, B and the process noise");
  tr->add_option("--samples", f.samples, "Monte-Carlo samples per trajectory");
  tr->add_option("--steps", f.steps, "Total optimizer steps");

  CLI::App* ev = app.add_subcommand("eval", "Evaluate image-only filtering");
  common(ev);
  ev->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  ev->add_option("--dataset", f.dataset, "Evaluation dataset with ground truth");
  ev->add_option("--horizon", f.horizon, "Evaluation horizon");

  CLI::App* ex = app.add_subcommand("export", "Export filtered latent states");
  common(ex);
  ex->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  ex->add_option("--dataset", f.dataset, "Dataset");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const nlohmann::json config = resolve(command, f);
    out << "config: " << config.dump() << "\n";
    if (command == "gen") return cmd_gen(config, out);
    if (command == "train") return cmd_train(config, out, err);
    if (command == "eval") return cmd_eval(config, out);
    return cmd_export(config, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "config: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace vssf
