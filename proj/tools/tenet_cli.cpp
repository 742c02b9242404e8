#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tenet/checkpoint.hpp"
#include "tenet/config.hpp"
#include "tenet/experiment.hpp"
#include "tenet/oracles.hpp"

namespace fs = std::filesystem;
using namespace tenet;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, Common& opts) {
  cmd->add_option("--config", opts.config, "Configuration file (key = value)");
  cmd->add_option("--seed", opts.seed, "Master seed, overrides the config");
  cmd->add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();
}

ExperimentConfig resolve(const Common& opts, std::optional<std::string> preset) {
  ExperimentConfig config = opts.config.empty() ? ExperimentConfig{} : load_config(opts.config);
  if (opts.seed) config.training.master_seed = *opts.seed;
  if (preset) config.preset = *preset;
  try {
    config.training.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

int report(const ExperimentOutcome& outcome, const fs::path& out_dir) {
  std::cout << "wrote " << (out_dir / "result.json").string() << "\n";
  return outcome.exit_code;
}

int cmd_gradcheck(const Common& opts, std::size_t scale) {
  const auto config = resolve(opts, std::nullopt);
  const auto rep = run_gradcheck(config.training.master_seed, scale);
  nlohmann::json out;
  out["instances"] = rep.instances;
  out["max_relative_error"] = rep.max_error;
  out["tolerance"] = rep.tolerance;
  out["passed"] = rep.passed();
  for (const auto& c : rep.cases) {
    out["families"].push_back({{"family", c.family}, {"instances", c.instances}, {"max_relative_error", c.max_error}});
    std::printf("%-24s %4zu instances  max rel err %.3e\n", c.family.c_str(), c.instances, c.max_error);
  }
  fs::create_directories(opts.out_dir);
  write_json(fs::path(opts.out_dir) / "gradcheck.json", out);
  std::printf("gradcheck: %zu instances, max rel err %.3e (tol %.0e) %s\n", rep.instances, rep.max_error,
              rep.tolerance, rep.passed() ? "PASS" : "FAIL");
  return rep.passed() ? exit_ok : exit_numeric;
}

int cmd_equivalence(const Common& opts) {
  ExperimentConfig config;
  if (opts.config.empty()) {
    config.training = equivalence_config(opts.seed.value_or(1), false);
    config.preset = "equivalence";
  } else {
    config = resolve(opts, std::string("equivalence"));
  }
  const auto outcome = run_experiment(config, opts.out_dir);
  for (const char* key : {"centralized", "fedavg"}) {
    const auto& e = outcome.result[key];
    std::printf("%-12s %3d rounds  max rel dev %.3e  %s\n", key, e["rounds"].get<int>(),
                e["max_relative_deviation"].get<double>(), e["passed"].get<bool>() ? "PASS" : "FAIL");
  }
  return report(outcome, opts.out_dir);
}

int cmd_eval(const Common& opts, const std::string& checkpoint) {
  const fs::path path = checkpoint.empty() ? fs::path(opts.out_dir) / "checkpoint.bin" : fs::path(checkpoint);
  SystemState state = load_checkpoint(path);
  ExperimentConfig config = opts.config.empty() ? parse_config(read_checkpoint(path).config_text) : load_config(opts.config);
  const Dataset data = build_dataset(config);
  nlohmann::json out;
  out["checkpoint"] = path.string();
  out["grid"] = evaluate_grid(state, data, config);
  for (const auto& row : out["grid"]) {
    std::printf("snr %-6s n_test %2zu accuracy %.4f\n", row["snr_db"].dump().c_str(), row["n_test"].get<std::size_t>(),
                row["accuracy"].get<double>());
  }
  fs::create_directories(opts.out_dir);
  write_json(fs::path(opts.out_dir) / "eval.json", out);
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-oriented edge network simulator"};
  app.require_subcommand(1);
  Common opts;
  std::string checkpoint;
  std::size_t scale = 1;

  auto* train = app.add_subcommand("train", "Train one configuration and evaluate the final grid");
  add_common(train, opts);
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval, opts);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (default: <out-dir>/checkpoint.bin)");
  auto* sweep = app.add_subcommand("sweep", "Run the sweep preset named in the config");
  add_common(sweep, opts);
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient oracle suite");
  add_common(grad, opts);
  grad->add_option("--scale", scale, "Multiplier on the number of instances")->capture_default_str();
  auto* equiv = app.add_subcommand("equivalence", "DTDE vs. centralized SGD trajectory check");
  add_common(equiv, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return report(run_experiment(resolve(opts, std::string("train")), opts.out_dir), opts.out_dir);
    if (*sweep) {
      const auto config = resolve(opts, std::nullopt);
      if (config.preset == "train" || config.preset == "equivalence") {
        throw ConfigError("sweep needs a sweep preset, config has preset = " + config.preset);
      }
      return report(run_experiment(config, opts.out_dir), opts.out_dir);
    }
    if (*eval) return cmd_eval(opts, checkpoint);
    if (*grad) return cmd_gradcheck(opts, scale);
    if (*equiv) return cmd_equivalence(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  }
  return exit_ok;
}
