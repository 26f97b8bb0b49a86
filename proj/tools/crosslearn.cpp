// Command-line harness: Gaussian study, epsilon sweeps, single training runs
// and the projection oracle check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "crosslearn/experiment.hpp"

namespace fs = std::filesystem;
using namespace crosslearn;
using namespace crosslearn::experiment;

namespace {

constexpr int kExitError = 1;
constexpr int kExitDiverged = 3;
constexpr int kExitCheckFailed = 4;

struct Options {
  std::string config_path;
  std::string mode;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> epsilons;
  std::string checkpoint;
  std::string resume;
};

ExperimentConfig resolve(const Options& opt, const std::string& subcommand) {
  nlohmann::json j = nlohmann::json::object();
  fs::path base = fs::current_path();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw std::runtime_error("cannot open config " + opt.config_path);
    j = nlohmann::json::parse(in);
    base = fs::absolute(opt.config_path).parent_path();
  }
  if (!subcommand.empty()) {
    j["mode"] = subcommand;
  } else if (!opt.mode.empty()) {
    j["mode"] = opt.mode;
  }
  if (!j.contains("mode")) throw std::invalid_argument("no mode given: use a subcommand, --mode or a config 'mode'");
  if (opt.seed) j["seed"] = *opt.seed;
  if (!opt.out_dir.empty()) j["out_dir"] = opt.out_dir;

  ExperimentConfig config = experiment_config_from_json(j);
  // CSV paths in a config file are relative to that file.
  if (config.data.from_csv && config.data.csv_path.is_relative()) config.data.csv_path = base / config.data.csv_path;

  if (!opt.epsilons.empty()) {
    std::vector<Centrality> grid;
    for (const auto& e : opt.epsilons) grid.push_back(Centrality::parse(e));
    switch (config.mode) {
      case Mode::kGaussianSweep:
        config.gaussian.grid.clear();
        for (const auto& c : grid) {
          if (c.is_infinite()) throw std::invalid_argument("gaussian-sweep needs finite epsilon values");
          config.gaussian.grid.push_back(c.value());
        }
        break;
      case Mode::kEpsilonSweep:
        config.epsilon_grid = grid;
        break;
      case Mode::kSingleTrain:
        if (grid.size() != 1) throw std::invalid_argument("train takes exactly one --epsilon");
        config.train.epsilon = grid.front();
        break;
      case Mode::kProjectCheck:
        throw std::invalid_argument("project-check does not take --epsilon");
    }
  }
  if ((!opt.checkpoint.empty() || !opt.resume.empty()) && config.mode != Mode::kSingleTrain) {
    throw std::invalid_argument("--checkpoint and --resume only apply to train");
  }
  if (config.data.from_csv && !fs::exists(config.data.csv_path)) {
    throw std::invalid_argument("data file " + config.data.csv_path.string() + " does not exist");
  }
  config.validate();
  return config;
}

int run_gaussian(const ExperimentConfig& config) {
  const auto result = run_gaussian_sweep(config.gaussian, config.seed);
  write_gaussian_outputs(result, config);
  const auto& c = result.claims;
  std::printf("grid points        %zu\n", result.rows.size());
  std::printf("mse(eps0)/sigma^2  %.6f  (%s)\n", c.claim1_ratio, c.claim1_holds ? "<= 3/4" : "ABOVE 3/4");
  std::printf("d mse/d eps at 0   %.6f\n", c.derivative_at_zero);
  std::printf("eps > 0 beats 0    %s\n", c.claim2_holds ? "yes" : "no");
  std::printf("argmin on grid     %g\n", c.argmin_epsilon);
  std::printf("plateau/sigma^2    %.6f\n", c.plateau_ratio);
  std::printf("max |z| MC vs exact %.3f\n", c.max_z);
  std::printf("wrote %s\n", (config.out_dir / "gaussian_sweep.csv").string().c_str());
  return 0;
}

int run_sweep(const ExperimentConfig& config) {
  const auto result = run_epsilon_sweep(config);
  write_epsilon_outputs(result, config);
  std::printf("%-10s %-10s %-10s %s\n", "epsilon", result.metric.c_str(), "task_std", "diverged");
  for (const auto& s : result.summary) {
    std::printf("%-10s %-10.5f %-10.5f %zu/%zu\n", s.epsilon.to_string().c_str(), s.mean_metric, s.task_std,
                s.diverged, s.diverged + s.completed);
  }
  if (result.best_finite >= 0) {
    std::printf("best finite eps > 0: %s\n", result.summary[result.best_finite].epsilon.to_string().c_str());
  }
  for (const auto& imp : result.improvement) {
    std::printf("task %d (M=%zu): %+.2f%% over agnostic\n", imp.task_id, imp.train_size, imp.percent);
  }
  std::printf("wrote %s\n", (config.out_dir / "epsilon_sweep.csv").string().c_str());
  if (result.any_diverged()) {
    for (const auto& r : result.runs) {
      if (r.diverged) {
        std::fprintf(stderr, "eps=%s repeat %zu diverged: %s\n", r.epsilon.to_string().c_str(), r.repeat,
                     r.error.c_str());
      }
    }
    return kExitDiverged;
  }
  return 0;
}

int run_train(const ExperimentConfig& config, const Options& opt) {
  const auto result = run_single_train(config, opt.resume, opt.checkpoint);
  for (const auto& w : result.data.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  write_train_outputs(result, config);
  const auto& last = result.result.history.back();
  std::printf("epsilon %s, %zu epochs\n", config.train.epsilon.to_string().c_str(), last.epoch);
  for (std::size_t i = 0; i < last.train_loss.size(); ++i) {
    std::printf("task %d: train loss %.5f, test %s %.5f\n", result.data.train[i].task_id, last.train_loss[i],
                result.metric.c_str(), i < last.test_metric.size() ? last.test_metric[i] : std::nan(""));
  }
  std::printf("max ||theta_i - theta_g|| = %.6g\n", last.max_center_distance);
  if (!opt.checkpoint.empty()) std::printf("checkpoint %s\n", opt.checkpoint.c_str());
  return 0;
}

int run_check(const ExperimentConfig& config) {
  const auto report = run_project_check(config.project_check, config.seed);
  write_project_check_outputs(report, config);
  std::printf("trials                     %zu\n", report.trials.size());
  std::printf("max objective discrepancy  %.3e\n", report.max_objective_gap);
  std::printf("max feasibility violation  %.3e\n", report.max_feasibility_violation);
  std::printf("max |<mu, g>| / delta      %.3f\n", report.max_slackness_ratio);
  std::printf("%s\n", report.passed ? "PASS" : "FAIL");
  return report.passed ? 0 : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-learning experiments"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Options opt;
  app.add_option("--config", opt.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--mode", opt.mode, "gaussian-sweep | epsilon-sweep | train | project-check");
  app.add_option("--out-dir", opt.out_dir, "Directory for results");
  app.add_option("--seed", opt.seed, "Master seed");
  app.add_option("--epsilon", opt.epsilons, "Epsilon value (repeatable; 'inf' allowed)")->take_all();
  app.add_option("--checkpoint", opt.checkpoint, "train: write the final trainer state here");
  app.add_option("--resume", opt.resume, "train: resume from this checkpoint")->check(CLI::ExistingFile);

  auto* gaussian = app.add_subcommand("gaussian-sweep", "MSE of the two-Gaussian estimator over an epsilon grid");
  auto* sweep = app.add_subcommand("epsilon-sweep", "Train at every epsilon of the grid");
  auto* train = app.add_subcommand("train", "One training run at a single epsilon");
  auto* check = app.add_subcommand("project-check", "Dual projection against the brute-force oracle");

  CLI11_PARSE(app, argc, argv);

  std::string subcommand;
  for (auto* sub : {gaussian, sweep, train, check}) {
    if (sub->parsed()) subcommand = sub->get_name();
  }

  try {
    const ExperimentConfig config = resolve(opt, subcommand);
    switch (config.mode) {
      case Mode::kGaussianSweep: return run_gaussian(config);
      case Mode::kEpsilonSweep: return run_sweep(config);
      case Mode::kSingleTrain: return run_train(config, opt);
      case Mode::kProjectCheck: return run_check(config);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
