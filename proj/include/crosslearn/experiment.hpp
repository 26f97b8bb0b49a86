#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "crosslearn/core.hpp"
#include "crosslearn/data.hpp"
#include "crosslearn/gaussian.hpp"
#include "crosslearn/model.hpp"
#include "crosslearn/trainer.hpp"

namespace crosslearn::experiment {

enum class Mode { kGaussianSweep, kEpsilonSweep, kSingleTrain, kProjectCheck };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

/// 0, 0.25, ..., 6.
std::vector<double> default_gaussian_grid();

struct GaussianSweepConfig {
  gaussian::Problem problem{2.0, 1.0, 1};
  std::vector<double> grid = default_gaussian_grid();
  std::int64_t trials = 100000;
};

struct DataConfig {
  bool from_csv = false;
  std::filesystem::path csv_path;
  CsvSchema schema;
  SyntheticSpec synthetic;
  /// Synthetic only: extra samples drawn per task and held out, so each task
  /// trains on exactly samples_per_task[i]. 0 falls back to train_fraction.
  std::size_t holdout_per_task = 0;
  double train_fraction = 0.8;
  /// Fit mean/std on the training splits and apply it to both splits.
  bool standardize = false;
};

struct ModelConfig {
  std::string type = "linear";  // or "mlp"
  std::size_t hidden = 64;
  /// Empty picks cross_entropy for classification, squared_error for regression.
  std::string loss;
};

struct ProjectCheckConfig {
  std::size_t trials = 100;
  std::size_t max_tasks = 5;
  std::size_t max_dim = 10;
  double scale = 1.0;
  double objective_tol = 1e-5;
  double feasibility_tol = 1e-6;
};

struct ExperimentConfig {
  Mode mode = Mode::kGaussianSweep;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "results";
  GaussianSweepConfig gaussian;
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::vector<Centrality> epsilon_grid{Centrality::radius(0.0), Centrality::radius(0.1), Centrality::radius(0.3),
                                       Centrality::radius(1.0), Centrality::radius(3.0), Centrality::infinite()};
  std::size_t repeats = 1;
  /// 0 means hardware concurrency; CROSSLEARN_WORKERS caps it further.
  std::size_t workers = 0;
  ProjectCheckConfig project_check;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

/// Worker count after applying the CROSSLEARN_WORKERS cap.
std::size_t effective_workers(std::size_t requested);

/// Seed for repeat r, derived from the master seed.
std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat);

// --- Gaussian sweep --------------------------------------------------------

struct GaussianRow {
  double epsilon;
  double closed_form;
  double monte_carlo;
  double std_error;
};

struct GaussianClaims {
  double sigma_mean_sq;
  /// mse(eps0) / sigma_M^2; at most 3/4.
  double claim1_ratio;
  bool claim1_holds;
  /// d mse / d eps at 0; negative when eps0 > 0.
  double derivative_at_zero;
  /// Some grid point eps > 0 beats eps = 0.
  bool claim2_holds;
  double argmin_epsilon;
  double min_mse;
  /// mse at the largest grid point over sigma_M^2.
  double plateau_ratio;
  /// max |MC - closed form| / std error over the grid.
  double max_z;
};

struct GaussianSweepResult {
  std::vector<GaussianRow> rows;
  GaussianClaims claims;
};

GaussianSweepResult run_gaussian_sweep(const GaussianSweepConfig& config, std::uint64_t seed);

// --- Data preparation --------------------------------------------------------

struct PreparedData {
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;
  std::vector<std::string> warnings;
};

PreparedData prepare_data(const DataConfig& config, std::uint64_t seed);
std::unique_ptr<Model> make_model(const ModelConfig& config, std::size_t input_dim, std::size_t output_dim);
std::unique_ptr<Loss> make_task_loss(const ModelConfig& config, TaskKind kind);

// --- Epsilon sweep -----------------------------------------------------------

struct RunOutcome {
  Centrality epsilon = Centrality::infinite();
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string error;
  std::vector<double> test_metric;
  std::vector<double> train_loss;
  double max_center_distance = 0.0;
  std::size_t unconverged_projections = 0;
};

struct EpsilonSummary {
  Centrality epsilon = Centrality::infinite();
  /// Mean over repeats of the task-averaged held-out metric.
  double mean_metric = 0.0;
  /// Spread across tasks of the per-task means.
  double task_std = 0.0;
  /// Spread across repeats of the task-averaged metric.
  double repeat_std = 0.0;
  std::vector<double> task_mean;
  std::size_t completed = 0;
  std::size_t diverged = 0;
};

struct Improvement {
  int task_id;
  std::size_t train_size;
  double agnostic;
  double chosen;
  /// Percent improvement over agnostic (sign-adjusted so positive is better).
  double percent;
};

struct EpsilonSweepResult {
  std::vector<int> task_ids;
  std::vector<std::size_t> train_sizes;
  bool higher_is_better = true;
  std::string metric;
  std::vector<RunOutcome> runs;
  std::vector<EpsilonSummary> summary;
  /// Index into summary of the best finite eps > 0, or -1 when there is none.
  int best_finite = -1;
  /// Per-task improvement of summary[best_finite] over eps = inf; empty
  /// without both.
  std::vector<Improvement> improvement;

  bool any_diverged() const;
};

EpsilonSweepResult run_epsilon_sweep(const ExperimentConfig& config);

// --- Single training run -------------------------------------------------------

struct SingleTrainResult {
  PreparedData data;
  TrainResult result;
  std::string metric;
};

/// Trains at config.train.epsilon. When `resume` is non-empty the trainer is
/// restored from that checkpoint first; when `checkpoint` is non-empty the
/// final state is written there.
SingleTrainResult run_single_train(const ExperimentConfig& config, const std::filesystem::path& resume = {},
                                   const std::filesystem::path& checkpoint = {});

// --- Projection check ------------------------------------------------------------

struct ProjectCheckTrial {
  std::size_t tasks;
  std::size_t dim;
  double epsilon;
  double objective_gap;
  double feasibility_violation;
  /// |<mu, dL/dmu>| / delta at the returned multipliers.
  double slackness_ratio;
  std::size_t iterations;
  bool converged;
};

struct ProjectCheckReport {
  std::vector<ProjectCheckTrial> trials;
  double max_objective_gap = 0.0;
  double max_feasibility_violation = 0.0;
  double max_slackness_ratio = 0.0;
  bool passed = true;
};

ProjectCheckReport run_project_check(const ProjectCheckConfig& config, std::uint64_t seed);

// --- Output ------------------------------------------------------------------------

/// Shortest round-trip decimal, "inf", "-inf" or "nan".
std::string format_number(double value);

void write_gaussian_outputs(const GaussianSweepResult& result, const ExperimentConfig& config);
void write_epsilon_outputs(const EpsilonSweepResult& result, const ExperimentConfig& config);
void write_train_outputs(const SingleTrainResult& result, const ExperimentConfig& config);
void write_project_check_outputs(const ProjectCheckReport& report, const ExperimentConfig& config);

}  // namespace crosslearn::experiment
