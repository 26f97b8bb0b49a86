#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace crosslearn {

enum class TaskKind { kClassification, kRegression };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// One supervised pair. Classification uses `label`, regression uses `y`.
struct Sample {
  std::vector<double> x;
  int label = -1;
  std::vector<double> y;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class SplitTag { kAll, kTrain, kTest };

struct TaskDataset {
  int task_id = 0;
  TaskKind kind = TaskKind::kClassification;
  std::size_t input_dim = 0;
  /// Number of classes for classification, target dimension for regression.
  std::size_t output_dim = 1;
  SplitTag split = SplitTag::kAll;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  /// Throws std::invalid_argument on inconsistent dimensions or out-of-range labels.
  void validate() const;

  friend bool operator==(const TaskDataset&, const TaskDataset&) = default;
};

/// Synthetic multi-domain data. Each task's ground truth is a linear
/// (softmax or affine) model theta_i* = theta* + rho * u_i with u_i a random
/// unit direction, so rho controls how related the tasks are.
struct SyntheticSpec {
  TaskKind kind = TaskKind::kClassification;
  std::size_t num_tasks = 4;
  std::size_t input_dim = 5;
  /// Classes (classification) or target dimension (regression).
  std::size_t output_dim = 3;
  std::vector<std::size_t> samples_per_task{100, 100, 100, 100};
  double relatedness = 1.0;  // rho
  /// Std of the entries of the shared ground truth theta*.
  double weight_scale = 1.0;
  /// Probability that a classification label is replaced by a uniform draw.
  double label_noise = 0.0;
  /// Std of additive Gaussian noise on regression targets.
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  std::vector<TaskDataset> tasks;
  /// Ground-truth parameters per task in LinearModel layout.
  std::vector<std::vector<double>> task_truth;
  std::vector<double> shared_truth;
};

SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec);
std::vector<TaskDataset> generate_synthetic(const SyntheticSpec& spec);

struct SplitResult {
  TaskDataset train;
  TaskDataset test;
  std::vector<std::string> warnings;
};

/// Random partition, stratified by class for classification. The train size
/// is round(fraction * M) (kept in [1, M-1] when fraction < 1) and classes get
/// their share by largest remainder, so each class is within one sample of
/// its target. fraction == 1 leaves the test part empty and adds a warning.
SplitResult split(const TaskDataset& dataset, double train_fraction, std::uint64_t seed);

struct CsvSchema {
  TaskKind kind = TaskKind::kClassification;
  std::size_t input_dim = 0;
  /// Number of classes (classification); regression targets are scalar.
  std::size_t num_classes = 0;
};

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& message, std::size_t line);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Reads `task_id,label,x_1..x_P` rows (header required) and groups them by
/// task id in increasing order.
std::vector<TaskDataset> load_csv(const std::filesystem::path& path, const CsvSchema& schema);
void write_csv(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  void apply(std::vector<TaskDataset>& tasks) const;
};

/// Per-feature mean and std over every sample of `tasks`.
Standardizer fit_standardizer(const std::vector<TaskDataset>& tasks);

}  // namespace crosslearn
