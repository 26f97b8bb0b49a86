#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "crosslearn/core.hpp"
#include "crosslearn/data.hpp"
#include "crosslearn/model.hpp"
#include "crosslearn/projection.hpp"

namespace crosslearn {

/// eta_k = initial / (1 + decay * k); decay = 0 is a constant step.
struct LearningRate {
  double initial = 1e-3;
  double decay = 0.0;

  double at(std::size_t step) const { return initial / (1.0 + decay * static_cast<double>(step)); }
};

struct TrainConfig {
  LearningRate eta;
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  Centrality epsilon = Centrality::infinite();
  ProjectionSettings projection;
  std::uint64_t seed = 0;
  /// Project after every k-th gradient step.
  std::size_t project_every = 1;
  /// Per-task gradient norm cap; 0 disables clipping.
  double grad_clip = 0.0;
  /// 0 means max_i ceil(M_i / batch_size).
  std::size_t steps_per_epoch = 0;
  /// Seed each projection with the previous step's multipliers.
  bool warm_start = true;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Mean minibatch loss seen by each task during the epoch.
  std::vector<double> train_loss;
  /// Accuracy or MSE on the held-out sets; empty when none were given.
  std::vector<double> test_metric;
  /// max_i ||theta_i - theta_g|| at the end of the epoch.
  double max_center_distance = 0.0;
  std::size_t projections = 0;
  std::size_t projection_iterations = 0;
  std::size_t unconverged_projections = 0;
};

struct TrainResult {
  ParamBundle bundle;
  std::vector<EpochRecord> history;
};

/// Stochastic projected gradient descent over N task losses.
///
/// theta_g starts at zero and every theta_i at one shared draw theta^0 from
/// the model's initializer. Each step takes one minibatch per task (tasks
/// advance in lockstep; shorter datasets cycle with a fresh shuffle), applies
/// theta_i -= eta_k * grad_i, and then projects the whole bundle onto
/// ||theta_i - theta_g|| <= epsilon. theta_g only moves through the
/// projection. With infinite epsilon the projection is skipped and tasks train
/// independently.
///
/// Each task draws its shuffles from its own engine seeded by (seed, task_id),
/// so a task's trajectory under infinite epsilon does not depend on which
/// other tasks are present (given equal steps_per_epoch).
///
/// The datasets passed in must outlive the trainer.
class Trainer {
 public:
  Trainer(const Model& model, const Loss& loss, std::span<const TaskDataset> train,
          TrainConfig config, std::span<const TaskDataset> test = {});

  /// One lockstep gradient step for every task, followed by the projection when due.
  void step();
  /// Completes the current epoch (only the steps it still lacks) and records it.
  EpochRecord run_epoch();
  /// Runs epochs until config().epochs have completed.
  TrainResult run();

  const ParamBundle& bundle() const noexcept { return bundle_; }
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t global_step() const noexcept { return step_; }
  std::size_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  const std::vector<EpochRecord>& history() const noexcept { return history_; }
  const TrainConfig& config() const noexcept { return config_; }

  /// Everything needed to resume: config, counters, bundle, per-task RNG
  /// state and sampling position, warm-start multipliers and history.
  nlohmann::json checkpoint() const;
  /// Restores a checkpoint taken with the same model, loss, task ids and
  /// config (the epoch budget may differ, so a run can be extended).
  void restore(const nlohmann::json& checkpoint);

 private:
  struct TaskStream {
    std::mt19937_64 engine;
    std::vector<std::size_t> order;
    std::size_t next = 0;
  };

  std::vector<const Sample*> next_batch(std::size_t task);

  const Model& model_;
  const Loss& loss_;
  std::span<const TaskDataset> train_;
  std::span<const TaskDataset> test_;
  TrainConfig config_;

  ParamBundle bundle_;
  std::vector<TaskStream> streams_;
  std::vector<double> warm_mu_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
  std::vector<EpochRecord> history_;

  // Accumulators for the epoch in progress.
  std::vector<double> epoch_loss_;
  std::size_t epoch_steps_ = 0;
  std::size_t epoch_projections_ = 0;
  std::size_t epoch_projection_iters_ = 0;
  std::size_t epoch_unconverged_ = 0;
};

TrainResult train(std::span<const TaskDataset> train_sets, const Model& model, const Loss& loss,
                  const TrainConfig& config, std::span<const TaskDataset> test_sets = {});

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& checkpoint);
nlohmann::json load_checkpoint(const std::filesystem::path& path);

}  // namespace crosslearn
