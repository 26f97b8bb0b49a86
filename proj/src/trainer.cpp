#include "crosslearn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace crosslearn {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(eta.initial > 0.0) || !std::isfinite(eta.initial)) throw std::invalid_argument("eta must be positive");
  if (!(eta.decay >= 0.0)) throw std::invalid_argument("eta decay must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (project_every == 0) throw std::invalid_argument("project_every must be >= 1");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
}

namespace {

std::string step_rule_name(StepRule rule) {
  return rule == StepRule::kHarmonic ? "harmonic" : "backtracking";
}

StepRule step_rule_from(const std::string& name) {
  if (name == "harmonic") return StepRule::kHarmonic;
  if (name == "backtracking") return StepRule::kBacktracking;
  throw std::invalid_argument("unknown step rule '" + name + "'");
}

Centrality centrality_from_json(const json& j) {
  if (j.is_string()) return Centrality::parse(j.get<std::string>());
  if (j.is_number()) return Centrality::radius(j.get<double>());
  throw std::invalid_argument("epsilon must be a number or \"inf\"");
}

std::string engine_state(const std::mt19937_64& engine) {
  std::ostringstream out;
  out << engine;
  return out.str();
}

void load_engine(std::mt19937_64& engine, const std::string& state) {
  std::istringstream in(state);
  in >> engine;
  if (!in) throw std::invalid_argument("corrupt RNG state in checkpoint");
}

json epoch_to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"test_metric", r.test_metric},
              {"max_center_distance", r.max_center_distance},
              {"projections", r.projections},
              {"projection_iterations", r.projection_iterations},
              {"unconverged_projections", r.unconverged_projections}};
}

EpochRecord epoch_from_json(const json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch").get<std::size_t>();
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.test_metric = j.at("test_metric").get<std::vector<double>>();
  r.max_center_distance = j.at("max_center_distance").get<double>();
  r.projections = j.at("projections").get<std::size_t>();
  r.projection_iterations = j.at("projection_iterations").get<std::size_t>();
  r.unconverged_projections = j.at("unconverged_projections").get<std::size_t>();
  return r;
}

ParamBundle initial_bundle(const Model& model, std::size_t tasks, std::uint64_t seed) {
  std::mt19937_64 init_rng = seeded_engine(seed, {0x1a17u});
  ParamVector theta0(model.initial_params(init_rng));
  return ParamBundle(std::vector<ParamVector>(tasks, theta0), ParamVector::zeros(model.param_count()));
}

double max_center_distance(const ParamBundle& bundle) {
  double worst = 0.0;
  for (const auto& t : bundle.tasks()) worst = std::max(worst, distance(t.values(), bundle.central().values()));
  return worst;
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{{"eta", c.eta.initial},
              {"eta_decay", c.eta.decay},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"epsilon", c.epsilon.to_string()},
              {"seed", c.seed},
              {"project_every", c.project_every},
              {"grad_clip", c.grad_clip},
              {"steps_per_epoch", c.steps_per_epoch},
              {"warm_start", c.warm_start},
              {"projection",
               {{"delta", c.projection.delta},
                {"step_rule", step_rule_name(c.projection.step_rule)},
                {"initial_step", c.projection.initial_step},
                {"max_iters", c.projection.max_iters},
                {"feasibility_tol", c.projection.feasibility_tol}}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.eta.initial = j.value("eta", c.eta.initial);
  c.eta.decay = j.value("eta_decay", c.eta.decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("epsilon")) c.epsilon = centrality_from_json(j.at("epsilon"));
  c.seed = j.value("seed", c.seed);
  c.project_every = j.value("project_every", c.project_every);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.warm_start = j.value("warm_start", c.warm_start);
  if (j.contains("projection")) {
    const json& p = j.at("projection");
    c.projection.delta = p.value("delta", c.projection.delta);
    c.projection.step_rule = step_rule_from(p.value("step_rule", step_rule_name(c.projection.step_rule)));
    c.projection.initial_step = p.value("initial_step", c.projection.initial_step);
    c.projection.max_iters = p.value("max_iters", c.projection.max_iters);
    c.projection.feasibility_tol = p.value("feasibility_tol", c.projection.feasibility_tol);
  }
  c.validate();
  return c;
}

Trainer::Trainer(const Model& model, const Loss& loss, std::span<const TaskDataset> train,
                 TrainConfig config, std::span<const TaskDataset> test)
    : model_(model),
      loss_(loss),
      train_(train),
      test_(test),
      config_(std::move(config)),
      bundle_(initial_bundle(model, std::max<std::size_t>(train.size(), 1), config_.seed)) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("need at least one task dataset");
  if (!test_.empty() && test_.size() != train_.size()) {
    throw std::invalid_argument("test sets must match the training tasks one to one");
  }
  std::set<int> ids;
  for (const auto& task : train_) {
    if (task.samples.empty()) {
      throw std::invalid_argument("task " + std::to_string(task.task_id) + " has no training samples");
    }
    if (task.input_dim != model_.input_dim() || task.output_dim != model_.output_dim()) {
      throw DimensionError("task " + std::to_string(task.task_id) + " does not match " + model_.describe());
    }
    if (!ids.insert(task.task_id).second) {
      throw std::invalid_argument("duplicate task id " + std::to_string(task.task_id));
    }
  }

  std::size_t longest = 0;
  for (const auto& task : train_) {
    longest = std::max(longest, (task.samples.size() + config_.batch_size - 1) / config_.batch_size);
    TaskStream stream;
    stream.engine = seeded_engine(config_.seed, {1u, static_cast<std::uint32_t>(task.task_id)});
    stream.order.resize(task.samples.size());
    std::iota(stream.order.begin(), stream.order.end(), 0);
    std::shuffle(stream.order.begin(), stream.order.end(), stream.engine);
    streams_.push_back(std::move(stream));
  }
  steps_per_epoch_ = config_.steps_per_epoch > 0 ? config_.steps_per_epoch : longest;
  epoch_loss_.assign(train_.size(), 0.0);
}

std::vector<const Sample*> Trainer::next_batch(std::size_t task) {
  TaskStream& stream = streams_[task];
  const auto& samples = train_[task].samples;
  std::vector<const Sample*> batch;
  batch.reserve(config_.batch_size);
  while (batch.size() < config_.batch_size) {
    if (stream.next == stream.order.size()) {
      std::shuffle(stream.order.begin(), stream.order.end(), stream.engine);
      stream.next = 0;
    }
    batch.push_back(&samples[stream.order[stream.next++]]);
  }
  return batch;
}

void Trainer::step() {
  const double eta = config_.eta.at(step_);
  for (std::size_t i = 0; i < train_.size(); ++i) {
    auto batch = next_batch(i);
    auto theta = bundle_.task(i).values();
    BatchGradient g;
    try {
      g = batch_gradient(model_, loss_, theta, batch);
    } catch (const DivergenceError& e) {
      throw DivergenceError("task " + std::to_string(train_[i].task_id) + ", step " +
                            std::to_string(step_) + ": " + e.what());
    }
    if (config_.grad_clip > 0.0) {
      const double len = norm(g.gradient);
      if (len > config_.grad_clip) {
        for (double& v : g.gradient) v *= config_.grad_clip / len;
      }
    }
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= eta * g.gradient[k];
    if (!bundle_.task(i).all_finite()) {
      throw DivergenceError("task " + std::to_string(train_[i].task_id) + ", step " +
                            std::to_string(step_) + ": parameters became non-finite");
    }
    epoch_loss_[i] += g.loss;
  }

  ++step_;
  ++epoch_steps_;
  if (!config_.epsilon.is_infinite() && step_ % config_.project_every == 0) {
    ProjectionSettings settings = config_.projection;
    if (config_.warm_start && !warm_mu_.empty()) settings.mu_init = warm_mu_;
    ProjectionResult result = project(bundle_, config_.epsilon, settings);
    bundle_ = std::move(result.output);
    warm_mu_ = std::move(result.state.mu);
    ++epoch_projections_;
    epoch_projection_iters_ += result.iterations;
    if (!result.converged) ++epoch_unconverged_;
  }
}

EpochRecord Trainer::run_epoch() {
  while (epoch_steps_ < steps_per_epoch_) step();

  EpochRecord record;
  record.epoch = ++epoch_;
  record.train_loss.resize(train_.size());
  for (std::size_t i = 0; i < train_.size(); ++i) {
    record.train_loss[i] = epoch_steps_ > 0 ? epoch_loss_[i] / static_cast<double>(epoch_steps_) : 0.0;
  }
  for (std::size_t i = 0; i < test_.size(); ++i) {
    record.test_metric.push_back(test_[i].samples.empty()
                                     ? std::nan("")
                                     : evaluate(model_, bundle_.task(i).values(), test_[i]));
  }
  record.max_center_distance = max_center_distance(bundle_);
  record.projections = epoch_projections_;
  record.projection_iterations = epoch_projection_iters_;
  record.unconverged_projections = epoch_unconverged_;

  std::fill(epoch_loss_.begin(), epoch_loss_.end(), 0.0);
  epoch_steps_ = epoch_projections_ = epoch_projection_iters_ = epoch_unconverged_ = 0;
  history_.push_back(record);
  return record;
}

TrainResult Trainer::run() {
  while (epoch_ < config_.epochs) run_epoch();
  return TrainResult{bundle_, history_};
}

json Trainer::checkpoint() const {
  json tasks = json::array();
  for (std::size_t i = 0; i < train_.size(); ++i) {
    tasks.push_back({{"task_id", train_[i].task_id},
                     {"engine", engine_state(streams_[i].engine)},
                     {"order", streams_[i].order},
                     {"next", streams_[i].next}});
  }
  json params = json::array();
  for (const auto& t : bundle_.tasks()) params.push_back(std::vector<double>(t.values().begin(), t.values().end()));
  json history = json::array();
  for (const auto& r : history_) history.push_back(epoch_to_json(r));
  const auto center = bundle_.central().values();
  return json{{"format", "crosslearn-checkpoint"},
              {"version", kCheckpointVersion},
              {"model", model_.describe()},
              {"loss", loss_.name()},
              {"config", to_json(config_)},
              {"epoch", epoch_},
              {"step", step_},
              {"steps_per_epoch", steps_per_epoch_},
              {"bundle", {{"central", std::vector<double>(center.begin(), center.end())}, {"tasks", params}}},
              {"tasks", tasks},
              {"warm_start_mu", warm_mu_},
              {"history", history},
              {"epoch_progress",
               {{"loss", epoch_loss_},
                {"steps", epoch_steps_},
                {"projections", epoch_projections_},
                {"projection_iterations", epoch_projection_iters_},
                {"unconverged", epoch_unconverged_}}}};
}

void Trainer::restore(const json& cp) {
  if (cp.value("format", "") != "crosslearn-checkpoint") throw std::invalid_argument("not a checkpoint");
  if (cp.at("version").get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("unsupported checkpoint version");
  }
  if (cp.at("model").get<std::string>() != model_.describe()) {
    throw std::invalid_argument("checkpoint was written for " + cp.at("model").get<std::string>());
  }
  if (cp.at("loss").get<std::string>() != loss_.name()) throw std::invalid_argument("checkpoint loss differs");
  json saved = cp.at("config");
  json current = to_json(config_);
  saved.erase("epochs");
  current.erase("epochs");
  if (saved != current) throw std::invalid_argument("checkpoint config differs from the trainer config");
  if (cp.at("steps_per_epoch").get<std::size_t>() != steps_per_epoch_) {
    throw std::invalid_argument("checkpoint steps_per_epoch differs");
  }

  const json& tasks = cp.at("tasks");
  if (tasks.size() != train_.size()) throw std::invalid_argument("checkpoint task count differs");
  std::vector<TaskStream> streams(train_.size());
  for (std::size_t i = 0; i < train_.size(); ++i) {
    if (tasks[i].at("task_id").get<int>() != train_[i].task_id) {
      throw std::invalid_argument("checkpoint task ids differ");
    }
    load_engine(streams[i].engine, tasks[i].at("engine").get<std::string>());
    streams[i].order = tasks[i].at("order").get<std::vector<std::size_t>>();
    streams[i].next = tasks[i].at("next").get<std::size_t>();
    if (streams[i].order.size() != train_[i].samples.size() || streams[i].next > streams[i].order.size()) {
      throw std::invalid_argument("checkpoint sampling state does not fit the dataset");
    }
  }

  std::vector<ParamVector> params;
  for (const auto& t : cp.at("bundle").at("tasks")) params.emplace_back(t.get<std::vector<double>>());
  ParamBundle bundle(std::move(params), ParamVector(cp.at("bundle").at("central").get<std::vector<double>>()));
  if (bundle.num_tasks() != train_.size() || bundle.dim() != model_.param_count()) {
    throw DimensionError("checkpoint bundle shape differs");
  }

  std::vector<EpochRecord> history;
  for (const auto& r : cp.at("history")) history.push_back(epoch_from_json(r));

  bundle_ = std::move(bundle);
  streams_ = std::move(streams);
  warm_mu_ = cp.at("warm_start_mu").get<std::vector<double>>();
  epoch_ = cp.at("epoch").get<std::size_t>();
  step_ = cp.at("step").get<std::size_t>();
  history_ = std::move(history);
  const json& progress = cp.at("epoch_progress");
  epoch_loss_ = progress.at("loss").get<std::vector<double>>();
  if (epoch_loss_.size() != train_.size()) throw std::invalid_argument("checkpoint epoch progress is corrupt");
  epoch_steps_ = progress.at("steps").get<std::size_t>();
  epoch_projections_ = progress.at("projections").get<std::size_t>();
  epoch_projection_iters_ = progress.at("projection_iterations").get<std::size_t>();
  epoch_unconverged_ = progress.at("unconverged").get<std::size_t>();
}

TrainResult train(std::span<const TaskDataset> train_sets, const Model& model, const Loss& loss,
                  const TrainConfig& config, std::span<const TaskDataset> test_sets) {
  Trainer trainer(model, loss, train_sets, config, test_sets);
  return trainer.run();
}

void save_checkpoint(const std::filesystem::path& path, const json& checkpoint) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint.dump(1) << '\n';
}

json load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

}  // namespace crosslearn
