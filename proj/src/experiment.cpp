#include "crosslearn/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "crosslearn/projection.hpp"

namespace crosslearn::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kGaussianSweep: return "gaussian-sweep";
    case Mode::kEpsilonSweep: return "epsilon-sweep";
    case Mode::kSingleTrain: return "train";
    case Mode::kProjectCheck: return "project-check";
  }
  return "unknown";
}

Mode mode_from_string(const std::string& name) {
  if (name == "gaussian-sweep") return Mode::kGaussianSweep;
  if (name == "epsilon-sweep") return Mode::kEpsilonSweep;
  if (name == "train" || name == "single-train") return Mode::kSingleTrain;
  if (name == "project-check") return Mode::kProjectCheck;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

std::vector<double> default_gaussian_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 24; ++k) grid.push_back(0.25 * k);
  return grid;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

Centrality centrality_from(const json& j) {
  if (j.is_string()) return Centrality::parse(j.get<std::string>());
  if (j.is_number()) return Centrality::radius(j.get<double>());
  throw std::invalid_argument("epsilon values must be numbers or \"inf\"");
}

json centrality_json(const Centrality& c) {
  if (c.is_infinite()) return "inf";
  return c.value();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

void write_sidecar(const ExperimentConfig& config, const std::string& stem) {
  json j = to_json(config);
  j["mode"] = to_string(config.mode);
  write_json(config.out_dir / (stem + ".config.json"), j);
}

std::string metric_name(TaskKind kind) { return kind == TaskKind::kClassification ? "accuracy" : "mse"; }

}  // namespace

void ExperimentConfig::validate() const {
  gaussian.problem.validate();
  if (gaussian.grid.empty()) throw std::invalid_argument("gaussian grid must not be empty");
  for (double e : gaussian.grid) {
    if (!(e >= 0.0) || !std::isfinite(e)) throw std::invalid_argument("gaussian grid values must be finite and >= 0");
  }
  if (gaussian.trials < 1) throw std::invalid_argument("gaussian trials must be >= 1");
  if (data.from_csv) {
    if (data.csv_path.empty()) throw std::invalid_argument("data.path is required for csv data");
  } else {
    data.synthetic.validate();
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0, 1]");
  }
  if (model.type != "linear" && model.type != "mlp") throw std::invalid_argument("model type must be linear or mlp");
  if (model.type == "mlp" && model.hidden == 0) throw std::invalid_argument("mlp hidden width must be positive");
  if (!model.loss.empty()) make_loss(model.loss);
  train.validate();
  if (epsilon_grid.empty()) throw std::invalid_argument("epsilon grid must not be empty");
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  if (project_check.trials == 0) throw std::invalid_argument("project_check trials must be >= 1");
  if (project_check.max_tasks == 0 || project_check.max_dim == 0) {
    throw std::invalid_argument("project_check sizes must be positive");
  }
  if (project_check.max_tasks * project_check.max_dim > kBruteForceBudget) {
    throw std::invalid_argument("project_check exceeds the oracle budget N*S <= " +
                                std::to_string(kBruteForceBudget));
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  check_keys(j,
             {"mode", "seed", "out_dir", "gaussian", "data", "model", "train", "epsilon_grid", "repeats", "workers",
              "project_check"},
             "config");
  ExperimentConfig c;
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.seed = j.value("seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();

  if (j.contains("gaussian")) {
    const json& g = j.at("gaussian");
    check_keys(g, {"epsilon0", "sigma", "samples", "grid", "trials"}, "gaussian");
    c.gaussian.problem.epsilon0 = g.value("epsilon0", c.gaussian.problem.epsilon0);
    c.gaussian.problem.sigma = g.value("sigma", c.gaussian.problem.sigma);
    c.gaussian.problem.samples = g.value("samples", c.gaussian.problem.samples);
    if (g.contains("grid")) c.gaussian.grid = g.at("grid").get<std::vector<double>>();
    c.gaussian.trials = g.value("trials", c.gaussian.trials);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d,
               {"source", "path", "kind", "num_tasks", "input_dim", "output_dim", "num_classes", "samples_per_task",
                "relatedness", "weight_scale", "label_noise", "noise_std", "holdout_per_task", "train_fraction",
                "standardize"},
               "data");
    const std::string source = d.value("source", "synthetic");
    if (source != "synthetic" && source != "csv") throw std::invalid_argument("data.source must be synthetic or csv");
    c.data.from_csv = source == "csv";
    const TaskKind kind = task_kind_from_string(d.value("kind", to_string(TaskKind::kClassification)));
    if (c.data.from_csv) {
      c.data.csv_path = d.at("path").get<std::string>();
      c.data.schema.kind = kind;
      c.data.schema.input_dim = d.at("input_dim").get<std::size_t>();
      c.data.schema.num_classes = d.value("num_classes", std::size_t{0});
    } else {
      SyntheticSpec& s = c.data.synthetic;
      s.kind = kind;
      s.num_tasks = d.value("num_tasks", s.num_tasks);
      s.input_dim = d.value("input_dim", s.input_dim);
      s.output_dim = d.value("output_dim", s.output_dim);
      if (d.contains("samples_per_task")) {
        s.samples_per_task = d.at("samples_per_task").get<std::vector<std::size_t>>();
      } else {
        s.samples_per_task.assign(s.num_tasks, 100);
      }
      s.relatedness = d.value("relatedness", s.relatedness);
      s.weight_scale = d.value("weight_scale", s.weight_scale);
      s.label_noise = d.value("label_noise", s.label_noise);
      s.noise_std = d.value("noise_std", s.noise_std);
    }
    c.data.holdout_per_task = d.value("holdout_per_task", c.data.holdout_per_task);
    c.data.train_fraction = d.value("train_fraction", c.data.train_fraction);
    c.data.standardize = d.value("standardize", c.data.standardize);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"type", "hidden", "loss"}, "model");
    c.model.type = m.value("type", c.model.type);
    c.model.hidden = m.value("hidden", c.model.hidden);
    c.model.loss = m.value("loss", c.model.loss);
  }

  if (j.contains("train")) {
    json t = j.at("train");
    check_keys(t,
               {"eta", "eta_decay", "epochs", "batch_size", "epsilon", "project_every", "grad_clip", "steps_per_epoch",
                "warm_start", "projection"},
               "train");
    c.train = train_config_from_json(t);
  }

  if (j.contains("epsilon_grid")) {
    c.epsilon_grid.clear();
    for (const auto& e : j.at("epsilon_grid")) c.epsilon_grid.push_back(centrality_from(e));
  }
  c.repeats = j.value("repeats", c.repeats);
  c.workers = j.value("workers", c.workers);

  if (j.contains("project_check")) {
    const json& p = j.at("project_check");
    check_keys(p, {"trials", "max_tasks", "max_dim", "scale", "objective_tol", "feasibility_tol"}, "project_check");
    c.project_check.trials = p.value("trials", c.project_check.trials);
    c.project_check.max_tasks = p.value("max_tasks", c.project_check.max_tasks);
    c.project_check.max_dim = p.value("max_dim", c.project_check.max_dim);
    c.project_check.scale = p.value("scale", c.project_check.scale);
    c.project_check.objective_tol = p.value("objective_tol", c.project_check.objective_tol);
    c.project_check.feasibility_tol = p.value("feasibility_tol", c.project_check.feasibility_tol);
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json data;
  if (c.data.from_csv) {
    data = {{"source", "csv"},
            {"path", c.data.csv_path.string()},
            {"kind", to_string(c.data.schema.kind)},
            {"input_dim", c.data.schema.input_dim},
            {"num_classes", c.data.schema.num_classes}};
  } else {
    const SyntheticSpec& s = c.data.synthetic;
    data = {{"source", "synthetic"},
            {"kind", to_string(s.kind)},
            {"num_tasks", s.num_tasks},
            {"input_dim", s.input_dim},
            {"output_dim", s.output_dim},
            {"samples_per_task", s.samples_per_task},
            {"relatedness", s.relatedness},
            {"weight_scale", s.weight_scale},
            {"label_noise", s.label_noise},
            {"noise_std", s.noise_std}};
  }
  data["holdout_per_task"] = c.data.holdout_per_task;
  data["train_fraction"] = c.data.train_fraction;
  data["standardize"] = c.data.standardize;

  json train = to_json(c.train);
  train.erase("seed");  // runs derive their seed from the master seed

  json grid = json::array();
  for (const auto& e : c.epsilon_grid) grid.push_back(centrality_json(e));

  return json{{"mode", to_string(c.mode)},
              {"seed", c.seed},
              {"out_dir", c.out_dir.string()},
              {"gaussian",
               {{"epsilon0", c.gaussian.problem.epsilon0},
                {"sigma", c.gaussian.problem.sigma},
                {"samples", c.gaussian.problem.samples},
                {"grid", c.gaussian.grid},
                {"trials", c.gaussian.trials}}},
              {"data", data},
              {"model", {{"type", c.model.type}, {"hidden", c.model.hidden}, {"loss", c.model.loss}}},
              {"train", train},
              {"epsilon_grid", grid},
              {"repeats", c.repeats},
              {"workers", c.workers},
              {"project_check",
               {{"trials", c.project_check.trials},
                {"max_tasks", c.project_check.max_tasks},
                {"max_dim", c.project_check.max_dim},
                {"scale", c.project_check.scale},
                {"objective_tol", c.project_check.objective_tol},
                {"feasibility_tol", c.project_check.feasibility_tol}}}};
}

std::size_t effective_workers(std::size_t requested) {
  std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CROSSLEARN_WORKERS"); env != nullptr && *env != '\0') {
    std::size_t cap = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, cap);
    if (ec != std::errc() || ptr != end || cap == 0) {
      throw std::invalid_argument("CROSSLEARN_WORKERS must be a positive integer");
    }
    n = std::min(n, cap);
  }
  return n;
}

std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat) {
  std::mt19937_64 engine = seeded_engine(master, {0x5eedu, static_cast<std::uint32_t>(repeat)});
  return engine();
}

// --- Gaussian sweep ------------------------------------------------------------

GaussianSweepResult run_gaussian_sweep(const GaussianSweepConfig& config, std::uint64_t seed) {
  config.problem.validate();
  if (config.grid.empty()) throw std::invalid_argument("gaussian grid must not be empty");
  GaussianSweepResult result;
  const gaussian::Problem& p = config.problem;
  const double var = p.sigma_mean() * p.sigma_mean();
  GaussianClaims& claims = result.claims;
  claims.sigma_mean_sq = var;
  claims.max_z = 0.0;
  claims.min_mse = std::numeric_limits<double>::infinity();
  for (double eps : config.grid) {
    if (!(eps >= 0.0) || !std::isfinite(eps)) throw std::invalid_argument("gaussian grid values must be finite and >= 0");
    const double exact = gaussian::mse_closed_form(p, eps);
    const auto mc = gaussian::monte_carlo_mse(p, eps, config.trials, seed);
    result.rows.push_back({eps, exact, mc.mse, mc.std_error});
    if (mc.std_error > 0.0) claims.max_z = std::max(claims.max_z, std::abs(mc.mse - exact) / mc.std_error);
    if (exact < claims.min_mse) {
      claims.min_mse = exact;
      claims.argmin_epsilon = eps;
    }
  }
  const double at_zero = gaussian::mse_closed_form(p, 0.0);
  claims.claim1_ratio = gaussian::mse_closed_form(p, p.epsilon0) / var;
  claims.claim1_holds = claims.claim1_ratio <= 0.75 + 1e-12;
  claims.derivative_at_zero = gaussian::mse_derivative(p, 0.0);
  claims.claim2_holds = false;
  if (p.epsilon0 > 0.0 && claims.derivative_at_zero < 0.0) {
    for (const auto& row : result.rows) {
      if (row.epsilon > 0.0 && row.closed_form < at_zero) claims.claim2_holds = true;
    }
  }
  const double largest = *std::max_element(config.grid.begin(), config.grid.end());
  claims.plateau_ratio = gaussian::mse_closed_form(p, largest) / var;
  return result;
}

// --- Data ------------------------------------------------------------------------

PreparedData prepare_data(const DataConfig& config, std::uint64_t seed) {
  PreparedData out;
  std::vector<TaskDataset> tasks;
  std::vector<double> fractions;
  if (config.from_csv) {
    tasks = load_csv(config.csv_path, config.schema);
    if (tasks.empty()) throw std::invalid_argument(config.csv_path.string() + " holds no samples");
    for (const auto& t : tasks) t.validate();
    fractions.assign(tasks.size(), config.train_fraction);
  } else {
    SyntheticSpec spec = config.synthetic;
    spec.seed = seed;
    for (auto& m : spec.samples_per_task) m += config.holdout_per_task;
    tasks = generate_synthetic(spec);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      fractions.push_back(config.holdout_per_task > 0
                              ? static_cast<double>(config.synthetic.samples_per_task[i]) /
                                    static_cast<double>(spec.samples_per_task[i])
                              : config.train_fraction);
    }
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto s = split(tasks[i], fractions[i], seed);
    out.train.push_back(std::move(s.train));
    out.test.push_back(std::move(s.test));
    for (auto& w : s.warnings) out.warnings.push_back(std::move(w));
  }
  if (config.standardize) {
    const auto st = fit_standardizer(out.train);
    st.apply(out.train);
    st.apply(out.test);
  }
  return out;
}

std::unique_ptr<Model> make_model(const ModelConfig& config, std::size_t input_dim, std::size_t output_dim) {
  if (config.type == "linear") return std::make_unique<LinearModel>(input_dim, output_dim);
  if (config.type == "mlp") return std::make_unique<MLPModel>(input_dim, config.hidden, output_dim);
  throw std::invalid_argument("unknown model type '" + config.type + "'");
}

std::unique_ptr<Loss> make_task_loss(const ModelConfig& config, TaskKind kind) {
  if (!config.loss.empty()) return make_loss(config.loss);
  return make_loss(kind == TaskKind::kClassification ? "cross_entropy" : "squared_error");
}

// --- Epsilon sweep -----------------------------------------------------------------

bool EpsilonSweepResult::any_diverged() const {
  return std::any_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.diverged; });
}

EpsilonSweepResult run_epsilon_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<PreparedData> data;
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < config.repeats; ++r) {
    seeds.push_back(repeat_seed(config.seed, r));
    data.push_back(prepare_data(config.data, seeds.back()));
  }
  const auto& first = data.front().train;
  const TaskKind kind = first.front().kind;
  const auto model = make_model(config.model, first.front().input_dim, first.front().output_dim);
  const auto loss = make_task_loss(config.model, kind);

  EpsilonSweepResult result;
  result.higher_is_better = kind == TaskKind::kClassification;
  result.metric = metric_name(kind);
  for (const auto& t : first) {
    result.task_ids.push_back(t.task_id);
    result.train_sizes.push_back(t.size());
  }

  // Job k covers grid point k % G of repeat k / G. Every grid point of a
  // repeat shares that repeat's data and training seed.
  const std::size_t grid = config.epsilon_grid.size();
  const std::size_t jobs = grid * config.repeats;
  result.runs.resize(jobs);
  std::vector<std::exception_ptr> failures(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs; k = next++) {
      RunOutcome& out = result.runs[k];
      out.epsilon = config.epsilon_grid[k % grid];
      out.repeat = k / grid;
      out.seed = seeds[out.repeat];
      TrainConfig tc = config.train;
      tc.epsilon = out.epsilon;
      tc.seed = out.seed;
      const PreparedData& d = data[out.repeat];
      try {
        auto trained = train(d.train, *model, *loss, tc, d.test);
        const EpochRecord& last = trained.history.back();
        out.test_metric = last.test_metric;
        out.train_loss = last.train_loss;
        out.max_center_distance = last.max_center_distance;
        for (const auto& rec : trained.history) out.unconverged_projections += rec.unconverged_projections;
      } catch (const DivergenceError& e) {
        out.diverged = true;
        out.error = e.what();
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(effective_workers(config.workers), jobs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  const std::size_t n = result.task_ids.size();
  for (std::size_t g = 0; g < grid; ++g) {
    EpsilonSummary s;
    s.epsilon = config.epsilon_grid[g];
    std::vector<double> per_repeat;
    std::vector<std::vector<double>> per_task(n);
    for (std::size_t r = 0; r < config.repeats; ++r) {
      const RunOutcome& run = result.runs[r * grid + g];
      if (run.diverged) {
        ++s.diverged;
        continue;
      }
      ++s.completed;
      per_repeat.push_back(mean_of(run.test_metric));
      for (std::size_t i = 0; i < n; ++i) per_task[i].push_back(run.test_metric[i]);
    }
    s.mean_metric = mean_of(per_repeat);
    s.repeat_std = std_of(per_repeat);
    for (const auto& v : per_task) s.task_mean.push_back(mean_of(v));
    s.task_std = s.completed > 0 ? std_of(s.task_mean) : std::nan("");
    result.summary.push_back(std::move(s));
  }

  auto better = [&](double a, double b) { return result.higher_is_better ? a > b : a < b; };
  int agnostic = -1;
  for (std::size_t g = 0; g < grid; ++g) {
    const auto& s = result.summary[g];
    if (s.epsilon.is_infinite()) {
      if (agnostic < 0) agnostic = static_cast<int>(g);
      continue;
    }
    if (s.epsilon.is_consensus() || s.completed == 0 || std::isnan(s.mean_metric)) continue;
    if (result.best_finite < 0 || better(s.mean_metric, result.summary[result.best_finite].mean_metric)) {
      result.best_finite = static_cast<int>(g);
    }
  }
  if (agnostic >= 0 && result.best_finite >= 0 && result.summary[agnostic].completed > 0) {
    const auto& base = result.summary[agnostic];
    const auto& chosen = result.summary[result.best_finite];
    for (std::size_t i = 0; i < n; ++i) {
      const double a = base.task_mean[i];
      const double c = chosen.task_mean[i];
      const double pct = 100.0 * (result.higher_is_better ? c - a : a - c) / std::abs(a);
      result.improvement.push_back({result.task_ids[i], result.train_sizes[i], a, c, pct});
    }
  }
  return result;
}

// --- Single training run ------------------------------------------------------------

SingleTrainResult run_single_train(const ExperimentConfig& config, const fs::path& resume, const fs::path& checkpoint) {
  config.validate();
  const std::uint64_t seed = repeat_seed(config.seed, 0);
  PreparedData data = prepare_data(config.data, seed);
  const auto& first = data.train.front();
  const auto model = make_model(config.model, first.input_dim, first.output_dim);
  const auto loss = make_task_loss(config.model, first.kind);
  TrainConfig tc = config.train;
  tc.seed = seed;
  Trainer trainer(*model, *loss, data.train, tc, data.test);
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  TrainResult trained = trainer.run();
  if (!checkpoint.empty()) save_checkpoint(checkpoint, trainer.checkpoint());
  const std::string metric = metric_name(first.kind);
  return SingleTrainResult{std::move(data), std::move(trained), metric};
}

// --- Projection check -----------------------------------------------------------------

ProjectCheckReport run_project_check(const ProjectCheckConfig& config, std::uint64_t seed) {
  if (config.max_tasks * config.max_dim > kBruteForceBudget) {
    throw std::invalid_argument("project-check exceeds the oracle budget N*S <= " + std::to_string(kBruteForceBudget));
  }
  if (config.max_tasks == 0 || config.max_dim == 0) throw std::invalid_argument("project-check sizes must be positive");
  std::mt19937_64 rng = seeded_engine(seed, {0xc4ecu});
  std::normal_distribution<double> normal(0.0, config.scale);
  std::uniform_int_distribution<std::size_t> tasks_dist(1, config.max_tasks);
  std::uniform_int_distribution<std::size_t> dim_dist(1, config.max_dim);
  std::uniform_real_distribution<double> frac(0.0, 1.2);

  ProjectCheckReport report;
  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::size_t n = tasks_dist(rng);
    const std::size_t s = dim_dist(rng);
    auto draw = [&] {
      std::vector<double> v(s);
      for (double& x : v) x = normal(rng);
      return ParamVector(std::move(v));
    };
    std::vector<ParamVector> vectors;
    for (std::size_t i = 0; i < n; ++i) vectors.push_back(draw());
    ParamBundle input(std::move(vectors), draw());
    double spread = 0.0;
    for (const auto& t : input.tasks()) spread = std::max(spread, distance(t.values(), input.central().values()));
    // Every tenth instance checks the consensus case.
    const double eps = trial % 10 == 9 ? 0.0 : frac(rng) * spread;

    const auto dual = project(input, eps);
    const auto oracle = brute_force_project(input, eps);
    ProjectCheckTrial t;
    t.tasks = n;
    t.dim = s;
    t.epsilon = eps;
    t.objective_gap =
        std::abs(projection_objective(dual.output, input) - projection_objective(oracle, input));
    t.feasibility_violation = std::max(0.0, feasibility(dual.output, Centrality::radius(eps)).worst_violation);
    if (dual.consensus_fallback) {
      t.slackness_ratio = 0.0;
    } else {
      const auto g = dual_subgradient(dual.state, eps);
      double inner = 0.0;
      for (std::size_t i = 0; i < n; ++i) inner += dual.state.mu[i] * g[i];
      t.slackness_ratio = std::abs(inner) / dual.delta;
    }
    t.iterations = dual.iterations;
    t.converged = dual.converged;
    report.max_objective_gap = std::max(report.max_objective_gap, t.objective_gap);
    report.max_feasibility_violation = std::max(report.max_feasibility_violation, t.feasibility_violation);
    report.max_slackness_ratio = std::max(report.max_slackness_ratio, t.slackness_ratio);
    report.trials.push_back(t);
  }
  report.passed = report.max_objective_gap <= config.objective_tol &&
                  report.max_feasibility_violation <= config.feasibility_tol && report.max_slackness_ratio <= 1.0 &&
                  std::all_of(report.trials.begin(), report.trials.end(),
                              [](const ProjectCheckTrial& t) { return t.converged; });
  return report;
}

// --- Output ---------------------------------------------------------------------------

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_gaussian_outputs(const GaussianSweepResult& result, const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / "gaussian_sweep.csv";
  auto out = open_output(csv);
  out << "epsilon,mse_closed_form,mse_monte_carlo,std_error\n";
  for (const auto& r : result.rows) {
    out << format_number(r.epsilon) << ',' << format_number(r.closed_form) << ',' << format_number(r.monte_carlo)
        << ',' << format_number(r.std_error) << '\n';
  }
  finish(out, csv);

  const GaussianClaims& c = result.claims;
  write_json(config.out_dir / "gaussian_claims.json",
             json{{"sigma_mean_sq", c.sigma_mean_sq},
                  {"claim1_ratio", c.claim1_ratio},
                  {"claim1_holds", c.claim1_holds},
                  {"derivative_at_zero", c.derivative_at_zero},
                  {"claim2_holds", c.claim2_holds},
                  {"argmin_epsilon", c.argmin_epsilon},
                  {"min_mse", c.min_mse},
                  {"plateau_ratio", c.plateau_ratio},
                  {"max_z", c.max_z}});
  write_sidecar(config, "gaussian_sweep");
}

void write_epsilon_outputs(const EpsilonSweepResult& result, const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  const fs::path summary = config.out_dir / "epsilon_sweep.csv";
  auto out = open_output(summary);
  out << "epsilon,metric,mean,task_std,repeat_std,completed,diverged";
  for (int id : result.task_ids) out << ",task_" << id;
  out << '\n';
  for (const auto& s : result.summary) {
    out << s.epsilon.to_string() << ',' << result.metric << ',' << format_number(s.mean_metric) << ','
        << format_number(s.task_std) << ',' << format_number(s.repeat_std) << ',' << s.completed << ','
        << s.diverged;
    for (double v : s.task_mean) out << ',' << format_number(v);
    out << '\n';
  }
  finish(out, summary);

  const fs::path runs = config.out_dir / "epsilon_sweep_runs.csv";
  auto rout = open_output(runs);
  rout << "epsilon,repeat,seed,task_id,train_size,test_metric,train_loss,unconverged_projections,status\n";
  for (const auto& r : result.runs) {
    for (std::size_t i = 0; i < result.task_ids.size(); ++i) {
      rout << r.epsilon.to_string() << ',' << r.repeat << ',' << r.seed << ',' << result.task_ids[i] << ','
           << result.train_sizes[i] << ',';
      if (r.diverged) {
        rout << "nan,nan," << r.unconverged_projections << ",diverged\n";
      } else {
        rout << format_number(r.test_metric[i]) << ',' << format_number(r.train_loss[i]) << ','
             << r.unconverged_projections << ",ok\n";
      }
    }
  }
  finish(rout, runs);

  const fs::path improvement = config.out_dir / "improvement.csv";
  auto iout = open_output(improvement);
  iout << "task_id,train_size,agnostic,epsilon,chosen,improvement_pct\n";
  for (const auto& imp : result.improvement) {
    iout << imp.task_id << ',' << imp.train_size << ',' << format_number(imp.agnostic) << ','
         << result.summary[result.best_finite].epsilon.to_string() << ',' << format_number(imp.chosen) << ','
         << format_number(imp.percent) << '\n';
  }
  finish(iout, improvement);
  write_sidecar(config, "epsilon_sweep");
}

void write_train_outputs(const SingleTrainResult& result, const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  const fs::path history = config.out_dir / "train_history.csv";
  auto out = open_output(history);
  out << "epoch,task_id,train_loss," << result.metric
      << ",max_center_distance,projection_iterations,unconverged_projections\n";
  for (const auto& rec : result.result.history) {
    for (std::size_t i = 0; i < rec.train_loss.size(); ++i) {
      out << rec.epoch << ',' << result.data.train[i].task_id << ',' << format_number(rec.train_loss[i]) << ','
          << (i < rec.test_metric.size() ? format_number(rec.test_metric[i]) : "nan") << ','
          << format_number(rec.max_center_distance) << ',' << rec.projection_iterations << ','
          << rec.unconverged_projections << '\n';
    }
  }
  finish(out, history);

  const auto& bundle = result.result.bundle;
  json tasks = json::array();
  for (std::size_t i = 0; i < bundle.num_tasks(); ++i) {
    const auto v = bundle.task(i).values();
    tasks.push_back({{"task_id", result.data.train[i].task_id}, {"theta", std::vector<double>(v.begin(), v.end())}});
  }
  const auto center = bundle.central().values();
  write_json(config.out_dir / "final_params.json",
             json{{"central", std::vector<double>(center.begin(), center.end())}, {"tasks", tasks}});
  write_sidecar(config, "train");
}

void write_project_check_outputs(const ProjectCheckReport& report, const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / "project_check.csv";
  auto out = open_output(csv);
  out << "trial,tasks,dim,epsilon,objective_gap,feasibility_violation,slackness_ratio,iterations,converged\n";
  for (std::size_t k = 0; k < report.trials.size(); ++k) {
    const auto& t = report.trials[k];
    out << k << ',' << t.tasks << ',' << t.dim << ',' << format_number(t.epsilon) << ','
        << format_number(t.objective_gap) << ',' << format_number(t.feasibility_violation) << ','
        << format_number(t.slackness_ratio) << ',' << t.iterations << ',' << (t.converged ? 1 : 0) << '\n';
  }
  finish(out, csv);
  write_json(config.out_dir / "project_check.json",
             json{{"trials", report.trials.size()},
                  {"max_objective_gap", report.max_objective_gap},
                  {"max_feasibility_violation", report.max_feasibility_violation},
                  {"max_slackness_ratio", report.max_slackness_ratio},
                  {"passed", report.passed}});
  write_sidecar(config, "project_check");
}

}  // namespace crosslearn::experiment
