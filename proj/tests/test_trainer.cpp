#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "crosslearn/trainer.hpp"

using namespace crosslearn;

namespace {

// Task i has the single sample y = c_i with no features, so a bias-only
// linear model under squared error sees the loss (theta_i - c_i)^2.
std::vector<TaskDataset> quadratic_tasks(std::vector<double> centers) {
  std::vector<TaskDataset> tasks;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    TaskDataset d;
    d.task_id = static_cast<int>(i);
    d.kind = TaskKind::kRegression;
    d.input_dim = 0;
    d.output_dim = 1;
    d.samples = {Sample{{}, -1, {centers[i]}}};
    tasks.push_back(d);
  }
  return tasks;
}

TrainConfig quadratic_config(Centrality eps) {
  TrainConfig c;
  c.eta.initial = 0.05;
  c.epochs = 400;
  c.epsilon = eps;
  return c;
}

double summed_quadratic(const ParamBundle& b, const std::vector<double>& centers) {
  double total = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) total += (b.task(i)[0] - centers[i]) * (b.task(i)[0] - centers[i]);
  return total;
}

// Grid oracle for min sum (t_i - c_i)^2 s.t. |t_i - g| <= eps: for fixed g the
// best t_i is c_i clipped to [g - eps, g + eps].
std::vector<double> grid_oracle(const std::vector<double>& centers, double eps) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> arg;
  for (int k = -2000; k <= 6000; ++k) {
    const double g = k * 1e-3;
    std::vector<double> t;
    double f = 0.0;
    for (double c : centers) {
      t.push_back(std::clamp(c, g - eps, g + eps));
      f += (t.back() - c) * (t.back() - c);
    }
    if (f < best - 1e-15) {
      best = f;
      arg = t;
    }
  }
  return arg;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_tasks = 3;
  spec.input_dim = 3;
  spec.output_dim = 3;
  spec.samples_per_task = {30, 12, 20};
  spec.relatedness = 1.0;
  spec.seed = 5;
  return spec;
}

}  // namespace

TEST_CASE("quadratics with a loose ball reach their own minimisers") {
  auto tasks = quadratic_tasks({0.0, 2.0});
  LinearModel model(0, 1);
  SquaredError loss;
  for (double eps : {2.0, 3.0}) {
    auto r = train(tasks, model, loss, quadratic_config(Centrality::radius(eps)));
    CHECK(r.bundle.task(0)[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-3));
    CHECK(r.bundle.task(1)[0] == doctest::Approx(2.0).epsilon(1e-3));
  }
}

TEST_CASE("quadratics under consensus meet at the averaged minimiser") {
  auto tasks = quadratic_tasks({0.0, 2.0});
  auto r = train(tasks, LinearModel(0, 1), SquaredError(), quadratic_config(Centrality::radius(0.0)));
  CHECK(r.bundle.task(0)[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.bundle.task(1)[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(r.bundle.central()[0] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("quadratics under a finite ball match the grid oracle") {
  const std::vector<double> centers{0.0, 2.0};
  auto tasks = quadratic_tasks(centers);
  // eps = 1 leaves (0, 2) feasible with theta_g = 1; eps = 0.5 binds at (0.5, 1.5).
  for (double eps : {1.0, 0.5, 0.25}) {
    CAPTURE(eps);
    auto expected = grid_oracle(centers, eps);
    auto r = train(tasks, LinearModel(0, 1), SquaredError(), quadratic_config(Centrality::radius(eps)));
    CHECK(r.bundle.task(0)[0] == doctest::Approx(expected[0]).scale(1.0).epsilon(1e-2));
    CHECK(r.bundle.task(1)[0] == doctest::Approx(expected[1]).epsilon(1e-2));
  }
  auto half = grid_oracle(centers, 0.5);
  CHECK(half[0] == doctest::Approx(0.5));
  CHECK(half[1] == doctest::Approx(1.5));
}

TEST_CASE("quadratic objective decreases across epochs") {
  const std::vector<double> centers{0.0, 2.0, -1.0};
  auto tasks = quadratic_tasks(centers);
  LinearModel model(0, 1);
  SquaredError loss;
  TrainConfig config = quadratic_config(Centrality::radius(0.4));
  config.epochs = 60;
  Trainer trainer(model, loss, tasks, config);
  double previous = summed_quadratic(trainer.bundle(), centers);
  for (int e = 0; e < 60; ++e) {
    trainer.run_epoch();
    const double now = summed_quadratic(trainer.bundle(), centers);
    CHECK(now <= previous + 1e-9);
    previous = now;
  }
}

TEST_CASE("infinite epsilon equals independent single-task runs bit for bit") {
  auto tasks = generate_synthetic(small_spec());
  MLPModel model(3, 8, 3);
  CrossEntropy loss;
  TrainConfig config;
  config.eta.initial = 0.05;
  config.epochs = 3;
  config.batch_size = 2;
  config.seed = 77;
  Trainer joint(model, loss, tasks, config);
  auto together = joint.run();

  config.steps_per_epoch = joint.steps_per_epoch();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    std::vector<TaskDataset> alone{tasks[i]};
    auto single = train(alone, model, loss, config);
    const auto a = together.bundle.task(i).values();
    const auto b = single.bundle.task(0).values();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    CHECK(together.history.back().train_loss[i] == single.history.back().train_loss[0]);
  }
}

TEST_CASE("epsilon zero keeps every task on the centre at every step") {
  auto tasks = generate_synthetic(small_spec());
  MLPModel model(3, 6, 3);
  CrossEntropy loss;
  TrainConfig config;
  config.eta.initial = 0.05;
  config.epsilon = Centrality::radius(0.0);
  Trainer trainer(model, loss, tasks, config);
  for (int s = 0; s < 60; ++s) {
    trainer.step();
    for (const auto& t : trainer.bundle().tasks()) {
      CHECK(distance(t.values(), trainer.bundle().central().values()) <= 1e-6);
    }
  }
}

TEST_CASE("finite epsilon keeps the bundle feasible after every step") {
  auto tasks = generate_synthetic(small_spec());
  LinearModel model(3, 3);
  CrossEntropy loss;
  for (double eps : {0.05, 0.3, 1.0}) {
    TrainConfig config;
    config.eta.initial = 0.1;
    config.epsilon = Centrality::radius(eps);
    Trainer trainer(model, loss, tasks, config);
    for (int s = 0; s < 80; ++s) {
      trainer.step();
      const auto f = feasibility(trainer.bundle(), config.epsilon);
      CHECK(f.worst_violation <= eps * config.projection.feasibility_tol * 3 + 1e-12);
    }
  }
}

TEST_CASE("records hold one entry per task and test metrics when test sets are given") {
  auto spec = small_spec();
  auto tasks = generate_synthetic(spec);
  std::vector<TaskDataset> train_sets, test_sets;
  for (const auto& t : tasks) {
    auto s = split(t, 0.8, 1);
    train_sets.push_back(s.train);
    test_sets.push_back(s.test);
  }
  TrainConfig config;
  config.eta.initial = 0.05;
  config.epochs = 2;
  config.epsilon = Centrality::radius(0.5);
  auto r = train(train_sets, LinearModel(3, 3), CrossEntropy(), config, test_sets);
  REQUIRE(r.history.size() == 2);
  for (const auto& rec : r.history) {
    CHECK(rec.train_loss.size() == 3);
    REQUIRE(rec.test_metric.size() == 3);
    for (double acc : rec.test_metric) CHECK((acc >= 0.0 && acc <= 1.0));
    CHECK(rec.projections == 24);
    CHECK(rec.max_center_distance <= 0.5 * (1 + 1e-6));
  }
  CHECK(r.history[1].epoch == 2);
}

TEST_CASE("training is deterministic given the seed") {
  auto tasks = generate_synthetic(small_spec());
  TrainConfig config;
  config.eta.initial = 0.05;
  config.epochs = 2;
  config.epsilon = Centrality::radius(0.2);
  config.seed = 3;
  MLPModel model(3, 4, 3);
  auto a = train(tasks, model, CrossEntropy(), config);
  auto b = train(tasks, model, CrossEntropy(), config);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto x = a.bundle.task(i).values();
    const auto y = b.bundle.task(i).values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
  config.seed = 4;
  auto c = train(tasks, model, CrossEntropy(), config);
  CHECK(c.bundle.task(0)[0] != a.bundle.task(0)[0]);
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run") {
  auto tasks = generate_synthetic(small_spec());
  MLPModel model(3, 5, 3);
  CrossEntropy loss;
  TrainConfig config;
  config.eta = {0.05, 0.01};
  config.epochs = 4;
  config.epsilon = Centrality::radius(0.3);
  config.seed = 21;

  auto straight = train(tasks, model, loss, config);

  Trainer first(model, loss, tasks, config);
  first.run_epoch();
  first.step();  // stop mid-epoch, not on a boundary
  first.step();
  const auto path = std::filesystem::temp_directory_path() / "crosslearn_test_checkpoint.json";
  save_checkpoint(path, first.checkpoint());

  Trainer resumed(model, loss, tasks, config);
  resumed.restore(load_checkpoint(path));
  CHECK(resumed.global_step() == first.global_step());
  auto r = resumed.run();
  REQUIRE(r.history.size() == straight.history.size());
  for (std::size_t e = 0; e < r.history.size(); ++e) {
    CHECK(r.history[e].train_loss == straight.history[e].train_loss);
    CHECK(r.history[e].projection_iterations == straight.history[e].projection_iterations);
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto x = straight.bundle.task(i).values();
    const auto y = r.bundle.task(i).values();
    CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

TEST_CASE("checkpoint taken at an epoch boundary resumes through run()") {
  auto tasks = generate_synthetic(small_spec());
  LinearModel model(3, 3);
  CrossEntropy loss;
  TrainConfig config;
  config.eta.initial = 0.05;
  config.epochs = 3;
  config.epsilon = Centrality::radius(0.2);

  auto straight = train(tasks, model, loss, config);

  Trainer first(model, loss, tasks, config);
  first.run_epoch();
  Trainer resumed(model, loss, tasks, config);
  resumed.restore(first.checkpoint());
  auto r = resumed.run();
  REQUIRE(r.history.size() == 3);
  CHECK(r.history.back().train_loss == straight.history.back().train_loss);
  const auto x = straight.bundle.central().values();
  const auto y = r.bundle.central().values();
  CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
}

TEST_CASE("restore rejects checkpoints from a different setup") {
  auto tasks = generate_synthetic(small_spec());
  TrainConfig config;
  config.epsilon = Centrality::radius(0.2);
  LinearModel model(3, 3);
  Trainer t(model, CrossEntropy(), tasks, config);
  auto cp = t.checkpoint();

  MLPModel other(3, 4, 3);
  Trainer wrong_model(other, CrossEntropy(), tasks, config);
  CHECK_THROWS_AS(wrong_model.restore(cp), std::invalid_argument);

  TrainConfig changed = config;
  changed.seed = 99;
  Trainer wrong_config(model, CrossEntropy(), tasks, changed);
  CHECK_THROWS_AS(wrong_config.restore(cp), std::invalid_argument);

  auto bad = cp;
  bad["version"] = 99;
  CHECK_THROWS_AS(t.restore(bad), std::invalid_argument);
}

TEST_CASE("config json round trip") {
  TrainConfig c;
  c.eta = {0.01, 0.5};
  c.epochs = 7;
  c.batch_size = 3;
  c.epsilon = Centrality::radius(0.125);
  c.seed = 1234567890123ULL;
  c.projection.step_rule = StepRule::kHarmonic;
  auto back = train_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(train_config_from_json(nlohmann::json{{"epsilon", "inf"}}).epsilon.is_infinite());
  CHECK(train_config_from_json(nlohmann::json{{"epsilon", 0}}).epsilon.is_consensus());
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_size", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"eta", -1.0}}), std::invalid_argument);
}

TEST_CASE("trainer input errors") {
  auto tasks = generate_synthetic(small_spec());
  TrainConfig config;
  CHECK_THROWS_AS(train({}, LinearModel(3, 3), CrossEntropy(), config), std::invalid_argument);
  auto empty = tasks;
  empty[1].samples.clear();
  CHECK_THROWS_AS(train(empty, LinearModel(3, 3), CrossEntropy(), config), std::invalid_argument);
  CHECK_THROWS_AS(train(tasks, LinearModel(4, 3), CrossEntropy(), config), DimensionError);
  auto dup = tasks;
  dup[1].task_id = 0;
  CHECK_THROWS_AS(train(dup, LinearModel(3, 3), CrossEntropy(), config), std::invalid_argument);
}

TEST_CASE("divergence is reported with the task and step") {
  SyntheticSpec spec = small_spec();
  spec.kind = TaskKind::kRegression;
  spec.output_dim = 1;
  auto tasks = generate_synthetic(spec);
  TrainConfig config;
  config.eta.initial = 50.0;
  config.epochs = 50;
  try {
    train(tasks, LinearModel(3, 1), SquaredError(), config);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("task") != std::string::npos);
  }
}

TEST_CASE("consensus on identical tasks recovers the shared truth") {
  SyntheticSpec spec;
  spec.kind = TaskKind::kRegression;
  spec.num_tasks = 3;
  spec.input_dim = 2;
  spec.output_dim = 1;
  spec.samples_per_task = {10000, 10000, 10000};
  spec.relatedness = 0.0;
  spec.noise_std = 0.5;
  spec.seed = 8;
  auto data = generate_synthetic_with_truth(spec);

  TrainConfig config;
  config.eta = {0.02, 0.002};
  config.batch_size = 20;
  config.epochs = 2;
  config.epsilon = Centrality::radius(0.0);
  auto r = train(data.tasks, LinearModel(2, 1), SquaredError(), config);
  // The pooled least-squares estimate has std ~ 0.5 / sqrt(30000) ~ 3e-3 per
  // coordinate; SGD with a decaying step adds a little on top.
  for (std::size_t k = 0; k < data.shared_truth.size(); ++k) {
    CHECK(r.bundle.central()[k] == doctest::Approx(data.shared_truth[k]).scale(1.0).epsilon(0.02));
  }
}
