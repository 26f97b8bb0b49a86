#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "crosslearn/data.hpp"

using namespace crosslearn;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path path = fs::temp_directory_path() / ("crosslearn_test_data_" + name);
  std::ofstream(path) << contents;
  return path;
}

TaskDataset numbered(std::size_t n, std::size_t classes) {
  TaskDataset d;
  d.input_dim = 1;
  d.output_dim = classes;
  for (std::size_t j = 0; j < n; ++j) {
    d.samples.push_back(Sample{{static_cast<double>(j)}, static_cast<int>(j % classes), {}});
  }
  return d;
}

std::vector<double> firsts(const std::vector<Sample>& samples) {
  std::vector<double> v;
  for (const auto& s : samples) v.push_back(s.x[0]);
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST_CASE("split 10 samples at 0.8 gives 8 and 2") {
  auto r = split(numbered(10, 2), 0.8, 1);
  CHECK(r.train.size() == 8);
  CHECK(r.test.size() == 2);
  CHECK(r.warnings.empty());
  CHECK(r.train.split == SplitTag::kTrain);
  CHECK(r.test.split == SplitTag::kTest);
}

TEST_CASE("split with fraction 1 leaves test empty and warns") {
  auto r = split(numbered(10, 2), 1.0, 1);
  CHECK(r.train.size() == 10);
  CHECK(r.test.size() == 0);
  REQUIRE(r.warnings.size() == 1);
}

TEST_CASE("split is deterministic and partitions the samples") {
  auto d = numbered(37, 3);
  auto a = split(d, 0.7, 11);
  auto b = split(d, 0.7, 11);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(split(d, 0.7, 12).train != a.train);

  auto all = a.train.samples;
  all.insert(all.end(), a.test.samples.begin(), a.test.samples.end());
  CHECK(firsts(all) == firsts(d.samples));
}

TEST_CASE("split keeps each class within one sample of its target") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    TaskDataset d;
    d.input_dim = 1;
    d.output_dim = 3;
    // Unbalanced classes: 13, 7, 4.
    int idx = 0;
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < (c == 0 ? 13 : c == 1 ? 7 : 4); ++k) d.samples.push_back(Sample{{double(idx++)}, c, {}});
    }
    const double f = 0.6 + 0.01 * static_cast<double>(seed);
    auto r = split(d, f, seed);
    std::map<int, int> per_class;
    for (const auto& s : r.train.samples) ++per_class[s.label];
    CHECK(std::abs(per_class[0] - f * 13) <= 1.0);
    CHECK(std::abs(per_class[1] - f * 7) <= 1.0);
    CHECK(std::abs(per_class[2] - f * 4) <= 1.0);
  }
}

TEST_CASE("split rejects degenerate inputs") {
  CHECK_THROWS_AS(split(numbered(10, 2), 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(numbered(10, 2), 1.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(numbered(1, 1), 0.5, 1), std::invalid_argument);
  // Extreme fractions still leave one sample on each side.
  auto r = split(numbered(10, 1), 0.01, 1);
  CHECK(r.train.size() == 1);
  CHECK(r.test.size() == 9);
}

TEST_CASE("synthetic generation is deterministic") {
  SyntheticSpec spec;
  spec.seed = 42;
  spec.label_noise = 0.1;
  CHECK(generate_synthetic(spec) == generate_synthetic(spec));
  spec.seed = 43;
  auto other = generate_synthetic(spec);
  spec.seed = 42;
  CHECK(other != generate_synthetic(spec));
}

TEST_CASE("synthetic shapes and labels are valid") {
  SyntheticSpec spec;
  spec.num_tasks = 3;
  spec.samples_per_task = {5, 50, 20};
  auto tasks = generate_synthetic(spec);
  REQUIRE(tasks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(tasks[i].task_id == static_cast<int>(i));
    CHECK(tasks[i].size() == spec.samples_per_task[i]);
    CHECK_NOTHROW(tasks[i].validate());
  }
  spec.kind = TaskKind::kRegression;
  spec.output_dim = 2;
  for (const auto& t : generate_synthetic(spec)) CHECK_NOTHROW(t.validate());
}

TEST_CASE("relatedness sets the distance between task truths and the shared truth") {
  SyntheticSpec spec;
  spec.relatedness = 0.0;
  auto same = generate_synthetic_with_truth(spec);
  for (const auto& t : same.task_truth) CHECK(t == same.shared_truth);
  CHECK(same.tasks[0].samples != same.tasks[1].samples);

  spec.relatedness = 2.5;
  auto apart = generate_synthetic_with_truth(spec);
  for (const auto& t : apart.task_truth) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) d2 += (t[k] - apart.shared_truth[k]) * (t[k] - apart.shared_truth[k]);
    CHECK(std::sqrt(d2) == doctest::Approx(2.5));
  }
}

TEST_CASE("label noise does not shift the feature stream") {
  SyntheticSpec spec;
  auto clean = generate_synthetic(spec);
  spec.label_noise = 0.5;
  auto noisy = generate_synthetic(spec);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    for (std::size_t j = 0; j < clean[i].size(); ++j) CHECK(clean[i].samples[j].x == noisy[i].samples[j].x);
  }
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.samples_per_task = {10};
  CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
  spec = SyntheticSpec{};
  spec.relatedness = -1.0;
  CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
  spec = SyntheticSpec{};
  spec.output_dim = 1;
  CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}

TEST_CASE("load_csv reads a well-formed file") {
  auto path = temp_file("ok.csv", "task_id,label,x1,x2\n0,1,0.5,-1\n\n1,0,2,3e-1\n0,2,1.25,4\n");
  auto tasks = load_csv(path, CsvSchema{TaskKind::kClassification, 2, 3});
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].size() + tasks[1].size() == 3);
  CHECK(tasks[0].task_id == 0);
  CHECK(tasks[0].samples[1].label == 2);
  CHECK(tasks[1].samples[0].x == std::vector<double>{2.0, 0.3});
  CHECK(tasks[0].output_dim == 3);
}

TEST_CASE("load_csv errors name the offending line") {
  const CsvSchema schema{TaskKind::kClassification, 2, 3};
  auto line_of = [&](const std::string& name, const std::string& body) -> std::size_t {
    try {
      load_csv(temp_file(name, body), schema);
    } catch (const CsvError& e) {
      CHECK(std::string(e.what()).find("line " + std::to_string(e.line())) != std::string::npos);
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("missing.csv", "task_id,label,x1,x2\n0,1,0.5,1\n0,1,0.5\n") == 3);
  CHECK(line_of("label.csv", "task_id,label,x1,x2\n0,7,0.5,1\n") == 2);
  CHECK(line_of("number.csv", "task_id,label,x1,x2\n0,1,0.5,abc\n") == 2);
  CHECK(line_of("header.csv", "id,y,x1,x2\n0,1,0.5,1\n") == 1);
  CHECK(line_of("width.csv", "task_id,label,x1\n0,1,0.5\n") == 1);
  CHECK(line_of("empty.csv", "") == 1);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", schema), std::runtime_error);
}

TEST_CASE("write then load round-trips exactly") {
  SyntheticSpec spec;
  spec.num_tasks = 3;
  spec.samples_per_task = {7, 3, 5};
  auto tasks = generate_synthetic(spec);
  const fs::path path = fs::temp_directory_path() / "crosslearn_test_data_roundtrip.csv";
  write_csv(path, tasks);
  CHECK(load_csv(path, CsvSchema{TaskKind::kClassification, spec.input_dim, spec.output_dim}) == tasks);

  spec.kind = TaskKind::kRegression;
  spec.output_dim = 1;
  auto reg = generate_synthetic(spec);
  write_csv(path, reg);
  CHECK(load_csv(path, CsvSchema{TaskKind::kRegression, spec.input_dim, 0}) == reg);
}

TEST_CASE("standardizer centres and scales features") {
  auto tasks = generate_synthetic(SyntheticSpec{});
  for (auto& t : tasks) {
    for (auto& s : t.samples) s.x[0] = 10.0 + 3.0 * s.x[0];
  }
  auto st = fit_standardizer(tasks);
  st.apply(tasks);
  auto again = fit_standardizer(tasks);
  for (std::size_t k = 0; k < again.mean.size(); ++k) {
    CHECK(again.mean[k] == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    CHECK(again.scale[k] == doctest::Approx(1.0));
  }
}
