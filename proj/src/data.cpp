#include "crosslearn/data.hpp"

#include "crosslearn/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace crosslearn {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "regression";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "classification") return TaskKind::kClassification;
  if (name == "regression") return TaskKind::kRegression;
  throw std::invalid_argument("unknown task kind '" + name + "'");
}

void TaskDataset::validate() const {
  if (output_dim == 0) throw std::invalid_argument("output_dim must be positive");
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const Sample& s = samples[j];
    if (s.x.size() != input_dim) {
      throw std::invalid_argument("task " + std::to_string(task_id) + " sample " + std::to_string(j) +
                                  ": expected " + std::to_string(input_dim) + " features");
    }
    if (kind == TaskKind::kClassification) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= output_dim) {
        throw std::invalid_argument("task " + std::to_string(task_id) + " sample " +
                                    std::to_string(j) + ": label out of range");
      }
    } else if (s.y.size() != output_dim) {
      throw std::invalid_argument("task " + std::to_string(task_id) + " sample " + std::to_string(j) +
                                  ": target dimension mismatch");
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_tasks == 0) throw std::invalid_argument("synthetic: need at least one task");
  if (output_dim == 0) throw std::invalid_argument("synthetic: output_dim must be positive");
  if (kind == TaskKind::kClassification && output_dim < 2) {
    throw std::invalid_argument("synthetic: classification needs at least two classes");
  }
  if (samples_per_task.size() != num_tasks) {
    throw std::invalid_argument("synthetic: samples_per_task must list one count per task");
  }
  for (std::size_t m : samples_per_task) {
    if (m == 0) throw std::invalid_argument("synthetic: every task needs at least one sample");
  }
  if (!(relatedness >= 0.0)) throw std::invalid_argument("synthetic: relatedness must be >= 0");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) {
    throw std::invalid_argument("synthetic: label_noise must be in [0, 1]");
  }
  if (!(noise_std >= 0.0) || !(weight_scale >= 0.0)) {
    throw std::invalid_argument("synthetic: noise_std and weight_scale must be >= 0");
  }
}

SyntheticData generate_synthetic_with_truth(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t p = spec.input_dim;
  const std::size_t q = spec.output_dim;
  const std::size_t stride = p + 1;
  const std::size_t dim = q * stride;

  std::mt19937_64 truth_rng = seeded_engine(spec.seed, {0u});
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticData data;
  data.shared_truth.resize(dim);
  for (double& w : data.shared_truth) w = spec.weight_scale * normal(truth_rng);

  for (std::size_t i = 0; i < spec.num_tasks; ++i) {
    std::vector<double> direction(dim);
    double len = 0.0;
    while (len == 0.0) {
      for (double& d : direction) d = normal(truth_rng);
      len = std::sqrt(std::inner_product(direction.begin(), direction.end(), direction.begin(), 0.0));
    }
    std::vector<double> truth(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      truth[k] = data.shared_truth[k] + spec.relatedness * direction[k] / len;
    }
    data.task_truth.push_back(std::move(truth));
  }

  std::vector<double> logits(q);
  for (std::size_t i = 0; i < spec.num_tasks; ++i) {
    std::mt19937_64 rng = seeded_engine(spec.seed, {static_cast<std::uint32_t>(i + 1)});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& truth = data.task_truth[i];

    TaskDataset task;
    task.task_id = static_cast<int>(i);
    task.kind = spec.kind;
    task.input_dim = p;
    task.output_dim = q;
    task.samples.reserve(spec.samples_per_task[i]);
    for (std::size_t j = 0; j < spec.samples_per_task[i]; ++j) {
      Sample s;
      s.x.resize(p);
      for (double& v : s.x) v = normal(rng);
      for (std::size_t c = 0; c < q; ++c) {
        double acc = truth[c * stride + p];
        for (std::size_t k = 0; k < p; ++k) acc += truth[c * stride + k] * s.x[k];
        logits[c] = acc;
      }
      if (spec.kind == TaskKind::kClassification) {
        const double top = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (double& l : logits) {
          l = std::exp(l - top);
          total += l;
        }
        double u = unit(rng) * total;
        int label = static_cast<int>(q) - 1;
        for (std::size_t c = 0; c < q; ++c) {
          if (u < logits[c]) {
            label = static_cast<int>(c);
            break;
          }
          u -= logits[c];
        }
        // Always draw both numbers so the stream does not depend on the noise rate.
        const double flip = unit(rng);
        const auto replacement = static_cast<int>(std::min(q - 1, static_cast<std::size_t>(unit(rng) * q)));
        if (flip < spec.label_noise) label = replacement;
        s.label = label;
      } else {
        s.y.resize(q);
        for (std::size_t c = 0; c < q; ++c) s.y[c] = logits[c] + spec.noise_std * normal(rng);
      }
      task.samples.push_back(std::move(s));
    }
    data.tasks.push_back(std::move(task));
  }
  return data;
}

std::vector<TaskDataset> generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_with_truth(spec).tasks;
}

SplitResult split(const TaskDataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("train fraction must be in (0, 1]");
  }
  const std::size_t n = dataset.samples.size();
  SplitResult result;
  result.train = dataset;
  result.train.samples.clear();
  result.train.split = SplitTag::kTrain;
  result.test = result.train;
  result.test.split = SplitTag::kTest;

  std::mt19937_64 rng = seeded_engine(seed, {static_cast<std::uint32_t>(dataset.task_id)});

  if (train_fraction == 1.0) {
    result.train.samples = dataset.samples;
    std::shuffle(result.train.samples.begin(), result.train.samples.end(), rng);
    result.warnings.push_back("task " + std::to_string(dataset.task_id) +
                              ": train fraction 1.0 leaves the test split empty");
    return result;
  }
  if (n < 2) {
    throw std::invalid_argument("task " + std::to_string(dataset.task_id) +
                                ": need at least 2 samples to split");
  }

  // Groups: one per class for classification, a single group otherwise.
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < n; ++j) {
    const int key = dataset.kind == TaskKind::kClassification ? dataset.samples[j].label : 0;
    groups[key].push_back(j);
  }

  const auto target_total = static_cast<std::size_t>(
      std::clamp<double>(std::round(train_fraction * static_cast<double>(n)), 1.0,
                         static_cast<double>(n - 1)));

  struct Share {
    int key;
    std::size_t base;
    double remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [key, members] : groups) {
    const double exact = train_fraction * static_cast<double>(members.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    shares.push_back({key, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order(shares.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return shares[a].remainder > shares[b].remainder; });
  for (std::size_t k = 0; assigned < target_total && k < order.size(); ++k) {
    ++shares[order[k]].base;
    ++assigned;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (const Share& share : shares) {
    std::vector<std::size_t> members = groups[share.key];
    std::shuffle(members.begin(), members.end(), rng);
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + static_cast<long>(share.base));
    test_idx.insert(test_idx.end(), members.begin() + static_cast<long>(share.base), members.end());
  }
  std::shuffle(train_idx.begin(), train_idx.end(), rng);
  std::shuffle(test_idx.begin(), test_idx.end(), rng);
  if (train_idx.empty() || test_idx.empty()) {
    throw std::invalid_argument("task " + std::to_string(dataset.task_id) + ": degenerate split sizes");
  }
  for (std::size_t j : train_idx) result.train.samples.push_back(dataset.samples[j]);
  for (std::size_t j : test_idx) result.test.samples.push_back(dataset.samples[j]);
  return result;
}

CsvError::CsvError(const std::string& message, std::size_t line)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view field, const char* what, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
    throw CsvError(std::string("cannot parse ") + what + " '" + std::string(field) + "'", line);
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<TaskDataset> load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (schema.kind == TaskKind::kClassification && schema.num_classes < 2) {
    throw std::invalid_argument("classification schema needs num_classes >= 2");
  }

  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::map<int, TaskDataset> tasks;
  const std::size_t expected = schema.input_dim + 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (!header_seen) {
      if (fields.size() < 2 || fields[0] != "task_id" || fields[1] != "label") {
        throw CsvError("header must start with 'task_id,label'", line_no);
      }
      if (fields.size() != expected) {
        throw CsvError("header has " + std::to_string(fields.size() - 2) + " feature columns, schema expects " +
                           std::to_string(schema.input_dim),
                       line_no);
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != expected) {
      throw CsvError("expected " + std::to_string(expected) + " columns, found " +
                         std::to_string(fields.size()),
                     line_no);
    }
    const int task_id = parse_field<int>(fields[0], "task_id", line_no);
    if (task_id < 0) throw CsvError("task_id must be nonnegative", line_no);

    Sample s;
    if (schema.kind == TaskKind::kClassification) {
      s.label = parse_field<int>(fields[1], "label", line_no);
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= schema.num_classes) {
        throw CsvError("unknown label " + std::to_string(s.label), line_no);
      }
    } else {
      s.y = {parse_field<double>(fields[1], "label", line_no)};
    }
    s.x.reserve(schema.input_dim);
    for (std::size_t k = 0; k < schema.input_dim; ++k) {
      const double v = parse_field<double>(fields[k + 2], "feature", line_no);
      if (!std::isfinite(v)) throw CsvError("non-finite feature", line_no);
      s.x.push_back(v);
    }

    auto [it, inserted] = tasks.try_emplace(task_id);
    if (inserted) {
      it->second.task_id = task_id;
      it->second.kind = schema.kind;
      it->second.input_dim = schema.input_dim;
      it->second.output_dim = schema.kind == TaskKind::kClassification ? schema.num_classes : 1;
    }
    it->second.samples.push_back(std::move(s));
  }
  if (!header_seen) throw CsvError("missing header", line_no == 0 ? 1 : line_no);

  std::vector<TaskDataset> out;
  for (auto& [id, task] : tasks) out.push_back(std::move(task));
  return out;
}

void write_csv(const std::filesystem::path& path, const std::vector<TaskDataset>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("nothing to write");
  const std::size_t p = tasks.front().input_dim;
  for (const auto& t : tasks) {
    if (t.input_dim != p) throw std::invalid_argument("tasks disagree on input dimension");
    if (t.kind == TaskKind::kRegression && t.output_dim != 1) {
      throw std::invalid_argument("CSV holds scalar regression targets only");
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "task_id,label";
  for (std::size_t k = 0; k < p; ++k) out << ",x" << (k + 1);
  out << '\n';
  for (const auto& t : tasks) {
    for (const auto& s : t.samples) {
      out << t.task_id << ',';
      if (t.kind == TaskKind::kClassification) {
        out << s.label;
      } else {
        out << format_double(s.y.at(0));
      }
      for (double v : s.x) out << ',' << format_double(v);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Standardizer fit_standardizer(const std::vector<TaskDataset>& tasks) {
  if (tasks.empty()) throw std::invalid_argument("no tasks to standardize");
  const std::size_t p = tasks.front().input_dim;
  Standardizer st;
  st.mean.assign(p, 0.0);
  st.scale.assign(p, 0.0);
  std::size_t count = 0;
  for (const auto& t : tasks) {
    for (const auto& s : t.samples) {
      for (std::size_t k = 0; k < p; ++k) st.mean[k] += s.x[k];
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("no samples to standardize");
  for (double& m : st.mean) m /= static_cast<double>(count);
  for (const auto& t : tasks) {
    for (const auto& s : t.samples) {
      for (std::size_t k = 0; k < p; ++k) st.scale[k] += (s.x[k] - st.mean[k]) * (s.x[k] - st.mean[k]);
    }
  }
  for (double& v : st.scale) {
    v = std::sqrt(v / static_cast<double>(count));
    if (v == 0.0) v = 1.0;
  }
  return st;
}

void Standardizer::apply(std::vector<TaskDataset>& tasks) const {
  for (auto& t : tasks) {
    for (auto& s : t.samples) {
      for (std::size_t k = 0; k < s.x.size(); ++k) s.x[k] = (s.x[k] - mean[k]) / scale[k];
    }
  }
}

}  // namespace crosslearn
