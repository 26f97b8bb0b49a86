#include "crosslearn/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crosslearn {

namespace {

void require_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("vector length mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

// Neumaier's variant of Kahan summation.
double compensated_dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double term = a[i] * b[i];
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      carry += (sum - t) + term;
    } else {
      carry += (term - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

}  // namespace

ParamVector::ParamVector(std::vector<double> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw std::invalid_argument("ParamVector needs at least one entry");
  if (!all_finite()) throw std::invalid_argument("ParamVector entries must be finite");
}

ParamVector ParamVector::zeros(std::size_t dim) { return ParamVector(std::vector<double>(dim, 0.0)); }

bool ParamVector::all_finite() const noexcept {
  return std::all_of(entries_.begin(), entries_.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b);
  if (a.size() > kCompensatedDotThreshold) return compensated_dot(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

ParamBundle::ParamBundle(std::vector<ParamVector> task_params, ParamVector central)
    : tasks_(std::move(task_params)), central_(std::move(central)) {
  if (tasks_.empty()) throw std::invalid_argument("ParamBundle needs at least one task vector");
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].size() != central_.size()) {
      throw DimensionError("task vector " + std::to_string(i) + " has dimension " +
                           std::to_string(tasks_[i].size()) + ", central has " +
                           std::to_string(central_.size()));
    }
  }
}

double ParamBundle::squared_distance_to(const ParamBundle& ref) const {
  if (ref.num_tasks() != num_tasks() || ref.dim() != dim()) {
    throw DimensionError("bundle shapes differ");
  }
  double total = squared_distance(central_.values(), ref.central_.values());
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    total += squared_distance(tasks_[i].values(), ref.tasks_[i].values());
  }
  return total;
}

Centrality Centrality::radius(double epsilon) {
  if (std::isinf(epsilon) && epsilon > 0) return infinite();
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");
  Centrality c;
  c.infinite_ = false;
  c.epsilon_ = epsilon;
  return c;
}

Centrality Centrality::parse(const std::string& token) {
  std::string lowered;
  lowered.reserve(token.size());
  for (char ch : token) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (lowered == "inf" || lowered == "infinity" || lowered == "+inf") return infinite();
  std::size_t consumed = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &consumed);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse epsilon '" + token + "'");
  }
  if (consumed != token.size()) throw std::invalid_argument("cannot parse epsilon '" + token + "'");
  return radius(value);
}

double Centrality::value() const {
  if (infinite_) throw std::logic_error("infinite centrality has no finite radius");
  return epsilon_;
}

std::string Centrality::to_string() const {
  if (infinite_) return "inf";
  std::ostringstream out;
  out.precision(17);
  out << epsilon_;
  return out.str();
}

Feasibility feasibility(const ParamBundle& bundle, const Centrality& centrality) {
  if (centrality.is_infinite()) return {true, -std::numeric_limits<double>::infinity()};
  double worst = 0.0;
  for (const auto& task : bundle.tasks()) {
    worst = std::max(worst, distance(task.values(), bundle.central().values()));
  }
  const double violation = worst - centrality.value();
  return {violation <= 0.0, violation};
}

GramMatrix::GramMatrix(std::size_t order) : order_(order), entries_(order * order, 0.0) {}

void GramMatrix::set(std::size_t r, std::size_t c, double v) {
  entries_[r * order_ + c] = v;
  entries_[c * order_ + r] = v;
}

double GramMatrix::max_diagonal() const {
  double best = 0.0;
  for (std::size_t i = 0; i < order_; ++i) best = std::max(best, (*this)(i, i));
  return best;
}

GramMatrix pairwise_gram(const ParamBundle& bundle) {
  const std::size_t order = bundle.num_tasks() + 1;
  auto vec = [&](std::size_t k) {
    return k == 0 ? bundle.central().values() : bundle.task(k - 1).values();
  };
  GramMatrix gram(order);
  for (std::size_t r = 0; r < order; ++r) {
    for (std::size_t c = r; c < order; ++c) gram.set(r, c, dot(vec(r), vec(c)));
  }
  return gram;
}

}  // namespace crosslearn
