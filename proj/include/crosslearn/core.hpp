#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crosslearn {

/// Thrown whenever two objects that must share a dimension do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense real parameter vector of fixed length S >= 1.
///
/// The length is fixed at construction. Entries are checked for finiteness
/// on construction; in-place updates go through `values()` and callers that
/// mutate are expected to keep them finite (see `all_finite`).
class ParamVector {
 public:
  explicit ParamVector(std::vector<double> entries);
  static ParamVector zeros(std::size_t dim);

  std::size_t size() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const { return entries_[i]; }

  std::span<const double> values() const noexcept { return entries_; }
  std::span<double> values() noexcept { return entries_; }

  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> entries_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// ({theta_i}, theta_g): N task vectors plus the central vector.
class ParamBundle {
 public:
  ParamBundle(std::vector<ParamVector> task_params, ParamVector central);

  std::size_t num_tasks() const noexcept { return tasks_.size(); }
  std::size_t dim() const noexcept { return central_.size(); }

  const ParamVector& task(std::size_t i) const { return tasks_.at(i); }
  ParamVector& task(std::size_t i) { return tasks_.at(i); }
  const std::vector<ParamVector>& tasks() const noexcept { return tasks_; }
  const ParamVector& central() const noexcept { return central_; }
  ParamVector& central() noexcept { return central_; }

  /// sum_i ||theta_i - ref_i||^2 + ||theta_g - ref_g||^2
  double squared_distance_to(const ParamBundle& ref) const;

  friend bool operator==(const ParamBundle&, const ParamBundle&) = default;

 private:
  std::vector<ParamVector> tasks_;
  ParamVector central_;
};

/// Constraint radius epsilon. Zero is consensus; infinity disables the
/// constraint entirely (agnostic training, no projection).
class Centrality {
 public:
  static Centrality radius(double epsilon);
  static Centrality infinite() noexcept { return Centrality(); }
  /// Accepts a decimal number or one of "inf", "infinity", "INF".
  static Centrality parse(const std::string& token);

  bool is_infinite() const noexcept { return infinite_; }
  bool is_consensus() const noexcept { return !infinite_ && epsilon_ == 0.0; }
  /// Throws std::logic_error when infinite.
  double value() const;

  std::string to_string() const;

  friend bool operator==(const Centrality&, const Centrality&) = default;

 private:
  Centrality() = default;
  bool infinite_ = true;
  double epsilon_ = std::numeric_limits<double>::infinity();
};

struct Feasibility {
  bool feasible = true;
  /// max_i ||theta_i - theta_g|| - epsilon; -inf when the constraint is disabled.
  double worst_violation = 0.0;
};

Feasibility feasibility(const ParamBundle& bundle, const Centrality& centrality);

/// Symmetric (N+1)x(N+1) table of inner products. Index 0 is the central
/// vector, index i >= 1 is task i-1.
class GramMatrix {
 public:
  explicit GramMatrix(std::size_t order);

  std::size_t order() const noexcept { return order_; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * order_ + c]; }
  void set(std::size_t r, std::size_t c, double v);

  double max_diagonal() const;

 private:
  std::size_t order_;
  std::vector<double> entries_;
};

/// Vector length above which inner products use compensated summation.
inline constexpr std::size_t kCompensatedDotThreshold = 100000;

/// Inner products of (theta_g, theta_1, ..., theta_N).
GramMatrix pairwise_gram(const ParamBundle& bundle);

/// Engine seeded from a 64-bit seed plus stream tags, so independent streams
/// (tasks, blocks) never share state.
inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::initializer_list<std::uint32_t> tags) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), tags.begin(), tags.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace crosslearn
