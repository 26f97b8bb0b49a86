#pragma once

#include <cstddef>
#include <vector>

#include "crosslearn/core.hpp"

namespace crosslearn {

/// Dual multipliers of the projection problem together with the quantities
/// derived from them and the cached Gram matrix.
///
/// The Gram matrix is taken over (theta_g, theta_1, ..., theta_N) after
/// translating every vector by -theta_g. Distances and the primal minimizers
/// are translation invariant, so this only changes rounding: the entries stay
/// on the scale of the inter-vector distances rather than of the vectors.
struct DualState {
  std::vector<double> mu;
  std::vector<double> lambda;  // mu / (1 + mu)
  double a = 1.0;              // 1 + sum(lambda)
  GramMatrix gram{1};

  static DualState from_bundle(const ParamBundle& input, std::vector<double> mu = {});
  static DualState from_gram(GramMatrix gram, std::vector<double> mu = {});

  std::size_t num_tasks() const noexcept { return mu.size(); }
  /// Replace the multipliers and refresh lambda and a. Negative entries are rejected.
  void set_multipliers(std::vector<double> new_mu);
};

enum class StepRule {
  /// alpha_k = alpha_0 / (k + 1).
  kHarmonic,
  /// alpha_k found by backtracking on the dual function (doubling after
  /// each accepted step, halving on rejection).
  kBacktracking,
};

struct ProjectionSettings {
  /// Stopping threshold on |<dL/dmu, mu>|. Values <= 0 select
  /// 1e-8 * (1 + sum_i ||theta_i - theta_g||^2) of the input.
  double delta = 0.0;
  StepRule step_rule = StepRule::kBacktracking;
  /// alpha_0. Values <= 0 select 1 / (1 + max diagonal Gram entry).
  double initial_step = 0.0;
  std::size_t max_iters = 200000;
  /// Warm start; empty means all zeros.
  std::vector<double> mu_init;
  /// Stop only once ||theta_i - theta_g|| <= epsilon * (1 + feasibility_tol).
  double feasibility_tol = 1e-8;
};

/// lambda above this threshold for every task triggers the exact consensus solution at epsilon = 0.
inline constexpr double kConsensusLambda = 1.0 - 1e-9;

struct ProjectionResult {
  ParamBundle output;
  DualState state;
  std::size_t iterations = 0;
  double gap = 0.0;
  double delta = 0.0;
  bool converged = false;
  bool consensus_fallback = false;
};

/// theta_g = theta_bar_g + sum_i (lambda_i / a)(theta_bar_i - theta_bar_g),
/// theta_i = (1 - lambda_i) theta_bar_i + lambda_i theta_g.
ParamBundle primal_recover(const DualState& state, const ParamBundle& input);

/// ||theta_i - theta_g||^2 - epsilon^2 at the primal minimizers of the
/// Lagrangian, from the Gram matrix alone.
std::vector<double> dual_subgradient(const DualState& state, double epsilon);

/// Lagrangian evaluated at its primal minimizers for the current multipliers.
double dual_value(const DualState& state, double epsilon);

/// Dual ascent over the N multipliers. Holds only the Gram matrix, so the
/// cost of one `step()` depends on N but not on the parameter dimension.
class DualAscent {
 public:
  DualAscent(DualState state, double epsilon, const ProjectionSettings& settings, double delta);

  /// Run one multiplier update. Returns true once the stopping test holds.
  bool step();
  /// Stopping test at the current multipliers (updates gap()).
  bool converged();

  const DualState& state() const noexcept { return state_; }
  std::size_t iterations() const noexcept { return iterations_; }
  double gap() const noexcept { return gap_; }
  bool at_consensus_limit() const;

 private:
  DualState state_;
  double epsilon_;
  double delta_;
  double feasibility_slack_;
  StepRule rule_;
  double initial_step_;
  double step_;
  std::size_t iterations_ = 0;
  double gap_ = 0.0;
  std::vector<double> grad_;
  double value_ = 0.0;
};

/// Euclidean projection onto {||theta_i - theta_g|| <= epsilon for all i},
/// solved in the dual. epsilon must be finite and nonnegative; infinite
/// centrality is rejected with std::invalid_argument because no projection
/// applies in that case.
ProjectionResult project(const ParamBundle& input, const Centrality& centrality,
                         const ProjectionSettings& settings = {});
ProjectionResult project(const ParamBundle& input, double epsilon,
                         const ProjectionSettings& settings = {});

/// sum_i ||theta_i - ref_i||^2 + ||theta_g - ref_g||^2.
double projection_objective(const ParamBundle& candidate, const ParamBundle& reference);

/// Primal reference solver (Dykstra's alternating projections onto the
/// individual constraint sets). Only for small problems; throws
/// std::invalid_argument when N * S exceeds kBruteForceBudget.
ParamBundle brute_force_project(const ParamBundle& input, double epsilon);

inline constexpr std::size_t kBruteForceBudget = 50;

}  // namespace crosslearn
