#include "crosslearn/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace crosslearn {

namespace {

// Quantities shared by the subgradient and the dual value: the squared
// distance of every Gram vector to the recovered central vector.
std::vector<double> distances_to_center(const DualState& state) {
  const GramMatrix& gram = state.gram;
  const std::size_t order = gram.order();
  std::vector<double> weight(order);
  weight[0] = 1.0 / state.a;
  for (std::size_t i = 1; i < order; ++i) weight[i] = state.lambda[i - 1] / state.a;

  std::vector<double> cross(order, 0.0);
  for (std::size_t k = 0; k < order; ++k) {
    for (std::size_t j = 0; j < order; ++j) cross[k] += weight[j] * gram(k, j);
  }
  double center_sq = 0.0;
  for (std::size_t k = 0; k < order; ++k) center_sq += weight[k] * cross[k];

  std::vector<double> dist(order);
  for (std::size_t k = 0; k < order; ++k) {
    dist[k] = std::max(0.0, gram(k, k) - 2.0 * cross[k] + center_sq);
  }
  return dist;
}

double dual_value_from(const DualState& state, const std::vector<double>& dist, double epsilon) {
  // lambda_i^2 + mu_i (1 - lambda_i)^2 collapses to lambda_i.
  double value = dist[0];
  double mu_sum = 0.0;
  for (std::size_t i = 0; i < state.num_tasks(); ++i) {
    value += state.lambda[i] * dist[i + 1];
    mu_sum += state.mu[i];
  }
  return value - epsilon * epsilon * mu_sum;
}

std::vector<double> subgradient_from(const DualState& state, const std::vector<double>& dist,
                                     double epsilon) {
  std::vector<double> grad(state.num_tasks());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double shrink = 1.0 / (1.0 + state.mu[i]);  // 1 - lambda_i without cancellation
    grad[i] = shrink * shrink * dist[i + 1] - epsilon * epsilon;
  }
  return grad;
}

GramMatrix centered_gram(const ParamBundle& input) {
  const std::size_t n = input.num_tasks();
  const std::size_t s = input.dim();
  const auto center = input.central().values();
  std::vector<std::vector<double>> shifted(n, std::vector<double>(s));
  for (std::size_t i = 0; i < n; ++i) {
    const auto task = input.task(i).values();
    for (std::size_t j = 0; j < s; ++j) shifted[i][j] = task[j] - center[j];
  }
  GramMatrix gram(n + 1);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r; c < n; ++c) gram.set(r + 1, c + 1, dot(shifted[r], shifted[c]));
  }
  return gram;
}

ParamBundle consensus_of(const ParamBundle& input) {
  const std::size_t s = input.dim();
  std::vector<double> mean(input.central().values().begin(), input.central().values().end());
  for (const auto& task : input.tasks()) {
    for (std::size_t j = 0; j < s; ++j) mean[j] += task[j];
  }
  const double count = static_cast<double>(input.num_tasks() + 1);
  for (double& v : mean) v /= count;
  ParamVector center(mean);
  return ParamBundle(std::vector<ParamVector>(input.num_tasks(), center), center);
}

double default_delta(const GramMatrix& centered) {
  double spread = 0.0;
  for (std::size_t i = 1; i < centered.order(); ++i) spread += centered(i, i);
  return 1e-8 * (1.0 + spread);
}

}  // namespace

DualState DualState::from_bundle(const ParamBundle& input, std::vector<double> mu) {
  return from_gram(centered_gram(input), std::move(mu));
}

DualState DualState::from_gram(GramMatrix gram, std::vector<double> mu) {
  if (gram.order() < 2) throw DimensionError("Gram matrix must cover at least one task");
  DualState state;
  state.gram = std::move(gram);
  if (mu.empty()) mu.assign(state.gram.order() - 1, 0.0);
  state.set_multipliers(std::move(mu));
  return state;
}

void DualState::set_multipliers(std::vector<double> new_mu) {
  if (new_mu.size() + 1 != gram.order()) {
    throw DimensionError("expected " + std::to_string(gram.order() - 1) + " multipliers, got " +
                         std::to_string(new_mu.size()));
  }
  mu = std::move(new_mu);
  lambda.resize(mu.size());
  a = 1.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(mu[i] >= 0.0)) throw std::invalid_argument("multipliers must be nonnegative");
    lambda[i] = std::isinf(mu[i]) ? 1.0 : mu[i] / (1.0 + mu[i]);
    a += lambda[i];
  }
}

ParamBundle primal_recover(const DualState& state, const ParamBundle& input) {
  if (state.num_tasks() != input.num_tasks()) {
    throw DimensionError("dual state has " + std::to_string(state.num_tasks()) +
                         " multipliers for " + std::to_string(input.num_tasks()) + " tasks");
  }
  const std::size_t s = input.dim();
  const auto center_bar = input.central().values();

  std::vector<double> center(center_bar.begin(), center_bar.end());
  for (std::size_t i = 0; i < input.num_tasks(); ++i) {
    const double w = state.lambda[i] / state.a;
    if (w == 0.0) continue;
    const auto task = input.task(i).values();
    for (std::size_t j = 0; j < s; ++j) center[j] += w * (task[j] - center_bar[j]);
  }

  std::vector<ParamVector> tasks;
  tasks.reserve(input.num_tasks());
  for (std::size_t i = 0; i < input.num_tasks(); ++i) {
    const auto task = input.task(i).values();
    const double lam = state.lambda[i];
    std::vector<double> out(task.begin(), task.end());
    if (lam != 0.0) {
      for (std::size_t j = 0; j < s; ++j) out[j] += lam * (center[j] - task[j]);
    }
    tasks.emplace_back(std::move(out));
  }
  return ParamBundle(std::move(tasks), ParamVector(std::move(center)));
}

std::vector<double> dual_subgradient(const DualState& state, double epsilon) {
  return subgradient_from(state, distances_to_center(state), epsilon);
}

double dual_value(const DualState& state, double epsilon) {
  return dual_value_from(state, distances_to_center(state), epsilon);
}

DualAscent::DualAscent(DualState state, double epsilon, const ProjectionSettings& settings,
                       double delta)
    : state_(std::move(state)),
      epsilon_(epsilon),
      delta_(delta),
      rule_(settings.step_rule) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("dual ascent needs a finite nonnegative epsilon");
  }
  const double tol = settings.feasibility_tol;
  feasibility_slack_ = epsilon * epsilon * (2.0 * tol + tol * tol);
  initial_step_ = settings.initial_step > 0.0 ? settings.initial_step
                                              : 1.0 / (1.0 + state_.gram.max_diagonal());
  step_ = initial_step_;
}

bool DualAscent::at_consensus_limit() const {
  return std::all_of(state_.lambda.begin(), state_.lambda.end(),
                     [](double l) { return l > kConsensusLambda; });
}

bool DualAscent::converged() {
  const auto dist = distances_to_center(state_);
  grad_ = subgradient_from(state_, dist, epsilon_);
  value_ = dual_value_from(state_, dist, epsilon_);
  double inner = 0.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grad_.size(); ++i) {
    inner += grad_[i] * state_.mu[i];
    worst = std::max(worst, grad_[i]);
  }
  gap_ = std::abs(inner);
  return gap_ <= delta_ && worst <= feasibility_slack_;
}

bool DualAscent::step() {
  if (converged()) return true;
  const std::size_t n = state_.num_tasks();
  std::vector<double> trial(n);

  if (rule_ == StepRule::kHarmonic) {
    const double alpha = initial_step_ / static_cast<double>(iterations_ + 1);
    for (std::size_t i = 0; i < n; ++i) trial[i] = std::max(0.0, state_.mu[i] + alpha * grad_[i]);
    state_.set_multipliers(std::move(trial));
    ++iterations_;
    return converged();
  }

  // Projected ascent. A trial step is accepted while the directional
  // derivative at its end is still nonnegative, i.e. it has not overshot the
  // maximum along the step. On a quadratic this is exactly the
  // sufficient-increase test against q(mu) + <g, d> - |d|^2 / (2t), but it is
  // evaluated from gradients, which stay accurate long after differences of
  // dual values have sunk into rounding noise.
  double t = step_;
  DualState candidate = state_;
  bool accepted = false;
  for (int attempt = 0; attempt < 80; ++attempt) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      trial[i] = std::max(0.0, state_.mu[i] + t * grad_[i]);
      const double d = trial[i] - state_.mu[i];
      sq += d * d;
    }
    if (sq == 0.0) break;
    candidate.set_multipliers(trial);
    const auto next_grad = dual_subgradient(candidate, epsilon_);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) slope += next_grad[i] * (trial[i] - state_.mu[i]);
    if (std::isfinite(slope) && slope >= 0.0) {
      accepted = true;
      break;
    }
    t *= 0.5;
  }
  if (accepted) {
    state_ = std::move(candidate);
    step_ = std::min(2.0 * t, 1e300);
  } else {
    step_ = t;
  }
  ++iterations_;
  return converged();
}

ProjectionResult project(const ParamBundle& input, const Centrality& centrality,
                         const ProjectionSettings& settings) {
  if (centrality.is_infinite()) {
    throw std::invalid_argument("projection is undefined for infinite epsilon; skip it instead");
  }
  return project(input, centrality.value(), settings);
}

ProjectionResult project(const ParamBundle& input, double epsilon,
                         const ProjectionSettings& settings) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("projection needs a finite nonnegative epsilon");
  }
  if (settings.max_iters == 0) throw std::invalid_argument("max_iters must be positive");

  GramMatrix gram = centered_gram(input);
  const double delta = settings.delta > 0.0 ? settings.delta : default_delta(gram);
  DualState state = DualState::from_gram(std::move(gram), settings.mu_init);
  DualAscent ascent(std::move(state), epsilon, settings, delta);

  bool done = ascent.converged();
  bool fallback = false;
  while (!done && ascent.iterations() < settings.max_iters) {
    if (epsilon == 0.0 && ascent.at_consensus_limit()) {
      fallback = true;
      break;
    }
    done = ascent.step();
  }
  if (!done && !fallback && epsilon == 0.0 && ascent.at_consensus_limit()) fallback = true;

  if (fallback) {
    return ProjectionResult{consensus_of(input), ascent.state(), ascent.iterations(),
                            ascent.gap(), delta, true, true};
  }
  return ProjectionResult{primal_recover(ascent.state(), input), ascent.state(),
                          ascent.iterations(), ascent.gap(), delta, done, false};
}

double projection_objective(const ParamBundle& candidate, const ParamBundle& reference) {
  return candidate.squared_distance_to(reference);
}

ParamBundle brute_force_project(const ParamBundle& input, double epsilon) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("epsilon must be finite and nonnegative");
  }
  const std::size_t n = input.num_tasks();
  const std::size_t s = input.dim();
  if (n * s > kBruteForceBudget) {
    throw std::invalid_argument("brute-force projection limited to N*S <= " +
                                std::to_string(kBruteForceBudget));
  }

  // Flattened point: tasks first, central last.
  const std::size_t total = (n + 1) * s;
  std::vector<double> x(total);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(input.task(i).values().begin(), s, x.begin() + static_cast<long>(i * s));
  }
  std::copy_n(input.central().values().begin(), s, x.begin() + static_cast<long>(n * s));

  // Dykstra: one correction term per constraint set. Set i only touches
  // the blocks of task i and the central vector.
  std::vector<std::vector<double>> corr(n, std::vector<double>(2 * s, 0.0));
  std::vector<double> y(2 * s);
  std::vector<double> previous = x;
  constexpr std::size_t kMaxSweeps = 5'000'000;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double* task = x.data() + i * s;
      double* center = x.data() + n * s;
      for (std::size_t j = 0; j < s; ++j) {
        y[j] = task[j] + corr[i][j];
        y[s + j] = center[j] + corr[i][s + j];
      }
      double gap_sq = 0.0;
      for (std::size_t j = 0; j < s; ++j) gap_sq += (y[j] - y[s + j]) * (y[j] - y[s + j]);
      const double gap = std::sqrt(gap_sq);
      const double keep = gap > epsilon ? epsilon / gap : 1.0;
      for (std::size_t j = 0; j < s; ++j) {
        const double mid = 0.5 * (y[j] + y[s + j]);
        const double half = 0.5 * (y[j] - y[s + j]) * keep;
        const double new_task = mid + half;
        const double new_center = mid - half;
        const double dc_task = y[j] - new_task - corr[i][j];
        const double dc_center = y[s + j] - new_center - corr[i][s + j];
        change += dc_task * dc_task + dc_center * dc_center;
        corr[i][j] = y[j] - new_task;
        corr[i][s + j] = y[s + j] - new_center;
        task[j] = new_task;
        center[j] = new_center;
      }
    }
    double moved = 0.0;
    for (std::size_t k = 0; k < total; ++k) {
      moved += (x[k] - previous[k]) * (x[k] - previous[k]);
      previous[k] = x[k];
    }
    if (sweep > 0 && moved < 1e-30 && change < 1e-30) break;
  }

  std::vector<ParamVector> tasks;
  for (std::size_t i = 0; i < n; ++i) {
    tasks.emplace_back(std::vector<double>(x.begin() + static_cast<long>(i * s),
                                           x.begin() + static_cast<long>((i + 1) * s)));
  }
  return ParamBundle(std::move(tasks),
                     ParamVector(std::vector<double>(x.begin() + static_cast<long>(n * s), x.end())));
}

}  // namespace crosslearn
