#pragma once

#include <cstdint>
#include <utility>

namespace crosslearn::gaussian {

/// Two Gaussian variables with common per-sample std `sigma`, `samples` draws
/// each, and true mean gap `epsilon0 = |mu_x - mu_y|`.
struct Problem {
  double epsilon0 = 0.0;
  double sigma = 1.0;
  std::int64_t samples = 1;

  /// Throws std::invalid_argument unless sigma > 0, samples >= 1, epsilon0 >= 0.
  void validate() const;
  /// Standard deviation of one sample mean, sigma / sqrt(samples).
  double sigma_mean() const;
};

struct AlphaBeta {
  double alpha;
  double beta;
};

/// alpha = -(eps + eps0) / (2 sigma_M), beta = (eps - eps0) / (2 sigma_M).
AlphaBeta alpha_beta(const Problem& problem, double epsilon);

struct Estimate {
  double mu_x;
  double mu_y;
};

/// Constrained least-squares estimate of two means subject to |mu_x - mu_y| <= epsilon.
Estimate cl_estimate(double xbar, double ybar, double epsilon);

/// Clip of the half-difference to [-epsilon/2, epsilon/2].
double soft_threshold(double wbar, double epsilon);

/// Exact MSE of the cross-learning estimate of mu_x as a function of epsilon.
///
/// Tends to sigma_M^2 (the agnostic MSE) as epsilon grows, and equals
/// sigma_M^2 / 2 + epsilon0^2 / 4 at epsilon = 0.
double mse_closed_form(const Problem& problem, double epsilon);

/// f(x) = 1 + x exp(-x^2)/sqrt(pi) - erf(x)/2 + x^2 (1 + erf(x)), for x <= 0.
/// mse_closed_form(eps = eps0) = sigma_M^2 / 2 * f(-eps0 / sigma_M).
double claim1_bracket(double x);

/// d/d(epsilon) of mse_closed_form:
///   (sigma_M / 2) * [beta (1 - erf beta) - alpha (1 + erf alpha)].
/// At epsilon = 0 this is (eps0 / 2) erf(-eps0 / (2 sigma_M)), negative for eps0 > 0.
double mse_derivative(const Problem& problem, double epsilon);

struct MonteCarloResult {
  double mse;
  double std_error;
};

/// Monte Carlo MSE of the cross-learning estimate of mu_x, with mu_y = mu_y_offset
/// and mu_x = mu_y_offset + epsilon0. Sample means are drawn directly from
/// N(mu, sigma_M^2). Trials are grouped in fixed-size blocks, each with its
/// own engine seeded from (seed, block), so results do not depend on how
/// blocks are scheduled. std_error is 0 when trials == 1.
MonteCarloResult monte_carlo_mse(const Problem& problem, double epsilon, std::int64_t trials,
                                 std::uint64_t seed, double mu_y_offset = 0.0);

inline constexpr std::int64_t kMonteCarloBlock = 4096;

}  // namespace crosslearn::gaussian
