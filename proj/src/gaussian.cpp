#include "crosslearn/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace crosslearn::gaussian {

void Problem::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be positive");
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (!(epsilon0 >= 0.0) || !std::isfinite(epsilon0)) {
    throw std::invalid_argument("epsilon0 must be nonnegative and finite");
  }
}

double Problem::sigma_mean() const { return sigma / std::sqrt(static_cast<double>(samples)); }

AlphaBeta alpha_beta(const Problem& problem, double epsilon) {
  problem.validate();
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");
  const double two_sm = 2.0 * problem.sigma_mean();
  return {-(epsilon + problem.epsilon0) / two_sm, (epsilon - problem.epsilon0) / two_sm};
}

Estimate cl_estimate(double xbar, double ybar, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");
  const double gap = xbar - ybar;
  if (std::abs(gap) < epsilon) return {xbar, ybar};
  // At |gap| == epsilon both branches agree; the clipped one is used.
  const double mid = 0.5 * (xbar + ybar);
  const double half = 0.5 * epsilon;
  if (gap >= 0.0) return {mid + half, mid - half};
  return {mid - half, mid + half};
}

double soft_threshold(double wbar, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");
  const double half = 0.5 * epsilon;
  return std::clamp(wbar, -half, half);
}

double mse_closed_form(const Problem& problem, double epsilon) {
  const auto [alpha, beta] = alpha_beta(problem, epsilon);
  const double sm2 = problem.sigma_mean() * problem.sigma_mean();
  // 1 + erf(a) and 1 - erf(b) through erfc to keep the tails accurate.
  const double inner = 1.0 +
                       (alpha * std::exp(-alpha * alpha) - beta * std::exp(-beta * beta)) /
                           std::sqrt(std::numbers::pi) +
                       0.5 * (std::erf(beta) - std::erf(alpha));
  const double outer = alpha * alpha * std::erfc(-alpha) + beta * beta * std::erfc(beta);
  return 0.5 * sm2 * (inner + outer);
}

double claim1_bracket(double x) {
  if (!(x <= 0.0)) throw std::domain_error("claim1_bracket is defined for x <= 0");
  return 1.0 + x * std::exp(-x * x) / std::sqrt(std::numbers::pi) - 0.5 * std::erf(x) +
         x * x * std::erfc(-x);
}

double mse_derivative(const Problem& problem, double epsilon) {
  const auto [alpha, beta] = alpha_beta(problem, epsilon);
  return 0.5 * problem.sigma_mean() * (beta * std::erfc(beta) - alpha * std::erfc(-alpha));
}

MonteCarloResult monte_carlo_mse(const Problem& problem, double epsilon, std::int64_t trials,
                                 std::uint64_t seed, double mu_y_offset) {
  problem.validate();
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be nonnegative");

  const double mu_y = mu_y_offset;
  const double mu_x = mu_y_offset + problem.epsilon0;
  const double sm = problem.sigma_mean();

  // Welford accumulation of the squared error.
  double mean = 0.0;
  double m2 = 0.0;
  std::int64_t count = 0;
  const std::int64_t blocks = (trials + kMonteCarloBlock - 1) / kMonteCarloBlock;
  for (std::int64_t b = 0; b < blocks; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    std::mt19937_64 engine(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::int64_t n = std::min(kMonteCarloBlock, trials - b * kMonteCarloBlock);
    for (std::int64_t t = 0; t < n; ++t) {
      const double xbar = mu_x + sm * normal(engine);
      const double ybar = mu_y + sm * normal(engine);
      const double err = cl_estimate(xbar, ybar, epsilon).mu_x - mu_x;
      const double sq = err * err;
      ++count;
      const double delta = sq - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (sq - mean);
    }
  }
  if (count < 2) return {mean, 0.0};
  const double variance = m2 / static_cast<double>(count - 1);
  return {mean, std::sqrt(variance / static_cast<double>(count))};
}

}  // namespace crosslearn::gaussian
