#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "crosslearn/core.hpp"

using namespace crosslearn;

namespace {

ParamBundle random_bundle(std::mt19937_64& rng, std::size_t n, std::size_t s, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  auto draw = [&] {
    std::vector<double> v(s);
    for (double& x : v) x = normal(rng);
    return ParamVector(v);
  };
  std::vector<ParamVector> tasks;
  for (std::size_t i = 0; i < n; ++i) tasks.push_back(draw());
  return ParamBundle(std::move(tasks), draw());
}

// Cholesky of (m + shift * I); false if a pivot goes nonpositive.
bool cholesky_succeeds(const GramMatrix& g, double shift) {
  const std::size_t n = g.order();
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j) + shift;
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (d <= 0.0) return false;
    l[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = g(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = v / l[j * n + j];
    }
  }
  return true;
}

}  // namespace

TEST_CASE("ParamVector rejects empty and non-finite entries") {
  CHECK_THROWS_AS(ParamVector(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(ParamVector({1.0, NAN}), std::invalid_argument);
  CHECK_THROWS_AS(ParamVector({INFINITY}), std::invalid_argument);
  CHECK(ParamVector::zeros(3).size() == 3);
}

TEST_CASE("ParamBundle rejects mismatched dimensions") {
  CHECK_THROWS_AS(ParamBundle({ParamVector({1.0, 2.0})}, ParamVector({0.0})), DimensionError);
  CHECK_THROWS_AS(ParamBundle({}, ParamVector({0.0})), std::invalid_argument);
}

TEST_CASE("Centrality parsing") {
  CHECK(Centrality::parse("inf").is_infinite());
  CHECK(Centrality::parse("INF").is_infinite());
  CHECK(Centrality::parse("0").is_consensus());
  CHECK(Centrality::parse("1e-6").value() == doctest::Approx(1e-6));
  CHECK_THROWS_AS(Centrality::parse("-1"), std::invalid_argument);
  CHECK_THROWS_AS(Centrality::parse("abc"), std::invalid_argument);
  CHECK_THROWS_AS(Centrality::parse("1.0x"), std::invalid_argument);
  CHECK_THROWS_AS(Centrality::infinite().value(), std::logic_error);
  CHECK(Centrality::radius(INFINITY).is_infinite());
  CHECK(Centrality::parse(Centrality::radius(0.125).to_string()) == Centrality::radius(0.125));
}

TEST_CASE("feasibility examples") {
  SUBCASE("identical vectors at epsilon 0") {
    ParamVector v({1.0, -2.0});
    const auto f = feasibility(ParamBundle({v, v}, v), Centrality::radius(0.0));
    CHECK(f.feasible);
    CHECK(f.worst_violation == 0.0);
  }
  SUBCASE("single task outside the ball") {
    const auto f =
        feasibility(ParamBundle({ParamVector({2.0})}, ParamVector({0.0})), Centrality::radius(1.0));
    CHECK_FALSE(f.feasible);
    CHECK(f.worst_violation == doctest::Approx(1.0));
  }
  SUBCASE("infinite radius is always feasible") {
    const auto f = feasibility(ParamBundle({ParamVector({1e6})}, ParamVector({-1e6})),
                               Centrality::infinite());
    CHECK(f.feasible);
    CHECK(f.worst_violation < 0.0);
  }
}

TEST_CASE("feasibility is monotone in epsilon") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> eps_dist(0.0, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto bundle = random_bundle(rng, 1 + trial % 4, 1 + trial % 6);
    const double eps = eps_dist(rng);
    if (feasibility(bundle, Centrality::radius(eps)).feasible) {
      CHECK(feasibility(bundle, Centrality::radius(eps + eps_dist(rng))).feasible);
    }
  }
}

TEST_CASE("pairwise_gram examples") {
  SUBCASE("orthonormal") {
    const auto g = pairwise_gram(ParamBundle({ParamVector({1.0, 0.0})}, ParamVector({0.0, 1.0})));
    CHECK(g.order() == 2);
    CHECK(g(0, 0) == 1.0);
    CHECK(g(1, 1) == 1.0);
    CHECK(g(0, 1) == 0.0);
    CHECK(g(1, 0) == 0.0);
  }
  SUBCASE("zero vectors") {
    const ParamVector z({0.0});
    const auto g = pairwise_gram(ParamBundle({z, z}, z));
    CHECK(g.order() == 3);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(g(r, c) == 0.0);
  }
}

TEST_CASE("pairwise_gram matches double-loop dot products and is PSD") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto bundle = random_bundle(rng, 1 + trial % 5, 1 + trial % 9, 3.0);
    const auto g = pairwise_gram(bundle);
    auto vec = [&](std::size_t k) { return k == 0 ? bundle.central() : bundle.task(k - 1); };
    for (std::size_t r = 0; r < g.order(); ++r) {
      for (std::size_t c = 0; c < g.order(); ++c) {
        double expected = 0.0;
        for (std::size_t j = 0; j < bundle.dim(); ++j) expected += vec(r)[j] * vec(c)[j];
        CHECK(g(r, c) == doctest::Approx(expected).epsilon(1e-12));
        CHECK(g(r, c) == g(c, r));
      }
      CHECK(g(r, r) >= 0.0);
    }
    CHECK(cholesky_succeeds(g, 1e-9 * (1.0 + g.max_diagonal())));
  }
}

TEST_CASE("compensated dot stays accurate on long cancelling sums") {
  // 1e8, 1, -1e8 repeated: the exact dot product with ones is the number of 1s.
  const std::size_t reps = kCompensatedDotThreshold / 3 + 10;
  std::vector<double> a;
  for (std::size_t i = 0; i < reps; ++i) {
    a.push_back(1e16);
    a.push_back(1.0);
    a.push_back(-1e16);
  }
  const std::vector<double> ones(a.size(), 1.0);
  CHECK(dot(a, ones) == static_cast<double>(reps));
}

TEST_CASE("distance helpers") {
  const std::vector<double> a{3.0, 0.0}, b{0.0, 4.0};
  CHECK(squared_distance(a, b) == 25.0);
  CHECK(distance(a, b) == 5.0);
  CHECK(norm(a) == 3.0);
  CHECK_THROWS_AS(dot(a, std::vector<double>{1.0}), DimensionError);
}
