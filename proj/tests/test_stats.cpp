#include "baycann/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace baycann::stats;

namespace {

std::vector<std::vector<double>> iid_chains(int m, int n, std::uint64_t seed, double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) {
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(c)].push_back(z(rng) + shift * c);
  }
  return out;
}

std::vector<std::vector<double>> ar1_chains(int m, int n, double phi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m));
  for (auto& c : out) {
    double x = z(rng) / std::sqrt(1.0 - phi * phi);
    for (int i = 0; i < n; ++i) {
      x = phi * x + z(rng);
      c.push_back(x);
    }
  }
  return out;
}

// Textbook split-R-hat written out long-hand.
double rhat_oracle(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> h;
  for (const auto& c : chains) {
    const std::size_t k = c.size() / 2;
    h.emplace_back(c.begin(), c.begin() + static_cast<long>(k));
    h.emplace_back(c.end() - static_cast<long>(k), c.end());
  }
  const double n = static_cast<double>(h[0].size());
  const double m = static_cast<double>(h.size());
  std::vector<double> mu;
  double grand = 0.0, W = 0.0;
  for (const auto& c : h) {
    double s = 0.0;
    for (double v : c) s += v;
    mu.push_back(s / n);
    grand += s / n / m;
  }
  for (std::size_t j = 0; j < h.size(); ++j) {
    double s = 0.0;
    for (double v : h[j]) s += (v - mu[j]) * (v - mu[j]);
    W += s / (n - 1.0) / m;
  }
  double B = 0.0;
  for (double v : mu) B += (v - grand) * (v - grand);
  B *= n / (m - 1.0);
  return std::sqrt(((n - 1.0) / n * W + B / n) / W);
}

}  // namespace

TEST_SUITE("moments") {
  TEST_CASE("mean, variance and type-7 quantiles") {
    const std::vector<double> x{4, 1, 3, 2};
    CHECK(mean(x) == 2.5);
    CHECK(variance(x) == doctest::Approx(5.0 / 3.0));
    CHECK(quantile(x, 0.25) == doctest::Approx(1.75));
    CHECK(quantile(x, 0.5) == doctest::Approx(2.5));
    CHECK(quantile(x, 0.0) == 1.0);
    CHECK(quantile(x, 1.0) == 4.0);
    CHECK(quantile({7.0}, 0.3) == 7.0);
  }
}

TEST_SUITE("ks") {
  TEST_CASE("single point and perfect grid") {
    CHECK(ks_uniform({0.5}, 0.0, 1.0) == doctest::Approx(0.5));
    std::vector<double> grid;
    for (int i = 0; i < 100; ++i) grid.push_back((i + 0.5) / 100.0);
    CHECK(ks_uniform(grid, 0.0, 1.0) == doctest::Approx(0.005));
  }
  TEST_CASE("uniform sample is close, shifted sample is not") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(2.0, 6.0);
    std::vector<double> x;
    for (int i = 0; i < 4000; ++i) x.push_back(u(rng));
    CHECK(ks_uniform(x, 2.0, 6.0) < 0.03);
    CHECK(ks_uniform(x, 2.0, 8.0) > 0.3);
  }
}

TEST_SUITE("rhat") {
  TEST_CASE("iid chains") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const double r = split_rhat(iid_chains(4, 1000, s));
      CHECK(r >= 0.99);
      CHECK(r <= 1.02);
    }
  }
  TEST_CASE("disjoint supports") {
    CHECK(split_rhat(iid_chains(4, 500, 3, 100.0)) > 1.1);
  }
  TEST_CASE("matches the long-hand formula") {
    const auto c = ar1_chains(3, 301, 0.7, 4);
    CHECK(split_rhat(c) == doctest::Approx(rhat_oracle(c)).epsilon(1e-12));
  }
  TEST_CASE("unusable input") {
    CHECK(std::isnan(split_rhat({{1.0, 2.0}})));
    CHECK(std::isnan(split_rhat({{1, 2, 3, 4}, {1, 2, 3}})));
  }
}

TEST_SUITE("ess") {
  TEST_CASE("iid chains give about the draw count") {
    const auto c = iid_chains(4, 1000, 9);
    CHECK(ess_bulk(c) == doctest::Approx(4000.0).epsilon(0.2));
    CHECK(ess_raw(c) == doctest::Approx(4000.0).epsilon(0.2));
  }
  TEST_CASE("AR(1) matches N (1 - phi) / (1 + phi)") {
    for (double phi : {0.5, 0.9}) {
      const auto c = ar1_chains(4, 20000, phi, 5);
      const double want = 80000.0 * (1.0 - phi) / (1.0 + phi);
      CHECK(ess_raw(c) == doctest::Approx(want).epsilon(0.15));
      CHECK(ess_bulk(c) == doctest::Approx(want).epsilon(0.15));
    }
  }
}

TEST_SUITE("kde") {
  TEST_CASE("integrates to one and peaks near the mode") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z(3.0, 0.5);
    std::vector<double> x;
    for (int i = 0; i < 2000; ++i) x.push_back(z(rng));
    std::vector<double> grid;
    for (int i = 0; i <= 600; ++i) grid.push_back(i * 0.01);
    const auto d = kde(x, grid);
    double area = 0.0;
    for (std::size_t i = 1; i < d.size(); ++i) area += 0.5 * (d[i] + d[i - 1]) * 0.01;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-3));
    const auto peak = std::max_element(d.begin(), d.end()) - d.begin();
    CHECK(std::abs(grid[static_cast<std::size_t>(peak)] - 3.0) < 0.1);
  }
}
