#include <doctest.h>

#include <set>

#include "oracles.hpp"
#include "diffprior/analysis.hpp"
#include "diffprior/errors.hpp"
#include "diffprior/schedule.hpp"

using namespace diffprior;

TEST_SUITE("schedule") {
  TEST_CASE("linear schedule endpoints and first step") {
    const NoiseSchedule s = linear_schedule(1e-4, 5e-2, 50);
    CHECK(s.steps() == 50);
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(50) == 5e-2);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-15));
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.beta_tilde(1) == 0.0);
  }

  TEST_CASE("single-step schedule") {
    const NoiseSchedule s = linear_schedule(0.5, 0.5, 1);
    CHECK(s.betas().size() == 1);
    CHECK(s.beta(1) == 0.5);
    CHECK(s.alpha_bar(1) == 0.5);
    CHECK(s.beta_tilde(1) == 0.0);
  }

  TEST_CASE("construction rejects bad input") {
    CHECK_THROWS_AS(linear_schedule(0.0, 0.1, 10), Error);
    CHECK_THROWS_AS(linear_schedule(0.2, 0.1, 10), Error);
    CHECK_THROWS_AS(linear_schedule(1e-4, 1.0, 10), Error);
    CHECK_THROWS_AS(linear_schedule(1e-4, 0.1, 0), Error);
    CHECK_THROWS_AS(NoiseSchedule(Eigen::VectorXd()), Error);
    const NoiseSchedule s = linear_schedule(0.1, 0.2, 3);
    CHECK_THROWS_AS(s.beta(0), Error);
    CHECK_THROWS_AS(s.beta(4), Error);
    CHECK_THROWS_AS(gamma(s, 0), Error);
    CHECK_THROWS_AS(gamma(s, 4), Error);
  }

  TEST_CASE("alpha bar matches a 50-digit product") {
    for (int T : {1, 2, 50, 200, 1000}) {
      const NoiseSchedule s = linear_schedule(1e-4, 5e-2, T);
      const auto ab = oracle::alpha_bars(oracle::linear_betas(1e-4, 5e-2, T));
      for (int t = 1; t <= T; ++t) {
        const double want = static_cast<double>(ab[t]);
        CHECK(std::abs(s.alpha_bar(t) - want) <= 1e-12 * want);
      }
    }
  }

  TEST_CASE("alpha bar is strictly decreasing inside (0, 1)") {
    const NoiseSchedule s = linear_schedule(1e-4, 5e-2, 50);
    for (int t = 1; t <= 50; ++t) {
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.alpha_bar(t) > 0.0);
    }
    for (int t = 2; t <= 50; ++t) CHECK(s.beta_tilde(t) > 0.0);
  }

  TEST_CASE("posterior variance identity") {
    const NoiseSchedule s = linear_schedule(1e-4, 5e-2, 50);
    for (int t = 1; t <= 50; ++t) {
      const double lhs = s.beta_tilde(t) * (1.0 - s.alpha_bar(t));
      const double rhs = s.beta(t) * (1.0 - s.alpha_bar(t - 1));
      CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(rhs, 1e-300));
    }
  }

  TEST_CASE("gamma weights") {
    const NoiseSchedule s = linear_schedule(1e-4, 5e-2, 50);
    CHECK(gamma(s, 1) == 1.0 / (2.0 * s.alpha(1)));
    CHECK(gamma(s, 1) == doctest::Approx(0.500050005).epsilon(1e-9));
    const auto betas = oracle::linear_betas(1e-4, 5e-2, 50);
    for (int t : {2, 25, 50}) {
      const double want = static_cast<double>(oracle::gamma(betas, t));
      CHECK(std::abs(gamma(s, t) - want) <= 1e-12 * want);
      CHECK(std::abs(gamma_posterior_form(s, t) - want) <= 1e-12 * want);
    }
    const Eigen::VectorXd g = gammas(s);
    for (int t = 1; t <= 50; ++t) CHECK(g[t - 1] == gamma(s, t));
  }

  TEST_CASE("optimal theta against a 50-digit sum") {
    const auto betas = oracle::linear_betas(1e-4, 5e-2, 50);
    const auto ab = oracle::alpha_bars(betas);
    oracle::hp num = 0, den = 0;
    for (int t = 1; t <= 50; ++t) {
      const oracle::hp g = oracle::gamma(betas, t);
      num += g * boost::multiprecision::sqrt(1 - ab[t]);
      den += g;
    }
    const double want = static_cast<double>(num / den);
    CHECK(std::abs(optimal_linear_theta(linear_schedule(1e-4, 5e-2, 50)) - want) <= 1e-12 * want);
  }

  TEST_CASE("grid search returns the strictly increasing minimizer") {
    const auto sum = [](std::span<const double> b) { return b[0] + b[1]; };
    const auto out = grid_search_fast_schedule({{0.1, 0.2}, {0.1, 0.3}}, sum);
    CHECK(out == std::vector<double>{0.1, 0.3});

    const auto single = grid_search_fast_schedule({{0.2}, {0.5}, {0.7}}, [](auto) { return 0.0; });
    CHECK(single == std::vector<double>{0.2, 0.5, 0.7});

    CHECK_THROWS_AS(grid_search_fast_schedule({{0.5}, {0.1, 0.5}}, sum), Error);
  }

  TEST_CASE("grid search ties go to the lexicographically smallest schedule") {
    const auto flat = [](std::span<const double>) { return 1.0; };
    const auto out = grid_search_fast_schedule(decade_grid(std::vector<double>{0.1, 0.1}), flat);
    CHECK(out == std::vector<double>{0.1, 0.2});
  }

  TEST_CASE("grid search agrees with exhaustive enumeration") {
    // A bumpy objective over three positions: 9^3 combinations.
    const auto bumpy = [](std::span<const double> b) {
      double v = 0.0;
      for (std::size_t i = 0; i < b.size(); ++i) v += std::sin(7.0 * b[i] * static_cast<double>(i + 1)) + b[i] * b[i];
      return v;
    };
    const auto grid = decade_grid(std::vector<double>{0.01, 0.1, 0.1});
    const auto out = grid_search_fast_schedule(grid, bumpy);
    REQUIRE(strictly_increasing(out));
    const double best = bumpy(out);
    for (double a : grid[0]) {
      for (double b : grid[1]) {
        for (double c : grid[2]) {
          if (!(a < b && b < c)) continue;
          const std::vector<double> cand{a, b, c};
          CHECK(best <= bumpy(cand));
        }
      }
    }
  }

  TEST_CASE("beta files round trip and reject junk") {
    const std::vector<double> b{0.3, 0.9};
    const std::string text = format_betas(b, "two-step");
    CHECK(parse_betas(text) == b);
    CHECK(parse_betas("# comment\n0.1\n\n0.5  # trailing\n") == std::vector<double>{0.1, 0.5});
    CHECK_THROWS_AS(parse_betas("0.1\nabc\n"), Error);
    CHECK(parse_betas("# nothing\n").empty());
  }
}
