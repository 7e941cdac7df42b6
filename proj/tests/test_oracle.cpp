#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "maskctrl/errors.hpp"
#include "maskctrl/oracle.hpp"

using namespace maskctrl;
using namespace maskctrl::oracle;

namespace {

Count pow_count(std::size_t base, int exp) {
  Count c = 1;
  for (int i = 0; i < exp; ++i) c *= base;
  return c;
}

// Full enumeration of {offset..offset+N-1}^10.
std::map<std::int64_t, std::uint64_t> brute_force_phi(std::size_t N, int offset) {
  std::map<std::int64_t, std::uint64_t> counts;
  std::vector<Token> x(10, 0);
  const auto total = static_cast<std::uint64_t>(pow_count(N, 10));
  for (std::uint64_t idx = 0; idx < total; ++idx) {
    std::uint64_t r = idx;
    for (auto& v : x) {
      v = static_cast<Token>(r % N) + offset;
      r /= N;
    }
    ++counts[phi(x)];
  }
  return counts;
}

}  // namespace

TEST_CASE("frozen zero-phi counts") {
  const auto n10 = phi_distribution_dp(10);
  CHECK(to_string(n10.count(0)) == "107467136");
  CHECK(to_string(n10.total) == "10000000000");
  const auto n20 = phi_distribution_dp(20);
  CHECK(to_string(n20.count(0)) == "20255888483");
  CHECK(to_string(n20.total) == "10240000000000");
  const auto n30 = phi_distribution_dp(30);
  CHECK(to_string(n30.count(0)) == "416994977931");
  CHECK(to_string(n30.total) == "590490000000000");

  CHECK(n10.probability(0) * 100 == doctest::Approx(1.07).epsilon(0.005));
  CHECK(n20.probability(0) * 100 == doctest::Approx(0.20).epsilon(0.02));
  CHECK(n30.probability(0) * 100 == doctest::Approx(0.07).epsilon(0.02));
}

TEST_CASE("degenerate and bounding cases") {
  const auto one = phi_distribution_dp(1, 1);
  CHECK(one.counts.size() == 1);
  CHECK(one.count(1) == 1);
  CHECK(one.probability(1) == 1.0);

  for (std::size_t N : {2u, 5u, 10u}) {
    const auto pmf = phi_distribution_dp(N);
    CHECK(pmf.total == pow_count(N, 10));
    Count sum = 0;
    for (const auto& [v, c] : pmf.counts) sum += c;
    CHECK(sum == pmf.total);
    const auto M = static_cast<std::int64_t>(N - 1);
    // Positive terms x1, x5x6x7, x8, x9; negative terms x2x3, x4, x10.
    CHECK(pmf.max() == 3 * M + M * M * M);
    CHECK(pmf.min() == -(M * M + 2 * M));
  }
  CHECK_THROWS(phi_distribution_dp(0));
}

TEST_CASE("dynamic programme matches enumeration") {
  for (int offset : {0, 1}) {
    for (std::size_t N : {2u, 3u}) {
      CAPTURE(offset);
      CAPTURE(N);
      const auto pmf = phi_distribution_dp(N, offset);
      const auto brute = brute_force_phi(N, offset);
      CHECK(pmf.counts.size() == brute.size());
      for (const auto& [v, c] : brute) CHECK(pmf.count(v) == c);
    }
  }
  CHECK(phi_distribution_dp(3, 1).count(0) == 3223);
  CHECK(phi_distribution_dp(2, 1).count(0) == 108);
}

TEST_CASE("exact posterior") {
  SUBCASE("indicator on small sums has 19 solutions") {
    const auto p = JointTable::uniform(4, 3);
    const auto r = indicator_reward([](std::span<const Token> x) {
      int s = 0;
      for (Token t : x) s += t + 1;
      return s == 8;
    });
    const auto e = exact_posterior(p, r);
    std::size_t support = 0;
    for (double q : e.q) {
      if (q > 0) {
        ++support;
        CHECK(q == doctest::Approx(1.0 / 19));
      }
    }
    CHECK(support == 19);
    CHECK(e.z == doctest::Approx(19.0 / 81));
  }
  SUBCASE("constant reward returns the prior") {
    const auto p = JointTable::product(ProductModel::random(3, 3, 4));
    const auto e = exact_posterior(p, constant_reward(2.5));
    CHECK(e.z == doctest::Approx(2.5));
    CHECK(e.log_z == doctest::Approx(std::log(2.5)));
    for (std::size_t i = 0; i < e.q.size(); ++i) CHECK(e.q[i] == doctest::Approx(p.pmf()[i]));
  }
  SUBCASE("normalised") {
    const auto p = JointTable::product(ProductModel::random(3, 4, 8));
    const auto r = custom_reward([](std::span<const Token> x) { return 0.5 + x[0] * x[2]; });
    const auto e = exact_posterior(p, r);
    double s = 0.0;
    for (double q : e.q) s += q;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero evidence") {
    const auto p = JointTable::uniform(2, 2);
    CHECK_THROWS_AS(exact_posterior(p, indicator_reward([](auto) { return false; })),
                    ValidationError);
  }
}

TEST_CASE("total variation") {
  const std::vector<double> a{0.5, 0.5, 0.0}, b{0.0, 0.5, 0.5}, c{1.0, 0.0, 0.0};
  CHECK(total_variation(a, a) == 0.0);
  CHECK(total_variation(a, b) == doctest::Approx(0.5));
  CHECK(total_variation(b, c) == doctest::Approx(1.0));
  CHECK(total_variation(a, b) == total_variation(b, a));
  const std::vector<double> short_one{1.0};
  CHECK_THROWS_AS(total_variation(a, short_one), std::invalid_argument);
}

TEST_CASE("empirical distribution") {
  const std::vector<std::vector<Token>> samples{{0, 1}, {0, 1}, {1, 1}, {0, 0}};
  const auto e = empirical_distribution(samples, 2, 2);
  REQUIRE(e.size() == 4);
  CHECK(e[0] == 0.25);  // 00
  CHECK(e[1] == 0.5);   // 01
  CHECK(e[2] == 0.0);   // 10
  CHECK(e[3] == 0.25);  // 11
  CHECK_THROWS_AS(empirical_distribution({}, 2, 2), std::invalid_argument);
  const std::vector<std::vector<Token>> bad{{0, 2}};
  CHECK_THROWS_AS(empirical_distribution(bad, 2, 2), std::invalid_argument);
}
