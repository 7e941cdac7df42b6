#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "maskctrl/rewards.hpp"

using namespace maskctrl;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

MetricRegistry registry() {
  return MetricRegistry::Builder()
      .add("first", [](std::span<const Token> x) { return static_cast<double>(x[0]); })
      .add("sum",
           [](std::span<const Token> x) {
             double s = 0;
             for (Token t : x) s += t;
             return s;
           })
      .build();
}

}  // namespace

TEST_CASE("interval distance") {
  CHECK(interval_distance(0.5, {0.8, inf}) == doctest::Approx(0.3));
  CHECK(interval_distance(1.2, {0.8, inf}) == 0.0);
  CHECK(interval_distance(45, {0, 40}) == 5.0);
  CHECK(interval_distance(-3, {-inf, -1}) == 0.0);
  CHECK_THROWS_AS((Interval{2, 1}).validate(), std::invalid_argument);
}

TEST_CASE("composite reward arithmetic") {
  const auto reg = registry();
  const std::vector<Token> x{45, 0};
  const IntervalConstraint stab{"first", {0, 40}, 5.0, 2.0};
  CHECK(composite_log_reward(x, std::vector{stab}, reg) == -125.0);
  CHECK(composite_reward({stab}, reg)(x) == std::exp(-125.0));

  const std::vector<Token> inside{10, 0};
  CHECK(composite_reward({stab}, reg)(inside) == 1.0);

  const IntervalConstraint s2{"sum", {0, 40}, 1.0, 1.0};
  const auto both = composite_reward({stab, s2}, reg);
  const std::vector<Token> y{43, 1};
  CHECK(both.log(y) == doctest::Approx(composite_reward({stab}, reg).log(y) +
                                       composite_reward({s2}, reg).log(y)));
}

TEST_CASE("composite reward stays in log space far from the interval") {
  const auto reg = registry();
  const IntervalConstraint c{"first", {0, 1}, 50.0, 2.0};
  const std::vector<Token> x{1001, 0};
  CHECK(composite_reward({c}, reg).log(x) == -50.0 * 1000.0 * 1000.0);
}

TEST_CASE("unknown metric fails at construction") {
  CHECK_THROWS_AS(composite_reward({{"nope", {}, 1, 1}}, registry()), std::invalid_argument);
  CHECK_THROWS_AS(registry().get("nope"), std::invalid_argument);
}

TEST_CASE("phi on raw integers") {
  CHECK(phi(std::vector<Token>{1, 1, 1, 1, 1, 1, 1, 1, 1, 2}) == 0);
  CHECK(phi(std::vector<Token>{1, 1, 1, 1, 1, 1, 1, 1, 1, 1}) == 1);
  CHECK(phi(std::vector<Token>{2, 3, 4, 1, 1, 1, 1, 1, 1, 1}) == -9);
  CHECK_THROWS_AS(phi(std::vector<Token>{1, 2}), std::invalid_argument);
}

TEST_CASE("equality reward truncates at m") {
  const auto r = equality_reward(5, 10);
  const std::vector<Token> zero{1, 1, 1, 1, 1, 1, 1, 1, 1, 2};
  CHECK(r(zero) == 1.0);
  // phi = 2: x1 = 3 instead of 1 on the phi = 0 sequence
  const std::vector<Token> two{3, 1, 1, 1, 1, 1, 1, 1, 1, 2};
  CHECK(phi(two) == 2);
  CHECK(r.log(two) == -10.0);
  // phi = 100: x5 x6 x7 = 100 + 1 - 1 ... built directly
  const std::vector<Token> big{1, 1, 1, 1, 5, 5, 4, 1, 1, 2};
  CHECK(phi(big) == 99);
  CHECK(r.log(big) == -50.0);
  CHECK(r.log(std::vector<Token>{0, 9, 9, 9, 0, 0, 0, 0, 0, 0}) == -50.0);
}

TEST_CASE("equality reward with value offset shifts the integers") {
  const auto r = equality_reward(5, 10, 1);
  // 0-based ids of (1,1,1,1,1,1,1,1,1,2)
  CHECK(r(std::vector<Token>{0, 0, 0, 0, 0, 0, 0, 0, 0, 1}) == 1.0);
}

TEST_CASE("equality reward is invariant under phi-preserving permutations") {
  std::mt19937_64 gen(2);
  const auto r = equality_reward(5, 10);
  for (int i = 0; i < 200; ++i) {
    std::vector<Token> x(10);
    for (auto& t : x) t = static_cast<Token>(gen() % 10);
    auto y = x;
    std::swap(y[1], y[2]);  // x2 x3 commute
    std::swap(y[4], y[6]);  // x5 x6 x7 commute
    std::swap(y[7], y[8]);  // x8 + x9
    CHECK(phi(x) == phi(y));
    CHECK(r(x) == r(y));
  }
}

TEST_CASE("indicator, custom and constant rewards") {
  const auto ind = indicator_reward([](std::span<const Token> x) { return x[0] == 1; });
  CHECK(ind(std::vector<Token>{1}) == 1.0);
  CHECK(ind(std::vector<Token>{0}) == 0.0);
  CHECK(ind.log(std::vector<Token>{0}) == -inf);

  const auto all = indicator_reward([](std::span<const Token>) { return true; });
  CHECK(all(std::vector<Token>{7}) == 1.0);

  const auto c = custom_reward([](std::span<const Token> x) { return 0.5 * x[0]; });
  CHECK(c(std::vector<Token>{3}) == doctest::Approx(1.5));
  const auto neg = custom_reward([](std::span<const Token>) { return -1.0; });
  CHECK_THROWS_AS(neg(std::vector<Token>{0}), std::domain_error);
  const auto nan = custom_reward([](std::span<const Token>) { return std::nan(""); });
  CHECK_THROWS_AS(nan(std::vector<Token>{0}), std::domain_error);

  CHECK(constant_reward(2.0)(std::vector<Token>{0}) == doctest::Approx(2.0));
  CHECK(constant_reward(2.0).scaled(3.0)(std::vector<Token>{0}) == doctest::Approx(6.0));
  CHECK_THROWS(constant_reward(0.0));
}

TEST_CASE("composite rewards lie in (0, 1]") {
  const auto reg = registry();
  std::mt19937_64 gen(8);
  const auto r = composite_reward({{"first", {3, 6}, 2.0, 1.5}, {"sum", {-inf, 10}, 0.7, 1.0}}, reg);
  for (int i = 0; i < 500; ++i) {
    const std::vector<Token> x{static_cast<Token>(gen() % 20), static_cast<Token>(gen() % 20)};
    const double v = r(x);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("reward spec JSON forms") {
  const auto list = RewardSpec::from_json(
      R"([{"metric":"first","lo":0,"hi":40,"weight":5,"exponent":2},
          {"metric":"sum","lo":"-inf","hi":null,"weight":1}])");
  CHECK(list.kind == RewardSpec::Kind::composite);
  REQUIRE(list.constraints.size() == 2);
  CHECK(list.constraints[0].exponent == 2.0);
  CHECK(std::isinf(list.constraints[1].interval.hi));
  CHECK(list.constraints[1].exponent == 1.0);
  const auto round = RewardSpec::from_json(list.to_json());
  CHECK(round.constraints.size() == 2);
  CHECK(round.constraints[0].interval.hi == 40.0);
  CHECK(round.build(registry()).log(std::vector<Token>{45, 0}) == -125.0);

  const auto eq = RewardSpec::from_json(R"({"constraint":"phi_toy","weight":5,"truncation":10})");
  CHECK(eq.kind == RewardSpec::Kind::equality);
  CHECK(eq.build(registry())(std::vector<Token>{1, 1, 1, 1, 1, 1, 1, 1, 1, 2}) == 1.0);

  const auto none = RewardSpec::from_json(R"({"constraint":"none"})");
  CHECK(none.kind == RewardSpec::Kind::constant);
  CHECK_THROWS(RewardSpec::from_json(R"({"constraint":"mystery"})"));
  CHECK_THROWS(RewardSpec::from_json(R"([{"metric":"first","weight":-1}])"));
}

TEST_CASE("reward evaluation rejects NaN and +inf") {
  const Reward bad([](std::span<const Token>) { return std::nan(""); }, "bad");
  CHECK_THROWS_AS(bad.log(std::vector<Token>{0}), std::domain_error);
  const Reward up([](std::span<const Token>) { return inf; }, "up");
  CHECK_THROWS_AS(up.log(std::vector<Token>{0}), std::domain_error);
}
