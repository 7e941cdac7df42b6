#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "maskctrl/errors.hpp"
#include "maskctrl/models.hpp"

using namespace maskctrl;

namespace {

// (0,0):0.1 (0,1):0.2 (1,0):0.3 (1,1):0.4
JointTable small_table() { return JointTable(2, 2, {0.1, 0.2, 0.3, 0.4}); }

JointTable random_table(std::size_t D, std::size_t N, std::mt19937_64& gen, bool sparse) {
  std::uint64_t states = 1;
  for (std::size_t i = 0; i < D; ++i) states *= N;
  std::vector<double> pmf(states);
  std::exponential_distribution<double> e(1.0);
  double s = 0.0;
  for (auto& v : pmf) {
    v = (sparse && gen() % 3 == 0) ? 0.0 : e(gen);
    s += v;
  }
  if (s == 0.0) {
    pmf[0] = 1.0;
    s = 1.0;
  }
  for (auto& v : pmf) v /= s;
  return JointTable(D, N, std::move(pmf));
}

}  // namespace

TEST_CASE("uniform model masked rows are 1/N, observed rows one-hot") {
  const UniformModel m(4, 5);
  const MaskedSequence x({2, 5, 0, 5}, 5);
  const auto p = m.predict(x);
  for (std::size_t n = 0; n < 5; ++n) {
    CHECK(p(1, n) == 0.2);
    CHECK(p(3, n) == 0.2);
    CHECK(p(0, n) == (n == 2 ? 1.0 : 0.0));
    CHECK(p(2, n) == (n == 0 ? 1.0 : 0.0));
  }
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("table model conditional by marginalization") {
  const TableModel m(small_table());
  const auto p = m.predict(MaskedSequence({0, 2}, 2));
  CHECK(p(1, 0) == doctest::Approx(0.1 / 0.3).epsilon(1e-15));
  CHECK(p(1, 1) == doctest::Approx(0.2 / 0.3).epsilon(1e-15));
  CHECK(p(0, 0) == 1.0);
}

TEST_CASE("exact_conditional examples") {
  const auto t = small_table();
  CHECK(exact_conditional(t, MaskedSequence({2, 2}, 2), 0, 0) == doctest::Approx(0.3));
  CHECK(exact_conditional(t, MaskedSequence({0, 2}, 2), 1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(exact_conditional(t, MaskedSequence({0, 1}, 2), 1, 1), std::invalid_argument);

  const JointTable delta(2, 2, {1.0, 0.0, 0.0, 0.0});
  const auto p = TableModel(delta).predict(MaskedSequence({2, 2}, 2));
  CHECK(p(0, 0) == 1.0);
  CHECK(p(1, 0) == 1.0);
  CHECK(p(1, 1) == 0.0);
}

TEST_CASE("zero-probability conditioning event") {
  const JointTable delta(2, 2, {1.0, 0.0, 0.0, 0.0});
  const MaskedSequence x({1, 2}, 2);
  CHECK_THROWS_AS(TableModel(delta).predict(x), ValidationError);
  CHECK_THROWS_AS(exact_conditional(delta, x, 1, 0), ValidationError);
}

TEST_CASE("table model agrees with exact_conditional on random tables") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t N = 2 + gen() % 3, D = 1 + gen() % 4;
    const auto table = random_table(D, N, gen, trial % 2 == 1);
    const TableModel model(table);
    // condition on a state with positive mass
    std::vector<Token> x;
    do {
      std::uniform_int_distribution<std::uint64_t> pick(0, table.states() - 1);
      x = table.decode(pick(gen));
    } while (table.prob(x) == 0.0);
    for (auto& t : x)
      if (gen() % 2) t = static_cast<Token>(N);
    const MaskedSequence q(x, N);
    const auto p = model.predict(q);
    for (std::size_t d = 0; d < D; ++d) {
      if (!q.is_masked(d)) continue;
      for (std::size_t n = 0; n < N; ++n)
        CHECK(std::abs(p(d, n) - exact_conditional(table, q, d, static_cast<Token>(n))) <= 1e-12);
    }
  }
}

TEST_CASE("product table conditionals do not depend on the other masks") {
  const auto pm = ProductModel::random(3, 3, 5);
  const TableModel m(JointTable::product(pm));
  const auto a = m.predict(MaskedSequence({3, 3, 3}, 3));
  const auto b = m.predict(MaskedSequence({1, 3, 0}, 3));
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(a(1, n) == doctest::Approx(b(1, n)).epsilon(1e-12));
    CHECK(a(1, n) == doctest::Approx(pm.marginal(1)[n]).epsilon(1e-12));
  }
}

TEST_CASE("joint table validation and JSON") {
  CHECK_THROWS_AS(JointTable(2, 2, {0.5, 0.5, 0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(JointTable(2, 2, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(JointTable(2, 2, {1.5, -0.5, 0.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(JointTable::state_count(20, 10), std::length_error);

  const auto t = small_table();
  const auto back = JointTable::from_json(t.to_json());
  CHECK(back.length() == 2);
  for (std::uint64_t i = 0; i < 4; ++i) CHECK(back.pmf()[i] == t.pmf()[i]);
  const auto sparse = JointTable::from_json(R"({"D":2,"N":2,"pmf":{"1,1":1.0}})");
  CHECK(sparse.prob(std::vector<Token>{1, 1}) == 1.0);
  CHECK(sparse.prob(std::vector<Token>{0, 1}) == 0.0);
}

TEST_CASE("product model normalises rows and exposes marginals") {
  const ProductModel m(2, 2, {1, 3, 2, 2});
  CHECK(m.marginal(0)[1] == 0.75);
  const auto p = m.predict(MaskedSequence({2, 1}, 2));
  CHECK(p(0, 0) == 0.25);
  CHECK(p(1, 1) == 1.0);
  CHECK_THROWS(ProductModel(1, 2, {0, 0}));
  CHECK_THROWS(ProductModel(1, 2, {1, -1}));
}

TEST_CASE("models check input shape") {
  const UniformModel m(3, 4);
  CHECK_THROWS_AS(m.predict(MaskedSequence({4, 4}, 4)), std::invalid_argument);
  CHECK_THROWS_AS(m.predict(MaskedSequence({3, 3, 3}, 3)), std::invalid_argument);
}

TEST_CASE("marginals validation") {
  ConditionalMarginals m(1, 2);
  m.set_masked_row(0, true);
  m.row(0)[0] = 0.5;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m.row(0)[1] = 0.5;
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("counting model counts sequences and round trips") {
  const UniformModel inner(2, 2);
  CountingModel m(inner);
  std::vector<MaskedSequence> xs(3, MaskedSequence::fully_masked(2, 2));
  m.predict_batch(xs);
  m.predict(xs[0]);
  CHECK(m.queries() == 4);
  CHECK(m.round_trips() == 2);
}
