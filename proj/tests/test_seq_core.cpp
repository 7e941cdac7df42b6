#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "maskctrl/seq_core.hpp"

using namespace maskctrl;

namespace {
constexpr Token M = 10;  // mask for vocab size 10
}

TEST_CASE("concat interleaves observed values and fills") {
  const IndexSet omega({0, 2}, 3);
  const std::vector<Token> observed{5, 7}, fill{9};
  CHECK(concat(omega, observed, fill, 10) == std::vector<Token>{5, 9, 7});
}

TEST_CASE("concat identity cases") {
  const std::vector<Token> x{1, 2, 3};
  CHECK(concat(IndexSet::all(3), x, {}, 10) == x);
  CHECK(concat(IndexSet({}, 3), {}, x, 10) == x);
}

TEST_CASE("concat rejects bad shapes and tokens") {
  // D is |omega| + |fill|, so position 5 cannot be observed with one fill.
  const IndexSet far({0, 5}, 6);
  const std::vector<Token> one{1}, two{1, 2}, bad{10};
  CHECK_THROWS_AS(concat(far, two, one, 10), std::invalid_argument);
  CHECK_THROWS_AS(concat(IndexSet({0}, 2), two, one, 10), std::invalid_argument);
  CHECK_THROWS(concat(IndexSet({0}, 2), one, bad, 10));
}

TEST_CASE("apply_mask") {
  const std::vector<Token> x{5, 9, 7};
  CHECK(apply_mask(x, IndexSet({1}, 3), 10).tokens()[1] == M);
  CHECK(apply_mask(x, IndexSet({}, 3), 10) == MaskedSequence(x, 10));
  CHECK(apply_mask(x, IndexSet::all(3), 10) == MaskedSequence::fully_masked(3, 10));
}

TEST_CASE("masked_positions") {
  CHECK(masked_positions(MaskedSequence({5, M, 7}, 10)) == IndexSet({1}, 3));
  CHECK(masked_positions(MaskedSequence::fully_masked(4, 10)) == IndexSet::all(4));
  CHECK(masked_positions(MaskedSequence({1, 2}, 10)).empty());
}

TEST_CASE("round trip through slicing on random partitions") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t D = 1 + gen() % 12;
    std::vector<Token> x(D);
    for (auto& t : x) t = static_cast<Token>(gen() % 10);
    std::vector<std::size_t> picked;
    for (std::size_t d = 0; d < D; ++d)
      if (gen() % 2) picked.push_back(d);
    const IndexSet omega(picked, D);
    const auto m = omega.complement(D);
    CHECK(concat(omega, slice(x, omega), slice(x, m), 10) == x);

    // apply_mask then masked_positions equals the request on a mask-free input.
    const auto masked = apply_mask(x, m, 10);
    CHECK(masked_positions(masked) == m);
    CHECK(masked.observed() == omega);
    // and is a superset of it otherwise
    const auto again = apply_mask(masked, omega);
    CHECK(again.masked_count() == D);
  }
}

TEST_CASE("IndexSet validation") {
  CHECK_THROWS_AS(IndexSet({2, 1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(IndexSet({1, 1}, 3), std::invalid_argument);
  CHECK_THROWS_AS(IndexSet({3}, 3), std::out_of_range);
  CHECK(IndexSet::from_unsorted({2, 0, 2}, 3) == IndexSet({0, 2}, 3));
  CHECK(IndexSet({1}, 3).is_subset_of(IndexSet({0, 1}, 3)));
  CHECK_FALSE(IndexSet({2}, 3).is_subset_of(IndexSet({0, 1}, 3)));
}

TEST_CASE("MaskedSequence rejects out-of-vocabulary tokens") {
  CHECK_THROWS_AS(MaskedSequence({11}, 10), std::invalid_argument);
  CHECK_THROWS_AS(MaskedSequence({-1}, 10), std::invalid_argument);
  CHECK_NOTHROW(MaskedSequence({10}, 10));
}

TEST_CASE("text formats round trip") {
  const Vocabulary v(10);
  const auto x = parse_tokens("3 ? 0 9", v);
  CHECK(x.tokens()[1] == M);
  CHECK(format_tokens(x) == "3 ? 0 9");
  CHECK_THROWS(parse_tokens("3 10", v));

  const auto& aa = Vocabulary::amino_acids();
  CHECK(aa.size() == 20);
  const auto p = parse_labels("AC?Y", aa);
  CHECK(p.tokens()[0] == 0);
  CHECK(p.tokens()[3] == 19);
  CHECK(p.is_masked(2));
  CHECK(format_labels(p.tokens(), aa) == "AC?Y");
  CHECK_THROWS(parse_labels("AB", aa));
  CHECK_THROWS(Vocabulary::with_labels("AA"));
  CHECK_THROWS(Vocabulary::with_labels("A?"));
}
