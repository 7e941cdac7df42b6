#include "maskctrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "maskctrl/errors.hpp"

namespace maskctrl::oracle {

std::string to_string(Count c) {
  if (c == 0) return "0";
  std::string s;
  while (c > 0) {
    s += static_cast<char>('0' + static_cast<int>(c % 10));
    c /= 10;
  }
  std::reverse(s.begin(), s.end());
  return s;
}

Count IntegerPMF::count(std::int64_t v) const {
  auto it = counts.find(v);
  return it == counts.end() ? Count{0} : it->second;
}

double IntegerPMF::probability(std::int64_t v) const {
  return static_cast<double>(count(v)) / static_cast<double>(total);
}

namespace {

using Counts = std::map<std::int64_t, Count>;

Counts convolve(const Counts& a, const Counts& b) {
  Counts out;
  for (const auto& [va, ca] : a)
    for (const auto& [vb, cb] : b) out[va + vb] += ca * cb;
  return out;
}

}  // namespace

IntegerPMF phi_distribution_dp(std::size_t vocab_size, int value_offset) {
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be positive");
  const auto lo = static_cast<std::int64_t>(value_offset);
  const auto hi = lo + static_cast<std::int64_t>(vocab_size) - 1;

  Counts single, negated, neg_pair, triple;
  for (auto a = lo; a <= hi; ++a) {
    single[a] += 1;
    negated[-a] += 1;
    for (auto b = lo; b <= hi; ++b) {
      neg_pair[-a * b] += 1;
      for (auto c = lo; c <= hi; ++c) triple[a * b * c] += 1;
    }
  }
  // φ = x1 − x2x3 − x4 + x5x6x7 + x8 + x9 − x10; the cheap linear terms are
  // combined first so the big product term is convolved once.
  Counts linear = convolve(convolve(convolve(single, negated), convolve(single, single)),
                           negated);
  IntegerPMF pmf;
  pmf.counts = convolve(convolve(linear, neg_pair), triple);
  for (const auto& [_, c] : pmf.counts) pmf.total += c;
  return pmf;
}

ExactTarget exact_posterior(const JointTable& p, const Reward& reward) {
  ExactTarget target;
  target.length = p.length();
  target.vocab_size = p.vocab_size();
  const auto pmf = p.pmf();
  std::vector<double> log_w(pmf.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0; i < pmf.size(); ++i) {
    if (pmf[i] == 0.0) {
      log_w[i] = -std::numeric_limits<double>::infinity();
      continue;
    }
    log_w[i] = reward.log(p.decode(i)) + std::log(pmf[i]);
    max_log = std::max(max_log, log_w[i]);
  }
  if (max_log == -std::numeric_limits<double>::infinity())
    throw ValidationError("total reward mass Z is zero");
  double sum = 0.0;
  target.q.resize(pmf.size());
  for (std::uint64_t i = 0; i < pmf.size(); ++i) {
    target.q[i] = std::exp(log_w[i] - max_log);
    sum += target.q[i];
  }
  for (double& v : target.q) v /= sum;
  target.log_z = max_log + std::log(sum);
  target.z = std::exp(target.log_z);
  return target;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions have different supports");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

std::vector<double> empirical_distribution(std::span<const std::vector<Token>> samples,
                                           std::size_t length, std::size_t vocab_size,
                                           std::uint64_t cap) {
  if (samples.empty()) throw std::invalid_argument("no samples");
  const auto states = JointTable::state_count(length, vocab_size, cap);
  std::vector<double> counts(states, 0.0);
  for (const auto& x : samples) {
    if (x.size() != length) throw std::invalid_argument("sample has the wrong length");
    std::uint64_t idx = 0;
    for (Token t : x) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
        throw std::invalid_argument("sample outside the universe");
      idx = idx * vocab_size + static_cast<std::uint64_t>(t);
    }
    counts[idx] += 1.0;
  }
  for (double& c : counts) c /= static_cast<double>(samples.size());
  return counts;
}

}  // namespace maskctrl::oracle
