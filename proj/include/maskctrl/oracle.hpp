#pragma once

// Exact ground truth for enumerable instances.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "maskctrl/models.hpp"
#include "maskctrl/rewards.hpp"

namespace maskctrl::oracle {

__extension__ typedef unsigned __int128 Count;

std::string to_string(Count c);

/// Distribution of an integer-valued statistic, kept as exact counts.
struct IntegerPMF {
  std::map<std::int64_t, Count> counts;
  Count total = 0;

  Count count(std::int64_t v) const;
  double probability(std::int64_t v) const;
  std::int64_t min() const { return counts.begin()->first; }
  std::int64_t max() const { return counts.rbegin()->first; }
};

/// Exact law of φ(X) for X uniform on {offset, …, offset+N-1}^10, by
/// convolving the seven independent terms of φ. No N^10 enumeration.
IntegerPMF phi_distribution_dp(std::size_t vocab_size, int value_offset = 0);

/// q(x) = r(x) p(x) / Z over the full state space.
struct ExactTarget {
  std::size_t length = 0;
  std::size_t vocab_size = 0;
  double log_z = 0.0;
  double z = 0.0;
  std::vector<double> q;  // indexed like JointTable
};

/// Enumerates the table's state space. Throws ValidationError if Z = 0.
ExactTarget exact_posterior(const JointTable& p, const Reward& reward);

/// ½ Σ |p - q| over a shared universe. Throws std::invalid_argument if the
/// sizes differ.
double total_variation(std::span<const double> p, std::span<const double> q);

/// Normalised counts over {0..N-1}^D. Throws std::invalid_argument for an
/// empty sample list or a sample outside the universe.
std::vector<double> empirical_distribution(std::span<const std::vector<Token>> samples,
                                           std::size_t length, std::size_t vocab_size,
                                           std::uint64_t cap = JointTable::kDefaultCap);

}  // namespace maskctrl::oracle
