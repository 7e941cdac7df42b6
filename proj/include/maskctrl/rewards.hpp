#pragma once

// Non-negative rewards r(x) defining the target q(x) ∝ r(x) p(x).
//
// Every reward is carried in log space; exp(-125)-sized values are common
// with the interval-penalty composite and underflow nothing here.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "maskctrl/seq_core.hpp"

namespace maskctrl {

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  /// Throws std::invalid_argument unless lo <= hi (and neither is NaN).
  void validate() const;
  bool contains(double a) const { return a >= lo && a <= hi; }
};

/// Distance from `a` to the interval: max(lo - a, 0) + max(a - hi, 0).
double interval_distance(double a, const Interval& interval);

using Metric = std::function<double(std::span<const Token>)>;

/// String id -> metric. Immutable once built.
class MetricRegistry {
 public:
  class Builder {
   public:
    Builder& add(std::string id, Metric metric);
    MetricRegistry build() const;

   private:
    std::map<std::string, Metric> metrics_;
  };

  MetricRegistry() = default;

  bool contains(const std::string& id) const { return metrics_.count(id) != 0; }
  /// Throws std::invalid_argument for unknown ids.
  const Metric& get(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  explicit MetricRegistry(std::map<std::string, Metric> m) : metrics_(std::move(m)) {}
  std::map<std::string, Metric> metrics_;
};

struct IntervalConstraint {
  std::string metric;
  Interval interval;
  double weight = 1.0;    // w > 0
  double exponent = 1.0;  // α > 0

  void validate() const;
};

/// A reward evaluated as log r(x). Cheap to copy; evaluation is pure.
class Reward {
 public:
  using LogFn = std::function<double(std::span<const Token>)>;

  Reward(LogFn log_fn, std::string name);

  /// log r(x); -inf for zero reward. Throws std::domain_error if the
  /// underlying function produced NaN or +inf.
  double log(std::span<const Token> x) const;
  double operator()(std::span<const Token> x) const;

  /// r'(x) = c · r(x), c > 0.
  Reward scaled(double c) const;
  const std::string& name() const noexcept { return name_; }

 private:
  LogFn log_fn_;
  std::string name_;
};

/// log r(x) = -Σ w_i · dist(m_i(x), A_i)^α_i.
double composite_log_reward(std::span<const Token> x,
                            std::span<const IntervalConstraint> constraints,
                            const MetricRegistry& registry);

/// exp(-Σ w_i · dist(m_i(x), A_i)^α_i). Metric ids are resolved here, so an
/// unknown id fails at construction.
Reward composite_reward(std::vector<IntervalConstraint> constraints,
                        const MetricRegistry& registry);

/// φ(x) = x¹ − x²x³ − x⁴ + x⁵x⁶x⁷ + x⁸ + x⁹ − x¹⁰ on the given integers.
/// Throws std::invalid_argument unless x has length 10.
std::int64_t phi(std::span<const Token> x);

/// exp(-w · min(|φ(x + offset)|, m)); the token ids plus `value_offset` are
/// the integers fed to φ.
double equality_log_reward(std::span<const Token> x, double weight, double truncation,
                           int value_offset = 0);
Reward equality_reward(double weight, double truncation, int value_offset = 0);

Reward indicator_reward(std::function<bool(std::span<const Token>)> predicate,
                        std::string name = "indicator");
/// Black-box r(x) >= 0 in linear space.
Reward custom_reward(std::function<double(std::span<const Token>)> r,
                     std::string name = "custom");
Reward constant_reward(double c = 1.0);

/// Serializable description of a reward, as read from a reward spec file.
struct RewardSpec {
  enum class Kind { constant, composite, equality };

  Kind kind = Kind::constant;
  std::vector<IntervalConstraint> constraints;  // composite
  double weight = 5.0;                          // equality
  double truncation = 10.0;                     // equality
  int value_offset = 0;                         // equality

  /// Accepts a list of `{metric, lo, hi, weight, exponent}` objects, an
  /// object with a "constraints" list, `{"constraint":"phi_toy", weight,
  /// truncation}` or `{"constraint":"none"}`. lo/hi may be null, "-inf",
  /// "inf" or numbers.
  static RewardSpec from_json(const std::string& text);
  std::string to_json() const;
  Reward build(const MetricRegistry& registry) const;
};

}  // namespace maskctrl
