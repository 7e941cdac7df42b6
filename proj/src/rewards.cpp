#include "maskctrl/rewards.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace maskctrl {

void Interval::validate() const {
  if (std::isnan(lo) || std::isnan(hi) || lo > hi)
    throw std::invalid_argument("interval requires lo <= hi");
}

double interval_distance(double a, const Interval& interval) {
  return std::max(interval.lo - a, 0.0) + std::max(a - interval.hi, 0.0);
}

MetricRegistry::Builder& MetricRegistry::Builder::add(std::string id, Metric metric) {
  if (!metric) throw std::invalid_argument("metric '" + id + "' is empty");
  if (!metrics_.emplace(std::move(id), std::move(metric)).second)
    throw std::invalid_argument("duplicate metric id");
  return *this;
}

MetricRegistry MetricRegistry::Builder::build() const {
  return MetricRegistry(metrics_);
}

const Metric& MetricRegistry::get(const std::string& id) const {
  auto it = metrics_.find(id);
  if (it == metrics_.end()) throw std::invalid_argument("unknown metric '" + id + "'");
  return it->second;
}

std::vector<std::string> MetricRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : metrics_) out.push_back(id);
  return out;
}

void IntervalConstraint::validate() const {
  interval.validate();
  if (!(weight > 0.0) || !std::isfinite(weight))
    throw std::invalid_argument("constraint weight must be positive");
  if (!(exponent > 0.0) || !std::isfinite(exponent))
    throw std::invalid_argument("constraint exponent must be positive");
}

Reward::Reward(LogFn log_fn, std::string name)
    : log_fn_(std::move(log_fn)), name_(std::move(name)) {
  if (!log_fn_) throw std::invalid_argument("reward function is empty");
}

double Reward::log(std::span<const Token> x) const {
  const double v = log_fn_(x);
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
    throw std::domain_error("reward '" + name_ + "' is not finite");
  return v;
}

double Reward::operator()(std::span<const Token> x) const { return std::exp(log(x)); }

Reward Reward::scaled(double c) const {
  if (!(c > 0.0) || !std::isfinite(c))
    throw std::invalid_argument("reward scale must be positive");
  const double shift = std::log(c);
  return Reward([inner = log_fn_, shift](std::span<const Token> x) { return inner(x) + shift; },
                name_ + "*" + std::to_string(c));
}

double composite_log_reward(std::span<const Token> x,
                            std::span<const IntervalConstraint> constraints,
                            const MetricRegistry& registry) {
  double penalty = 0.0;
  for (const auto& c : constraints) {
    const double value = registry.get(c.metric)(x);
    if (!std::isfinite(value))
      throw std::domain_error("metric '" + c.metric + "' is not finite");
    const double dist = interval_distance(value, c.interval);
    if (dist > 0.0) penalty += c.weight * std::pow(dist, c.exponent);
  }
  return -penalty;
}

Reward composite_reward(std::vector<IntervalConstraint> constraints,
                        const MetricRegistry& registry) {
  struct Resolved {
    Metric metric;
    IntervalConstraint constraint;
  };
  std::vector<Resolved> resolved;
  std::string name = "composite(";
  for (auto& c : constraints) {
    c.validate();
    name += c.metric + ",";
    resolved.push_back({registry.get(c.metric), c});
  }
  name += ")";
  return Reward(
      [resolved = std::move(resolved)](std::span<const Token> x) {
        double penalty = 0.0;
        for (const auto& r : resolved) {
          const double value = r.metric(x);
          if (!std::isfinite(value))
            throw std::domain_error("metric '" + r.constraint.metric + "' is not finite");
          const double dist = interval_distance(value, r.constraint.interval);
          if (dist > 0.0) penalty += r.constraint.weight * std::pow(dist, r.constraint.exponent);
        }
        return -penalty;
      },
      std::move(name));
}

std::int64_t phi(std::span<const Token> x) {
  if (x.size() != 10) throw std::invalid_argument("phi is defined on length-10 sequences");
  auto v = [&](std::size_t i) { return static_cast<std::int64_t>(x[i - 1]); };
  return v(1) - v(2) * v(3) - v(4) + v(5) * v(6) * v(7) + v(8) + v(9) - v(10);
}

double equality_log_reward(std::span<const Token> x, double weight, double truncation,
                           int value_offset) {
  std::int64_t value;
  if (value_offset == 0) {
    value = phi(x);
  } else {
    std::array<Token, 10> shifted{};
    if (x.size() != 10) throw std::invalid_argument("phi is defined on length-10 sequences");
    for (std::size_t i = 0; i < 10; ++i) shifted[i] = x[i] + value_offset;
    value = phi(shifted);
  }
  const double a = static_cast<double>(value < 0 ? -value : value);
  return -weight * std::min(a, truncation);
}

Reward equality_reward(double weight, double truncation, int value_offset) {
  if (!(weight > 0.0) || !(truncation > 0.0))
    throw std::invalid_argument("equality reward needs w > 0 and m > 0");
  return Reward(
      [=](std::span<const Token> x) {
        return equality_log_reward(x, weight, truncation, value_offset);
      },
      "equality");
}

Reward indicator_reward(std::function<bool(std::span<const Token>)> predicate,
                        std::string name) {
  return Reward(
      [p = std::move(predicate)](std::span<const Token> x) {
        return p(x) ? 0.0 : -std::numeric_limits<double>::infinity();
      },
      std::move(name));
}

Reward custom_reward(std::function<double(std::span<const Token>)> r, std::string name) {
  return Reward(
      [r = std::move(r)](std::span<const Token> x) {
        const double v = r(x);
        if (!(v >= 0.0)) throw std::domain_error("custom reward must be non-negative");
        return std::log(v);
      },
      std::move(name));
}

Reward constant_reward(double c) {
  if (!(c > 0.0) || !std::isfinite(c))
    throw std::invalid_argument("constant reward must be positive");
  const double lc = std::log(c);
  return Reward([lc](std::span<const Token>) { return lc; }, "constant");
}

// ---------------------------------------------------------------------------
// RewardSpec

namespace {

double parse_bound(const nlohmann::json& j, double missing) {
  if (j.is_null()) return missing;
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad interval bound '" + s + "'");
  }
  return j.get<double>();
}

nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

IntervalConstraint parse_constraint(const nlohmann::json& j) {
  IntervalConstraint c;
  c.metric = j.at("metric").get<std::string>();
  c.interval.lo = parse_bound(j.value("lo", nlohmann::json()),
                              -std::numeric_limits<double>::infinity());
  c.interval.hi = parse_bound(j.value("hi", nlohmann::json()),
                              std::numeric_limits<double>::infinity());
  c.weight = j.at("weight").get<double>();
  c.exponent = j.value("exponent", 1.0);
  c.validate();
  return c;
}

}  // namespace

RewardSpec RewardSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("reward spec JSON: ") + e.what());
  }
  RewardSpec spec;
  try {
    if (j.is_array()) {
      spec.kind = Kind::composite;
      for (const auto& c : j) spec.constraints.push_back(parse_constraint(c));
    } else if (j.contains("constraints")) {
      spec.kind = Kind::composite;
      for (const auto& c : j.at("constraints")) spec.constraints.push_back(parse_constraint(c));
    } else {
      const auto name = j.at("constraint").get<std::string>();
      if (name == "phi_toy") {
        spec.kind = Kind::equality;
        spec.weight = j.value("weight", 5.0);
        spec.truncation = j.value("truncation", 10.0);
        spec.value_offset = j.value("value_offset", 0);
        if (!(spec.weight > 0.0) || !(spec.truncation > 0.0))
          throw std::invalid_argument("equality reward needs weight > 0 and truncation > 0");
      } else if (name == "none") {
        spec.kind = Kind::constant;
      } else {
        throw std::invalid_argument("unknown constraint '" + name + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("reward spec: ") + e.what());
  }
  return spec;
}

std::string RewardSpec::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::constant:
      j["constraint"] = "none";
      break;
    case Kind::equality:
      j["constraint"] = "phi_toy";
      j["weight"] = weight;
      j["truncation"] = truncation;
      j["value_offset"] = value_offset;
      break;
    case Kind::composite: {
      j["constraints"] = nlohmann::json::array();
      for (const auto& c : constraints) {
        j["constraints"].push_back({{"metric", c.metric},
                                    {"lo", bound_to_json(c.interval.lo)},
                                    {"hi", bound_to_json(c.interval.hi)},
                                    {"weight", c.weight},
                                    {"exponent", c.exponent}});
      }
      break;
    }
  }
  return j.dump();
}

Reward RewardSpec::build(const MetricRegistry& registry) const {
  switch (kind) {
    case Kind::composite:
      return composite_reward(constraints, registry);
    case Kind::equality:
      return equality_reward(weight, truncation, value_offset);
    case Kind::constant:
      break;
  }
  return constant_reward();
}

}  // namespace maskctrl
