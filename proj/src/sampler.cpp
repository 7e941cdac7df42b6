#include "maskctrl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "maskctrl/errors.hpp"

namespace maskctrl {

double cosine_schedule(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("schedule argument outside [0,1]");
  return std::cos(std::numbers::pi * s / 2.0);
}

double linear_schedule(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("schedule argument outside [0,1]");
  return 1.0 - s;
}

void SamplerConfig::validate() const {
  if (steps == 0) throw ConfigError("number of unmasking steps T must be >= 1");
  if (samples == 0) throw ConfigError("number of Monte Carlo samples K must be >= 1");
  if (!(weight_floor > 0.0) || !std::isfinite(weight_floor))
    throw ConfigError("weight floor must be positive");
  if (!schedule) throw ConfigError("unmasking schedule is not set");
  double prev = 1.0;
  for (std::size_t t = 0; t <= steps; ++t) {
    const double g = schedule(static_cast<double>(t) / static_cast<double>(steps));
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("schedule value outside [0,1]");
    if (g > prev) throw ConfigError("schedule must be non-increasing");
    prev = g;
  }
  // cos(π/2) is 6e-17, not 0; anything that floors to zero for any
  // realistic length counts as zero.
  if (schedule(1.0) > 1e-12) throw ConfigError("schedule must satisfy γ(1) = 0");
}

namespace {

// First k with cum[k] > target; cum is a non-decreasing prefix-sum array.
std::size_t bucket(std::span<const double> cum, double target) {
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  if (it == cum.end()) {
    // target rounded up to the total; take the last bucket with mass.
    std::size_t k = cum.size() - 1;
    while (k > 0 && cum[k] == cum[k - 1]) --k;
    return k;
  }
  return static_cast<std::size_t>(it - cum.begin());
}

}  // namespace

FillBatch mean_field_sample(const ConditionalMarginals& marginals, const IndexSet& masked,
                            std::size_t samples, Rng& rng) {
  const std::size_t N = marginals.vocab_size();
  const std::size_t width = masked.size();
  std::vector<double> cumulative(width * N);
  for (std::size_t i = 0; i < width; ++i) {
    const std::size_t d = masked[i];
    if (d >= marginals.length()) throw std::out_of_range("masked position out of range");
    auto row = marginals.row(d);
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      if (!(row[n] >= 0.0) || !std::isfinite(row[n]))
        throw ValidationError("invalid probability in row " + std::to_string(d));
      acc += row[n];
      cumulative[i * N + n] = acc;
    }
    if (std::abs(acc - 1.0) > 1e-9)
      throw ValidationError("row " + std::to_string(d) + " is not a distribution");
  }
  FillBatch fills(samples, width);
  for (std::size_t k = 0; k < samples; ++k) {
    auto out = fills[k];
    for (std::size_t i = 0; i < width; ++i) {
      std::span<const double> cum(cumulative.data() + i * N, N);
      out[i] = static_cast<Token>(bucket(cum, rng.uniform() * cum[N - 1]));
    }
  }
  return fills;
}

std::size_t categorical_index(std::span<const double> weights, double u) {
  if (weights.empty()) throw std::invalid_argument("empty weight vector");
  std::vector<double> cum(weights.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
      throw std::domain_error("categorical weights must be finite and non-negative");
    acc += weights[k];
    cum[k] = acc;
  }
  if (!(acc > 0.0)) throw std::domain_error("categorical weights sum to zero");
  return bucket(cum, u * acc);
}

std::vector<double> normalized_weights(std::span<const double> log_rewards, double floor) {
  if (log_rewards.empty()) throw std::invalid_argument("no candidates to weigh");
  const double log_floor = std::log(floor);
  std::vector<double> w(log_rewards.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double lr = log_rewards[k];
    if (std::isnan(lr) || lr == std::numeric_limits<double>::infinity())
      throw std::domain_error("reward is not finite");
    w[k] = lr < log_floor ? log_floor : lr;
    max_log = std::max(max_log, w[k]);
  }
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v - max_log);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

double effective_sample_size(std::span<const double> normalized) {
  double sq = 0.0;
  for (double w : normalized) sq += w * w;
  return 1.0 / sq;
}

Selection importance_select(std::span<const double> log_rewards, double floor, Rng& rng) {
  Selection s;
  s.weights = normalized_weights(log_rewards, floor);
  std::vector<double> cum(s.weights.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < cum.size(); ++k) cum[k] = acc += s.weights[k];
  s.index = bucket(cum, rng.uniform() * acc);
  s.ess = effective_sample_size(s.weights);
  return s;
}

std::size_t remask_count(std::size_t t, std::size_t steps, std::size_t effective_length,
                         const Schedule& schedule) {
  if (steps == 0 || t > steps) throw std::invalid_argument("step index out of range");
  const double g = schedule(static_cast<double>(t) / static_cast<double>(steps));
  return static_cast<std::size_t>(std::floor(g * static_cast<double>(effective_length)));
}

MaskedSequence remask_uniform(std::span<const Token> x, const IndexSet& newly,
                              std::size_t count, std::size_t vocab_size, Rng& rng) {
  if (count > newly.size())
    throw std::invalid_argument("cannot remask more positions than were filled");
  std::vector<std::size_t> pool = newly.positions();
  // Partial Fisher–Yates: the first `count` entries form a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return apply_mask(x, IndexSet::from_unsorted(std::move(pool), x.size()), vocab_size);
}

MaskedSequence remask_low_confidence(std::span<const Token> x, const IndexSet& newly,
                                     std::size_t count, const ConditionalMarginals& marginals) {
  if (count > newly.size())
    throw std::invalid_argument("cannot remask more positions than were filled");
  std::vector<std::size_t> order = newly.positions();
  auto confidence = [&](std::size_t d) {
    return marginals(d, static_cast<std::size_t>(x[d]));
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return confidence(a) < confidence(b);
  });
  order.resize(count);
  return apply_mask(x, IndexSet::from_unsorted(std::move(order), x.size()),
                    marginals.vocab_size());
}

// ---------------------------------------------------------------------------
// Chains

namespace {

struct Chain {
  std::size_t id = 0;
  Rng* rng = nullptr;
  std::vector<Token> x;
  Trace trace;
};

void check_prompt(const InpaintPrompt& prompt, std::size_t length, std::size_t vocab) {
  if (prompt.values.size() != prompt.positions.size())
    throw std::invalid_argument("prompt values do not match prompt positions");
  for (std::size_t d : prompt.positions)
    if (d >= length) throw std::out_of_range("prompt position out of range");
  for (Token v : prompt.values)
    if (v < 0 || static_cast<std::size_t>(v) >= vocab)
      throw std::invalid_argument("prompt token is not a real token");
}

void advance_chain(Chain& chain, const ConditionalMarginals& marginals, const Reward& reward,
                   const SamplerConfig& config, std::size_t t, std::size_t target,
                   std::size_t vocab) {
  const MaskedSequence current(chain.x, vocab);
  const IndexSet masked = current.masked();
  const FillBatch fills = mean_field_sample(marginals, masked, config.samples, *chain.rng);

  std::vector<double> log_rewards(fills.count());
  std::vector<Token> work = chain.x;
  for (std::size_t k = 0; k < fills.count(); ++k) {
    fill_masked(work, masked, fills[k]);
    log_rewards[k] = reward.log(work);
  }
  const Selection sel = importance_select(log_rewards, config.weight_floor, *chain.rng);
  fill_masked(chain.x, masked, fills[sel.index]);

  MaskedSequence next = config.remask == RemaskStrategy::uniform
                            ? remask_uniform(chain.x, masked, target, vocab, *chain.rng)
                            : remask_low_confidence(chain.x, masked, target, marginals);
  chain.x.assign(next.tokens().begin(), next.tokens().end());

  StepRecord rec;
  rec.chain = chain.id;
  rec.t = t;
  rec.masked_before = masked.size();
  rec.masked_count = target;
  rec.selected = sel.index;
  rec.ess = sel.ess;
  rec.log_reward_of_selected = log_rewards[sel.index];
  rec.model_queries = 1;
  rec.reward_evals = fills.count();
  rec.observed = next.observed();
  chain.trace.steps.push_back(std::move(rec));
  chain.trace.model_queries += 1;
  chain.trace.reward_evals += fills.count();
}

void run_lockstep(const MaskedModel& model, const Reward& reward, const SamplerConfig& config,
                  const InpaintPrompt* prompt, std::span<Chain> chains) {
  config.validate();
  const std::size_t D = model.length(), N = model.vocab_size();
  const InpaintPrompt empty;
  const InpaintPrompt& fixed = prompt ? *prompt : empty;
  check_prompt(fixed, D, N);
  const std::size_t effective_length = D - fixed.positions.size();

  for (auto& c : chains) {
    c.x.assign(D, static_cast<Token>(N));
    for (std::size_t i = 0; i < fixed.positions.size(); ++i)
      c.x[fixed.positions[i]] = fixed.values[i];
  }

  std::size_t current = effective_length;
  for (std::size_t t = 1; t <= config.steps; ++t) {
    const std::size_t target = remask_count(t, config.steps, effective_length, config.schedule);
    if (target > current)
      throw ConfigError("schedule increases the mask count at step " + std::to_string(t));
    if (target == current && config.skip_stalled_steps) {
      for (auto& c : chains) {
        StepRecord rec;
        rec.chain = c.id;
        rec.t = t;
        rec.skipped = true;
        rec.masked_before = current;
        rec.masked_count = current;
        rec.observed = MaskedSequence(c.x, N).observed();
        c.trace.steps.push_back(std::move(rec));
      }
      continue;
    }

    std::vector<MaskedSequence> batch;
    batch.reserve(chains.size());
    for (const auto& c : chains) batch.emplace_back(c.x, N);
    std::vector<ConditionalMarginals> marginals;
    try {
      marginals = model.predict_batch(batch);
    } catch (const std::exception& e) {
      // Nested so callers can still tell a transport failure from a bad reply.
      std::throw_with_nested(
          BackendError("model query failed at step " + std::to_string(t) + ": " + e.what(), t));
    }
    if (marginals.size() != chains.size())
      throw BackendError("model returned " + std::to_string(marginals.size()) +
                             " marginal matrices for " + std::to_string(chains.size()) +
                             " sequences",
                         t);
    for (std::size_t b = 0; b < chains.size(); ++b) {
      if (marginals[b].length() != D || marginals[b].vocab_size() != N)
        throw BackendError("model returned marginals of the wrong shape", t);
      advance_chain(chains[b], marginals[b], reward, config, t, target, N);
    }
    current = target;
  }
}

}  // namespace

SampleResult sample(const MaskedModel& model, const Reward& reward,
                    const SamplerConfig& config, Rng& rng) {
  return sample_inpaint(model, reward, config, InpaintPrompt{}, rng);
}

SampleResult sample_inpaint(const MaskedModel& model, const Reward& reward,
                            const SamplerConfig& config, const InpaintPrompt& prompt,
                            Rng& rng) {
  Chain chain;
  chain.rng = &rng;
  run_lockstep(model, reward, config, &prompt, std::span<Chain>(&chain, 1));
  return {std::move(chain.x), std::move(chain.trace)};
}

std::vector<SampleResult> sample_batch(const MaskedModel& model, const Reward& reward,
                                       const SamplerConfig& config, std::size_t chains,
                                       const InpaintPrompt* prompt, std::size_t first_chain) {
  std::vector<Rng> rngs;
  rngs.reserve(chains);
  std::vector<Chain> state(chains);
  for (std::size_t b = 0; b < chains; ++b) {
    rngs.emplace_back(chain_seed(config.seed, first_chain + b));
    state[b].id = first_chain + b;
  }
  for (std::size_t b = 0; b < chains; ++b) state[b].rng = &rngs[b];
  run_lockstep(model, reward, config, prompt, state);
  std::vector<SampleResult> out;
  out.reserve(chains);
  for (auto& c : state) out.push_back({std::move(c.x), std::move(c.trace)});
  return out;
}

std::vector<SampleResult> run_chains(const MaskedModel& model, const Reward& reward,
                                     const SamplerConfig& config, std::size_t chains,
                                     const InpaintPrompt* prompt, std::size_t workers) {
  config.validate();
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(chains, 1));
  std::vector<SampleResult> out(chains);
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t b = w; b < chains; b += workers) {
        Rng rng(chain_seed(config.seed, b));
        Chain chain;
        chain.id = b;
        chain.rng = &rng;
        run_lockstep(model, reward, config, prompt, std::span<Chain>(&chain, 1));
        out[b] = {std::move(chain.x), std::move(chain.trace)};
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::string trace_to_jsonl(const Trace& trace) {
  std::string out;
  for (const auto& s : trace.steps) {
    nlohmann::json j;
    j["chain"] = s.chain;
    j["t"] = s.t;
    j["masked_count"] = s.masked_count;
    j["skipped"] = s.skipped;
    j["model_queries"] = s.model_queries;
    if (s.skipped) {
      j["ess"] = nullptr;
      j["selected"] = nullptr;
      j["reward_of_selected"] = nullptr;
    } else {
      j["ess"] = s.ess;
      j["selected"] = s.selected;
      j["reward_of_selected"] = std::exp(s.log_reward_of_selected);
      j["log_reward_of_selected"] = std::isfinite(s.log_reward_of_selected)
                                        ? nlohmann::json(s.log_reward_of_selected)
                                        : nlohmann::json(nullptr);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace maskctrl
