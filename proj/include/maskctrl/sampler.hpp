#pragma once

// Plug-and-play controllable sampler for masked models.
//
// Each step queries the model once, draws K mean-field candidates for the
// masked positions, picks one with probability proportional to its reward
// (importance sampling) and remasks part of the freshly filled positions
// according to the unmasking schedule.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskctrl/models.hpp"
#include "maskctrl/rewards.hpp"
#include "maskctrl/rng.hpp"
#include "maskctrl/seq_core.hpp"

namespace maskctrl {

/// Unmasking schedule γ: [0,1] -> [0,1], decreasing, γ(1) = 0.
using Schedule = std::function<double(double)>;

/// cos(π s / 2). Throws std::domain_error for s outside [0, 1].
double cosine_schedule(double s);
/// 1 - s.
double linear_schedule(double s);

enum class RemaskStrategy {
  uniform,         // uniformly random subset of this step's fills
  low_confidence,  // fills with the lowest predicted probability
};

struct SamplerConfig {
  std::size_t steps = 10;      // T
  std::size_t samples = 1000;  // K
  Schedule schedule = cosine_schedule;
  RemaskStrategy remask = RemaskStrategy::uniform;
  double weight_floor = 1e-10;  // ε, applied to raw rewards
  std::uint64_t seed = 0;
  /// Skip, without a model query, steps whose target mask count equals the
  /// current one.
  bool skip_stalled_steps = true;

  /// Throws ConfigError. Checks the schedule on the grid t/T: values in
  /// [0,1], non-increasing, and γ(1) = 0.
  void validate() const;
};

/// K candidate fills for the masked positions, row-major K × |M|.
class FillBatch {
 public:
  FillBatch(std::size_t count, std::size_t width)
      : count_(count), width_(width), tokens_(count * width) {}
  std::size_t count() const noexcept { return count_; }
  std::size_t width() const noexcept { return width_; }
  std::span<const Token> operator[](std::size_t k) const {
    return {tokens_.data() + k * width_, width_};
  }
  std::span<Token> operator[](std::size_t k) { return {tokens_.data() + k * width_, width_}; }

 private:
  std::size_t count_;
  std::size_t width_;
  std::vector<Token> tokens_;
};

/// Draws K fills, each entry u_k^d ~ marginals.row(d) independently. Draw
/// order is candidate-major, then position order. Throws ValidationError if
/// a row for d ∈ masked is not a distribution.
FillBatch mean_field_sample(const ConditionalMarginals& marginals, const IndexSet& masked,
                            std::size_t samples, Rng& rng);

/// Index of the bucket holding u · Σw, i.e. the first k with
/// w_0 + … + w_k > u · Σw. Zero-weight buckets are never returned.
std::size_t categorical_index(std::span<const double> weights, double u);

/// Floors raw rewards at `floor`, normalises, and returns weights summing
/// to 1. Input is log r; -inf means r = 0. Throws std::domain_error on NaN
/// or +inf.
std::vector<double> normalized_weights(std::span<const double> log_rewards, double floor);

double effective_sample_size(std::span<const double> normalized);

struct Selection {
  std::size_t index = 0;
  std::vector<double> weights;  // normalised
  double ess = 0.0;
};

/// Picks k* with probability w_k / Σ w_j after flooring (one uniform draw).
Selection importance_select(std::span<const double> log_rewards, double floor, Rng& rng);

/// ⌊γ(t/T) · effective_length⌋, with t = 0 allowed for the initial count.
std::size_t remask_count(std::size_t t, std::size_t steps, std::size_t effective_length,
                         const Schedule& schedule = cosine_schedule);

/// Masks `count` positions of `newly`, chosen uniformly without replacement.
/// Throws std::invalid_argument if count > |newly|.
MaskedSequence remask_uniform(std::span<const Token> x, const IndexSet& newly,
                              std::size_t count, std::size_t vocab_size, Rng& rng);

/// Masks the `count` positions of `newly` whose filled token had the lowest
/// predicted probability; ties go to the lower position.
MaskedSequence remask_low_confidence(std::span<const Token> x, const IndexSet& newly,
                                     std::size_t count, const ConditionalMarginals& marginals);

/// Fixed prompt for inpainting: positions Ω̄ and their values.
struct InpaintPrompt {
  IndexSet positions;
  std::vector<Token> values;
};

struct StepRecord {
  std::size_t chain = 0;
  std::size_t t = 0;  // 1-based step
  bool skipped = false;
  std::size_t masked_before = 0;
  std::size_t masked_count = 0;  // after remasking
  std::size_t selected = 0;
  double ess = 0.0;
  double log_reward_of_selected = 0.0;
  std::size_t model_queries = 0;
  std::size_t reward_evals = 0;
  IndexSet observed;  // Ω after the step
};

struct Trace {
  std::vector<StepRecord> steps;
  std::size_t model_queries = 0;
  std::size_t reward_evals = 0;
};

struct SampleResult {
  std::vector<Token> sequence;
  Trace trace;
};

/// One chain from the fully masked sequence.
SampleResult sample(const MaskedModel& model, const Reward& reward,
                    const SamplerConfig& config, Rng& rng);

/// One chain with the prompt positions fixed throughout. Remask counts use
/// the effective length D - |Ω̄|.
SampleResult sample_inpaint(const MaskedModel& model, const Reward& reward,
                            const SamplerConfig& config, const InpaintPrompt& prompt,
                            Rng& rng);

/// B chains in lockstep with one predict_batch call per step. Chain b uses
/// Rng(chain_seed(config.seed, first_chain + b)), so its output equals a
/// single-chain run with that generator.
std::vector<SampleResult> sample_batch(const MaskedModel& model, const Reward& reward,
                                       const SamplerConfig& config, std::size_t chains,
                                       const InpaintPrompt* prompt = nullptr,
                                       std::size_t first_chain = 0);

/// Independent chains spread over `workers` threads (0 = hardware
/// concurrency). Same seeding and results as sample_batch.
std::vector<SampleResult> run_chains(const MaskedModel& model, const Reward& reward,
                                     const SamplerConfig& config, std::size_t chains,
                                     const InpaintPrompt* prompt = nullptr,
                                     std::size_t workers = 0);

/// One JSON object per step:
/// {chain, t, masked_count, ess, selected, reward_of_selected, skipped, model_queries}.
std::string trace_to_jsonl(const Trace& trace);

}  // namespace maskctrl
