#pragma once

// Experiment harness behind the maskctrl CLI: toy K/T sweeps, protein
// generation, inpainting, the reward-hyperparameter sweep and the oracle
// suite. Every run is a pure function of its config; results.csv differs
// between identical runs only in its "# generated:" line. Wall times go to
// timings.csv.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maskctrl/models.hpp"
#include "maskctrl/remote_model.hpp"
#include "maskctrl/rewards.hpp"
#include "maskctrl/sampler.hpp"

namespace maskctrl::experiments {

enum class Kind { toy, protein, inpaint, sweep, oracle };

Kind parse_kind(const std::string& s);
std::string to_string(Kind k);

struct BackendSpec {
  enum class Type { uniform, mock, remote };
  Type type = Type::mock;
  std::uint64_t seed = 0;   // mock
  double sharpness = 1.0;   // mock
  ModelEndpoint endpoint;   // remote
};

/// Builds the model for a length-D, size-N problem.
std::unique_ptr<MaskedModel> make_backend(const BackendSpec& spec, std::size_t length,
                                          std::size_t vocab_size);

/// Named reward settings for protein runs. All but `uncontrolled` add the
/// stability constraint instability ∈ [0, 40] with w=5, α=2.
///   high_gravy:   gravy ∈ [1, ∞),     w=30, α=1
///   low_gravy:    gravy ∈ (-∞, -1],   w=35, α=1
///   helix:        helix_pct ∈ [0.8, ∞), w=50, α=1
///   uncontrolled: r ≡ 1
RewardSpec protein_preset(const std::string& name);

/// Stability constraint shared by all protein presets.
IntervalConstraint stability_constraint();

inline constexpr const char* kInpaintPrompt = "RGRLIGYDIHLNVVLADAEMIQDGEVVKRYGKIVI";
inline constexpr std::size_t kInpaintOffset = 24;
inline constexpr std::size_t kInpaintLength = 100;

struct ExperimentConfig {
  Kind kind = Kind::toy;
  BackendSpec backend;
  RewardSpec reward;
  std::string preset;  // protein kinds; overrides `reward` when set
  SamplerConfig sampler;
  std::string schedule = "cosine";  // name of sampler.schedule
  std::size_t batch_size = 16;  // B, chains per lockstep batch
  std::size_t runs = 0;         // chains per cell; 0 = kind default
  std::size_t workers = 0;      // concurrent cells; 0 = hardware concurrency
  std::size_t vocab_size = 0;   // N; 0 = kind default
  std::size_t length = 0;       // D; 0 = kind default
  std::filesystem::path out_dir;  // empty = no files
  bool write_trace = true;
  bool write_plot = false;

  std::vector<std::size_t> k_grid;
  std::vector<std::size_t> t_grid;
  std::vector<double> w1_grid;
  std::vector<double> a1_grid;

  std::string prompt = kInpaintPrompt;  // inpaint, amino-acid letters
  std::size_t prompt_offset = kInpaintOffset;

  std::vector<std::size_t> oracle_vocab_sizes;  // oracle cardinality check

  /// Defaults for `kind`, including the published grids.
  static ExperimentConfig defaults(Kind kind);
  /// Merges a JSON document over defaults(kind). A "kind" key in the
  /// document must agree with `kind` if both are given. Throws ConfigError.
  static ExperimentConfig from_json(const std::string& text, std::optional<Kind> kind = {});
  /// Throws ConfigError.
  void validate() const;
  /// The reward this config runs with (preset or explicit spec).
  RewardSpec reward_spec() const;
};

/// Checks one chain against the sampler contract: remask counts follow the
/// schedule, Ω only grows, queries equal the non-skipped steps, the output
/// is complete and in-vocabulary, and prompt positions hold their values.
/// Returns human-readable violations, empty when the chain is clean.
std::vector<std::string> audit_chain(const SampleResult& result, const SamplerConfig& config,
                                     std::size_t length, std::size_t vocab_size,
                                     const InpaintPrompt* prompt = nullptr);

struct ToyCell {
  std::size_t samples = 0;  // K
  std::size_t steps = 0;    // T
  std::size_t runs = 0;
  std::size_t satisfied = 0;
  double rate = 0.0;
  double mean_abs_phi = 0.0;
  double queries_per_chain = 0.0;
  std::size_t invariant_failures = 0;
  double wall_seconds = 0.0;
};

struct ToyReport {
  std::vector<ToyCell> cells;  // K-major, then T, in grid order
  double oracle_fraction = 0.0;
};

ToyReport run_toy_sweep(const ExperimentConfig& config);

struct ProteinSample {
  std::string sequence;
  double gravy = 0.0;
  double instability = 0.0;
  double helix = 0.0;
  double turn = 0.0;
  double sheet = 0.0;
  double log_reward = 0.0;
  std::size_t model_queries = 0;
  std::vector<std::string> violations;
};

struct ProteinReport {
  std::vector<ProteinSample> samples;
  std::size_t invariant_failures = 0;
};

/// Controlled (or uncontrolled) generation of `runs` sequences.
ProteinReport run_protein(const ExperimentConfig& config);
/// Inpainting around the fixed prompt.
ProteinReport run_inpaint(const ExperimentConfig& config);

struct SweepCell {
  double w1 = 0.0;
  double a1 = 0.0;
  std::size_t sequences = 0;
  double helix_mean = 0.0;
  double helix_std = 0.0;
  double instability_mean = 0.0;
  double instability_std = 0.0;
  double queries_per_chain = 0.0;
  std::size_t invariant_failures = 0;
  double wall_seconds = 0.0;
};

struct SweepReport {
  std::vector<SweepCell> cells;  // w1-major, then a1
};

/// helix_pct ∈ [a1, ∞) with weight w1, α=1, plus the stability constraint.
SweepReport run_hparam_sweep(const ExperimentConfig& config);

struct OracleCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct OracleReport {
  std::vector<OracleCheck> checks;
  bool passed() const;
};

OracleReport run_oracle_suite(const ExperimentConfig& config);

/// Runs the configured experiment, writes outputs and returns a process
/// exit status (non-zero when any check failed).
int run(const ExperimentConfig& config, std::ostream& log);

}  // namespace maskctrl::experiments
