#pragma once

// Masked-model abstraction p̂(x) and the in-process backends.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "maskctrl/seq_core.hpp"

namespace maskctrl {

/// D×N matrix approximating p(X^d = n | X^Ω = x^Ω).
///
/// Masked rows are probability vectors; observed rows are one-hot on the
/// observed token.
class ConditionalMarginals {
 public:
  ConditionalMarginals(std::size_t length, std::size_t vocab_size);
  /// Observed rows of `x` set one-hot, masked rows zeroed and flagged.
  static ConditionalMarginals skeleton(const MaskedSequence& x);

  std::size_t length() const noexcept { return length_; }
  std::size_t vocab_size() const noexcept { return vocab_; }

  std::span<double> row(std::size_t d) {
    return {probs_.data() + d * vocab_, vocab_};
  }
  std::span<const double> row(std::size_t d) const {
    return {probs_.data() + d * vocab_, vocab_};
  }
  double operator()(std::size_t d, std::size_t n) const {
    return probs_[d * vocab_ + n];
  }
  bool is_masked_row(std::size_t d) const { return masked_[d] != 0; }
  void set_masked_row(std::size_t d, bool masked) { masked_[d] = masked ? 1 : 0; }

  std::span<const double> data() const noexcept { return probs_; }

  /// Throws ValidationError unless every masked row sums to 1 within `tol`,
  /// every observed row is one-hot and all entries lie in [0, 1].
  void validate(double tol = 1e-9) const;

 private:
  std::size_t length_;
  std::size_t vocab_;
  std::vector<double> probs_;
  std::vector<std::uint8_t> masked_;
};

class MaskedModel {
 public:
  virtual ~MaskedModel() = default;

  virtual std::size_t length() const = 0;
  virtual std::size_t vocab_size() const = 0;

  virtual ConditionalMarginals predict(const MaskedSequence& x) const = 0;

  /// One backend round-trip for several sequences. The default loops over
  /// predict(); remote backends override it.
  virtual std::vector<ConditionalMarginals> predict_batch(
      std::span<const MaskedSequence> xs) const;

 protected:
  /// Throws std::invalid_argument on a length or vocabulary mismatch.
  void check_input(const MaskedSequence& x) const;
};

/// Closed-form model of the uniform distribution on {0..N-1}^D.
class UniformModel final : public MaskedModel {
 public:
  UniformModel(std::size_t length, std::size_t vocab_size);
  std::size_t length() const override { return length_; }
  std::size_t vocab_size() const override { return vocab_; }
  ConditionalMarginals predict(const MaskedSequence& x) const override;

 private:
  std::size_t length_;
  std::size_t vocab_;
};

/// Product distribution with fixed per-position categoricals. Conditionals
/// of a product measure do not depend on the observed part, so predict is
/// exact. Serves as the deterministic offline protein backend.
class ProductModel final : public MaskedModel {
 public:
  /// `probs` is D×N row-major; rows are normalised on construction.
  ProductModel(std::size_t length, std::size_t vocab_size, std::vector<double> probs);
  /// Seeded random marginals. Larger `sharpness` concentrates each row.
  static ProductModel random(std::size_t length, std::size_t vocab_size,
                             std::uint64_t seed, double sharpness = 1.0);

  std::size_t length() const override { return length_; }
  std::size_t vocab_size() const override { return vocab_; }
  ConditionalMarginals predict(const MaskedSequence& x) const override;
  std::span<const double> marginal(std::size_t d) const {
    return {probs_.data() + d * vocab_, vocab_};
  }

 private:
  std::size_t length_;
  std::size_t vocab_;
  std::vector<double> probs_;
};

/// Dense joint PMF over {0..N-1}^D, indexed with position 0 as the most
/// significant digit. Oracle use only: construction refuses N^D > cap.
class JointTable {
 public:
  static constexpr std::uint64_t kDefaultCap = 10'000'000;

  JointTable(std::size_t length, std::size_t vocab_size, std::vector<double> pmf,
             std::uint64_t cap = kDefaultCap);

  static JointTable uniform(std::size_t length, std::size_t vocab_size,
                            std::uint64_t cap = kDefaultCap);
  static JointTable product(const ProductModel& model, std::uint64_t cap = kDefaultCap);
  /// Parses `{"D":…, "N":…, "pmf": {"t1,t2,…": p, …}}`; missing keys are zero.
  static JointTable from_json(const std::string& text, std::uint64_t cap = kDefaultCap);
  static JointTable load(const std::filesystem::path& path,
                         std::uint64_t cap = kDefaultCap);
  std::string to_json() const;

  /// N^D, or throws std::overflow_error / std::length_error beyond `cap`.
  static std::uint64_t state_count(std::size_t length, std::size_t vocab_size,
                                   std::uint64_t cap = kDefaultCap);

  std::size_t length() const noexcept { return length_; }
  std::size_t vocab_size() const noexcept { return vocab_; }
  std::uint64_t states() const noexcept { return pmf_.size(); }
  std::span<const double> pmf() const noexcept { return pmf_; }

  std::uint64_t index_of(std::span<const Token> x) const;
  std::vector<Token> decode(std::uint64_t index) const;
  double prob(std::span<const Token> x) const { return pmf_[index_of(x)]; }

 private:
  std::size_t length_;
  std::size_t vocab_;
  std::vector<double> pmf_;
};

/// Exact conditionals of a JointTable, by a single scan of the table.
class TableModel final : public MaskedModel {
 public:
  explicit TableModel(JointTable table);
  std::size_t length() const override { return table_.length(); }
  std::size_t vocab_size() const override { return table_.vocab_size(); }
  /// Throws ValidationError if the observed slice has zero probability.
  ConditionalMarginals predict(const MaskedSequence& x) const override;
  const JointTable& table() const noexcept { return table_; }

 private:
  JointTable table_;
};

/// p(X^d = n | X^Ω = x^Ω), by enumerating the completions of the masked
/// positions of `x`. Requires d ∈ M. Throws ValidationError if the
/// conditioning event has probability zero.
double exact_conditional(const JointTable& table, const MaskedSequence& x,
                         std::size_t d, Token n);

/// Forwards to another model and counts queries (one per sequence).
class CountingModel final : public MaskedModel {
 public:
  explicit CountingModel(const MaskedModel& inner) : inner_(inner) {}
  std::size_t length() const override { return inner_.length(); }
  std::size_t vocab_size() const override { return inner_.vocab_size(); }
  ConditionalMarginals predict(const MaskedSequence& x) const override;
  std::vector<ConditionalMarginals> predict_batch(
      std::span<const MaskedSequence> xs) const override;

  std::uint64_t queries() const noexcept { return queries_.load(); }
  std::uint64_t round_trips() const noexcept { return round_trips_.load(); }
  void reset() noexcept {
    queries_ = 0;
    round_trips_ = 0;
  }

 private:
  const MaskedModel& inner_;
  mutable std::atomic<std::uint64_t> queries_{0};
  mutable std::atomic<std::uint64_t> round_trips_{0};
};

}  // namespace maskctrl
