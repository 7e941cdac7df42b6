#pragma once

// Token sequences with a mask sentinel, index-set partitions and the
// concatenation operator x ⊕ u used by the samplers.
//
// Storage and every external format are 0-based: real tokens are
// 0..N-1 and the mask sentinel is N.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maskctrl {

using Token = std::int32_t;

class Vocabulary {
 public:
  explicit Vocabulary(std::size_t size);
  /// Vocabulary whose tokens display as the characters of `labels`
  /// (token i <-> labels[i]). Characters must be distinct and not '?'.
  static Vocabulary with_labels(std::string labels);
  /// The 20 standard amino acids, alphabetical by one-letter code.
  static const Vocabulary& amino_acids();

  std::size_t size() const noexcept { return size_; }
  Token mask() const noexcept { return static_cast<Token>(size_); }
  bool is_token(Token t) const noexcept {
    return t >= 0 && static_cast<std::size_t>(t) < size_;
  }
  bool has_labels() const noexcept { return labels_.has_value(); }
  char label(Token t) const;
  Token token_for(char label) const;
  const std::string& labels() const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::size_t size_;
  std::optional<std::string> labels_;
};

/// Sorted, duplicate-free set of positions in [0, D).
class IndexSet {
 public:
  IndexSet() = default;
  /// Validates strict ordering and range; throws std::invalid_argument /
  /// std::out_of_range.
  IndexSet(std::vector<std::size_t> sorted, std::size_t length);
  /// Sorts and deduplicates first.
  static IndexSet from_unsorted(std::vector<std::size_t> positions,
                                std::size_t length);
  static IndexSet all(std::size_t length);

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  bool contains(std::size_t d) const;
  std::size_t operator[](std::size_t i) const { return idx_[i]; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }
  const std::vector<std::size_t>& positions() const noexcept { return idx_; }

  IndexSet complement(std::size_t length) const;
  bool is_subset_of(const IndexSet& other) const;

  bool operator==(const IndexSet&) const = default;

 private:
  std::vector<std::size_t> idx_;
};

/// Immutable partially-observed sequence.
class MaskedSequence {
 public:
  /// Throws std::invalid_argument if a token is neither real nor the mask.
  MaskedSequence(std::vector<Token> tokens, std::size_t vocab_size);
  static MaskedSequence fully_masked(std::size_t length, std::size_t vocab_size);

  std::size_t length() const noexcept { return tokens_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }
  Token mask() const noexcept { return static_cast<Token>(vocab_size_); }
  std::span<const Token> tokens() const noexcept { return tokens_; }
  Token operator[](std::size_t d) const { return tokens_[d]; }
  bool is_masked(std::size_t d) const { return tokens_[d] == mask(); }
  bool is_complete() const;
  std::size_t masked_count() const;

  /// Ω, the observed positions.
  IndexSet observed() const;
  /// M, the masked positions.
  IndexSet masked() const;

  bool operator==(const MaskedSequence&) const = default;

 private:
  std::vector<Token> tokens_;
  std::size_t vocab_size_;
};

/// x^Ω ⊕ u: entry d is observed[i] when d = omega[i], otherwise the next
/// unused entry of `fill`. Throws on length mismatch or out-of-range tokens.
std::vector<Token> concat(const IndexSet& omega, std::span<const Token> observed,
                          std::span<const Token> fill, std::size_t vocab_size);

/// Unchecked variant for the sampler hot loop: writes `fill` into the masked
/// positions of `base` (which already holds the observed tokens).
void fill_masked(std::span<Token> base, const IndexSet& masked,
                 std::span<const Token> fill) noexcept;

/// Slice x^S.
std::vector<Token> slice(std::span<const Token> x, const IndexSet& positions);

MaskedSequence apply_mask(std::span<const Token> x, const IndexSet& positions,
                          std::size_t vocab_size);
MaskedSequence apply_mask(const MaskedSequence& x, const IndexSet& positions);

IndexSet masked_positions(const MaskedSequence& x);

// Text formats. Integer format: whitespace-separated 0-based ids, '?' for a
// mask. Label format: one character per position, '?' for a mask.
MaskedSequence parse_tokens(std::string_view text, const Vocabulary& vocab);
MaskedSequence parse_labels(std::string_view text, const Vocabulary& vocab);
std::string format_tokens(const MaskedSequence& x);
std::string format_tokens(std::span<const Token> x);
std::string format_labels(std::span<const Token> x, const Vocabulary& vocab);

}  // namespace maskctrl
