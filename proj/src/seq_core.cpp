#include "maskctrl/seq_core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace maskctrl {

Vocabulary::Vocabulary(std::size_t size) : size_(size) {
  if (size == 0) throw std::invalid_argument("vocabulary size must be positive");
}

Vocabulary Vocabulary::with_labels(std::string labels) {
  Vocabulary v(labels.size());
  std::string sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("vocabulary labels must be distinct");
  if (labels.find('?') != std::string::npos)
    throw std::invalid_argument("'?' is reserved for the mask");
  v.labels_ = std::move(labels);
  return v;
}

const Vocabulary& Vocabulary::amino_acids() {
  static const Vocabulary v = with_labels("ACDEFGHIKLMNPQRSTVWY");
  return v;
}

char Vocabulary::label(Token t) const {
  if (!labels_) throw std::logic_error("vocabulary has no label table");
  if (t == mask()) return '?';
  if (!is_token(t)) throw std::out_of_range("token id out of range");
  return (*labels_)[static_cast<std::size_t>(t)];
}

Token Vocabulary::token_for(char c) const {
  if (!labels_) throw std::logic_error("vocabulary has no label table");
  if (c == '?') return mask();
  auto pos = labels_->find(c);
  if (pos == std::string::npos)
    throw std::invalid_argument(std::string("unknown label '") + c + "'");
  return static_cast<Token>(pos);
}

const std::string& Vocabulary::labels() const {
  if (!labels_) throw std::logic_error("vocabulary has no label table");
  return *labels_;
}

IndexSet::IndexSet(std::vector<std::size_t> sorted, std::size_t length)
    : idx_(std::move(sorted)) {
  for (std::size_t i = 0; i < idx_.size(); ++i) {
    if (idx_[i] >= length) throw std::out_of_range("index out of range");
    if (i > 0 && idx_[i] <= idx_[i - 1])
      throw std::invalid_argument("index set must be strictly increasing");
  }
}

IndexSet IndexSet::from_unsorted(std::vector<std::size_t> positions,
                                 std::size_t length) {
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  return IndexSet(std::move(positions), length);
}

IndexSet IndexSet::all(std::size_t length) {
  IndexSet s;
  s.idx_.resize(length);
  for (std::size_t d = 0; d < length; ++d) s.idx_[d] = d;
  return s;
}

bool IndexSet::contains(std::size_t d) const {
  return std::binary_search(idx_.begin(), idx_.end(), d);
}

IndexSet IndexSet::complement(std::size_t length) const {
  IndexSet out;
  out.idx_.reserve(length - std::min(length, idx_.size()));
  std::size_t j = 0;
  for (std::size_t d = 0; d < length; ++d) {
    if (j < idx_.size() && idx_[j] == d) {
      ++j;
    } else {
      out.idx_.push_back(d);
    }
  }
  return out;
}

bool IndexSet::is_subset_of(const IndexSet& other) const {
  return std::includes(other.idx_.begin(), other.idx_.end(), idx_.begin(),
                       idx_.end());
}

MaskedSequence::MaskedSequence(std::vector<Token> tokens, std::size_t vocab_size)
    : tokens_(std::move(tokens)), vocab_size_(vocab_size) {
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be positive");
  for (Token t : tokens_) {
    if (t < 0 || static_cast<std::size_t>(t) > vocab_size)
      throw std::invalid_argument("token id out of range");
  }
}

MaskedSequence MaskedSequence::fully_masked(std::size_t length,
                                            std::size_t vocab_size) {
  return MaskedSequence(
      std::vector<Token>(length, static_cast<Token>(vocab_size)), vocab_size);
}

bool MaskedSequence::is_complete() const {
  return std::none_of(tokens_.begin(), tokens_.end(),
                      [m = mask()](Token t) { return t == m; });
}

std::size_t MaskedSequence::masked_count() const {
  return static_cast<std::size_t>(
      std::count(tokens_.begin(), tokens_.end(), mask()));
}

IndexSet MaskedSequence::observed() const { return masked().complement(length()); }

IndexSet MaskedSequence::masked() const {
  std::vector<std::size_t> m;
  for (std::size_t d = 0; d < tokens_.size(); ++d)
    if (tokens_[d] == mask()) m.push_back(d);
  return IndexSet(std::move(m), tokens_.size());
}

std::vector<Token> concat(const IndexSet& omega, std::span<const Token> observed,
                          std::span<const Token> fill, std::size_t vocab_size) {
  if (observed.size() != omega.size())
    throw std::invalid_argument("observed values do not match the index set");
  const std::size_t length = omega.size() + fill.size();
  if (!omega.empty() && omega.positions().back() >= length)
    throw std::invalid_argument("fill length does not match the complement");
  auto check = [vocab_size](Token t) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
      throw std::invalid_argument("token out of range in concatenation");
  };
  std::vector<Token> out(length);
  std::size_t i = 0, j = 0;
  for (std::size_t d = 0; d < length; ++d) {
    if (i < omega.size() && omega[i] == d) {
      check(observed[i]);
      out[d] = observed[i++];
    } else {
      check(fill[j]);
      out[d] = fill[j++];
    }
  }
  return out;
}

void fill_masked(std::span<Token> base, const IndexSet& masked,
                 std::span<const Token> fill) noexcept {
  for (std::size_t i = 0; i < masked.size(); ++i) base[masked[i]] = fill[i];
}

std::vector<Token> slice(std::span<const Token> x, const IndexSet& positions) {
  std::vector<Token> out;
  out.reserve(positions.size());
  for (std::size_t d : positions) {
    if (d >= x.size()) throw std::out_of_range("index out of range");
    out.push_back(x[d]);
  }
  return out;
}

MaskedSequence apply_mask(std::span<const Token> x, const IndexSet& positions,
                          std::size_t vocab_size) {
  std::vector<Token> tokens(x.begin(), x.end());
  for (std::size_t d : positions) {
    if (d >= tokens.size()) throw std::out_of_range("mask position out of range");
    tokens[d] = static_cast<Token>(vocab_size);
  }
  return MaskedSequence(std::move(tokens), vocab_size);
}

MaskedSequence apply_mask(const MaskedSequence& x, const IndexSet& positions) {
  return apply_mask(x.tokens(), positions, x.vocab_size());
}

IndexSet masked_positions(const MaskedSequence& x) { return x.masked(); }

MaskedSequence parse_tokens(std::string_view text, const Vocabulary& vocab) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word = text.substr(i, j - i);
    if (word == "?") {
      tokens.push_back(vocab.mask());
    } else {
      Token t{};
      auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), t);
      if (ec != std::errc() || ptr != word.data() + word.size())
        throw std::invalid_argument("bad token '" + std::string(word) + "'");
      if (!vocab.is_token(t)) throw std::invalid_argument("token id out of range");
      tokens.push_back(t);
    }
    i = j;
  }
  return MaskedSequence(std::move(tokens), vocab.size());
}

MaskedSequence parse_labels(std::string_view text, const Vocabulary& vocab) {
  std::vector<Token> tokens;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    tokens.push_back(vocab.token_for(c));
  }
  return MaskedSequence(std::move(tokens), vocab.size());
}

std::string format_tokens(std::span<const Token> x) {
  std::string out;
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (d) out += ' ';
    out += std::to_string(x[d]);
  }
  return out;
}

std::string format_tokens(const MaskedSequence& x) {
  std::string out;
  for (std::size_t d = 0; d < x.length(); ++d) {
    if (d) out += ' ';
    out += x.is_masked(d) ? std::string("?") : std::to_string(x[d]);
  }
  return out;
}

std::string format_labels(std::span<const Token> x, const Vocabulary& vocab) {
  std::string out;
  out.reserve(x.size());
  for (Token t : x) out += vocab.label(t);
  return out;
}

}  // namespace maskctrl
