#include "maskctrl/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "maskctrl/errors.hpp"
#include "maskctrl/rng.hpp"

namespace maskctrl {

namespace {

double kahan_sum(std::span<const double> v) {
  double sum = 0.0, c = 0.0;
  for (double x : v) {
    double y = x - c;
    double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// Next tuple in lexicographic order; false after the last one.
bool advance_odometer(std::span<Token> digits, std::size_t base) {
  for (std::size_t k = digits.size(); k-- > 0;) {
    if (static_cast<std::size_t>(++digits[k]) < base) return true;
    digits[k] = 0;
  }
  return false;
}

std::uint64_t encode_state(std::span<const Token> x, std::size_t length,
                           std::size_t vocab) {
  if (x.size() != length) throw std::invalid_argument("sequence length mismatch");
  std::uint64_t idx = 0;
  for (Token t : x) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw std::out_of_range("token outside the table's vocabulary");
    idx = idx * vocab + static_cast<std::uint64_t>(t);
  }
  return idx;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConditionalMarginals

ConditionalMarginals::ConditionalMarginals(std::size_t length, std::size_t vocab_size)
    : length_(length), vocab_(vocab_size), probs_(length * vocab_size, 0.0),
      masked_(length, 0) {
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be positive");
}

ConditionalMarginals ConditionalMarginals::skeleton(const MaskedSequence& x) {
  ConditionalMarginals m(x.length(), x.vocab_size());
  for (std::size_t d = 0; d < x.length(); ++d) {
    if (x.is_masked(d)) {
      m.masked_[d] = 1;
    } else {
      m.probs_[d * m.vocab_ + static_cast<std::size_t>(x[d])] = 1.0;
    }
  }
  return m;
}

void ConditionalMarginals::validate(double tol) const {
  for (std::size_t d = 0; d < length_; ++d) {
    auto r = row(d);
    for (double p : r) {
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError("marginal entry outside [0,1] at row " + std::to_string(d));
    }
    if (masked_[d]) {
      double s = kahan_sum(r);
      if (std::abs(s - 1.0) > tol)
        throw ValidationError("masked row " + std::to_string(d) + " sums to " +
                              std::to_string(s));
    } else {
      int ones = 0;
      for (double p : r) {
        if (p == 1.0) {
          ++ones;
        } else if (p != 0.0) {
          ones = -1;
          break;
        }
      }
      if (ones != 1)
        throw ValidationError("observed row " + std::to_string(d) + " is not one-hot");
    }
  }
}

// ---------------------------------------------------------------------------
// MaskedModel

std::vector<ConditionalMarginals> MaskedModel::predict_batch(
    std::span<const MaskedSequence> xs) const {
  std::vector<ConditionalMarginals> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x));
  return out;
}

void MaskedModel::check_input(const MaskedSequence& x) const {
  if (x.length() != length())
    throw std::invalid_argument("sequence length " + std::to_string(x.length()) +
                                " does not match model length " +
                                std::to_string(length()));
  if (x.vocab_size() != vocab_size())
    throw std::invalid_argument("sequence vocabulary does not match the model");
}

UniformModel::UniformModel(std::size_t length, std::size_t vocab_size)
    : length_(length), vocab_(vocab_size) {
  if (length == 0 || vocab_size == 0)
    throw std::invalid_argument("length and vocabulary size must be positive");
}

ConditionalMarginals UniformModel::predict(const MaskedSequence& x) const {
  check_input(x);
  auto m = ConditionalMarginals::skeleton(x);
  const double p = 1.0 / static_cast<double>(vocab_);
  for (std::size_t d = 0; d < length_; ++d) {
    if (m.is_masked_row(d)) {
      for (double& v : m.row(d)) v = p;
    }
  }
  return m;
}

ProductModel::ProductModel(std::size_t length, std::size_t vocab_size,
                           std::vector<double> probs)
    : length_(length), vocab_(vocab_size), probs_(std::move(probs)) {
  if (length == 0 || vocab_size == 0)
    throw std::invalid_argument("length and vocabulary size must be positive");
  if (probs_.size() != length * vocab_size)
    throw std::invalid_argument("product marginals must be D×N");
  for (std::size_t d = 0; d < length; ++d) {
    std::span<double> r(probs_.data() + d * vocab_, vocab_);
    double s = 0.0;
    for (double p : r) {
      if (!(p >= 0.0) || !std::isfinite(p))
        throw std::invalid_argument("product marginal entries must be finite and >= 0");
      s += p;
    }
    if (!(s > 0.0)) throw std::invalid_argument("product marginal row has zero mass");
    for (double& p : r) p /= s;
  }
}

ProductModel ProductModel::random(std::size_t length, std::size_t vocab_size,
                                  std::uint64_t seed, double sharpness) {
  Rng rng(seed);
  std::vector<double> probs(length * vocab_size);
  // Exponential weights give Dirichlet(1) rows; the power sharpens them.
  for (double& p : probs) p = std::pow(-std::log1p(-rng.uniform()), sharpness) + 1e-3;
  return ProductModel(length, vocab_size, std::move(probs));
}

ConditionalMarginals ProductModel::predict(const MaskedSequence& x) const {
  check_input(x);
  auto m = ConditionalMarginals::skeleton(x);
  for (std::size_t d = 0; d < length_; ++d) {
    if (m.is_masked_row(d)) {
      auto src = marginal(d);
      std::copy(src.begin(), src.end(), m.row(d).begin());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// JointTable

std::uint64_t JointTable::state_count(std::size_t length, std::size_t vocab_size,
                                      std::uint64_t cap) {
  if (length == 0 || vocab_size == 0)
    throw std::invalid_argument("length and vocabulary size must be positive");
  std::uint64_t n = 1;
  for (std::size_t d = 0; d < length; ++d) {
    if (n > cap / vocab_size)
      throw std::length_error("state space N^D exceeds the table cap of " +
                              std::to_string(cap));
    n *= vocab_size;
  }
  return n;
}

JointTable::JointTable(std::size_t length, std::size_t vocab_size,
                       std::vector<double> pmf, std::uint64_t cap)
    : length_(length), vocab_(vocab_size), pmf_(std::move(pmf)) {
  if (pmf_.size() != state_count(length, vocab_size, cap))
    throw std::invalid_argument("pmf size does not equal N^D");
  for (double p : pmf_) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw ValidationError("joint table entries must be finite and non-negative");
  }
  const double total = kahan_sum(pmf_);
  if (std::abs(total - 1.0) > 1e-12)
    throw ValidationError("joint table mass is " + std::to_string(total) + ", not 1");
}

JointTable JointTable::uniform(std::size_t length, std::size_t vocab_size,
                               std::uint64_t cap) {
  const auto n = state_count(length, vocab_size, cap);
  return JointTable(length, vocab_size,
                    std::vector<double>(n, 1.0 / static_cast<double>(n)), cap);
}

JointTable JointTable::product(const ProductModel& model, std::uint64_t cap) {
  const std::size_t D = model.length(), N = model.vocab_size();
  const auto n = state_count(D, N, cap);
  std::vector<double> pmf(n);
  std::vector<Token> x(D, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    double p = 1.0;
    for (std::size_t d = 0; d < D; ++d) p *= model.marginal(d)[x[d]];
    pmf[i] = p;
    advance_odometer(x, N);
  }
  // Floating products sum to 1 only up to rounding; renormalise.
  const double total = kahan_sum(pmf);
  for (double& p : pmf) p /= total;
  return JointTable(D, N, std::move(pmf), cap);
}

JointTable JointTable::from_json(const std::string& text, std::uint64_t cap) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("joint table JSON: ") + e.what());
  }
  const auto D = j.at("D").get<std::size_t>();
  const auto N = j.at("N").get<std::size_t>();
  const auto n = state_count(D, N, cap);
  std::vector<double> pmf(n, 0.0);
  for (const auto& [key, value] : j.at("pmf").items()) {
    std::vector<Token> x;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, ',')) x.push_back(static_cast<Token>(std::stol(part)));
    pmf[encode_state(x, D, N)] += value.get<double>();
  }
  return JointTable(D, N, std::move(pmf), cap);
}

JointTable JointTable::load(const std::filesystem::path& path, std::uint64_t cap) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str(), cap);
}

std::string JointTable::to_json() const {
  nlohmann::json j;
  j["D"] = length_;
  j["N"] = vocab_;
  nlohmann::json pmf = nlohmann::json::object();
  for (std::uint64_t i = 0; i < pmf_.size(); ++i) {
    if (pmf_[i] == 0.0) continue;
    auto x = decode(i);
    std::string key;
    for (std::size_t d = 0; d < x.size(); ++d) {
      if (d) key += ',';
      key += std::to_string(x[d]);
    }
    pmf[key] = pmf_[i];
  }
  j["pmf"] = std::move(pmf);
  return j.dump();
}

std::uint64_t JointTable::index_of(std::span<const Token> x) const {
  return encode_state(x, length_, vocab_);
}

std::vector<Token> JointTable::decode(std::uint64_t index) const {
  std::vector<Token> x(length_);
  for (std::size_t d = length_; d-- > 0;) {
    x[d] = static_cast<Token>(index % vocab_);
    index /= vocab_;
  }
  return x;
}

// ---------------------------------------------------------------------------
// TableModel

TableModel::TableModel(JointTable table) : table_(std::move(table)) {}

ConditionalMarginals TableModel::predict(const MaskedSequence& x) const {
  check_input(x);
  const std::size_t D = table_.length(), N = table_.vocab_size();
  auto m = ConditionalMarginals::skeleton(x);
  const auto omega = x.observed();
  const auto masked = x.masked();
  std::vector<double> acc(D * N, 0.0);
  double mass = 0.0;
  std::vector<Token> state(D, 0);
  const auto pmf = table_.pmf();
  for (std::uint64_t i = 0; i < pmf.size(); ++i) {
    bool consistent = true;
    for (std::size_t d : omega) {
      if (state[d] != x[d]) {
        consistent = false;
        break;
      }
    }
    if (consistent && pmf[i] > 0.0) {
      mass += pmf[i];
      for (std::size_t d : masked) acc[d * N + static_cast<std::size_t>(state[d])] += pmf[i];
    }
    advance_odometer(state, N);
  }
  if (!(mass > 0.0))
    throw ValidationError("observed slice has zero probability under the table");
  for (std::size_t d : masked) {
    auto r = m.row(d);
    for (std::size_t n = 0; n < N; ++n) r[n] = acc[d * N + n] / mass;
  }
  return m;
}

double exact_conditional(const JointTable& table, const MaskedSequence& x,
                         std::size_t d, Token n) {
  if (x.length() != table.length() || x.vocab_size() != table.vocab_size())
    throw std::invalid_argument("sequence does not match the table");
  if (d >= x.length() || !x.is_masked(d))
    throw std::invalid_argument("query position must be masked");
  if (n < 0 || static_cast<std::size_t>(n) >= table.vocab_size())
    throw std::out_of_range("query token out of range");
  const auto masked = x.masked();
  const std::size_t N = table.vocab_size();
  std::vector<Token> u(masked.size(), 0);
  std::vector<Token> full(x.tokens().begin(), x.tokens().end());
  double numerator = 0.0, denominator = 0.0;
  do {
    fill_masked(full, masked, u);
    const double p = table.prob(full);
    denominator += p;
    if (full[d] == n) numerator += p;
  } while (advance_odometer(u, N));
  if (!(denominator > 0.0))
    throw ValidationError("conditioning event has zero probability");
  return numerator / denominator;
}

// ---------------------------------------------------------------------------
// CountingModel

ConditionalMarginals CountingModel::predict(const MaskedSequence& x) const {
  ++queries_;
  ++round_trips_;
  return inner_.predict(x);
}

std::vector<ConditionalMarginals> CountingModel::predict_batch(
    std::span<const MaskedSequence> xs) const {
  queries_ += xs.size();
  ++round_trips_;
  return inner_.predict_batch(xs);
}

}  // namespace maskctrl
