#include "maskctrl/protein_metrics.hpp"

#include <stdexcept>

namespace maskctrl::protein {

namespace {

// Kyte & Doolittle (1982) hydropathy, alphabetical residue order.
constexpr std::array<double, kAlphabetSize> kHydropathy = {1.8, 2.5, -3.5, -3.5, 2.8, -0.4, -3.2, 4.5, -3.9, 3.8, 1.9, -3.5, -1.6, -3.5, -4.5, -0.8, -0.7, 4.2, -0.9, -1.3};

// Guruprasad, Reddy & Pandit (1990) dipeptide instability weights.
// Row = first residue, column = second residue.
constexpr std::array<std::array<double, kAlphabetSize>, kAlphabetSize> kDiwv = {{
      {1.0, 44.94, -7.49, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0},  // A
      {1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 33.6, 1.0, 1.0, 20.26, 33.6, 1.0, 20.26, -6.54, 1.0, 1.0, 33.6, -6.54, 24.68, 1.0},  // C
      {1.0, 1.0, 1.0, 1.0, -6.54, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, -6.54, 20.26, -14.03, 1.0, 1.0, 1.0},  // D
      {1.0, 44.94, 20.26, 33.6, 1.0, 1.0, -6.54, 20.26, 1.0, 1.0, 1.0, 1.0, 20.26, 20.26, 1.0, 20.26, 1.0, 1.0, -14.03, 1.0},  // E
      {1.0, 1.0, 13.34, 1.0, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 33.601},  // F
      {-7.49, 1.0, 1.0, -6.54, 1.0, 13.34, 1.0, -7.49, -7.49, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 13.34, -7.49},  // G
      {1.0, 1.0, 1.0, 1.0, -9.37, -9.37, 1.0, 44.94, 24.68, 1.0, 1.0, 24.68, -1.88, 1.0, 1.0, 1.0, -6.54, 1.0, -1.88, 44.94},  // H
      {1.0, 1.0, 1.0, 44.94, 1.0, 1.0, 13.34, 1.0, -7.49, 20.26, 1.0, 1.0, -1.88, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0},  // I
      {1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, -7.49, 1.0, -7.49, 33.6, 1.0, -6.54, 24.64, 33.6, 1.0, 1.0, -7.49, 1.0, 1.0},  // K
      {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 20.26, 33.6, 20.26, 1.0, 1.0, 1.0, 24.68, 1.0},  // L
      {13.34, 1.0, 1.0, 1.0, 1.0, 1.0, 58.28, 1.0, 1.0, 1.0, -1.88, 1.0, 44.94, -6.54, -6.54, 44.94, -1.88, 1.0, 1.0, 24.68},  // M
      {1.0, -1.88, 1.0, 1.0, -14.03, -14.03, 1.0, 44.94, 24.68, 1.0, 1.0, 1.0, -1.88, -6.54, 1.0, 1.0, -7.49, 1.0, -9.37, 1.0},  // N
      {20.26, -6.54, -6.54, 18.38, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, -6.54, 1.0, 20.26, 20.26, -6.54, 20.26, 1.0, 20.26, -1.88, 1.0},  // P
      {1.0, -6.54, 20.26, 20.26, -6.54, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 20.26, 20.26, 1.0, 44.94, 1.0, -6.54, 1.0, -6.54},  // Q
      {1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 20.26, 1.0, 1.0, 1.0, 1.0, 13.34, 20.26, 20.26, 58.28, 44.94, 1.0, 1.0, 58.28, -6.54},  // R
      {1.0, 33.6, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 44.94, 20.26, 20.26, 20.26, 1.0, 1.0, 1.0, 1.0},  // S
      {1.0, 1.0, 1.0, 20.26, 13.34, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0, -6.54, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0},  // T
      {1.0, 1.0, -14.03, 1.0, 1.0, -7.49, 1.0, 1.0, -1.88, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, -6.54},  // V
      {-14.03, 1.0, 1.0, 1.0, 1.0, -9.37, 24.68, 1.0, 1.0, 13.34, 24.68, 13.34, 1.0, 1.0, 1.0, 1.0, -14.03, -7.49, 1.0, 1.0},  // W
      {24.68, 1.0, 24.68, -6.54, 1.0, -7.49, 13.34, 1.0, 1.0, 1.0, 44.94, 1.0, 13.34, 1.0, -15.91, 1.0, -7.49, 1.0, -9.37, 13.34},  // Y
}};

struct ClassMasks {
  std::array<bool, kAlphabetSize> helix{}, turn{}, sheet{};
};

constexpr std::array<bool, kAlphabetSize> residue_mask(std::string_view residues) {
  std::array<bool, kAlphabetSize> m{};
  for (char c : residues) m[kAlphabet.find(c)] = true;
  return m;
}

constexpr ClassMasks kCurrentClasses{residue_mask("EMALK"), residue_mask("NPGSD"),
                                     residue_mask("VIYFWLT")};
constexpr ClassMasks kLegacyClasses{residue_mask("VIYFWL"), residue_mask("NPGS"),
                                    residue_mask("EMAL")};

void check_tokens(std::span<const Token> tokens) {
  if (tokens.empty()) throw std::invalid_argument("empty protein sequence");
  for (Token t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= kAlphabetSize)
      throw std::invalid_argument("invalid residue token " + std::to_string(t));
  }
}

}  // namespace

AminoAcidSequence::AminoAcidSequence(std::string residues) : residues_(std::move(residues)) {
  if (residues_.empty()) throw std::invalid_argument("empty protein sequence");
  tokens_.reserve(residues_.size());
  for (char c : residues_) {
    auto pos = kAlphabet.find(c);
    if (pos == std::string_view::npos)
      throw std::invalid_argument(std::string("invalid residue '") + c + "'");
    tokens_.push_back(static_cast<Token>(pos));
  }
}

AminoAcidSequence AminoAcidSequence::from_tokens(std::span<const Token> tokens) {
  check_tokens(tokens);
  std::string s;
  s.reserve(tokens.size());
  for (Token t : tokens) s += kAlphabet[static_cast<std::size_t>(t)];
  return AminoAcidSequence(std::move(s));
}

const std::array<double, kAlphabetSize>& hydropathy_table() { return kHydropathy; }

const std::array<std::array<double, kAlphabetSize>, kAlphabetSize>& instability_table() {
  return kDiwv;
}

double gravy(std::span<const Token> tokens) {
  check_tokens(tokens);
  double total = 0.0;
  for (Token t : tokens) total += kHydropathy[static_cast<std::size_t>(t)];
  return total / static_cast<double>(tokens.size());
}

double gravy(const AminoAcidSequence& seq) { return gravy(seq.tokens()); }

double instability_index(std::span<const Token> tokens) {
  check_tokens(tokens);
  if (tokens.size() < 2)
    throw std::invalid_argument("instability index needs at least two residues");
  double score = 0.0;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    score += kDiwv[static_cast<std::size_t>(tokens[i])][static_cast<std::size_t>(tokens[i + 1])];
  return (10.0 / static_cast<double>(tokens.size())) * score;
}

double instability_index(const AminoAcidSequence& seq) { return instability_index(seq.tokens()); }

StructureFractions secondary_structure_fractions(std::span<const Token> tokens,
                                                 ResidueClasses classes) {
  check_tokens(tokens);
  const ClassMasks& masks =
      classes == ResidueClasses::current ? kCurrentClasses : kLegacyClasses;
  std::array<std::size_t, kAlphabetSize> counts{};
  for (Token t : tokens) ++counts[static_cast<std::size_t>(t)];
  // Summed per residue type as percentages, in the reference toolkit's order.
  const double length = static_cast<double>(tokens.size());
  StructureFractions f;
  for (std::size_t a = 0; a < kAlphabetSize; ++a) {
    const double share = static_cast<double>(counts[a]) * 100.0 / length / 100.0;
    if (masks.helix[a]) f.helix += share;
    if (masks.turn[a]) f.turn += share;
    if (masks.sheet[a]) f.sheet += share;
  }
  return f;
}

StructureFractions secondary_structure_fractions(const AminoAcidSequence& seq,
                                                 ResidueClasses classes) {
  return secondary_structure_fractions(seq.tokens(), classes);
}

void register_metrics(MetricRegistry::Builder& builder) {
  builder.add("gravy", [](std::span<const Token> x) { return gravy(x); })
      .add("instability", [](std::span<const Token> x) { return instability_index(x); })
      .add("helix_pct",
           [](std::span<const Token> x) { return secondary_structure_fractions(x).helix; })
      .add("turn_pct",
           [](std::span<const Token> x) { return secondary_structure_fractions(x).turn; })
      .add("sheet_pct",
           [](std::span<const Token> x) { return secondary_structure_fractions(x).sheet; });
}

const MetricRegistry& metric_registry() {
  static const MetricRegistry registry = [] {
    MetricRegistry::Builder b;
    register_metrics(b);
    return std::move(b).build();
  }();
  return registry;
}

}  // namespace maskctrl::protein
