#pragma once

// Sequence-level protein metrics: GRAVY, instability index and
// secondary-structure residue fractions.
//
// Residues are indexed in alphabetical one-letter order
// (ACDEFGHIKLMNPQRSTVWY), the same order as Vocabulary::amino_acids(), so
// the token overloads apply directly to sampler output.

#include <array>
#include <span>
#include <string>
#include <string_view>

#include "maskctrl/rewards.hpp"
#include "maskctrl/seq_core.hpp"

namespace maskctrl::protein {

inline constexpr std::string_view kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kAlphabetSize = 20;

/// Validated residue string over the 20 standard amino acids.
class AminoAcidSequence {
 public:
  /// Throws std::invalid_argument on an empty string or a non-standard residue.
  explicit AminoAcidSequence(std::string residues);
  /// From amino-acid tokens; throws on masks or out-of-range ids.
  static AminoAcidSequence from_tokens(std::span<const Token> tokens);

  const std::string& str() const noexcept { return residues_; }
  std::size_t length() const noexcept { return residues_.size(); }
  std::span<const Token> tokens() const noexcept { return tokens_; }

 private:
  std::string residues_;
  std::vector<Token> tokens_;
};

/// Kyte–Doolittle hydropathy, indexed by residue token.
const std::array<double, kAlphabetSize>& hydropathy_table();
/// Dipeptide instability weight DIWV(a, b), indexed [a][b] by residue token.
const std::array<std::array<double, kAlphabetSize>, kAlphabetSize>& instability_table();

/// Residue-class convention for secondary_structure_fractions.
///   current: helix EMALK, turn NPGSD, sheet VIYFWLT
///   legacy:  helix VIYFWL, turn NPGS, sheet EMAL
enum class ResidueClasses { current, legacy };

struct StructureFractions {
  double helix = 0.0;
  double turn = 0.0;
  double sheet = 0.0;
};

double gravy(const AminoAcidSequence& seq);
double gravy(std::span<const Token> tokens);

/// (10 / L) · Σ DIWV(s_i, s_{i+1}). Throws std::invalid_argument if L < 2.
double instability_index(const AminoAcidSequence& seq);
double instability_index(std::span<const Token> tokens);

/// A protein is predicted stable when its instability index is below 40.
inline constexpr double kStabilityThreshold = 40.0;
inline bool is_stable(double instability) { return instability < kStabilityThreshold; }

/// Fraction of residues in each class. Classes overlap, so a residue can
/// count toward more than one fraction; each is over the full length.
StructureFractions secondary_structure_fractions(
    const AminoAcidSequence& seq, ResidueClasses classes = ResidueClasses::current);
StructureFractions secondary_structure_fractions(
    std::span<const Token> tokens, ResidueClasses classes = ResidueClasses::current);

/// Registry holding `gravy`, `instability`, `helix_pct`, `turn_pct` and
/// `sheet_pct` over amino-acid tokens.
const MetricRegistry& metric_registry();
void register_metrics(MetricRegistry::Builder& builder);

}  // namespace maskctrl::protein
