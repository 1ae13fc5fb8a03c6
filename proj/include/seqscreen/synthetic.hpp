#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqscreen/corpus.hpp"

namespace seqscreen::synthetic {

/// How the hazard label is planted.
enum class MotifKind {
  /// Hazard families draw residues from a background enriched in K, R, E, D.
  kComposition,
  /// Both classes carry the same ordered residue pairs, hazard families in
  /// the orientation with the higher instability weight and benign families
  /// reversed. Composition is the same in expectation; order is not.
  kDipeptide,
  /// Hazard ancestors are drawn from the upper part of the length range.
  kLength,
};
std::string_view to_string(MotifKind kind);
std::optional<MotifKind> parse_motif_kind(std::string_view token);

struct Spec {
  std::size_t n_families = 20;
  std::size_t family_size = 20;
  MotifKind motif = MotifKind::kComposition;
  std::size_t min_length = 300;
  std::size_t max_length = 340;
  /// Expected identity of a member to its family ancestor (substitutions
  /// only, drawn from the family background).
  double family_identity = 0.9;
  /// Strength of the class-level signal in [0, 1]. For kLength, 1 makes the
  /// two classes' length ranges disjoint.
  double signal = 1.0;
  /// Standard deviation of the per-family log-weight jitter of the residue
  /// background. Nonzero values give every family its own composition, which
  /// a model can memorize under a random split.
  double family_jitter = 0.0;
  /// Fraction of families labelled hazard (rounded, at least one of each).
  double hazard_fraction = 0.5;
  std::uint64_t seed = kDefaultSeed;

  /// Throws Error("config") on an inconsistent spec.
  void validate() const;
};

struct Corpus {
  std::vector<corpus::SequenceRecord> records;  // accession order SYN00000, SYN00001, ...
  std::map<std::string, std::int64_t> family_of;
};

/// Deterministic in spec (including seed). Benign families cycle through
/// Bacteria, Eukaryota, Archaea; hazard families are Bacteria.
Corpus generate(const Spec& spec);

/// Adjusted Rand index between two labelings of the same keys. Throws
/// Error("shape") when the key sets differ.
double adjusted_rand_index(const std::map<std::string, std::int64_t>& a,
                           const std::map<std::string, std::int64_t>& b);

/// The ordered residue pairs used by kDipeptide, highest weight asymmetry first.
std::vector<std::pair<char, char>> dipeptide_motifs(std::size_t count = 6);

}  // namespace seqscreen::synthetic
