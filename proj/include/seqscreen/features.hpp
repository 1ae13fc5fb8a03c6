#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqscreen/corpus.hpp"

namespace seqscreen::features {

inline constexpr std::size_t kAlphabetSize = 20;
inline constexpr std::string_view kAlphabet = corpus::kCanonicalAlphabet;  // A,C,D,...,Y

/// Bumped whenever names, order, or scale tables change; serialized models
/// refuse to load against a different value.
inline constexpr std::string_view kFeatureOrderVersion = "features-v1";

/// Index of `residue` in kAlphabet, or -1.
int residue_index(char residue);

using Counts = std::array<std::size_t, kAlphabetSize>;
Counts count_residues(std::string_view residues);

/// Ionizable groups used by the Henderson-Hasselbalch charge model.
struct PkaSet {
  double n_term = 8.6;
  double c_term = 3.6;
  double cys = 8.5;
  double asp = 3.9;
  double glu = 4.1;
  double his = 6.5;
  double lys = 10.8;
  double arg = 12.5;
  double tyr = 10.1;
};

/// Residue property tables, indexed by kAlphabet position.
///
/// Provenance (version "scales-v1"):
///   hydropathy    Kyte & Doolittle (1982)
///   avg_mass      average residue masses (ExPASy), one water added per chain
///   instability   Guruprasad, Reddy & Pandit (1990) DIWV dipeptide weights,
///                 as distributed with the ProtParam tools (F->Y = 33.601)
///   pka           EMBOSS iep set
struct ResidueScales {
  std::string version = "scales-v1";
  std::array<double, kAlphabetSize> hydropathy{};
  std::array<double, kAlphabetSize> avg_mass{};
  std::array<std::array<double, kAlphabetSize>, kAlphabetSize> instability{};  // [first][second]
  double water_mass = 18.0153;
  PkaSet pka;
};

const ResidueScales& default_scales();

// All descriptors throw Error("empty") on an empty sequence and
// Error("alphabet") on a residue outside kAlphabet. Permutation-invariant
// descriptors are evaluated from residue counts in alphabet order, so any
// reordering of the input gives bit-identical results.

std::array<double, kAlphabetSize> composition(std::string_view residues);
double aliphatic_index(std::string_view residues);
double gravy(std::string_view residues, const ResidueScales& scales = default_scales());
double aromaticity(std::string_view residues);
double molecular_weight(std::string_view residues, const ResidueScales& scales = default_scales());
/// Throws Error("domain") when pH is outside [0, 14].
double net_charge(std::string_view residues, double ph,
                  const ResidueScales& scales = default_scales());
/// Bisection on [0, 14] until the bracket is narrower than 1e-4.
double isoelectric_point(std::string_view residues,
                         const ResidueScales& scales = default_scales());
/// Throws Error("domain", "needs a dipeptide") for sequences shorter than 2.
double instability_index(std::string_view residues,
                         const ResidueScales& scales = default_scales());

enum class FeatureSet { kBase, kLengthOnly, kCompositionOnly };
std::string_view to_string(FeatureSet set);
std::optional<FeatureSet> parse_feature_set(std::string_view token);

const std::vector<std::string>& feature_names(FeatureSet set);

struct FeatureVector {
  std::string accession;
  FeatureSet set = FeatureSet::kBase;
  std::vector<std::string> names;
  std::vector<double> values;
};

FeatureVector featurize(const corpus::SequenceRecord& record, FeatureSet set,
                        const ResidueScales& scales = default_scales());

/// Row-major feature matrix for a batch; rows follow input order regardless
/// of the worker count.
struct FeatureMatrix {
  FeatureSet set = FeatureSet::kBase;
  std::vector<std::string> names;
  std::vector<std::string> accessions;
  std::vector<std::vector<double>> rows;
};

FeatureMatrix featurize_all(const std::vector<corpus::SequenceRecord>& records, FeatureSet set,
                            const ResidueScales& scales = default_scales());

/// CSV with header `accession,<names...>`; no residues column.
void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix);

/// Composition-preserving probe: Fisher-Yates permutation (see Rng::shuffle)
/// driven by an mt19937_64 seeded with stable_hash(accession) ^ global_seed.
corpus::SequenceRecord shuffle_residues(const corpus::SequenceRecord& record,
                                        std::uint64_t global_seed);

}  // namespace seqscreen::features
