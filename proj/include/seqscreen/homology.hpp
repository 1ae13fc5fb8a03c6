#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqscreen/common.hpp"
#include "seqscreen/corpus.hpp"

namespace seqscreen::homology {

// ---------------------------------------------------------------------------
// Identity

/// Denominator of the identity fraction. kMinLength is the default and the
/// one the benchmark protocol uses; kMaxLength is stricter for corpora with a
/// wide spread of lengths (a short sequence is almost always a subsequence of
/// a long one).
enum class IdentityNorm { kMinLength, kMaxLength };
std::string_view to_string(IdentityNorm norm);
std::optional<IdentityNorm> parse_identity_norm(std::string_view token);

/// Bit-parallel LCS against a fixed sequence (Crochemore et al. 2001):
/// V' = (V + (V & M[c])) | (V & ~M[c]); the LCS is the number of zero bits.
class LcsIndex {
 public:
  explicit LcsIndex(std::string_view sequence);
  std::size_t lcs_with(std::string_view other) const;
  std::size_t size() const { return length_; }

 private:
  std::size_t length_ = 0;
  std::size_t words_ = 0;
  std::vector<std::uint64_t> masks_;  // 21 symbol classes x words_
};

std::size_t lcs_length(std::string_view a, std::string_view b);

/// LCS(a, b) / norm(|a|, |b|); symmetric, in [0, 1]. Empty input -> 0.
double identity(std::string_view a, std::string_view b,
                IdentityNorm norm = IdentityNorm::kMinLength);

double identity_from_lcs(std::size_t lcs, std::size_t len_a, std::size_t len_b,
                         IdentityNorm norm);

// ---------------------------------------------------------------------------
// k-mer prefilter

enum class PrefilterVerdict { kMaybe, kReject };

/// Sorted k-mer codes (with multiplicity) plus residue counts of a sequence.
struct KmerProfile {
  int k = 2;
  std::size_t length = 0;
  std::vector<std::uint32_t> kmers;
  std::array<std::uint32_t, 21> counts{};
};

KmerProfile make_profile(std::string_view sequence, int k);

/// Upper bound on LCS(a, b) from shared residues and shared k-mers.
///
/// An LCS alignment of length L preserves every k-mer of `a` that avoids the
/// |a|-L unmatched positions of `a` (each hits <= k windows) and the <= |b|-L
/// breaks where consecutive matched residues land non-adjacently in `b` (each
/// hits <= k-1 windows). Preserved k-mers are shared, so with S the multiset
/// intersection size: S >= |a|-k+1 - k(|a|-L) - (k-1)(|b|-L), i.e.
///   L <= (S + (k-1)(|a|+|b|+1)) / (2k-1).
/// For k = 1 this is the composition bound L <= sum_c min(n_a(c), n_b(c)).
std::size_t lcs_upper_bound(const KmerProfile& a, const KmerProfile& b);

/// Rejects only when the bound proves identity < threshold.
PrefilterVerdict kmer_prefilter(const KmerProfile& a, const KmerProfile& b, double threshold,
                                IdentityNorm norm = IdentityNorm::kMinLength);
PrefilterVerdict kmer_prefilter(std::string_view a, std::string_view b, int k, double threshold,
                                IdentityNorm norm = IdentityNorm::kMinLength);

// ---------------------------------------------------------------------------
// Greedy clustering

struct Cluster {
  std::int64_t id = 0;
  std::string representative;
  std::vector<std::string> members;  // representative first, then scan order

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct ClusterTable {
  double threshold = 0.4;
  std::vector<Cluster> clusters;

  std::map<std::string, std::int64_t> assignments() const;
  std::size_t member_count() const;
  friend bool operator==(const ClusterTable&, const ClusterTable&) = default;
};

struct ClusterOptions {
  double threshold = 0.4;
  bool use_prefilter = true;
  int kmer = 2;
  IdentityNorm norm = IdentityNorm::kMinLength;
};

struct ClusterStats {
  std::size_t identity_evaluations = 0;
  std::size_t prefilter_rejections = 0;
};

/// Scans records by (length desc, accession asc); each joins the first
/// representative (in creation order) with identity >= threshold, otherwise
/// founds a new cluster. Ids follow creation order from 0. Comparisons against
/// the representative list run in parallel blocks; the first hit wins, so the
/// table is the same for any thread count.
ClusterTable greedy_cluster(const std::vector<corpus::SequenceRecord>& records,
                            const ClusterOptions& options = {}, ClusterStats* stats = nullptr);

/// Recomputes identities exactly: every member >= threshold with its
/// representative, every representative pair < threshold, every accession of
/// `records` in exactly one cluster. Returns human-readable violations.
std::vector<std::string> verify_cluster_table(const ClusterTable& table,
                                              const std::vector<corpus::SequenceRecord>& records,
                                              IdentityNorm norm = IdentityNorm::kMinLength);

/// Table from externally supplied ids (e.g. the metadata CSV). The smallest
/// accession of each cluster stands in as representative.
ClusterTable table_from_assignments(const std::map<std::string, std::int64_t>& assignments,
                                    double threshold);

/// CSV `accession,cluster_id,is_representative`.
void write_cluster_csv(std::ostream& out, const ClusterTable& table);
ClusterTable read_cluster_csv(std::istream& in, double threshold);

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  SplitProtocol protocol = SplitProtocol::kRandom;
  std::uint64_t seed = kDefaultSeed;
  double train_fraction = 0.8;
  std::vector<std::string> train;  // sorted
  std::vector<std::string> test;   // sorted

  std::optional<SplitSide> side_of(const std::string& accession) const;
  /// FNV-1a over "train\n" + accessions + "test\n" + accessions.
  std::uint64_t fingerprint() const;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct SplitResult {
  SplitSpec spec;
  std::vector<std::string> warnings;
};

/// Train counts per stratum for a split of n = sum(sizes) items. The overall
/// test size is ceil((1 - train_fraction) * n); each stratum receives
/// floor(train_fraction * size), leftover train slots go to the largest
/// fractional parts (earlier stratum on ties), so every stratum is within one
/// item of its exact share. Every non-empty stratum gets at least one train
/// slot when train_fraction > 0.
std::vector<std::size_t> allocate_train_counts(const std::vector<std::size_t>& strata_sizes,
                                               double train_fraction);

/// Cluster-level split stratified by majority label (ties count as hazard).
SplitResult make_cluster_split(const ClusterTable& table,
                               const std::map<std::string, Label>& labels,
                               double train_fraction, std::uint64_t seed);

/// Sequence-level split stratified by label.
SplitResult make_random_split(const std::map<std::string, Label>& labels, double train_fraction,
                              std::uint64_t seed);

/// Split taken verbatim from the metadata columns. Throws when any row lacks
/// the requested column.
SplitSpec split_from_metadata(const std::vector<corpus::MetadataRow>& rows,
                              SplitProtocol protocol);

/// CSV `accession,split`.
void write_split_csv(std::ostream& out, const SplitSpec& spec);
SplitSpec read_split_csv(std::istream& in, SplitProtocol protocol);

/// Majority label of each cluster, ties resolved to hazard.
std::map<std::int64_t, Label> majority_labels(const ClusterTable& table,
                                              const std::map<std::string, Label>& labels);

}  // namespace seqscreen::homology
