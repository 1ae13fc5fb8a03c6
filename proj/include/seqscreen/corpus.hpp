#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "seqscreen/common.hpp"
#include "seqscreen/fasta.hpp"

namespace seqscreen::corpus {

inline constexpr std::string_view kCanonicalAlphabet = "ACDEFGHIKLMNPQRSTVWY";

enum class Superkingdom { kBacteria, kArchaea, kEukaryota, kUnknown };
std::string_view to_string(Superkingdom kingdom);
std::optional<Superkingdom> parse_superkingdom(std::string_view token);

/// One protein. `superkingdom` and `viral` come from ingestion metadata and
/// are never inferred from the residues.
struct SequenceRecord {
  std::string accession;
  std::string residues;
  Label label = Label::kBenign;
  std::string source;
  std::optional<Superkingdom> superkingdom;
  bool viral = false;

  std::size_t length() const { return residues.size(); }
};

bool is_canonical(std::string_view residues);

struct CurationConfig {
  std::size_t min_len = 30;
  std::size_t max_len = 1000;
  bool canonical_only = true;
  bool dedup_exact = true;
  bool exclude_viral = true;
  std::size_t length_match_bins = 10;
  std::uint64_t seed = kDefaultSeed;

  /// Throws Error("config") when an invariant is violated.
  void validate() const;
};

struct CurationAudit {
  std::size_t input = 0;
  std::size_t viral = 0;
  std::size_t non_canonical = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t duplicates = 0;
  std::size_t kept = 0;
};

struct CurationResult {
  std::vector<SequenceRecord> kept;
  CurationAudit audit;
};

/// Filters in the order viral -> canonical -> length -> exact dedup. Among
/// records sharing identical residues the lexicographically smallest
/// accession survives. Output keeps input order. Throws on empty input and on
/// duplicate accessions.
CurationResult curate(const std::vector<SequenceRecord>& records, const CurationConfig& cfg);

struct LengthMatchResult {
  std::vector<SequenceRecord> negatives;  // sorted by accession
  std::vector<double> bin_edges;          // length_match_bins + 1 edges
  std::vector<std::size_t> positives_per_bin;
  std::vector<std::size_t> selected_per_bin;
  std::vector<std::string> warnings;
};

/// Quantile bin edges of `values` (linear interpolation between order
/// statistics, numpy's default).
std::vector<double> quantile_edges(std::vector<double> values, std::size_t bins);

/// Bin of `value` under `edges` ([e_i, e_{i+1}) with the last bin closed), or
/// nullopt when outside [e_0, e_last].
std::optional<std::size_t> bin_of(const std::vector<double>& edges, double value);

/// Downsamples `negatives` so that each positive-length quantile bin holds as
/// many negatives as positives (or all available, with a warning).
LengthMatchResult length_match(const std::vector<SequenceRecord>& positives,
                               const std::vector<SequenceRecord>& negatives,
                               const CurationConfig& cfg);

// ---------------------------------------------------------------------------
// Metadata-only CSV

inline constexpr std::string_view kMetadataHeader =
    "accession,label,length,source,cluster_id,split_random,split_cluster";

/// Row of the released benchmark table. Cluster and split cells may be left
/// empty when not assigned yet; no residues column exists.
struct MetadataRow {
  std::string accession;
  Label label = Label::kBenign;
  std::size_t length = 0;
  std::string source;
  std::optional<std::int64_t> cluster_id;
  std::optional<SplitSide> split_random;
  std::optional<SplitSide> split_cluster;

  friend bool operator==(const MetadataRow&, const MetadataRow&) = default;
};

std::vector<MetadataRow> read_metadata_csv(std::istream& in);
std::vector<MetadataRow> read_metadata_csv(const std::string& path);
void write_metadata_csv(std::ostream& out, const std::vector<MetadataRow>& rows);
void write_metadata_csv(const std::string& path, const std::vector<MetadataRow>& rows);

MetadataRow metadata_of(const SequenceRecord& record);

/// `accession,superkingdom` annotation table.
std::map<std::string, Superkingdom> read_taxonomy_csv(const std::string& path);
void write_taxonomy_csv(const std::string& path, const std::vector<SequenceRecord>& records);

// ---------------------------------------------------------------------------
// Ingestion

/// Builds records from FASTA entries. When `metadata` is given it is the
/// authority for which accessions exist and their label/source; every
/// metadata accession must have a FASTA entry. Otherwise labels come from the
/// `label=` header tag (plus optional `source=`, `superkingdom=`, `viral=`).
std::vector<SequenceRecord> ingest(const std::vector<fasta::Record>& entries,
                                   const std::vector<MetadataRow>* metadata,
                                   const std::map<std::string, Superkingdom>* taxonomy);

/// FASTA entries carrying the tags understood by `ingest`.
std::vector<fasta::Record> to_fasta(const std::vector<SequenceRecord>& records);

// ---------------------------------------------------------------------------
// Safety

struct LeakHit {
  std::string artifact;
  std::size_t offset = 0;
  std::string accession;
};

/// Scans artifacts for any `window`-residue substring of a record, compared
/// case-insensitively.
class ResidueLeakScanner {
 public:
  ResidueLeakScanner(const std::vector<SequenceRecord>& records, std::size_t window = 20);
  std::vector<LeakHit> scan(std::string_view artifact_name, std::string_view text) const;
  std::vector<LeakHit> scan_file(const std::string& path) const;

 private:
  std::size_t window_;
  std::vector<std::pair<std::string, std::string>> sources_;  // accession, residues
  std::unordered_map<std::string_view, std::size_t> windows_;
};

}  // namespace seqscreen::corpus
