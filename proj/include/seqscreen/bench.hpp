#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqscreen/corpus.hpp"
#include "seqscreen/fetch.hpp"
#include "seqscreen/homology.hpp"
#include "seqscreen/probes.hpp"

namespace seqscreen::bench {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kReportFormat = "seqscreen-report-v1";

struct RunConfig {
  std::string metadata_path;  // released metadata CSV (optional)
  std::string fasta_path;     // local FASTA (optional)
  std::string taxonomy_path;  // accession,superkingdom table (optional)
  bool fetch = false;         // fetch residues for metadata accessions
  corpus::FetchOptions fetch_options;
  std::string out_dir = "out";

  features::FeatureSet feature_set = features::FeatureSet::kBase;
  std::vector<SplitProtocol> splits = {SplitProtocol::kRandom, SplitProtocol::kCluster};
  std::vector<models::ModelKind> models = {models::ModelKind::kLogReg, models::ModelKind::kLinSvm,
                                           models::ModelKind::kForest};
  std::uint64_t seed = kDefaultSeed;
  std::size_t n_boot = 200;
  double threshold = 0.4;
  double train_fraction = 0.8;
  homology::IdentityNorm identity_norm = homology::IdentityNorm::kMinLength;
  models::Hyperparameters hyper;
  metrics::BootstrapMode bootstrap_mode = metrics::BootstrapMode::kStratified;
  bool alternative_rule = false;
  std::size_t n_shuffles = 1;
  bool probes = true;
  bool subgroups = true;
  /// Recompute clusters and splits even when the metadata carries them.
  bool resplit = false;
  bool length_match = false;
  corpus::CurationConfig curation;

  /// Throws Error("config").
  void validate() const;
};

/// `key = value` lines, '#' comments. Keys mirror the long CLI flags
/// (metadata, fasta, taxonomy, fetch, cache, out, features, splits, models,
/// seed, boot, threshold, train-fraction, norm, logreg-c, svm-c, trees,
/// bootstrap, alt-rule, shuffles, probes, subgroups, resplit, length-match,
/// min-len, max-len). Unknown keys throw Error("config").
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Per-class length histogram over shared equal-width bin edges.
struct LengthHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> hazard;
  std::vector<std::size_t> benign;
};

/// Throws Error("empty") when either class is empty.
LengthHistogram length_histogram(const std::vector<corpus::SequenceRecord>& records,
                                 std::size_t bins = 30);
std::string length_histogram_svg(const LengthHistogram& h);
std::string length_histogram_csv(const LengthHistogram& h);

std::string reliability_svg(const metrics::ReliabilityBins& bins, const std::string& title);
std::string reliability_csv(const metrics::ReliabilityBins& bins);

/// One evaluated (split, model) cell with its probes and subgroups.
struct Cell {
  probes::Evaluation evaluation;
  std::vector<probes::ProbeResult> probes;
  std::vector<metrics::SubgroupResult> subgroups;
};

struct RunOutput {
  nlohmann::json report;
  std::vector<std::string> files;  // written artifacts, relative to out_dir
  std::vector<corpus::LeakHit> leaks;
};

/// Loads, curates, clusters, splits, trains, evaluates, probes and writes
/// every artifact under cfg.out_dir. Stage failures are rethrown as
/// Error("<stage>:<code>"). A non-empty `leaks` means the safety scan found
/// residue windows in the outputs.
RunOutput run_all(const RunConfig& cfg);

/// Same pipeline on records already in memory (no file inputs).
RunOutput run_records(const RunConfig& cfg, const std::vector<corpus::SequenceRecord>& records,
                      const std::vector<corpus::MetadataRow>* metadata);

/// Loads records per cfg (FASTA with optional metadata authority and
/// taxonomy, or fetch).
std::vector<corpus::SequenceRecord> load_records(const RunConfig& cfg,
                                                 std::vector<corpus::MetadataRow>* metadata_out);

nlohmann::json to_json(const metrics::SubgroupResult& result);

/// Scans every file in `paths` for residue windows of `records`.
std::vector<corpus::LeakHit> safety_scan(const std::vector<corpus::SequenceRecord>& records,
                                         const std::vector<std::string>& paths,
                                         std::size_t window = 20);

}  // namespace seqscreen::bench
