#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqscreen/calibration.hpp"
#include "seqscreen/corpus.hpp"
#include "seqscreen/features.hpp"
#include "seqscreen/homology.hpp"
#include "seqscreen/metrics.hpp"

namespace seqscreen::probes {

struct EvalOptions {
  metrics::BootstrapOptions bootstrap;
  calibration::CalibrationOptions calibration;
  bool alternative_rule = false;  // also report the constrained operating points
  std::size_t n_bins = 15;
};

/// Test-set evaluation of one (model, split, feature set) cell.
struct Evaluation {
  models::ModelKind model_kind = models::ModelKind::kLogReg;
  SplitProtocol split = SplitProtocol::kRandom;
  features::FeatureSet feature_set = features::FeatureSet::kBase;
  std::uint64_t split_fingerprint = 0;
  std::vector<metrics::ScoredExample> examples;  // test accessions, sorted
  std::vector<metrics::MetricEstimate> metrics;
  metrics::ReliabilityBins reliability;
};

struct TrainedRun {
  calibration::CalibratedModel model;
  Evaluation evaluation;
};

/// Records of `accessions`, in that order. Throws Error("missing") for an
/// accession with no record.
std::vector<corpus::SequenceRecord> select(const std::vector<corpus::SequenceRecord>& records,
                                           const std::vector<std::string>& accessions);

/// Calibrated model on `train`, with the feature order version and names
/// recorded in every fold.
calibration::CalibratedModel fit(const std::vector<corpus::SequenceRecord>& train, models::ModelKind kind,
                                 features::FeatureSet set, std::uint64_t seed, const EvalOptions& options = {});

/// Featurize, fit the calibrated model on split.train with `seed`, score
/// split.test and run the metric suite.
TrainedRun train_and_evaluate(const std::vector<corpus::SequenceRecord>& records,
                              const homology::SplitSpec& split, models::ModelKind kind,
                              features::FeatureSet set, std::uint64_t seed,
                              const EvalOptions& options = {});

/// Scores `test` with a fitted model and runs the metric suite.
Evaluation evaluate(const calibration::CalibratedModel& model,
                    const std::vector<corpus::SequenceRecord>& test, features::FeatureSet set,
                    const EvalOptions& options = {});

enum class ProbeKind { kShuffle, kLengthOnly, kCompositionOnly };
std::string_view to_string(ProbeKind kind);

struct ProbeResult {
  ProbeKind kind = ProbeKind::kShuffle;
  SplitProtocol split = SplitProtocol::kRandom;
  models::ModelKind model_kind = models::ModelKind::kLogReg;
  Evaluation evaluation;
  /// probe point estimate minus base point estimate, per metric name
  std::map<std::string, double> delta_vs_base;
};

struct ShuffleOptions {
  std::uint64_t global_seed = kDefaultSeed;
  /// Average calibrated probabilities over this many shuffles per sequence.
  /// Shuffle j > 0 uses derive_seed(global_seed, j); shuffle 0 uses
  /// global_seed itself.
  std::size_t n_shuffles = 1;
};

/// Scores composition-preserving shuffles of the base test set with the
/// unchanged model. Deltas are taken against `base`, which must cover the
/// same accessions.
ProbeResult run_shuffle_probe(const calibration::CalibratedModel& model,
                              const std::vector<corpus::SequenceRecord>& test,
                              const Evaluation& base, const ShuffleOptions& shuffle = {},
                              const EvalOptions& options = {});

/// Retrains on a restricted feature set (length-only or composition-only)
/// under the base run's split and seed. Throws Error("split") when the split
/// fingerprint differs from base.split_fingerprint.
ProbeResult run_ablation(const std::vector<corpus::SequenceRecord>& records,
                         const homology::SplitSpec& split, models::ModelKind kind,
                         features::FeatureSet set, std::uint64_t seed, const Evaluation& base,
                         const EvalOptions& options = {});

nlohmann::json to_json(const Evaluation& evaluation);
nlohmann::json to_json(const ProbeResult& probe);
nlohmann::json to_json(const metrics::MetricEstimate& estimate);

}  // namespace seqscreen::probes
