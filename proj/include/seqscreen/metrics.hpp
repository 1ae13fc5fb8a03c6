#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqscreen/common.hpp"

namespace seqscreen::metrics {

struct ScoredExample {
  std::string accession;
  int label = 0;  // 1 = hazard
  double prob = 0.0;
};

using Examples = std::span<const ScoredExample>;

/// Throws Error("domain") unless every prob is finite in [0, 1] and every
/// label is 0 or 1.
void validate(Examples examples);

/// Mann-Whitney: mean over (pos, neg) pairs of 1 / 0.5 / 0 for
/// greater / equal / smaller. DegenerateError without both classes.
double auroc(Examples examples);

/// Average precision sum_n (R_n - R_{n-1}) P_n over descending thresholds,
/// tied probabilities forming one threshold. DegenerateError without
/// positives.
double auprc(Examples examples);

struct RocPoint {
  double threshold;  // examples with prob >= threshold are called positive
  double fpr;
  double tpr;
};

/// Thresholds descending over the distinct probabilities, with (0, 0) at
/// threshold +inf prepended.
std::vector<RocPoint> roc_curve(Examples examples);

enum class OperatingRule {
  /// TPR at the first ROC point whose FPR >= target (FPR at the first point
  /// whose TPR >= target).
  kFirstReaching,
  /// Largest TPR among points with FPR <= target (smallest FPR among points
  /// with TPR >= target).
  kConstrained,
};

double tpr_at_fpr(Examples examples, double fpr_target = 0.01,
                  OperatingRule rule = OperatingRule::kFirstReaching);
double fpr_at_tpr(Examples examples, double tpr_target = 0.95,
                  OperatingRule rule = OperatingRule::kFirstReaching);

double brier(Examples examples);

struct ReliabilityBin {
  double edge_lo = 0.0;
  double edge_hi = 0.0;
  double mean_prob = 0.0;  // 0 for empty bins
  double frac_pos = 0.0;   // 0 for empty bins
  std::size_t count = 0;
};

struct ReliabilityBins {
  std::size_t n_bins = 15;
  std::vector<ReliabilityBin> bins;
};

/// Bin of p is floor(p * n_bins), with p = 1 placed in the last bin.
ReliabilityBins reliability(Examples examples, std::size_t n_bins = 15);

/// sum_b (n_b / n) |frac_pos_b - mean_prob_b|.
double ece(Examples examples, std::size_t n_bins = 15, ReliabilityBins* bins = nullptr);

// ---------------------------------------------------------------------------
// Bootstrap

struct MetricEstimate {
  std::string name;
  double point = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n_boot_used = 0;
};

using MetricFn = std::function<double(Examples)>;

enum class BootstrapMode {
  /// Positives and negatives resampled separately, class counts preserved.
  kStratified,
  /// Resample n examples from the pooled set; degenerate draws are skipped.
  kIid,
};

struct BootstrapOptions {
  std::size_t n_boot = 200;
  std::uint64_t seed = kDefaultSeed;
  BootstrapMode mode = BootstrapMode::kStratified;
  double lo_percentile = 2.5;
  double hi_percentile = 97.5;
};

/// Percentile of sorted values by linear interpolation between order
/// statistics (rank q/100 * (m - 1)).
double percentile(std::span<const double> sorted, double q);

/// Resample b draws from Rng(derive_seed(seed, b)). Resamples on which the
/// metric throws DegenerateError are skipped; if every resample is skipped
/// Error("degenerate") is thrown. The point estimate uses the full sample.
MetricEstimate bootstrap_ci(Examples examples, const std::string& name, const MetricFn& fn,
                            const BootstrapOptions& options = {});

/// Names in report order: auroc, auprc, tpr_at_1pct_fpr, fpr_at_95pct_tpr,
/// brier, ece. With `alternative_rule` two more follow:
/// tpr_at_1pct_fpr_constrained, fpr_at_95pct_tpr_constrained.
std::vector<std::pair<std::string, MetricFn>> metric_suite(bool alternative_rule = false);

std::vector<MetricEstimate> evaluate_suite(Examples examples, const BootstrapOptions& options,
                                           bool alternative_rule = false);

/// Looks up an estimate by name; throws Error("missing") when absent.
const MetricEstimate& find(const std::vector<MetricEstimate>& estimates, const std::string& name);

// ---------------------------------------------------------------------------
// Subgroups

struct SubgroupResult {
  std::string family;  // length_bin | positive_cluster | superkingdom | custom name
  std::string key;
  std::size_t support = 0;  // members defining the group
  std::size_t n_pos = 0;    // evaluated positives
  std::size_t n_neg = 0;    // evaluated negatives
  bool sufficient = false;
  std::string note;  // reason when not sufficient
  std::vector<MetricEstimate> metrics;  // auroc, auprc when sufficient
};

inline constexpr std::size_t kMinSupport = 15;

/// Generic grouping: each group is evaluated on its own members. Groups need
/// >= min_support members and both labels.
std::vector<SubgroupResult> subgroup_report(Examples examples,
                                            const std::map<std::string, std::string>& groups,
                                            const std::string& family,
                                            std::size_t min_support = kMinSupport,
                                            const BootstrapOptions& options = {});

/// Length quantile bins over the test lengths (default 4); keys look like
/// "Q1[30,180]".
std::map<std::string, std::string> length_groups(const std::map<std::string, std::size_t>& lengths,
                                                 std::size_t bins = 4);

/// Positives of each cluster against all negatives. Support = the cluster's
/// positive count.
std::vector<SubgroupResult> positive_cluster_report(
    Examples examples, const std::map<std::string, std::int64_t>& cluster_of,
    std::size_t min_support = kMinSupport, const BootstrapOptions& options = {});

/// Negatives of each superkingdom against all positives. Support = the
/// superkingdom's negative count.
std::vector<SubgroupResult> superkingdom_report(
    Examples examples, const std::map<std::string, std::string>& kingdom_of,
    std::size_t min_support = kMinSupport, const BootstrapOptions& options = {});

}  // namespace seqscreen::metrics
