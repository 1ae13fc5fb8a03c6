#include "seqscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>

#include "seqscreen/corpus.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::metrics {
namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(Examples ex) {
  ClassCounts c;
  for (const auto& e : ex) (e.label == 1 ? c.pos : c.neg) += 1;
  return c;
}

// Indices sorted by descending probability; callers group equal values.
std::vector<std::size_t> descending(Examples ex) {
  std::vector<std::size_t> order(ex.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ex[a].prob > ex[b].prob; });
  return order;
}

}  // namespace

void validate(Examples examples) {
  for (const auto& e : examples) {
    if (e.label != 0 && e.label != 1) throw Error("domain", "label of '" + e.accession + "' is not 0/1");
    if (!std::isfinite(e.prob) || e.prob < 0.0 || e.prob > 1.0) {
      throw Error("domain", "probability of '" + e.accession + "' outside [0, 1]");
    }
  }
}

double auroc(Examples ex) {
  const auto c = count_classes(ex);
  if (c.pos == 0 || c.neg == 0) throw DegenerateError("AUROC needs both classes");
  const auto order = descending(ex);
  // 2U accumulated in integers: a positive scores 2 per lower negative, 1 per tie
  std::uint64_t twice_u = 0;
  std::size_t neg_above = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    std::size_t p = 0, n = 0;
    while (e < order.size() && ex[order[e]].prob == ex[order[k]].prob) {
      (ex[order[e]].label == 1 ? p : n) += 1;
      ++e;
    }
    const std::size_t neg_below = c.neg - neg_above - n;
    twice_u += static_cast<std::uint64_t>(p) * (2 * neg_below + n);
    neg_above += n;
    k = e;
  }
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

double auprc(Examples ex) {
  const auto c = count_classes(ex);
  if (c.pos == 0) throw DegenerateError("AUPRC needs positives");
  const auto order = descending(ex);
  double ap = 0.0;
  std::size_t tp = 0, fp = 0, prev_tp = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e < order.size() && ex[order[e]].prob == ex[order[k]].prob) {
      (ex[order[e]].label == 1 ? tp : fp) += 1;
      ++e;
    }
    if (tp > prev_tp) {
      const double recall_gain = static_cast<double>(tp - prev_tp) / static_cast<double>(c.pos);
      ap += recall_gain * static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    prev_tp = tp;
    k = e;
  }
  return ap;
}

std::vector<RocPoint> roc_curve(Examples ex) {
  const auto c = count_classes(ex);
  if (c.pos == 0 || c.neg == 0) throw DegenerateError("ROC needs both classes");
  const auto order = descending(ex);
  std::vector<RocPoint> pts = {{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    while (e < order.size() && ex[order[e]].prob == ex[order[k]].prob) {
      (ex[order[e]].label == 1 ? tp : fp) += 1;
      ++e;
    }
    pts.push_back({ex[order[k]].prob, static_cast<double>(fp) / static_cast<double>(c.neg),
                   static_cast<double>(tp) / static_cast<double>(c.pos)});
    k = e;
  }
  return pts;
}

double tpr_at_fpr(Examples ex, double fpr_target, OperatingRule rule) {
  const auto pts = roc_curve(ex);
  if (rule == OperatingRule::kConstrained) {
    double best = 0.0;
    for (const auto& p : pts) {
      if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
    }
    return best;
  }
  // points come in nondecreasing FPR (and TPR) order
  for (const auto& p : pts) {
    if (p.fpr >= fpr_target) return p.tpr;
  }
  return pts.back().tpr;
}

double fpr_at_tpr(Examples ex, double tpr_target, OperatingRule rule) {
  const auto pts = roc_curve(ex);
  if (rule == OperatingRule::kConstrained) {
    double best = 1.0;
    for (const auto& p : pts) {
      if (p.tpr >= tpr_target) best = std::min(best, p.fpr);
    }
    return best;
  }
  for (const auto& p : pts) {
    if (p.tpr >= tpr_target) return p.fpr;
  }
  return pts.back().fpr;
}

double brier(Examples ex) {
  if (ex.empty()) throw DegenerateError("Brier score of an empty sample");
  double s = 0.0;
  for (const auto& e : ex) {
    const double d = e.prob - e.label;
    s += d * d;
  }
  return s / static_cast<double>(ex.size());
}

ReliabilityBins reliability(Examples ex, std::size_t n_bins) {
  if (n_bins == 0) throw Error("config", "n_bins must be positive");
  ReliabilityBins rb;
  rb.n_bins = n_bins;
  rb.bins.resize(n_bins);
  std::vector<double> sum_p(n_bins, 0.0), sum_y(n_bins, 0.0);
  for (const auto& e : ex) {
    auto b = static_cast<std::size_t>(std::floor(e.prob * static_cast<double>(n_bins)));
    b = std::min(b, n_bins - 1);
    sum_p[b] += e.prob;
    sum_y[b] += e.label;
    ++rb.bins[b].count;
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = rb.bins[b];
    bin.edge_lo = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.edge_hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    if (bin.count > 0) {
      bin.mean_prob = sum_p[b] / static_cast<double>(bin.count);
      bin.frac_pos = sum_y[b] / static_cast<double>(bin.count);
    }
  }
  return rb;
}

double ece(Examples ex, std::size_t n_bins, ReliabilityBins* out) {
  if (ex.empty()) throw DegenerateError("ECE of an empty sample");
  const auto rb = reliability(ex, n_bins);
  double total = 0.0;
  for (const auto& b : rb.bins) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / static_cast<double>(ex.size()) *
             std::abs(b.frac_pos - b.mean_prob);
  }
  if (out) *out = rb;
  return total;
}

// ---------------------------------------------------------------------------

double percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw Error("degenerate", "percentile of an empty sample");
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

MetricEstimate bootstrap_ci(Examples ex, const std::string& name, const MetricFn& fn,
                            const BootstrapOptions& options) {
  MetricEstimate est;
  est.name = name;
  est.point = fn(ex);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < ex.size(); ++i) (ex[i].label == 1 ? pos : neg).push_back(i);

  std::vector<std::optional<double>> draws(options.n_boot);
  parallel::for_each_index(options.n_boot, [&](std::size_t b) {
    Rng rng(derive_seed(options.seed, b));
    std::vector<ScoredExample> sample;
    sample.reserve(ex.size());
    if (options.mode == BootstrapMode::kStratified) {
      for (std::size_t k = 0; k < pos.size(); ++k) sample.push_back(ex[pos[rng.below(pos.size())]]);
      for (std::size_t k = 0; k < neg.size(); ++k) sample.push_back(ex[neg[rng.below(neg.size())]]);
    } else {
      for (std::size_t k = 0; k < ex.size(); ++k) sample.push_back(ex[rng.below(ex.size())]);
    }
    try {
      draws[b] = fn(sample);
    } catch (const DegenerateError&) {
    }
  });
  std::vector<double> values;
  for (const auto& d : draws) {
    if (d) values.push_back(*d);
  }
  if (values.empty()) throw Error("degenerate", "every bootstrap resample of " + name + " was degenerate");
  std::sort(values.begin(), values.end());
  est.ci_lo = percentile(values, options.lo_percentile);
  est.ci_hi = percentile(values, options.hi_percentile);
  est.n_boot_used = values.size();
  return est;
}

std::vector<std::pair<std::string, MetricFn>> metric_suite(bool alternative_rule) {
  std::vector<std::pair<std::string, MetricFn>> suite = {
      {"auroc", [](Examples e) { return auroc(e); }},
      {"auprc", [](Examples e) { return auprc(e); }},
      {"tpr_at_1pct_fpr", [](Examples e) { return tpr_at_fpr(e, 0.01); }},
      {"fpr_at_95pct_tpr", [](Examples e) { return fpr_at_tpr(e, 0.95); }},
      {"brier", [](Examples e) { return brier(e); }},
      {"ece", [](Examples e) { return ece(e, 15); }},
  };
  if (alternative_rule) {
    suite.push_back({"tpr_at_1pct_fpr_constrained",
                     [](Examples e) { return tpr_at_fpr(e, 0.01, OperatingRule::kConstrained); }});
    suite.push_back({"fpr_at_95pct_tpr_constrained",
                     [](Examples e) { return fpr_at_tpr(e, 0.95, OperatingRule::kConstrained); }});
  }
  return suite;
}

std::vector<MetricEstimate> evaluate_suite(Examples ex, const BootstrapOptions& options,
                                           bool alternative_rule) {
  validate(ex);
  std::vector<MetricEstimate> out;
  for (const auto& [name, fn] : metric_suite(alternative_rule)) {
    out.push_back(bootstrap_ci(ex, name, fn, options));
  }
  return out;
}

const MetricEstimate& find(const std::vector<MetricEstimate>& estimates, const std::string& name) {
  for (const auto& e : estimates) {
    if (e.name == name) return e;
  }
  throw Error("missing", "no metric named '" + name + "'");
}

// ---------------------------------------------------------------------------

namespace {

SubgroupResult evaluate_group(const std::string& family, const std::string& key,
                              std::vector<ScoredExample> members, std::size_t support,
                              std::size_t min_support, const BootstrapOptions& options) {
  SubgroupResult r;
  r.family = family;
  r.key = key;
  r.support = support;
  for (const auto& m : members) (m.label == 1 ? r.n_pos : r.n_neg) += 1;
  if (support < min_support) {
    r.note = "insufficient support";
  } else if (r.n_pos == 0 || r.n_neg == 0) {
    r.note = "no label variability";
  } else {
    r.sufficient = true;
    r.metrics.push_back(bootstrap_ci(members, "auroc", [](Examples e) { return auroc(e); }, options));
    r.metrics.push_back(bootstrap_ci(members, "auprc", [](Examples e) { return auprc(e); }, options));
  }
  return r;
}

}  // namespace

std::vector<SubgroupResult> subgroup_report(Examples ex,
                                            const std::map<std::string, std::string>& groups,
                                            const std::string& family, std::size_t min_support,
                                            const BootstrapOptions& options) {
  std::map<std::string, std::vector<ScoredExample>> by_key;
  for (const auto& e : ex) {
    const auto it = groups.find(e.accession);
    if (it != groups.end()) by_key[it->second].push_back(e);
  }
  std::vector<SubgroupResult> out;
  for (auto& [key, members] : by_key) {
    const std::size_t support = members.size();
    out.push_back(evaluate_group(family, key, std::move(members), support, min_support, options));
  }
  return out;
}

std::map<std::string, std::string> length_groups(const std::map<std::string, std::size_t>& lengths,
                                                 std::size_t bins) {
  std::vector<double> values;
  for (const auto& [acc, len] : lengths) values.push_back(static_cast<double>(len));
  const auto edges = corpus::quantile_edges(values, bins);
  std::map<std::string, std::string> out;
  for (const auto& [acc, len] : lengths) {
    const auto b = corpus::bin_of(edges, static_cast<double>(len));
    char key[96];
    std::snprintf(key, sizeof key, "Q%zu[%g,%g]", *b + 1, edges[*b], edges[*b + 1]);
    out[acc] = key;
  }
  return out;
}

std::vector<SubgroupResult> positive_cluster_report(
    Examples ex, const std::map<std::string, std::int64_t>& cluster_of, std::size_t min_support,
    const BootstrapOptions& options) {
  std::vector<ScoredExample> negatives;
  std::map<std::int64_t, std::vector<ScoredExample>> positives;
  for (const auto& e : ex) {
    if (e.label == 0) {
      negatives.push_back(e);
    } else if (const auto it = cluster_of.find(e.accession); it != cluster_of.end()) {
      positives[it->second].push_back(e);
    }
  }
  std::vector<SubgroupResult> out;
  for (auto& [id, members] : positives) {
    const std::size_t support = members.size();
    members.insert(members.end(), negatives.begin(), negatives.end());
    out.push_back(evaluate_group("positive_cluster", std::to_string(id), std::move(members), support,
                                 min_support, options));
  }
  return out;
}

std::vector<SubgroupResult> superkingdom_report(
    Examples ex, const std::map<std::string, std::string>& kingdom_of, std::size_t min_support,
    const BootstrapOptions& options) {
  std::vector<ScoredExample> positives;
  std::map<std::string, std::vector<ScoredExample>> negatives;
  for (const auto& e : ex) {
    if (e.label == 1) {
      positives.push_back(e);
    } else if (const auto it = kingdom_of.find(e.accession); it != kingdom_of.end()) {
      negatives[it->second].push_back(e);
    }
  }
  std::vector<SubgroupResult> out;
  for (auto& [kingdom, members] : negatives) {
    const std::size_t support = members.size();
    members.insert(members.end(), positives.begin(), positives.end());
    out.push_back(evaluate_group("superkingdom", kingdom, std::move(members), support, min_support,
                                 options));
  }
  return out;
}

}  // namespace seqscreen::metrics
