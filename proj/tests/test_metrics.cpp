#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "seqscreen/metrics.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

using namespace seqscreen;
using namespace seqscreen::metrics;

namespace {

std::vector<ScoredExample> make(const std::vector<int>& y, const std::vector<double>& p) {
  std::vector<ScoredExample> ex;
  for (std::size_t i = 0; i < y.size(); ++i) ex.push_back({"A" + std::to_string(i), y[i], p[i]});
  return ex;
}

// Random labelled scores; probabilities quantized to `levels` values so ties occur.
std::vector<ScoredExample> random_set(Rng& rng, std::size_t n, int levels, double signal) {
  std::vector<int> y(n);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform() < 0.4;
    if (i == 0) y[i] = 1;
    if (i == 1) y[i] = 0;
    double v = std::clamp(rng.uniform() * (1 - signal) + (y[i] ? signal : 0.0), 0.0, 1.0);
    if (levels > 0) v = std::round(v * levels) / levels;
    p[i] = v;
  }
  return make(y, p);
}

std::vector<int> labels_of(const std::vector<ScoredExample>& ex) {
  std::vector<int> y;
  for (const auto& e : ex) y.push_back(e.label);
  return y;
}

std::vector<double> probs_of(const std::vector<ScoredExample>& ex) {
  std::vector<double> p;
  for (const auto& e : ex) p.push_back(e.prob);
  return p;
}

}  // namespace

TEST_CASE("auroc: trivial cases and errors") {
  CHECK(auroc(make({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9})) == 1.0);
  CHECK(auroc(make({1, 1, 0, 0}, {0.1, 0.2, 0.8, 0.9})) == 0.0);
  CHECK(auroc(make({1, 0}, {0.5, 0.5})) == 0.5);
  CHECK_THROWS_AS(auroc(make({1, 1}, {0.1, 0.2})), DegenerateError);
}

TEST_CASE("metrics agree with brute-force oracles") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    const int levels = trial % 3 == 0 ? 0 : static_cast<int>(2 + rng.below(12));
    const auto ex = random_set(rng, n, levels, 0.3 * rng.uniform());
    const auto y = labels_of(ex);
    const auto p = probs_of(ex);
    CHECK(auroc(ex) == doctest::Approx(oracle::auroc_pairs(y, p)).epsilon(1e-12));
    CHECK(auprc(ex) == doctest::Approx(oracle::ap_thresholds(y, p)).epsilon(1e-12));
    CHECK(brier(ex) == doctest::Approx(oracle::brier(y, p)).epsilon(1e-12));
    CHECK(ece(ex) == doctest::Approx(oracle::ece(y, p, 15)).epsilon(1e-12));

    const auto roc = roc_curve(ex);
    const auto want = oracle::roc_points(y, p);
    REQUIRE(roc.size() == want.size());
    for (std::size_t k = 0; k < roc.size(); ++k) {
      CHECK(roc[k].fpr == doctest::Approx(want[k].fpr));
      CHECK(roc[k].tpr == doctest::Approx(want[k].tpr));
      if (k > 0) CHECK(roc[k].threshold < roc[k - 1].threshold);
    }
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
  }
}

TEST_CASE("auroc is invariant under increasing transforms") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto ex = random_set(rng, 60, 8, 0.2);
    const double a = auroc(ex);
    for (auto& e : ex) e.prob = std::pow(e.prob, 3.0) * 0.5 + 0.1;
    CHECK(auroc(ex) == a);
  }
}

TEST_CASE("auprc: trivial cases") {
  CHECK(auprc(make({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9})) == 1.0);
  CHECK(auprc(make({0, 1, 0, 1, 1}, {0.3, 0.3, 0.3, 0.3, 0.3})) == doctest::Approx(0.6));
  CHECK_THROWS_AS(auprc(make({0, 0}, {0.1, 0.2})), DegenerateError);
  // a hand walk: thresholds 0.9 (P=1, R=1/2), 0.8, 0.7 (P=2/3, R=1)
  CHECK(auprc(make({1, 0, 1, 0}, {0.9, 0.8, 0.7, 0.1})) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
}

TEST_CASE("operating points: trivial and hand-walked ROC") {
  const auto perfect = make({0, 0, 1, 1}, {0.1, 0.2, 0.8, 0.9});
  CHECK(tpr_at_fpr(perfect) == 1.0);
  CHECK(fpr_at_tpr(perfect) == 0.0);
  const auto anti = make({1, 1, 0, 0}, {0.1, 0.2, 0.8, 0.9});
  CHECK(tpr_at_fpr(anti) == 0.0);
  CHECK(fpr_at_tpr(anti) == 1.0);

  // Walk: (0,0) (0,1/2) (1/2,1/2) (1/2,1) (1,1)
  const auto four = make({1, 0, 1, 0}, {0.9, 0.8, 0.7, 0.1});
  const auto roc = roc_curve(four);
  REQUIRE(roc.size() == 5);
  CHECK(std::isinf(roc[0].threshold));
  CHECK(tpr_at_fpr(four, 0.01) == 0.5);
  CHECK(tpr_at_fpr(four, 0.6) == 1.0);
  CHECK(fpr_at_tpr(four, 0.95) == 0.5);
  CHECK(fpr_at_tpr(four, 0.4) == 0.0);

  // The literal rule picks up positives tied with the first negative; the
  // constrained rule stops before it.  Walk: (0,0) (0,1/3) (0,2/3) (1,1)
  const auto step = make({1, 1, 0, 1}, {0.9, 0.8, 0.7, 0.7});
  CHECK(tpr_at_fpr(step, 0.01) == 1.0);
  CHECK(tpr_at_fpr(step, 0.01, OperatingRule::kConstrained) == doctest::Approx(2.0 / 3.0));
  CHECK(fpr_at_tpr(step, 0.95, OperatingRule::kConstrained) == 1.0);
}

TEST_CASE("operating points are monotone in the target") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto ex = random_set(rng, 40 + rng.below(60), 10, 0.3);
    double prev_tpr = -1, prev_fpr = -1;
    for (double t = 0.0; t <= 1.0; t += 0.01) {
      const double tpr = tpr_at_fpr(ex, t);
      const double fpr = fpr_at_tpr(ex, t);
      CHECK(tpr >= prev_tpr);
      CHECK(fpr >= prev_fpr);
      prev_tpr = tpr;
      prev_fpr = fpr;
    }
  }
}

TEST_CASE("brier and ece examples") {
  CHECK(brier(make({0, 1}, {0.0, 1.0})) == 0.0);
  CHECK(brier(make({0, 1, 1}, {0.5, 0.5, 0.5})) == 0.25);
  // (0.1)^2 + (0.3)^2 + (0.6)^2 + (0.2)^2 + (0.5)^2 = 0.75, over 5
  CHECK(brier(make({0, 1, 0, 1, 0}, {0.1, 0.7, 0.6, 0.8, 0.5})) == doctest::Approx(0.15).epsilon(1e-12));

  ReliabilityBins bins;
  CHECK(ece(make({0, 1, 0, 1}, {1.0, 1.0, 1.0, 1.0}), 15, &bins) == 0.5);
  CHECK(bins.bins.size() == 15);
  CHECK(bins.bins[14].count == 4);
  // each bin's mean probability equals its positive fraction
  const auto matched = make({0, 1, 0, 1, 1, 1, 1, 0}, {0.5, 0.5, 0.5, 0.5, 0.75, 0.75, 0.75, 0.75});
  CHECK(ece(matched) == 0.0);
  CHECK(ece(make({0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5})) == 0.0);

  Rng rng(4);
  const auto big = random_set(rng, 200, 0, 0.2);
  const auto rb = reliability(big);
  std::size_t total = 0;
  for (std::size_t b = 0; b < rb.bins.size(); ++b) {
    total += rb.bins[b].count;
    CHECK(rb.bins[b].edge_lo == doctest::Approx(b / 15.0));
    CHECK(rb.bins[b].edge_hi == doctest::Approx((b + 1) / 15.0));
  }
  CHECK(total == 200);
}

TEST_CASE("validate rejects out-of-domain inputs") {
  CHECK_NOTHROW(validate(make({0, 1}, {0.0, 1.0})));
  CHECK_THROWS_AS(validate(make({0, 2}, {0.0, 1.0})), Error);
  CHECK_THROWS_AS(validate(make({0, 1}, {0.0, 1.5})), Error);
  CHECK_THROWS_AS(validate(make({0, 1}, {0.0, std::nan("")})), Error);
}

TEST_CASE("percentile uses linear interpolation") {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  CHECK(percentile(v, 0) == 1);
  CHECK(percentile(v, 100) == 5);
  CHECK(percentile(v, 50) == 3);
  CHECK(percentile(v, 2.5) == doctest::Approx(1.1));
  CHECK(percentile(v, 97.5) == doctest::Approx(4.9));
}

TEST_CASE("bootstrap: constant metric, determinism and thread independence") {
  Rng rng(10);
  const auto ex = random_set(rng, 150, 0, 0.3);
  const auto c = bootstrap_ci(ex, "const", [](Examples) { return 0.7; });
  CHECK(c.point == 0.7);
  CHECK(c.ci_lo == 0.7);
  CHECK(c.ci_hi == 0.7);
  CHECK(c.n_boot_used == 200);

  const MetricFn fn = [](Examples e) { return auroc(e); };
  const auto a = bootstrap_ci(ex, "auroc", fn);
  const auto b = bootstrap_ci(ex, "auroc", fn);
  CHECK(a.ci_lo == b.ci_lo);
  CHECK(a.ci_hi == b.ci_hi);
  CHECK(a.ci_lo <= a.ci_hi);
  parallel::set_max_threads(4);
  const auto t4 = bootstrap_ci(ex, "auroc", fn);
  parallel::set_max_threads(1);
  CHECK(t4.ci_lo == a.ci_lo);
  CHECK(t4.ci_hi == a.ci_hi);

  BootstrapOptions other;
  other.seed = 99;
  const auto d = bootstrap_ci(ex, "auroc", fn, other);
  CHECK((d.ci_lo != a.ci_lo || d.ci_hi != a.ci_hi));

  BootstrapOptions range;
  range.lo_percentile = 0;
  range.hi_percentile = 100;
  const auto r = bootstrap_ci(ex, "auroc", fn, range);
  CHECK(r.point >= r.ci_lo);
  CHECK(r.point <= r.ci_hi);
}

TEST_CASE("bootstrap: stratified draws keep class counts, iid skips degenerate draws") {
  const auto ex = make({1, 0, 0, 0, 0, 0, 0, 0, 0, 0}, {0.9, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.1, 0.2, 0.3});
  const MetricFn count_pos = [](Examples e) {
    double s = 0;
    for (const auto& x : e) s += x.label;
    return s;
  };
  const auto strat = bootstrap_ci(ex, "n_pos", count_pos);
  CHECK(strat.ci_lo == 1.0);
  CHECK(strat.ci_hi == 1.0);

  BootstrapOptions iid;
  iid.mode = BootstrapMode::kIid;
  const auto r = bootstrap_ci(ex, "auroc", [](Examples e) { return auroc(e); }, iid);
  // P(no positive in 10 draws) = 0.9^10, about 35% of resamples are skipped
  CHECK(r.n_boot_used < 200);
  CHECK(r.n_boot_used > 80);

  const auto none = make({1, 1}, {0.2, 0.3});
  CHECK_THROWS_AS(bootstrap_ci(none, "auroc", [](Examples e) { return auroc(e); }), Error);
}

TEST_CASE("bootstrap: AUROC CI narrows with sample size") {
  auto sample = [](std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    std::vector<ScoredExample> ex;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = i % 2;
      const double s = rng.normal() + (y ? 1.0 : 0.0);
      ex.push_back({"S" + std::to_string(i), y, 1.0 / (1.0 + std::exp(-s))});
    }
    return ex;
  };
  // average widths over a few repetitions so a single unlucky draw does not decide
  double w_small = 0, w_large = 0;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const auto s = bootstrap_ci(sample(100 + rep, 200), "auroc", [](Examples e) { return auroc(e); });
    const auto l = bootstrap_ci(sample(200 + rep, 2000), "auroc", [](Examples e) { return auroc(e); });
    w_small += s.ci_hi - s.ci_lo;
    w_large += l.ci_hi - l.ci_lo;
  }
  const double ratio = w_small / w_large;
  MESSAGE("width ratio " << ratio);
  CHECK(ratio >= 2.0);
  CHECK(ratio <= 5.0);
}

TEST_CASE("suite names and lookup") {
  Rng rng(12);
  const auto ex = random_set(rng, 120, 0, 0.3);
  BootstrapOptions o;
  o.n_boot = 20;
  const auto est = evaluate_suite(ex, o, true);
  std::vector<std::string> names;
  for (const auto& e : est) names.push_back(e.name);
  CHECK(names == std::vector<std::string>{"auroc", "auprc", "tpr_at_1pct_fpr", "fpr_at_95pct_tpr", "brier",
                                          "ece", "tpr_at_1pct_fpr_constrained",
                                          "fpr_at_95pct_tpr_constrained"});
  CHECK(find(est, "auroc").point == auroc(ex));
  CHECK_THROWS_AS(find(est, "nope"), Error);
  CHECK(evaluate_suite(ex, o).size() == 6);
}

TEST_CASE("subgroups: support threshold and label variability") {
  std::vector<ScoredExample> ex;
  std::map<std::string, std::string> groups;
  Rng rng(13);
  auto add = [&](const std::string& g, std::size_t n, bool both) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::string acc = g + std::to_string(i);
      const int y = both ? static_cast<int>(i % 2) : 1;
      ex.push_back({acc, y, rng.uniform()});
      groups[acc] = g;
    }
  };
  add("fourteen", 14, true);
  add("fifteen", 15, true);
  add("onelabel", 40, false);
  const auto report = subgroup_report(ex, groups, "custom");
  REQUIRE(report.size() == 3);
  for (const auto& r : report) {
    CAPTURE(r.key);
    if (r.key == "fourteen") {
      CHECK_FALSE(r.sufficient);
      CHECK(r.note == "insufficient support");
    } else if (r.key == "fifteen") {
      CHECK(r.sufficient);
      CHECK(r.metrics.size() == 2);
    } else {
      CHECK_FALSE(r.sufficient);
      CHECK(r.note == "no label variability");
    }
  }
}

TEST_CASE("subgroups: length bins and family difficulty ordering") {
  std::map<std::string, std::size_t> lengths;
  for (std::size_t i = 0; i < 100; ++i) lengths["L" + std::to_string(i)] = 50 + i;
  const auto g = length_groups(lengths);
  std::map<std::string, int> per_key;
  for (const auto& [acc, key] : g) ++per_key[key];
  CHECK(per_key.size() == 4);
  for (const auto& [key, n] : per_key) {
    CHECK(key[0] == 'Q');
    CHECK(n >= 24);
    CHECK(n <= 26);
  }

  // positives from an easy cluster score high, those from a hard one overlap negatives
  Rng rng(14);
  std::vector<ScoredExample> ex;
  std::map<std::string, std::int64_t> cluster_of;
  std::map<std::string, std::string> kingdom_of;
  for (int i = 0; i < 60; ++i) {
    const std::string e = "E" + std::to_string(i), h = "H" + std::to_string(i), n = "N" + std::to_string(i);
    ex.push_back({e, 1, 0.6 + 0.4 * rng.uniform()});
    ex.push_back({h, 1, 0.2 + 0.5 * rng.uniform()});
    ex.push_back({n, 0, 0.5 * rng.uniform()});
    cluster_of[e] = 1;
    cluster_of[h] = 2;
    kingdom_of[n] = i < 30 ? "Bacteria" : "Eukaryota";
  }
  ex.push_back({"Nsmall", 0, 0.1});
  kingdom_of["Nsmall"] = "Archaea";
  const auto pc = positive_cluster_report(ex, cluster_of);
  REQUIRE(pc.size() == 2);
  CHECK(pc[0].key == "1");
  CHECK(pc[0].support == 60);
  CHECK(pc[0].n_neg == 61);
  CHECK(find(pc[0].metrics, "auroc").point > find(pc[1].metrics, "auroc").point);

  const auto sk = superkingdom_report(ex, kingdom_of);
  REQUIRE(sk.size() == 3);
  CHECK(sk[0].key == "Archaea");
  CHECK_FALSE(sk[0].sufficient);
  CHECK(sk[1].support == 30);
  CHECK(sk[1].n_pos == 120);
  CHECK(sk[1].sufficient);
}
