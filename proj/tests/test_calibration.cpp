#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "seqscreen/calibration.hpp"
#include "seqscreen/metrics.hpp"
#include "seqscreen/rng.hpp"

using namespace seqscreen;
using namespace seqscreen::calibration;

namespace {

struct Toy {
  models::Matrix X;
  models::Labels y;
};

Toy blobs(std::uint64_t seed, std::size_t n, std::size_t d, double shift) {
  Rng rng(seed);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = rng.uniform() < 0.5 ? 1 : 0;
    std::vector<double> row(d);
    for (auto& v : row) v = rng.normal() + (label ? shift : -shift);
    t.X.push_back(row);
    t.y.push_back(label);
  }
  return t;
}

CalibrationOptions fast_options() {
  CalibrationOptions o;
  o.hyper.n_trees = 40;
  return o;
}

double test_ece(const std::vector<double>& p, const models::Labels& y) {
  std::vector<metrics::ScoredExample> ex;
  for (std::size_t i = 0; i < p.size(); ++i) ex.push_back({"x" + std::to_string(i), y[i], p[i]});
  return metrics::ece(ex);
}

}  // namespace

TEST_CASE("isotonic: worked examples") {
  const std::vector<double> s = {1, 2, 3, 4};
  SUBCASE("already monotone") {
    const std::vector<int> y = {0, 0, 1, 1};
    const auto m = fit_isotonic(s, y);
    CHECK(m(1) == 0.0);
    CHECK(m(2) == 0.0);
    CHECK(m(3) == 1.0);
    CHECK(m(2.5) == doctest::Approx(0.5));
  }
  SUBCASE("one violation pooled") {
    const std::vector<int> y = {0, 1, 0, 1};
    const auto m = fit_isotonic(s, y);
    CHECK(m(1) == 0.0);
    CHECK(m(2) == doctest::Approx(0.5));
    CHECK(m(3) == doctest::Approx(0.5));
    CHECK(m(4) == 1.0);
  }
  SUBCASE("fully reversed pools everything") {
    const std::vector<int> y = {1, 1, 0, 0};
    const auto m = fit_isotonic(s, y);
    for (double x : s) CHECK(m(x) == doctest::Approx(0.5));
  }
  SUBCASE("clamping outside the range") {
    const std::vector<int> y = {0, 0, 1, 1};
    const auto m = fit_isotonic(s, y);
    CHECK(m(-100) == 0.0);
    CHECK(m(100) == 1.0);
  }
  SUBCASE("ties pooled before fitting") {
    const std::vector<double> st = {1, 1, 2, 2};
    const std::vector<int> y = {0, 1, 1, 1};
    const auto m = fit_isotonic(st, y);
    CHECK(m(1) == doctest::Approx(0.5));
    CHECK(m(2) == 1.0);
  }
}

TEST_CASE("isotonic: matches exhaustive partition search") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(i) + 0.25 * rng.uniform();
      y[i] = rng.uniform() < 0.5;
    }
    y[0] = 0;
    y[n - 1] = 1;
    if (rng.uniform() < 0.5) std::swap(y[0], y[n - 1]);
    bool both = false;
    for (int v : y) both |= v != y[0];
    if (!both) continue;
    std::vector<double> yd(y.begin(), y.end());
    const auto want = oracle::isotonic_enumerate(yd);
    const auto m = fit_isotonic(s, y);
    for (std::size_t i = 0; i < n; ++i) CHECK(m(s[i]) == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("isotonic: errors") {
  const std::vector<double> s = {1, 2, 3};
  CHECK_THROWS_AS(fit_isotonic(s, std::vector<int>{1, 1, 1}), Error);
  CHECK_THROWS_AS(fit_isotonic(std::vector<double>{1}, std::vector<int>{1}), Error);
  CHECK_THROWS_AS(fit_isotonic(s, std::vector<int>{0, 1}), Error);
}

TEST_CASE("platt: symmetric data gives p(0) = 0.5 and slope sign") {
  std::vector<double> s;
  std::vector<int> y;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() + 1.0;
    s.push_back(v);
    y.push_back(1);
    s.push_back(-v);
    y.push_back(0);
  }
  PlattDiagnostics d;
  const auto m = fit_platt(s, y, {}, &d);
  CHECK(d.converged);
  CHECK(m(0.0) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(m.A < 0);
  CHECK(m(2.0) > 0.5);
}

TEST_CASE("platt: gradient agrees with finite differences and vanishes at the fit") {
  Rng rng(6);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 120; ++i) {
    const int l = rng.uniform() < 0.4;
    s.push_back(rng.normal() * 2 + (l ? 1.5 : -0.5));
    y.push_back(l);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const double A = rng.normal(), B = rng.normal();
    const auto f = [&](const std::vector<double>& p) { return platt_objective(s, y, p[0], p[1]); };
    const auto fd = oracle::fd_gradient(f, {A, B}, 1e-6);
    const auto g = platt_gradient(s, y, A, B);
    CHECK(oracle::max_relative_error({g[0], g[1]}, fd) < 1e-5);
  }
  PlattDiagnostics d;
  const auto m = fit_platt(s, y, {}, &d);
  const auto g = platt_gradient(s, y, m.A, m.B);
  CHECK(std::hypot(g[0], g[1]) < 1e-6);
  // no worse than the best constant predictor, the mean smoothed target
  double np = 0;
  for (int l : y) np += l;
  const double nn = static_cast<double>(y.size()) - np;
  const double tbar = (np * (np + 1) / (np + 2) + nn / (nn + 2)) / static_cast<double>(y.size());
  CHECK(platt_objective(s, y, m.A, m.B) <= platt_objective(s, y, 0.0, std::log((1 - tbar) / tbar)) + 1e-9);
}

TEST_CASE("platt: degenerate inputs") {
  const std::vector<double> s = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(fit_platt(s, std::vector<int>{0, 0, 0}), Error);
  const std::vector<double> bad = {0.0, std::nan(""), 1.0};
  try {
    (void)fit_platt(bad, std::vector<int>{0, 1, 1});
    FAIL("expected non_finite");
  } catch (const Error& e) {
    CHECK(e.code() == "non_finite");
  }
  // perfectly separated scores still terminate with a finite, steep map
  const auto m = fit_platt(std::vector<double>{-2, -1, 1, 2}, std::vector<int>{0, 0, 1, 1});
  CHECK(std::isfinite(m.A));
  CHECK(m(2) > m(-2));
}

TEST_CASE("stratified folds: balanced and deterministic") {
  models::Labels y;
  for (int i = 0; i < 103; ++i) y.push_back(i % 3 == 0);
  const auto f = stratified_folds(y, 5, 9, 0);
  CHECK(f == stratified_folds(y, 5, 9, 0));
  CHECK(f != stratified_folds(y, 5, 9, 1));
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<int> count(5, 0);
    int total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) {
        ++count[f[i]];
        ++total;
      }
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
    CHECK(*lo == total / 5);
  }
}

TEST_CASE("calibrated model: basic properties for every kind") {
  const auto train = blobs(21, 240, 4, 0.6);
  const auto test = blobs(22, 400, 4, 0.6);
  for (auto kind : {models::ModelKind::kLogReg, models::ModelKind::kLinSvm, models::ModelKind::kForest}) {
    CAPTURE(models::to_string(kind));
    const auto m = fit_calibrated(train.X, train.y, kind, 3, fast_options());
    REQUIRE(m.folds.size() == 5);
    std::vector<bool> seen(train.y.size(), false);
    for (const auto& f : m.folds) {
      for (auto i : f.held_out) {
        CHECK_FALSE(seen[i]);
        seen[i] = true;
      }
      CHECK(f.calibrator.map.index() == (policy_for(kind) == CalibratorKind::kIsotonic ? 0u : 1u));
    }
    for (bool s : seen) CHECK(s);

    std::vector<metrics::ScoredExample> ex;
    for (std::size_t i = 0; i < test.X.size(); ++i) {
      const double p = m.predict(test.X[i]);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      ex.push_back({"t" + std::to_string(i), test.y[i], p});
    }
    CHECK(metrics::auroc(ex) > 0.9);

    const auto again = fit_calibrated(train.X, train.y, kind, 3, fast_options());
    CHECK(to_json(again).dump() == to_json(m).dump());

    const auto loaded = calibrated_model_from_json(to_json(m), m.folds[0].base.feature_version);
    for (std::size_t i = 0; i < 20; ++i) CHECK(loaded.predict(test.X[i]) == m.predict(test.X[i]));
  }
}

TEST_CASE("calibrated model: fold redraw gives up with Error(folds)") {
  // two positives cannot populate five held-out folds
  models::Matrix X;
  models::Labels y;
  for (int i = 0; i < 20; ++i) {
    X.push_back({static_cast<double>(i)});
    y.push_back(i < 2);
  }
  try {
    (void)fit_calibrated(X, y, models::ModelKind::kLogReg, 1);
    FAIL("expected folds error");
  } catch (const Error& e) {
    CHECK(e.code() == "folds");
  }
  CHECK_THROWS_AS(fit_calibrated({{1.0}, {2.0}}, {0, 1}, models::ModelKind::kLogReg, 1), Error);
}

TEST_CASE("calibration lowers ECE of a miscalibrated score") {
  // The SVM margin pushed through a steep logistic is overconfident.
  const auto train = blobs(31, 600, 3, 0.4);
  const auto test = blobs(32, 3000, 3, 0.4);
  const auto m = fit_calibrated(train.X, train.y, models::ModelKind::kLinSvm, 4, fast_options());
  std::vector<double> raw, cal;
  for (const auto& x : test.X) {
    raw.push_back(1.0 / (1.0 + std::exp(-4.0 * m.folds[0].base.raw_score(x))));
    cal.push_back(m.predict(x));
  }
  const double before = test_ece(raw, test.y);
  const double after = test_ece(cal, test.y);
  MESSAGE("ECE before " << before << " after " << after);
  CHECK(after < before);
  CHECK(after < 0.05);
}
