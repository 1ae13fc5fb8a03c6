#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "seqscreen/models.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

using namespace seqscreen;
using namespace seqscreen::models;

namespace {

struct Toy {
  Matrix X;
  Labels y;
};

// Two Gaussian blobs in d dimensions, centers +-shift on every axis.
Toy blobs(std::uint64_t seed, std::size_t n, std::size_t d, double shift) {
  Rng rng(seed);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 ? 1 : 0;
    std::vector<double> row(d);
    for (auto& v : row) v = rng.normal() + (label ? shift : -shift);
    t.X.push_back(row);
    t.y.push_back(label);
  }
  return t;
}

double accuracy(const Matrix& X, const Labels& y, const std::function<double(const std::vector<double>&)>& score,
                double cut) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < X.size(); ++i) ok += (score(X[i]) > cut) == (y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(X.size());
}

}  // namespace

TEST_CASE("preprocessor: imputation and zero-variance columns") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix X = {{1, 5}, {2, 5}, {3, 5}};
  const auto p = Preprocessor::fit(X);
  CHECK(p.medians[0] == 2.0);
  const auto z = p.transform(std::vector<double>{nan, 5});
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
  const auto Z = p.transform(X);
  for (const auto& r : Z) CHECK(r[1] == 0.0);

  Rng rng(1);
  Matrix R(200, std::vector<double>(4));
  for (auto& r : R) {
    for (auto& v : r) v = rng.normal() * 7 + 3;
    if (rng.uniform() < 0.1) r[2] = nan;
  }
  // constant column with a value that does not sum exactly
  for (auto& r : R) r[3] = 0.1;
  const auto q = Preprocessor::fit(R);
  const auto T = q.transform(R);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, s = 0;
    for (const auto& r : T) m += r[j];
    m /= static_cast<double>(T.size());
    for (const auto& r : T) s += (r[j] - m) * (r[j] - m);
    s = std::sqrt(s / static_cast<double>(T.size()));
    CHECK(std::abs(m) < 1e-9);
    CHECK(std::abs(s - 1) < 1e-9);
  }
  for (const auto& r : T) CHECK(r[3] == 0.0);
  // median with an even count averages the middle pair
  CHECK(Preprocessor::fit({{1}, {2}, {3}, {10}}).medians[0] == 2.5);
}

TEST_CASE("logreg: separable toy, single class, zero model") {
  Matrix X = {{0, 0}, {0, 1}, {1, 0}, {3, 3}, {3, 4}, {4, 3}};
  Labels y = {0, 0, 0, 1, 1, 1};
  const auto m = fit_logreg(X, y);
  CHECK(m.converged);
  CHECK(accuracy(X, y, [&](const std::vector<double>& x) { return m.score(x); }, 0.0) == 1.0);
  CHECK_THROWS_AS(fit_logreg(X, Labels(6, 1)), Error);
  TrainedModel zero;
  zero.kind = ModelKind::kLogReg;
  zero.pre.standardize = false;
  zero.pre.medians = {0, 0};
  zero.pre.means = {0, 0};
  zero.pre.stds = {1, 1};
  LinearModel lin;
  lin.weights = {0, 0};
  zero.model = lin;
  CHECK(zero.predict_proba(std::vector<double>{1.0, 2.0}) == 0.5);
}

TEST_CASE("logreg gradient matches central finite differences") {
  Rng rng(2);
  const auto t = blobs(3, 60, 5, 0.5);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> w(5);
    for (auto& v : w) v = rng.normal();
    const double b = rng.normal();
    const auto g = logreg_gradient(t.X, t.y, w, b, 0.5);
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& th) {
          return logreg_objective(t.X, t.y, std::span<const double>(th.data(), 5), th[5], 0.5);
        },
        [&] { auto th = w; th.push_back(b); return th; }(), 1e-5);
    worst = std::max(worst, oracle::max_relative_error(g, fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("logreg: duplicated rows with C halved give the same optimum") {
  const auto t = blobs(4, 80, 3, 0.4);
  Toy d2 = t;
  d2.X.insert(d2.X.end(), t.X.begin(), t.X.end());
  d2.y.insert(d2.y.end(), t.y.begin(), t.y.end());
  LogRegOptions a, b;
  a.C = 0.5;
  b.C = 0.25;
  const auto m1 = fit_logreg(t.X, t.y, a);
  const auto m2 = fit_logreg(d2.X, d2.y, b);
  for (std::size_t j = 0; j < m1.weights.size(); ++j) CHECK(std::abs(m1.weights[j] - m2.weights[j]) < 1e-6);
  CHECK(std::abs(m1.bias - m2.bias) < 1e-6);
}

TEST_CASE("logreg and svm optima beat 100 random perturbations") {
  const auto t = blobs(5, 100, 4, 0.3);
  const auto lr = fit_logreg(t.X, t.y);
  const auto sv = fit_linsvm(t.X, t.y);
  const double jl = logreg_objective(t.X, t.y, lr.weights, lr.bias, 0.5);
  const double js = svm_primal_objective(t.X, t.y, sv.weights, sv.bias, 1.0);
  Rng rng(6);
  for (int k = 0; k < 100; ++k) {
    auto w1 = lr.weights, w2 = sv.weights;
    double dir[2][5];
    double n1 = 0, n2 = 0;
    for (int j = 0; j < 5; ++j) {
      dir[0][j] = rng.normal();
      dir[1][j] = rng.normal();
      n1 += dir[0][j] * dir[0][j];
      n2 += dir[1][j] * dir[1][j];
    }
    for (int j = 0; j < 4; ++j) {
      w1[j] += 0.1 * dir[0][j] / std::sqrt(n1);
      w2[j] += 0.1 * dir[1][j] / std::sqrt(n2);
    }
    CHECK(jl <= logreg_objective(t.X, t.y, w1, lr.bias + 0.1 * dir[0][4] / std::sqrt(n1), 0.5));
    // the SMO stop tolerance leaves the SVM optimum accurate to ~1e-4 relative
    CHECK(js <= svm_primal_objective(t.X, t.y, w2, sv.bias + 0.1 * dir[1][4] / std::sqrt(n2), 1.0) + 1e-6 * js);
  }
}

TEST_CASE("logreg predictions are invariant to feature scaling through the preprocessor") {
  auto t = blobs(7, 120, 3, 0.6);
  auto scaled = t.X;
  for (auto& r : scaled) r[1] *= 1000.0;
  const auto a = fit_model(ModelKind::kLogReg, t.X, t.y, 1337);
  const auto b = fit_model(ModelKind::kLogReg, scaled, t.y, 1337);
  for (std::size_t i = 0; i < t.X.size(); ++i) {
    CHECK(std::abs(a.predict_proba(t.X[i]) - b.predict_proba(scaled[i])) < 1e-6);
  }
}

TEST_CASE("svm: separable margins, objective below zero model, monotone trace") {
  Matrix X = {{0, 0}, {0, 1}, {1, 0}, {3, 3}, {3, 4}, {4, 3}};
  Labels y = {0, 0, 0, 1, 1, 1};
  SvmOptions o;
  o.C = 10.0;
  const auto m = fit_linsvm(X, y, o);
  CHECK(m.converged);
  for (std::size_t i = 0; i < X.size(); ++i) {
    CHECK((y[i] ? 1.0 : -1.0) * m.score(X[i]) >= 1.0 - 1e-3);
  }
  const auto t = blobs(8, 300, 5, 0.3);
  const auto s = fit_linsvm(t.X, t.y);
  CHECK(svm_primal_objective(t.X, t.y, s.weights, s.bias, 1.0) <=
        svm_primal_objective(t.X, t.y, std::vector<double>(5, 0.0), 0.0, 1.0));
  REQUIRE(s.objective_trace.size() >= 2);
  for (std::size_t k = 1; k < s.objective_trace.size(); ++k) {
    CHECK(s.objective_trace[k] <= s.objective_trace[k - 1] + 1e-12);
  }
  CHECK_THROWS(fit_linsvm(t.X, Labels(t.y.size(), 0)));
}

TEST_CASE("svm matches a brute-force grid on tiny 1-d instances") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng.below(4);
    Matrix X;
    Labels y;
    for (std::size_t i = 0; i < n; ++i) {
      X.push_back({rng.uniform(-2, 2)});
      y.push_back(i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2)));
    }
    const auto m = fit_linsvm(X, y);
    const double found = svm_primal_objective(X, y, m.weights, m.bias, 1.0);
    const double grid = oracle::svm_grid_minimum(X, y, 1.0);
    CHECK(found <= grid + 1e-3);
    CHECK(found >= grid - 1e-3);  // grid is fine enough to be within tolerance
  }
}

TEST_CASE("forest: OOB accuracy on a learnable target, pure leaves, determinism") {
  Rng rng(10);
  Matrix X;
  Labels y;
  for (int i = 0; i < 400; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = rng.normal();
    X.push_back(row);
    y.push_back(row[2] > 0.3 ? 1 : 0);
  }
  ForestOptions o;
  o.n_trees = 100;
  const auto f = fit_forest(X, y, o);
  std::size_t ok = 0, seen = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (std::isnan(f.oob_proba[i])) continue;
    ++seen;
    ok += (f.oob_proba[i] > 0.5) == (y[i] == 1);
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(seen) > 0.95);
  for (const auto& t : f.trees) {
    for (const auto& nd : t.nodes) {
      if (nd.feature < 0) CHECK((nd.value == 0.0 || nd.value == 1.0));
    }
  }
  for (const auto& row : X) {
    const double p = f.predict_proba(row);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
  ForestOptions one;
  one.n_trees = 1;
  const auto a = fit_forest(X, y, one);
  const auto b = fit_forest(X, y, one);
  for (const auto& row : X) CHECK(a.predict_proba(row) == b.predict_proba(row));

  // reversing tree order leaves probabilities unchanged up to summation order
  auto rev = f;
  std::reverse(rev.trees.begin(), rev.trees.end());
  for (const auto& row : X) CHECK(std::abs(rev.predict_proba(row) - f.predict_proba(row)) < 1e-12);
}

TEST_CASE("forest: identical trees give the single-tree probability; thread count irrelevant") {
  const auto t = blobs(11, 200, 4, 0.3);
  ForestOptions o;
  o.n_trees = 1;
  auto single = fit_forest(t.X, t.y, o);
  auto many = single;
  for (int k = 0; k < 9; ++k) many.trees.push_back(single.trees[0]);
  for (const auto& r : t.X) CHECK(many.predict_proba(r) == doctest::Approx(single.predict_proba(r)).epsilon(1e-14));

  ForestOptions o2;
  o2.n_trees = 40;
  parallel::set_max_threads(1);
  const auto a = fit_forest(t.X, t.y, o2);
  parallel::set_max_threads(8);
  const auto b = fit_forest(t.X, t.y, o2);
  parallel::set_max_threads(1);
  for (const auto& r : t.X) CHECK(a.predict_proba(r) == b.predict_proba(r));
  CHECK(a.max_features == 2);
}

TEST_CASE("fits are bitwise reproducible") {
  const auto t = blobs(12, 150, 6, 0.3);
  for (auto kind : {ModelKind::kLogReg, ModelKind::kLinSvm, ModelKind::kForest}) {
    Hyperparameters h;
    h.n_trees = 20;
    const auto a = fit_model(kind, t.X, t.y, 1337, h);
    const auto b = fit_model(kind, t.X, t.y, 1337, h);
    CHECK(to_json(a).dump() == to_json(b).dump());
  }
}

TEST_CASE("model JSON round trip refuses a mismatched feature version") {
  const auto t = blobs(13, 80, 3, 0.5);
  Hyperparameters h;
  h.n_trees = 5;
  for (auto kind : {ModelKind::kLogReg, ModelKind::kLinSvm, ModelKind::kForest}) {
    auto m = fit_model(kind, t.X, t.y, 1337, h);
    m.feature_version = "features-v1";
    m.feature_names = {"a", "b", "c"};
    const auto j = nlohmann::json::parse(to_json(m).dump());
    const auto back = trained_model_from_json(j, "features-v1");
    for (const auto& r : t.X) CHECK(back.raw_score(r) == m.raw_score(r));
    CHECK_THROWS_AS(trained_model_from_json(j, "features-v2"), Error);
  }
  CHECK_THROWS(fit_model(ModelKind::kLinSvm, t.X, t.y, 1).predict_proba(t.X[0]));
}
