#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "seqscreen/common.hpp"

namespace seqscreen::models {

/// Row-major design matrix; NaN marks a missing value.
using Matrix = std::vector<std::vector<double>>;
/// Class labels, 1 = hazard, 0 = benign.
using Labels = std::vector<int>;

enum class ModelKind { kLogReg, kLinSvm, kForest };
std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view token);

/// Column count of X; throws Error("shape") on ragged or empty input.
std::size_t check_shape(const Matrix& X, const Labels& y);
/// Throws Error("single_class") unless both labels are present.
void require_both_classes(const Labels& y);

// ---------------------------------------------------------------------------
// Preprocessing

/// Median imputation, then (x - mean) / std when `standardize` is set. A
/// column whose std is zero (relative to its mean) transforms to 0. Population
/// std (ddof = 0).
struct Preprocessor {
  bool standardize = true;
  std::vector<double> medians;
  std::vector<double> means;
  std::vector<double> stds;

  static Preprocessor fit(const Matrix& X, bool standardize = true);
  std::vector<double> transform(std::span<const double> x) const;
  Matrix transform(const Matrix& X) const;
};

// ---------------------------------------------------------------------------
// Linear models

struct LinearModel {
  ModelKind kind = ModelKind::kLogReg;
  double C = 0.5;
  std::vector<double> weights;
  double bias = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Logistic regression: J after every Newton step. SVM: negated dual
  /// objective at the end of every epoch (n SMO steps), non-increasing.
  std::vector<double> objective_trace;

  double score(std::span<const double> x) const;
};

struct LogRegOptions {
  double C = 0.5;
  double gradient_tol = 1e-6;
  std::size_t max_iterations = 10000;
};

/// J(w, b) = 1/2 |w|^2 + C sum_i log(1 + exp(-y_i (w.x_i + b))), y in {-1, +1}
/// derived from the 0/1 labels. Bias unregularized.
double logreg_objective(const Matrix& X, const Labels& y, std::span<const double> w, double b,
                        double C);
/// Gradient of logreg_objective; the last entry is dJ/db.
std::vector<double> logreg_gradient(const Matrix& X, const Labels& y, std::span<const double> w,
                                    double b, double C);

/// Damped Newton with Armijo backtracking; stops at |grad|_2 < gradient_tol.
/// Deterministic (no random state is consumed).
LinearModel fit_logreg(const Matrix& X, const Labels& y, const LogRegOptions& options = {});

struct SvmOptions {
  double C = 1.0;
  /// Stop when the maximal KKT violation m(a) - M(a) drops below this.
  double tolerance = 1e-4;
  std::size_t max_iterations = 2'000'000;
};

/// P(w, b) = 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b)).
double svm_primal_objective(const Matrix& X, const Labels& y, std::span<const double> w, double b,
                            double C);

/// SMO on the hinge-loss dual with second-order working-set selection
/// (Fan, Chen & Lin 2005) and a linear kernel; w is maintained explicitly.
LinearModel fit_linsvm(const Matrix& X, const Labels& y, const SvmOptions& options = {});

// ---------------------------------------------------------------------------
// Random forest

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;   // x[feature] <= threshold
  int right = -1;
  double value = 0.0;  // leaf: weighted fraction of class 1
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct ForestOptions {
  std::size_t n_trees = 400;
  std::uint64_t seed = kDefaultSeed;
  /// 0 selects max(1, floor(sqrt(d))).
  std::size_t max_features = 0;
  bool bootstrap = true;
  /// Per-tree weights n_boot / (2 n_boot_c) from the bootstrap counts.
  bool balanced_subsample = true;
  /// Grow until pure or fewer than this many distinct rows.
  std::size_t min_samples_split = 2;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_features = 0;
  std::size_t max_features = 0;
  /// Out-of-bag P(class 1) per training row; NaN when a row was in every
  /// bootstrap. Diagnostic only, not serialized.
  std::vector<double> oob_proba;

  double predict_proba(std::span<const double> x) const;
};

/// Tree t draws from Rng(derive_seed(seed, t)); trees are built in parallel
/// and results do not depend on the worker count.
ForestModel fit_forest(const Matrix& X, const Labels& y, const ForestOptions& options = {});

// ---------------------------------------------------------------------------
// Common interface

struct Hyperparameters {
  double logreg_C = 0.5;
  double svm_C = 1.0;
  std::size_t n_trees = 400;
};

/// A fitted base model together with the preprocessing learned on its
/// training rows. Linear models standardize; the forest only imputes.
struct TrainedModel {
  ModelKind kind = ModelKind::kLogReg;
  std::string feature_version;
  std::vector<std::string> feature_names;
  Preprocessor pre;
  std::variant<LinearModel, ForestModel> model;

  /// Margin w.x + b for linear models, P(class 1) for the forest. Input is an
  /// untransformed feature row.
  double raw_score(std::span<const double> x) const;
  /// Sigmoid of the margin for logreg, forest probability for rf; throws
  /// Error("unsupported") for the SVM, which has no probabilistic output
  /// until calibrated.
  double predict_proba(std::span<const double> x) const;
};

TrainedModel fit_model(ModelKind kind, const Matrix& X, const Labels& y, std::uint64_t seed,
                       const Hyperparameters& hyper = {});

/// Versioned JSON. Loading checks `format` and the feature-order version and
/// throws Error("version") on mismatch.
inline constexpr std::string_view kModelFormat = "seqscreen-model-v1";
nlohmann::json to_json(const TrainedModel& model);
TrainedModel trained_model_from_json(const nlohmann::json& j,
                                     std::string_view expected_feature_version);

}  // namespace seqscreen::models
