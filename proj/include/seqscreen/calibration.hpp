#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"
#include "seqscreen/models.hpp"

namespace seqscreen::calibration {

/// Nondecreasing piecewise-linear map through (knot_x, knot_y), clamped to
/// the end knots outside [knot_x.front(), knot_x.back()].
struct IsotonicMap {
  std::vector<double> knot_x;
  std::vector<double> knot_y;
  double operator()(double score) const;
};

/// Pool-adjacent-violators fit minimizing sum (y_i - f(s_i))^2 over
/// nondecreasing f. Tied scores are pooled first. Needs >= 2 points and both
/// labels; throws Error("single_class") / Error("shape").
IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels);

/// p(s) = 1 / (1 + exp(A s + B)).
struct SigmoidMap {
  double A = 0.0;
  double B = 0.0;
  double operator()(double score) const;
};

struct PlattOptions {
  double gradient_tol = 1e-8;
  std::size_t max_iterations = 1000;
};

struct PlattDiagnostics {
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Cross-entropy against Platt's smoothed targets t+ = (N+ + 1)/(N+ + 2),
/// t- = 1/(N- + 2).
double platt_objective(std::span<const double> scores, std::span<const int> labels, double A,
                       double B);
std::array<double, 2> platt_gradient(std::span<const double> scores, std::span<const int> labels,
                                     double A, double B);

/// Newton with backtracking (Lin, Lin & Weng 2007) from A = 0,
/// B = log((N- + 1)/(N+ + 1)). Throws Error("non_finite") on NaN/inf scores.
SigmoidMap fit_platt(std::span<const double> scores, std::span<const int> labels,
                     const PlattOptions& options = {}, PlattDiagnostics* diagnostics = nullptr);

enum class CalibratorKind { kIsotonic, kSigmoid };
/// Isotonic for logreg and rf, sigmoid for the linear SVM.
CalibratorKind policy_for(models::ModelKind kind);

struct Calibrator {
  std::variant<IsotonicMap, SigmoidMap> map;
  double operator()(double score) const;
};

struct CalibratedFold {
  models::TrainedModel base;
  Calibrator calibrator;
  // Held-out diagnostics from fitting; not serialized.
  std::vector<std::size_t> held_out;
  std::vector<double> held_out_raw;
  std::vector<double> held_out_calibrated;
};

/// Cross-fitted calibration: fold k's base model is trained on the other
/// folds and its calibrator on fold k. Prediction averages the folds'
/// calibrated probabilities.
struct CalibratedModel {
  models::ModelKind kind = models::ModelKind::kLogReg;
  std::vector<CalibratedFold> folds;

  double predict(std::span<const double> x) const;
  /// Per-fold calibrated probabilities, in fold order.
  std::vector<double> predict_folds(std::span<const double> x) const;
};

struct CalibrationOptions {
  std::size_t n_folds = 5;
  std::size_t max_redraws = 10;
  models::Hyperparameters hyper;
};

/// Stratified fold ids: each class is shuffled (sorted indices, then
/// Rng(derive_seed(seed, attempt * 2 + class))) and dealt round-robin from a
/// random starting fold. Returns the fold of every row.
std::vector<std::size_t> stratified_folds(const models::Labels& y, std::size_t n_folds,
                                          std::uint64_t seed, std::size_t attempt);

/// Needs n >= 10 and both classes. A draw in which some held-out fold or its
/// complement lacks a class is redrawn, up to max_redraws times, then
/// Error("folds") is thrown.
CalibratedModel fit_calibrated(const models::Matrix& X, const models::Labels& y,
                               models::ModelKind kind, std::uint64_t seed,
                               const CalibrationOptions& options = {});

nlohmann::json to_json(const CalibratedModel& model);
CalibratedModel calibrated_model_from_json(const nlohmann::json& j,
                                           std::string_view expected_feature_version);

}  // namespace seqscreen::calibration
