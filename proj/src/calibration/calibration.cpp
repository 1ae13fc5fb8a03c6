#include "seqscreen/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqscreen/rng.hpp"

namespace seqscreen::calibration {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("shape", "scores and labels differ in length");
  bool has0 = false, has1 = false;
  for (int l : labels) {
    if (l == 1) has1 = true;
    else if (l == 0) has0 = true;
    else throw Error("shape", "labels must be 0 or 1");
  }
  if (!has0 || !has1) throw Error("single_class", "calibration data contain a single class");
}

}  // namespace

double IsotonicMap::operator()(double score) const {
  if (knot_x.empty()) throw Error("shape", "empty isotonic map");
  if (score <= knot_x.front()) return knot_y.front();
  if (score >= knot_x.back()) return knot_y.back();
  const auto it = std::upper_bound(knot_x.begin(), knot_x.end(), score);
  const auto hi = static_cast<std::size_t>(it - knot_x.begin());
  const std::size_t lo = hi - 1;
  const double t = (score - knot_x[lo]) / (knot_x[hi] - knot_x[lo]);
  return knot_y[lo] + t * (knot_y[hi] - knot_y[lo]);
}

IsotonicMap fit_isotonic(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() < 2) throw Error("shape", "isotonic fit needs at least two points");
  check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error("non_finite", "isotonic fit on a non-finite score");
  }

  struct Block {
    double x_lo, x_hi;
    double sum;
    double weight;
  };
  std::vector<Block> blocks;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t e = k;
    double sum = 0.0;
    while (e < order.size() && scores[order[e]] == scores[order[k]]) sum += labels[order[e++]];
    Block b{scores[order[k]], scores[order[k]], sum, static_cast<double>(e - k)};
    // pool while the previous block's mean exceeds this one's
    while (!blocks.empty() && blocks.back().sum * b.weight > b.sum * blocks.back().weight) {
      const Block& p = blocks.back();
      b = {p.x_lo, b.x_hi, p.sum + b.sum, p.weight + b.weight};
      blocks.pop_back();
    }
    blocks.push_back(b);
    k = e;
  }
  IsotonicMap map;
  for (const auto& b : blocks) {
    const double v = b.sum / b.weight;
    map.knot_x.push_back(b.x_lo);
    map.knot_y.push_back(v);
    if (b.x_hi != b.x_lo) {
      map.knot_x.push_back(b.x_hi);
      map.knot_y.push_back(v);
    }
  }
  return map;
}

// ---------------------------------------------------------------------------

double SigmoidMap::operator()(double score) const {
  const double z = A * score + B;
  if (z >= 0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

namespace {

struct Targets {
  double pos, neg;
};

Targets smoothed_targets(std::span<const int> labels) {
  double np = 0, nn = 0;
  for (int l : labels) (l == 1 ? np : nn) += 1.0;
  return {(np + 1.0) / (np + 2.0), 1.0 / (nn + 2.0)};
}

}  // namespace

double platt_objective(std::span<const double> scores, std::span<const int> labels, double A,
                       double B) {
  const Targets tg = smoothed_targets(labels);
  double f = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double t = labels[i] == 1 ? tg.pos : tg.neg;
    const double z = A * scores[i] + B;
    f += z >= 0 ? t * z + std::log1p(std::exp(-z)) : (t - 1.0) * z + std::log1p(std::exp(z));
  }
  return f;
}

std::array<double, 2> platt_gradient(std::span<const double> scores, std::span<const int> labels,
                                     double A, double B) {
  const Targets tg = smoothed_targets(labels);
  const SigmoidMap m{A, B};
  std::array<double, 2> g{0.0, 0.0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double t = labels[i] == 1 ? tg.pos : tg.neg;
    const double d = t - m(scores[i]);
    g[0] += scores[i] * d;
    g[1] += d;
  }
  return g;
}

SigmoidMap fit_platt(std::span<const double> scores, std::span<const int> labels,
                     const PlattOptions& options, PlattDiagnostics* diagnostics) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error("non_finite", "Platt scaling on a non-finite score");
  }
  check_inputs(scores, labels);
  double np = 0, nn = 0;
  for (int l : labels) (l == 1 ? np : nn) += 1.0;
  const Targets tg = smoothed_targets(labels);
  SigmoidMap m{0.0, std::log((nn + 1.0) / (np + 1.0))};
  double f = platt_objective(scores, labels, m.A, m.B);
  PlattDiagnostics diag;
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = m(scores[i]);
      const double t = labels[i] == 1 ? tg.pos : tg.neg;
      const double q = p * (1.0 - p);
      h11 += scores[i] * scores[i] * q;
      h22 += q;
      h21 += scores[i] * q;
      g1 += scores[i] * (t - p);
      g2 += t - p;
    }
    diag.iterations = iter;
    diag.gradient_norm = std::hypot(g1, g2);
    if (diag.gradient_norm < options.gradient_tol) {
      diag.converged = true;
      break;
    }
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double slope = g1 * dA + g2 * dB;
    double step = 1.0;
    bool moved = false;
    while (step >= 1e-10) {
      const double A = m.A + step * dA;
      const double B = m.B + step * dB;
      const double fn = platt_objective(scores, labels, A, B);
      if (fn < f + 1e-4 * step * slope) {
        m = {A, B};
        f = fn;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // line search failed at working precision
  }
  if (diagnostics) *diagnostics = diag;
  return m;
}

// ---------------------------------------------------------------------------

CalibratorKind policy_for(models::ModelKind kind) {
  return kind == models::ModelKind::kLinSvm ? CalibratorKind::kSigmoid : CalibratorKind::kIsotonic;
}

double Calibrator::operator()(double score) const {
  return std::visit([score](const auto& m) { return m(score); }, map);
}

std::vector<double> CalibratedModel::predict_folds(std::span<const double> x) const {
  std::vector<double> out;
  out.reserve(folds.size());
  for (const auto& f : folds) out.push_back(f.calibrator(f.base.raw_score(x)));
  return out;
}

double CalibratedModel::predict(std::span<const double> x) const {
  if (folds.empty()) throw Error("shape", "calibrated model has no folds");
  double s = 0.0;
  for (double p : predict_folds(x)) s += p;
  return std::clamp(s / static_cast<double>(folds.size()), 0.0, 1.0);
}

std::vector<std::size_t> stratified_folds(const models::Labels& y, std::size_t n_folds,
                                          std::uint64_t seed, std::size_t attempt) {
  if (n_folds < 2) throw Error("config", "need at least two folds");
  std::vector<std::size_t> fold(y.size(), 0);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    Rng rng(derive_seed(seed, attempt * 2 + static_cast<std::size_t>(cls)));
    rng.shuffle(std::span<std::size_t>(idx));
    const std::size_t offset = rng.below(n_folds);
    for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = (k + offset) % n_folds;
  }
  return fold;
}

CalibratedModel fit_calibrated(const models::Matrix& X, const models::Labels& y,
                               models::ModelKind kind, std::uint64_t seed,
                               const CalibrationOptions& options) {
  models::check_shape(X, y);
  models::require_both_classes(y);
  if (X.size() < 10) throw Error("shape", "calibrated fitting needs at least 10 rows");
  const std::size_t k_folds = options.n_folds;

  auto usable = [&](const std::vector<std::size_t>& fold) {
    for (std::size_t k = 0; k < k_folds; ++k) {
      int in[2] = {0, 0}, out[2] = {0, 0};
      for (std::size_t i = 0; i < y.size(); ++i) ++(fold[i] == k ? in : out)[y[i]];
      if (!in[0] || !in[1] || !out[0] || !out[1]) return false;
    }
    return true;
  };
  std::vector<std::size_t> fold;
  bool ok = false;
  for (std::size_t attempt = 0; attempt < options.max_redraws && !ok; ++attempt) {
    fold = stratified_folds(y, k_folds, seed, attempt);
    ok = usable(fold);
  }
  if (!ok) {
    throw Error("folds", "could not draw " + std::to_string(k_folds) +
                             " folds with both classes on each side after " +
                             std::to_string(options.max_redraws) + " attempts");
  }

  CalibratedModel model;
  model.kind = kind;
  model.folds.resize(k_folds);
  for (std::size_t k = 0; k < k_folds; ++k) {
    models::Matrix Xtr;
    models::Labels ytr;
    auto& f = model.folds[k];
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (fold[i] == k) {
        f.held_out.push_back(i);
      } else {
        Xtr.push_back(X[i]);
        ytr.push_back(y[i]);
      }
    }
    f.base = models::fit_model(kind, Xtr, ytr, derive_seed(seed, 100 + k), options.hyper);
    std::vector<int> yk;
    for (auto i : f.held_out) {
      f.held_out_raw.push_back(f.base.raw_score(X[i]));
      yk.push_back(y[i]);
    }
    if (policy_for(kind) == CalibratorKind::kIsotonic) {
      f.calibrator.map = fit_isotonic(f.held_out_raw, yk);
    } else {
      f.calibrator.map = fit_platt(f.held_out_raw, yk);
    }
    for (double s : f.held_out_raw) f.held_out_calibrated.push_back(f.calibrator(s));
  }
  return model;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const CalibratedModel& model) {
  nlohmann::json j;
  j["kind"] = models::to_string(model.kind);
  j["n_folds"] = model.folds.size();
  j["folds"] = nlohmann::json::array();
  for (const auto& f : model.folds) {
    nlohmann::json c;
    if (const auto* iso = std::get_if<IsotonicMap>(&f.calibrator.map)) {
      c = {{"type", "isotonic"}, {"knot_x", iso->knot_x}, {"knot_y", iso->knot_y}};
    } else {
      const auto& s = std::get<SigmoidMap>(f.calibrator.map);
      c = {{"type", "sigmoid"}, {"A", s.A}, {"B", s.B}};
    }
    j["folds"].push_back({{"base", models::to_json(f.base)}, {"calibrator", c}});
  }
  return j;
}

CalibratedModel calibrated_model_from_json(const nlohmann::json& j,
                                           std::string_view expected_feature_version) {
  CalibratedModel m;
  const auto kind = models::parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error("version", "unknown model kind");
  m.kind = *kind;
  for (const auto& fj : j.at("folds")) {
    CalibratedFold f;
    f.base = models::trained_model_from_json(fj.at("base"), expected_feature_version);
    const auto& c = fj.at("calibrator");
    if (c.at("type") == "isotonic") {
      f.calibrator.map = IsotonicMap{c.at("knot_x").get<std::vector<double>>(),
                                     c.at("knot_y").get<std::vector<double>>()};
    } else {
      f.calibrator.map = SigmoidMap{c.at("A").get<double>(), c.at("B").get<double>()};
    }
    m.folds.push_back(std::move(f));
  }
  return m;
}

}  // namespace seqscreen::calibration
