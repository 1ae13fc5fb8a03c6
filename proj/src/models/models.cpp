#include "seqscreen/models.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::models {
namespace {

double softplus_neg(double m) {  // log(1 + exp(-m))
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sign_of(int label) { return label == 1 ? 1.0 : -1.0; }

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kLinSvm: return "linsvm";
    case ModelKind::kForest: return "rf";
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view token) {
  if (token == "logreg") return ModelKind::kLogReg;
  if (token == "linsvm" || token == "svm") return ModelKind::kLinSvm;
  if (token == "rf" || token == "forest") return ModelKind::kForest;
  return std::nullopt;
}

std::size_t check_shape(const Matrix& X, const Labels& y) {
  if (X.empty()) throw Error("shape", "empty design matrix");
  if (X.size() != y.size()) throw Error("shape", "row count differs from label count");
  const std::size_t d = X.front().size();
  for (const auto& row : X) {
    if (row.size() != d) throw Error("shape", "ragged design matrix");
  }
  for (int label : y) {
    if (label != 0 && label != 1) throw Error("shape", "labels must be 0 or 1");
  }
  return d;
}

void require_both_classes(const Labels& y) {
  const bool has0 = std::find(y.begin(), y.end(), 0) != y.end();
  const bool has1 = std::find(y.begin(), y.end(), 1) != y.end();
  if (!has0 || !has1) throw Error("single_class", "training labels contain a single class");
}

// ---------------------------------------------------------------------------

Preprocessor Preprocessor::fit(const Matrix& X, bool standardize) {
  if (X.empty()) throw Error("shape", "cannot fit a preprocessor on zero rows");
  const std::size_t d = X.front().size();
  Preprocessor p;
  p.standardize = standardize;
  p.medians.assign(d, 0.0);
  p.means.assign(d, 0.0);
  p.stds.assign(d, 1.0);
  std::vector<double> col;
  for (std::size_t j = 0; j < d; ++j) {
    col.clear();
    for (const auto& row : X) {
      if (row.size() != d) throw Error("shape", "ragged design matrix");
      if (!std::isnan(row[j])) col.push_back(row[j]);
    }
    if (!col.empty()) {
      std::sort(col.begin(), col.end());
      const std::size_t m = col.size();
      p.medians[j] = m % 2 ? col[m / 2] : 0.5 * (col[m / 2 - 1] + col[m / 2]);
    }
    if (!standardize) continue;
    double sum = 0.0;
    for (const auto& row : X) sum += std::isnan(row[j]) ? p.medians[j] : row[j];
    const double mean = sum / static_cast<double>(X.size());
    double ss = 0.0;
    for (const auto& row : X) {
      const double v = (std::isnan(row[j]) ? p.medians[j] : row[j]) - mean;
      ss += v * v;
    }
    const double sd = std::sqrt(ss / static_cast<double>(X.size()));
    p.means[j] = mean;
    // accumulated rounding on a constant column leaves a tiny nonzero std
    p.stds[j] = sd <= 1e-12 * std::max(1.0, std::abs(mean)) ? 0.0 : sd;
  }
  return p;
}

std::vector<double> Preprocessor::transform(std::span<const double> x) const {
  if (x.size() != medians.size()) throw Error("shape", "feature count differs from the preprocessor");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    double v = std::isfinite(x[j]) ? x[j] : medians[j];
    if (standardize) v = stds[j] == 0.0 ? 0.0 : (v - means[j]) / stds[j];
    out[j] = v;
  }
  return out;
}

Matrix Preprocessor::transform(const Matrix& X) const {
  Matrix out;
  out.reserve(X.size());
  for (const auto& row : X) out.push_back(transform(row));
  return out;
}

// ---------------------------------------------------------------------------

double LinearModel::score(std::span<const double> x) const {
  if (x.size() != weights.size()) throw Error("shape", "feature count differs from the model");
  return dot(weights, x) + bias;
}

double logreg_objective(const Matrix& X, const Labels& y, std::span<const double> w, double b,
                        double C) {
  double loss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) loss += softplus_neg(sign_of(y[i]) * (dot(w, X[i]) + b));
  return 0.5 * dot(w, w) + C * loss;
}

std::vector<double> logreg_gradient(const Matrix& X, const Labels& y, std::span<const double> w,
                                    double b, double C) {
  std::vector<double> g(w.begin(), w.end());
  g.push_back(0.0);
  const std::size_t d = w.size();
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double yi = sign_of(y[i]);
    const double m = yi * (dot(w, X[i]) + b);
    const double coef = -C * yi * sigmoid(-m);
    for (std::size_t j = 0; j < d; ++j) g[j] += coef * X[i][j];
    g[d] += coef;
  }
  return g;
}

LinearModel fit_logreg(const Matrix& X, const Labels& y, const LogRegOptions& options) {
  const std::size_t d = check_shape(X, y);
  require_both_classes(y);
  if (!(options.C > 0)) throw Error("config", "C must be positive");
  const std::size_t n = X.size();
  Eigen::MatrixXd A(n, d + 1);
  Eigen::VectorXd ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) A(i, j) = X[i][j];
    A(i, d) = 1.0;
    ys(i) = sign_of(y[i]);
  }
  const double C = options.C;
  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd m = ys.cwiseProduct(A * theta);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += softplus_neg(m(i));
    return 0.5 * theta.head(d).squaredNorm() + C * loss;
  };

  LinearModel model;
  model.kind = ModelKind::kLogReg;
  model.C = C;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
  double f = objective(theta);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd m = ys.cwiseProduct(A * theta);
    Eigen::VectorXd coef(n), curv(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = sigmoid(-m(i));
      coef(i) = -C * ys(i) * s;
      curv(i) = C * s * (1.0 - s);
    }
    Eigen::VectorXd g = A.transpose() * coef;
    g.head(d) += theta.head(d);
    model.iterations = iter;
    if (g.norm() < options.gradient_tol) {
      model.converged = true;
      break;
    }
    Eigen::MatrixXd H = A.transpose() * curv.asDiagonal() * A;
    H.diagonal().head(d).array() += 1.0;
    const Eigen::VectorXd step = H.ldlt().solve(-g);
    const double slope = g.dot(step);
    double t = 1.0;
    double f_new = objective(theta + step);
    while (f_new > f + 1e-4 * t * slope && t > 1e-20) {
      t *= 0.5;
      f_new = objective(theta + t * step);
    }
    if (!(f_new <= f)) break;  // no descent possible at working precision
    theta += t * step;
    f = f_new;
    model.objective_trace.push_back(f);
  }
  model.weights.assign(theta.data(), theta.data() + d);
  model.bias = theta(static_cast<Eigen::Index>(d));
  return model;
}

// ---------------------------------------------------------------------------

double svm_primal_objective(const Matrix& X, const Labels& y, std::span<const double> w, double b,
                            double C) {
  double loss = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    loss += std::max(0.0, 1.0 - sign_of(y[i]) * (dot(w, X[i]) + b));
  }
  return 0.5 * dot(w, w) + C * loss;
}

LinearModel fit_linsvm(const Matrix& X, const Labels& y, const SvmOptions& options) {
  const std::size_t d = check_shape(X, y);
  require_both_classes(y);
  if (!(options.C > 0)) throw Error("config", "C must be positive");
  const std::size_t n = X.size();
  const double C = options.C;
  constexpr double kTau = 1e-12;

  std::vector<double> ys(n), alpha(n, 0.0), G(n, -1.0), QD(n), K_i(n);
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = sign_of(y[i]);
    QD[i] = dot(X[i], X[i]);
  }
  std::vector<double> w(d, 0.0);
  auto at_upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  auto dual = [&] {
    double s = 0.0;
    for (double a : alpha) s += a;
    return 0.5 * dot(w, w) - s;
  };

  LinearModel model;
  model.kind = ModelKind::kLinSvm;
  model.C = C;
  std::size_t iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    // working set i: max violating index in I_up
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -ys[t] * G[t];
      const bool up = ys[t] > 0 ? !at_upper(t) : !at_lower(t);
      if (up && v >= gmax) {
        gmax = v;
        i_sel = static_cast<std::ptrdiff_t>(t);
      }
    }
    if (i_sel < 0) {
      model.converged = true;
      break;
    }
    const auto i = static_cast<std::size_t>(i_sel);
    for (std::size_t t = 0; t < n; ++t) K_i[t] = dot(X[i], X[t]);
    // working set j: second-order gain within I_low
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    std::ptrdiff_t j_sel = -1;
    for (std::size_t t = 0; t < n; ++t) {
      const bool low = ys[t] > 0 ? !at_lower(t) : !at_upper(t);
      if (!low) continue;
      const double v = ys[t] * G[t];
      gmax2 = std::max(gmax2, v);
      const double grad_diff = gmax + v;
      if (grad_diff > 0) {
        double quad = QD[i] + QD[t] - 2.0 * K_i[t];
        if (quad <= 0) quad = kTau;
        const double gain = -(grad_diff * grad_diff) / quad;
        if (gain <= best) {
          best = gain;
          j_sel = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    if (gmax + gmax2 < options.tolerance || j_sel < 0) {
      model.converged = true;
      break;
    }
    const auto j = static_cast<std::size_t>(j_sel);
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double Qij = ys[i] * ys[j] * K_i[j];
    if (ys[i] != ys[j]) {
      double quad = QD[i] + QD[j] + 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = QD[i] + QD[j] - 2.0 * Qij;
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0) {
          alpha[i] = 0;
          alpha[j] = sum;
        }
      }
    }
    const double di = (alpha[i] - old_i) * ys[i];
    const double dj = (alpha[j] - old_j) * ys[j];
    std::vector<double> dw(d);
    for (std::size_t k = 0; k < d; ++k) {
      dw[k] = di * X[i][k] + dj * X[j][k];
      w[k] += dw[k];
    }
    for (std::size_t t = 0; t < n; ++t) G[t] += ys[t] * dot(dw, X[t]);
    if ((iter + 1) % n == 0) model.objective_trace.push_back(dual());
  }
  model.iterations = iter;
  model.objective_trace.push_back(dual());

  // bias as in libsvm: average over free vectors, else midpoint of bounds
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yG = ys[t] * G[t];
    if (at_upper(t)) {
      if (ys[t] < 0) ub = std::min(ub, yG);
      else lb = std::max(lb, yG);
    } else if (at_lower(t)) {
      if (ys[t] > 0) ub = std::min(ub, yG);
      else lb = std::max(lb, yG);
    } else {
      ++n_free;
      sum_free += yG;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  model.weights = std::move(w);
  model.bias = -rho;
  return model;
}

// ---------------------------------------------------------------------------

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    const auto& nd = nodes[node];
    node = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left
                                                                                            : nd.right);
  }
  return nodes[node].value;
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::size_t, std::size_t>> stack = {{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [idx, dep] = stack.back();
    stack.pop_back();
    best = std::max(best, dep);
    if (nodes[idx].feature >= 0) {
      stack.push_back({static_cast<std::size_t>(nodes[idx].left), dep + 1});
      stack.push_back({static_cast<std::size_t>(nodes[idx].right), dep + 1});
    }
  }
  return best;
}

double ForestModel::predict_proba(std::span<const double> x) const {
  if (x.size() != n_features) throw Error("shape", "feature count differs from the forest");
  if (trees.empty()) throw Error("shape", "forest has no trees");
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return s / static_cast<double>(trees.size());
}

namespace {

struct TreeBuilder {
  const Matrix& X;
  const Labels& y;
  const std::vector<double>& weight;  // per training row, 0 when not drawn
  std::size_t max_features;
  std::size_t min_samples_split;
  Rng& rng;
  DecisionTree tree;

  struct Task {
    std::vector<std::size_t> rows;
    std::size_t node;
  };

  void build(std::vector<std::size_t> rows) {
    tree.nodes.push_back({});
    std::vector<Task> stack;
    stack.push_back({std::move(rows), 0});
    const std::size_t d = X.front().size();
    std::vector<std::size_t> features(d);
    std::vector<std::size_t> order;
    while (!stack.empty()) {
      Task task = std::move(stack.back());
      stack.pop_back();
      double w0 = 0.0, w1 = 0.0;
      for (auto r : task.rows) (y[r] == 1 ? w1 : w0) += weight[r];
      tree.nodes[task.node].value = w1 / (w0 + w1);
      if (w0 == 0.0 || w1 == 0.0 || task.rows.size() < min_samples_split) continue;

      std::iota(features.begin(), features.end(), std::size_t{0});
      const double total = w0 + w1;
      const double parent_score = (w0 * w0 + w1 * w1) / total;
      double best_score = -std::numeric_limits<double>::infinity();
      int best_feature = -1;
      double best_threshold = 0.0;
      std::size_t visited = 0;
      for (std::size_t k = 0; k < d && visited < max_features; ++k) {
        const std::size_t pick = k + rng.below(d - k);
        std::swap(features[k], features[pick]);
        const std::size_t f = features[k];
        order = task.rows;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (X[a][f] != X[b][f]) return X[a][f] < X[b][f];
          return a < b;
        });
        if (X[order.front()][f] == X[order.back()][f]) continue;  // constant here
        ++visited;
        double l0 = 0.0, l1 = 0.0;
        for (std::size_t p = 0; p + 1 < order.size(); ++p) {
          (y[order[p]] == 1 ? l1 : l0) += weight[order[p]];
          const double a = X[order[p]][f];
          const double b = X[order[p + 1]][f];
          if (a == b) continue;
          const double lw = l0 + l1;
          const double r0 = w0 - l0, r1 = w1 - l1;
          const double rw = r0 + r1;
          if (lw <= 0.0 || rw <= 0.0) continue;
          // maximizing this is equivalent to maximizing the weighted Gini decrease
          const double score = (l0 * l0 + l1 * l1) / lw + (r0 * r0 + r1 * r1) / rw;
          if (score > best_score) {
            best_score = score;
            best_feature = static_cast<int>(f);
            double mid = 0.5 * (a + b);
            if (mid >= b) mid = a;
            best_threshold = mid;
          }
        }
      }
      if (best_feature < 0 || best_score < parent_score - 1e-12 * total) continue;
      std::vector<std::size_t> left, right;
      for (auto r : task.rows) {
        (X[r][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(r);
      }
      const std::size_t li = tree.nodes.size();
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      auto& nd = tree.nodes[task.node];
      nd.feature = best_feature;
      nd.threshold = best_threshold;
      nd.left = static_cast<int>(li);
      nd.right = static_cast<int>(li + 1);
      // right pushed first so the left subtree is numbered first
      stack.push_back({std::move(right), li + 1});
      stack.push_back({std::move(left), li});
    }
  }
};

}  // namespace

ForestModel fit_forest(const Matrix& X, const Labels& y, const ForestOptions& options) {
  const std::size_t d = check_shape(X, y);
  require_both_classes(y);
  if (options.n_trees == 0) throw Error("config", "n_trees must be positive");
  for (const auto& row : X) {
    for (double v : row) {
      if (!std::isfinite(v)) throw Error("shape", "forest input must be imputed (finite)");
    }
  }
  const std::size_t n = X.size();
  ForestModel forest;
  forest.n_features = d;
  forest.max_features =
      options.max_features > 0
          ? std::min(options.max_features, d)
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
  forest.trees.resize(options.n_trees);
  std::vector<std::vector<char>> in_bag(options.n_trees);

  parallel::for_each_index(options.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(options.seed, t));
    std::vector<double> counts(n, 0.0);
    if (options.bootstrap) {
      for (std::size_t k = 0; k < n; ++k) counts[rng.below(n)] += 1.0;
    } else {
      std::fill(counts.begin(), counts.end(), 1.0);
    }
    std::vector<double> weight(n, 0.0);
    double n0 = 0.0, n1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) (y[i] == 1 ? n1 : n0) += counts[i];
    const double nb = n0 + n1;
    const double cw0 = options.balanced_subsample && n0 > 0 ? nb / (2.0 * n0) : 1.0;
    const double cw1 = options.balanced_subsample && n1 > 0 ? nb / (2.0 * n1) : 1.0;
    std::vector<std::size_t> rows;
    in_bag[t].assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (counts[i] == 0.0) continue;
      weight[i] = counts[i] * (y[i] == 1 ? cw1 : cw0);
      rows.push_back(i);
      in_bag[t][i] = 1;
    }
    TreeBuilder builder{X, y, weight, forest.max_features, options.min_samples_split, rng, {}};
    builder.build(std::move(rows));
    forest.trees[t] = std::move(builder.tree);
  });

  forest.oob_proba.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> cnt(n, 0);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[t][i]) continue;
      sum[i] += forest.trees[t].predict(X[i]);
      ++cnt[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cnt[i] > 0) forest.oob_proba[i] = sum[i] / static_cast<double>(cnt[i]);
  }
  return forest;
}

// ---------------------------------------------------------------------------

double TrainedModel::raw_score(std::span<const double> x) const {
  const auto z = pre.transform(x);
  if (const auto* lin = std::get_if<LinearModel>(&model)) return lin->score(z);
  return std::get<ForestModel>(model).predict_proba(z);
}

double TrainedModel::predict_proba(std::span<const double> x) const {
  switch (kind) {
    case ModelKind::kLogReg: return sigmoid(raw_score(x));
    case ModelKind::kForest: return raw_score(x);
    case ModelKind::kLinSvm: break;
  }
  throw Error("unsupported", "the linear SVM yields margins only; calibrate it for probabilities");
}

TrainedModel fit_model(ModelKind kind, const Matrix& X, const Labels& y, std::uint64_t seed,
                       const Hyperparameters& hyper) {
  check_shape(X, y);
  TrainedModel m;
  m.kind = kind;
  m.pre = Preprocessor::fit(X, kind != ModelKind::kForest);
  const Matrix Z = m.pre.transform(X);
  switch (kind) {
    case ModelKind::kLogReg: {
      LogRegOptions o;
      o.C = hyper.logreg_C;
      m.model = fit_logreg(Z, y, o);
      break;
    }
    case ModelKind::kLinSvm: {
      SvmOptions o;
      o.C = hyper.svm_C;
      m.model = fit_linsvm(Z, y, o);
      break;
    }
    case ModelKind::kForest: {
      ForestOptions o;
      o.n_trees = hyper.n_trees;
      o.seed = seed;
      m.model = fit_forest(Z, y, o);
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const TrainedModel& model) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["kind"] = to_string(model.kind);
  j["feature_version"] = model.feature_version;
  j["feature_names"] = model.feature_names;
  j["preprocessor"] = {{"standardize", model.pre.standardize},
                       {"medians", model.pre.medians},
                       {"means", model.pre.means},
                       {"stds", model.pre.stds}};
  if (const auto* lin = std::get_if<LinearModel>(&model.model)) {
    j["linear"] = {{"C", lin->C},
                   {"weights", lin->weights},
                   {"bias", lin->bias},
                   {"iterations", lin->iterations},
                   {"converged", lin->converged}};
  } else {
    const auto& f = std::get<ForestModel>(model.model);
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
      std::vector<int> feature, left, right;
      std::vector<double> threshold, value;
      for (const auto& nd : t.nodes) {
        feature.push_back(nd.feature);
        threshold.push_back(nd.threshold);
        left.push_back(nd.left);
        right.push_back(nd.right);
        value.push_back(nd.value);
      }
      trees.push_back({{"feature", feature},
                       {"threshold", threshold},
                       {"left", left},
                       {"right", right},
                       {"value", value}});
    }
    j["forest"] = {{"n_features", f.n_features}, {"max_features", f.max_features}, {"trees", trees}};
  }
  return j;
}

TrainedModel trained_model_from_json(const nlohmann::json& j,
                                     std::string_view expected_feature_version) {
  if (j.value("format", std::string()) != kModelFormat) {
    throw Error("version", "unsupported model format '" + j.value("format", std::string()) + "'");
  }
  TrainedModel m;
  m.feature_version = j.at("feature_version").get<std::string>();
  if (m.feature_version != expected_feature_version) {
    throw Error("version", "model was trained with feature order '" + m.feature_version +
                               "', expected '" + std::string(expected_feature_version) + "'");
  }
  const auto kind = parse_model_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error("version", "unknown model kind");
  m.kind = *kind;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto& p = j.at("preprocessor");
  m.pre.standardize = p.at("standardize").get<bool>();
  m.pre.medians = p.at("medians").get<std::vector<double>>();
  m.pre.means = p.at("means").get<std::vector<double>>();
  m.pre.stds = p.at("stds").get<std::vector<double>>();
  if (m.kind == ModelKind::kForest) {
    const auto& fj = j.at("forest");
    ForestModel f;
    f.n_features = fj.at("n_features").get<std::size_t>();
    f.max_features = fj.at("max_features").get<std::size_t>();
    for (const auto& tj : fj.at("trees")) {
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      DecisionTree t;
      for (std::size_t k = 0; k < feature.size(); ++k) {
        t.nodes.push_back({feature[k], threshold[k], left[k], right[k], value[k]});
      }
      f.trees.push_back(std::move(t));
    }
    m.model = std::move(f);
  } else {
    const auto& lj = j.at("linear");
    LinearModel lin;
    lin.kind = m.kind;
    lin.C = lj.at("C").get<double>();
    lin.weights = lj.at("weights").get<std::vector<double>>();
    lin.bias = lj.at("bias").get<double>();
    lin.iterations = lj.at("iterations").get<std::size_t>();
    lin.converged = lj.at("converged").get<bool>();
    m.model = std::move(lin);
  }
  return m;
}

}  // namespace seqscreen::models
