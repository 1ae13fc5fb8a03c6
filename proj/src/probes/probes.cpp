#include "seqscreen/probes.hpp"

#include <algorithm>
#include <unordered_map>

#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::probes {
namespace {

std::vector<double> predict_all(const calibration::CalibratedModel& model,
                                const features::FeatureMatrix& fm) {
  std::vector<double> p(fm.rows.size());
  parallel::for_each_index(fm.rows.size(), [&](std::size_t i) { p[i] = model.predict(fm.rows[i]); });
  return p;
}

Evaluation finish(const std::vector<corpus::SequenceRecord>& test, const std::vector<double>& probs,
                  const EvalOptions& options) {
  Evaluation ev;
  for (std::size_t i = 0; i < test.size(); ++i) {
    ev.examples.push_back({test[i].accession, as_int(test[i].label), probs[i]});
  }
  ev.metrics = metrics::evaluate_suite(ev.examples, options.bootstrap, options.alternative_rule);
  ev.reliability = metrics::reliability(ev.examples, options.n_bins);
  return ev;
}

std::map<std::string, double> deltas(const Evaluation& probe, const Evaluation& base) {
  if (probe.examples.size() != base.examples.size()) {
    throw Error("probe", "probe and base test sets differ in size");
  }
  for (std::size_t i = 0; i < probe.examples.size(); ++i) {
    if (probe.examples[i].accession != base.examples[i].accession) {
      throw Error("probe", "probe and base test sets differ at " + probe.examples[i].accession);
    }
  }
  std::map<std::string, double> out;
  for (const auto& m : probe.metrics) {
    for (const auto& b : base.metrics) {
      if (b.name == m.name) out[m.name] = m.point - b.point;
    }
  }
  return out;
}

}  // namespace

std::vector<corpus::SequenceRecord> select(const std::vector<corpus::SequenceRecord>& records,
                                           const std::vector<std::string>& accessions) {
  std::unordered_map<std::string_view, const corpus::SequenceRecord*> index;
  for (const auto& r : records) index.emplace(r.accession, &r);
  std::vector<corpus::SequenceRecord> out;
  out.reserve(accessions.size());
  for (const auto& a : accessions) {
    const auto it = index.find(a);
    if (it == index.end()) throw Error("missing", "no record for accession '" + a + "'");
    out.push_back(*it->second);
  }
  return out;
}

Evaluation evaluate(const calibration::CalibratedModel& model,
                    const std::vector<corpus::SequenceRecord>& test, features::FeatureSet set,
                    const EvalOptions& options) {
  const auto fm = features::featurize_all(test, set);
  auto ev = finish(test, predict_all(model, fm), options);
  ev.model_kind = model.kind;
  ev.feature_set = set;
  return ev;
}

calibration::CalibratedModel fit(const std::vector<corpus::SequenceRecord>& train, models::ModelKind kind,
                                 features::FeatureSet set, std::uint64_t seed, const EvalOptions& options) {
  const auto fm = features::featurize_all(train, set);
  models::Labels y;
  for (const auto& r : train) y.push_back(as_int(r.label));
  auto model = calibration::fit_calibrated(fm.rows, y, kind, seed, options.calibration);
  for (auto& f : model.folds) {
    f.base.feature_version = std::string(features::kFeatureOrderVersion);
    f.base.feature_names = fm.names;
  }
  return model;
}

TrainedRun train_and_evaluate(const std::vector<corpus::SequenceRecord>& records,
                              const homology::SplitSpec& split, models::ModelKind kind,
                              features::FeatureSet set, std::uint64_t seed,
                              const EvalOptions& options) {
  const auto test = select(records, split.test);
  TrainedRun run{fit(select(records, split.train), kind, set, seed, options), {}};
  run.evaluation = evaluate(run.model, test, set, options);
  run.evaluation.split = split.protocol;
  run.evaluation.split_fingerprint = split.fingerprint();
  return run;
}

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::kShuffle: return "shuffle";
    case ProbeKind::kLengthOnly: return "length_only";
    case ProbeKind::kCompositionOnly: break;
  }
  return "composition_only";
}

ProbeResult run_shuffle_probe(const calibration::CalibratedModel& model,
                              const std::vector<corpus::SequenceRecord>& test,
                              const Evaluation& base, const ShuffleOptions& shuffle,
                              const EvalOptions& options) {
  if (shuffle.n_shuffles == 0) throw Error("config", "n_shuffles must be positive");
  std::vector<double> probs(test.size(), 0.0);
  for (std::size_t j = 0; j < shuffle.n_shuffles; ++j) {
    const std::uint64_t seed = j == 0 ? shuffle.global_seed : derive_seed(shuffle.global_seed, j);
    std::vector<corpus::SequenceRecord> shuffled;
    shuffled.reserve(test.size());
    for (const auto& r : test) shuffled.push_back(features::shuffle_residues(r, seed));
    const auto p = predict_all(model, features::featurize_all(shuffled, base.feature_set));
    for (std::size_t i = 0; i < p.size(); ++i) probs[i] += p[i];
  }
  for (auto& p : probs) p = std::clamp(p / static_cast<double>(shuffle.n_shuffles), 0.0, 1.0);

  ProbeResult r;
  r.kind = ProbeKind::kShuffle;
  r.split = base.split;
  r.model_kind = model.kind;
  r.evaluation = finish(test, probs, options);
  r.evaluation.model_kind = model.kind;
  r.evaluation.split = base.split;
  r.evaluation.feature_set = base.feature_set;
  r.evaluation.split_fingerprint = base.split_fingerprint;
  r.delta_vs_base = deltas(r.evaluation, base);
  return r;
}

ProbeResult run_ablation(const std::vector<corpus::SequenceRecord>& records,
                         const homology::SplitSpec& split, models::ModelKind kind,
                         features::FeatureSet set, std::uint64_t seed, const Evaluation& base,
                         const EvalOptions& options) {
  if (set == features::FeatureSet::kBase) throw Error("config", "an ablation needs a restricted feature set");
  if (split.fingerprint() != base.split_fingerprint) {
    throw Error("split", "ablation split differs from the base run's split");
  }
  ProbeResult r;
  r.kind = set == features::FeatureSet::kLengthOnly ? ProbeKind::kLengthOnly : ProbeKind::kCompositionOnly;
  r.split = split.protocol;
  r.model_kind = kind;
  r.evaluation = train_and_evaluate(records, split, kind, set, seed, options).evaluation;
  r.delta_vs_base = deltas(r.evaluation, base);
  return r;
}

nlohmann::json to_json(const metrics::MetricEstimate& e) {
  return {{"name", e.name}, {"point", e.point}, {"ci_lo", e.ci_lo}, {"ci_hi", e.ci_hi},
          {"n_boot_used", e.n_boot_used}};
}

nlohmann::json to_json(const Evaluation& ev) {
  nlohmann::json j;
  j["model"] = models::to_string(ev.model_kind);
  j["split"] = to_string(ev.split);
  j["feature_set"] = features::to_string(ev.feature_set);
  j["split_fingerprint"] = ev.split_fingerprint;
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : ev.metrics) j["metrics"].push_back(to_json(m));
  j["reliability_bins"] = nlohmann::json::array();
  for (const auto& b : ev.reliability.bins) {
    j["reliability_bins"].push_back({{"edge_lo", b.edge_lo},
                                     {"edge_hi", b.edge_hi},
                                     {"mean_prob", b.mean_prob},
                                     {"frac_pos", b.frac_pos},
                                     {"count", b.count}});
  }
  j["examples"] = nlohmann::json::array();
  for (const auto& e : ev.examples) {
    j["examples"].push_back({{"accession", e.accession}, {"label", e.label}, {"prob", e.prob}});
  }
  return j;
}

nlohmann::json to_json(const ProbeResult& p) {
  nlohmann::json j;
  j["probe"] = to_string(p.kind);
  j["split"] = to_string(p.split);
  j["model"] = models::to_string(p.model_kind);
  j["evaluation"] = to_json(p.evaluation);
  j["delta_vs_base"] = p.delta_vs_base;
  return j;
}

}  // namespace seqscreen::probes
