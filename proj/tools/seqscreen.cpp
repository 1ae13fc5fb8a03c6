#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "seqscreen/bench.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/synthetic.hpp"

using namespace seqscreen;

namespace {

struct Inputs {
  std::string fasta;
  std::string metadata;
  std::string taxonomy;

  void add(CLI::App* app) {
    app->add_option("--fasta", fasta, "FASTA input (label= header tags unless --metadata)")->required();
    app->add_option("--metadata", metadata, "metadata CSV, authoritative for labels");
    app->add_option("--taxonomy", taxonomy, "accession,superkingdom CSV");
  }

  std::vector<corpus::SequenceRecord> load(std::vector<corpus::MetadataRow>* rows = nullptr) const {
    bench::RunConfig cfg;
    cfg.fasta_path = fasta;
    cfg.metadata_path = metadata;
    cfg.taxonomy_path = taxonomy;
    return bench::load_records(cfg, rows);
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write '" + path + "'");
  return out;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse", path + ": " + e.what());
  }
}

std::map<std::string, Label> labels_of(const std::vector<corpus::SequenceRecord>& records) {
  std::map<std::string, Label> out;
  for (const auto& r : records) out[r.accession] = r.label;
  return out;
}

homology::SplitSpec read_split(const std::string& path, SplitProtocol protocol) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path + "'");
  return homology::read_split_csv(in, protocol);
}

template <class T>
CLI::Validator enum_check(std::optional<T> (*parse)(std::string_view)) {
  return CLI::Validator(
      [parse](std::string& v) { return parse(v) ? std::string() : "unknown value '" + v + "'"; }, "");
}

void print_leaks(const std::vector<corpus::LeakHit>& leaks) {
  for (const auto& h : leaks) {
    std::cerr << "safety: residues of " << h.accession << " found in " << h.artifact << " at byte " << h.offset
              << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Protein hazard screening benchmark"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value file for run-all; command-line flags take precedence");
  unsigned threads = 1;
  app.add_option("--threads", threads, "worker threads (outputs do not depend on this)")
      ->check(CLI::PositiveNumber);

  // curate
  Inputs curate_in;
  std::string curate_out, curate_audit;
  corpus::CurationConfig curation;
  bool curate_match = false;
  auto* curate = app.add_subcommand("curate", "filter and deduplicate a corpus");
  curate_in.add(curate);
  curate->add_option("--out", curate_out, "curated FASTA")->required();
  curate->add_option("--audit", curate_audit, "audit JSON");
  curate->add_option("--min-len", curation.min_len);
  curate->add_option("--max-len", curation.max_len);
  curate->add_flag("--length-match", curate_match, "downsample negatives to the positive length profile");

  // fetch
  std::string fetch_accessions, fetch_metadata, fetch_out;
  corpus::FetchOptions fetch_opts;
  auto* fetch = app.add_subcommand("fetch", "download FASTA records by accession, with a local cache");
  auto* acc_opt = fetch->add_option("--accessions", fetch_accessions, "file with one accession per line");
  fetch->add_option("--metadata", fetch_metadata, "metadata CSV whose accessions to fetch")->excludes(acc_opt);
  fetch->add_option("--cache", fetch_opts.cache_dir);
  fetch->add_option("--endpoint", fetch_opts.endpoint);
  fetch->add_option("--rate", fetch_opts.rate_limit, "requests per second");
  fetch->add_option("--out", fetch_out, "combined FASTA")->required();

  // features
  Inputs feat_in;
  std::string feat_set = "base", feat_out;
  auto* feats = app.add_subcommand("features", "write the feature matrix");
  feat_in.add(feats);
  feats->add_option("--features", feat_set)->check(enum_check(&features::parse_feature_set));
  feats->add_option("--out", feat_out)->required();

  // cluster
  Inputs clu_in;
  homology::ClusterOptions clu_opts;
  std::string clu_norm = "min", clu_out;
  bool clu_no_prefilter = false;
  auto* clu = app.add_subcommand("cluster", "greedy identity clustering");
  clu_in.add(clu);
  clu->add_option("--threshold", clu_opts.threshold)->check(CLI::Range(0.0, 1.0));
  clu->add_option("--norm", clu_norm)->check(enum_check(&homology::parse_identity_norm));
  clu->add_flag("--no-prefilter", clu_no_prefilter);
  clu->add_option("--out", clu_out)->required();

  // split
  Inputs split_in;
  std::string split_protocol = "random", split_clusters, split_out;
  double split_fraction = 0.8, split_threshold = 0.4;
  std::uint64_t split_seed = kDefaultSeed;
  auto* split = app.add_subcommand("split", "random or cluster-disjoint train/test split");
  split_in.add(split);
  split->add_option("--protocol", split_protocol)->check(enum_check(&parse_split_protocol));
  split->add_option("--clusters", split_clusters, "cluster CSV (required for --protocol cluster)");
  split->add_option("--threshold", split_threshold, "threshold recorded in the cluster CSV");
  split->add_option("--train-fraction", split_fraction);
  split->add_option("--seed", split_seed);
  split->add_option("--out", split_out)->required();

  // train
  Inputs train_in;
  std::string train_split, train_protocol = "random", train_model = "logreg", train_set = "base", train_out;
  std::uint64_t train_seed = kDefaultSeed;
  models::Hyperparameters hyper;
  auto* train = app.add_subcommand("train", "fit a calibrated model on the train side of a split");
  train_in.add(train);
  train->add_option("--split", train_split)->required();
  train->add_option("--protocol", train_protocol)->check(enum_check(&parse_split_protocol));
  train->add_option("--model", train_model)->check(enum_check(&models::parse_model_kind));
  train->add_option("--features", train_set)->check(enum_check(&features::parse_feature_set));
  train->add_option("--seed", train_seed);
  train->add_option("--trees", hyper.n_trees);
  train->add_option("--logreg-c", hyper.logreg_C);
  train->add_option("--svm-c", hyper.svm_C);
  train->add_option("--out", train_out, "model JSON")->required();

  // evaluate
  Inputs eval_in;
  std::string eval_split, eval_protocol = "random", eval_model, eval_out;
  probes::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("evaluate", "score the test side of a split with a saved model");
  eval_in.add(eval);
  eval->add_option("--split", eval_split)->required();
  eval->add_option("--protocol", eval_protocol)->check(enum_check(&parse_split_protocol));
  eval->add_option("--model-file", eval_model)->required();
  eval->add_option("--boot", eval_opts.bootstrap.n_boot);
  eval->add_option("--seed", eval_opts.bootstrap.seed);
  eval->add_flag("--alt-rule", eval_opts.alternative_rule);
  eval->add_option("--out", eval_out, "evaluation JSON")->required();

  // probe
  Inputs probe_in;
  std::string probe_split, probe_protocol = "random", probe_model = "logreg", probe_out;
  std::uint64_t probe_seed = kDefaultSeed;
  probes::ShuffleOptions probe_shuffle;
  probes::EvalOptions probe_opts;
  auto* probe = app.add_subcommand("probe", "shuffle, length-only and composition-only probes for one cell");
  probe_in.add(probe);
  probe->add_option("--split", probe_split)->required();
  probe->add_option("--protocol", probe_protocol)->check(enum_check(&parse_split_protocol));
  probe->add_option("--model", probe_model)->check(enum_check(&models::parse_model_kind));
  probe->add_option("--seed", probe_seed);
  probe->add_option("--shuffles", probe_shuffle.n_shuffles)->check(CLI::PositiveNumber);
  probe->add_option("--boot", probe_opts.bootstrap.n_boot);
  probe->add_option("--trees", probe_opts.calibration.hyper.n_trees);
  probe->add_option("--out", probe_out, "probe JSON")->required();

  // report
  std::string report_in;
  auto* report = app.add_subcommand("report", "print the headline table of a run report");
  report->add_option("report", report_in, "report.json")->required();

  // synth
  synthetic::Spec synth_spec;
  std::string synth_motif = "composition", synth_out, synth_meta;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
  synth->add_option("--families", synth_spec.n_families);
  synth->add_option("--family-size", synth_spec.family_size);
  synth->add_option("--motif", synth_motif)->check(enum_check(&synthetic::parse_motif_kind));
  synth->add_option("--min-len", synth_spec.min_length);
  synth->add_option("--max-len", synth_spec.max_length);
  synth->add_option("--identity", synth_spec.family_identity);
  synth->add_option("--signal", synth_spec.signal);
  synth->add_option("--jitter", synth_spec.family_jitter);
  synth->add_option("--hazard-fraction", synth_spec.hazard_fraction);
  synth->add_option("--seed", synth_spec.seed);
  synth->add_option("--out", synth_out, "tagged FASTA")->required();
  synth->add_option("--metadata-out", synth_meta, "metadata CSV with family ids as clusters");

  // run-all
  bench::RunConfig run;
  std::vector<std::string> run_settings;
  std::string run_splits = "random,cluster", run_models = "logreg,linsvm,rf", run_features = "base",
              run_norm = "min", run_bootstrap = "stratified";
  bool no_probes = false, no_subgroups = false;
  auto* all = app.add_subcommand("run-all", "full pipeline: curate, cluster, split, train, evaluate, probe, report");
  all->add_option("--metadata", run.metadata_path);
  all->add_option("--fasta", run.fasta_path);
  all->add_option("--taxonomy", run.taxonomy_path);
  all->add_flag("--fetch", run.fetch, "fetch residues for the metadata accessions");
  all->add_option("--cache", run.fetch_options.cache_dir);
  all->add_option("--endpoint", run.fetch_options.endpoint);
  all->add_option("--out", run.out_dir);
  all->add_option("--features", run_features);
  all->add_option("--splits", run_splits);
  all->add_option("--models", run_models);
  all->add_option("--seed", run.seed);
  all->add_option("--boot", run.n_boot);
  all->add_option("--threshold", run.threshold);
  all->add_option("--train-fraction", run.train_fraction);
  all->add_option("--norm", run_norm);
  all->add_option("--logreg-c", run.hyper.logreg_C);
  all->add_option("--svm-c", run.hyper.svm_C);
  all->add_option("--trees", run.hyper.n_trees);
  all->add_option("--bootstrap", run_bootstrap);
  all->add_flag("--alt-rule", run.alternative_rule, "also report constrained operating points");
  all->add_option("--shuffles", run.n_shuffles);
  all->add_flag("--no-probes", no_probes);
  all->add_flag("--no-subgroups", no_subgroups);
  all->add_flag("--resplit", run.resplit, "recompute clusters and splits even if metadata has them");
  all->add_flag("--length-match", run.length_match);
  all->add_option("--min-len", run.curation.min_len);
  all->add_option("--max-len", run.curation.max_len);
  all->add_option("--set", run_settings, "extra key=value settings");

  // The config file has to land before CLI11 writes explicit flags over it.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
  }
  if (!config_path.empty()) {
    try {
      bench::apply_config_file(run, config_path);
    } catch (const Error& e) {
      std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
      return 2;
    }
  }

  CLI11_PARSE(app, argc, argv);
  parallel::set_max_threads(threads);

  try {
    if (*curate) {
      std::vector<corpus::MetadataRow> rows;
      const auto records = curate_in.load(&rows);
      curation.validate();
      auto res = corpus::curate(records, curation);
      auto kept = res.kept;
      nlohmann::json audit = {{"input", res.audit.input},         {"viral", res.audit.viral},
                              {"non_canonical", res.audit.non_canonical}, {"too_short", res.audit.too_short},
                              {"too_long", res.audit.too_long},   {"duplicates", res.audit.duplicates},
                              {"kept", res.audit.kept}};
      if (curate_match) {
        std::vector<corpus::SequenceRecord> pos, neg;
        for (const auto& r : kept) (r.label == Label::kHazard ? pos : neg).push_back(r);
        const auto m = corpus::length_match(pos, neg, curation);
        for (const auto& w : m.warnings) std::cerr << "length-match: " << w << "\n";
        kept = pos;
        kept.insert(kept.end(), m.negatives.begin(), m.negatives.end());
        audit["length_matched_negatives"] = m.negatives.size();
      }
      fasta::write_file(curate_out, corpus::to_fasta(kept));
      if (!curate_audit.empty()) open_out(curate_audit) << audit.dump(2) << "\n";
      std::cout << "kept " << kept.size() << " of " << records.size() << "\n";
    } else if (*fetch) {
      std::vector<std::string> accessions;
      if (!fetch_metadata.empty()) {
        for (const auto& m : corpus::read_metadata_csv(fetch_metadata)) accessions.push_back(m.accession);
      } else if (!fetch_accessions.empty()) {
        std::ifstream in(fetch_accessions);
        if (!in) throw Error("io", "cannot open '" + fetch_accessions + "'");
        for (std::string line; std::getline(in, line);) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) accessions.push_back(line);
        }
      } else {
        throw Error("config", "need --accessions or --metadata");
      }
      const auto res = corpus::fetch_by_accession(accessions, fetch_opts);
      std::vector<fasta::Record> out;
      for (const auto& e : res.entries) out.push_back(e.record);
      fasta::write_file(fetch_out, out);
      for (const auto& f : res.failures) std::cerr << "fetch failed: " << f.accession << ": " << f.reason << "\n";
      std::cout << res.entries.size() << " fetched, " << res.failures.size() << " failed, " << res.network_requests
                << " network requests\n";
      return res.failures.empty() ? 0 : 3;
    } else if (*feats) {
      const auto m = features::featurize_all(feat_in.load(), *features::parse_feature_set(feat_set));
      auto out = open_out(feat_out);
      features::write_feature_csv(out, m);
    } else if (*clu) {
      clu_opts.norm = *homology::parse_identity_norm(clu_norm);
      clu_opts.use_prefilter = !clu_no_prefilter;
      homology::ClusterStats stats;
      const auto table = homology::greedy_cluster(clu_in.load(), clu_opts, &stats);
      auto out = open_out(clu_out);
      homology::write_cluster_csv(out, table);
      std::cout << table.clusters.size() << " clusters, " << stats.identity_evaluations << " identity evaluations, "
                << stats.prefilter_rejections << " prefilter rejections\n";
    } else if (*split) {
      const auto records = split_in.load();
      const auto protocol = *parse_split_protocol(split_protocol);
      homology::SplitResult res;
      if (protocol == SplitProtocol::kCluster) {
        if (split_clusters.empty()) throw Error("config", "--protocol cluster needs --clusters");
        std::ifstream in(split_clusters);
        if (!in) throw Error("io", "cannot open '" + split_clusters + "'");
        const auto table = homology::read_cluster_csv(in, split_threshold);
        res = homology::make_cluster_split(table, labels_of(records), split_fraction, split_seed);
      } else {
        res = homology::make_random_split(labels_of(records), split_fraction, split_seed);
      }
      for (const auto& w : res.warnings) std::cerr << "split: " << w << "\n";
      auto out = open_out(split_out);
      homology::write_split_csv(out, res.spec);
      std::cout << res.spec.train.size() << " train, " << res.spec.test.size() << " test\n";
    } else if (*train) {
      const auto records = train_in.load();
      const auto spec = read_split(train_split, *parse_split_protocol(train_protocol));
      const auto set = *features::parse_feature_set(train_set);
      probes::EvalOptions fit_opts;
      fit_opts.calibration.hyper = hyper;
      const auto model = probes::fit(probes::select(records, spec.train), *models::parse_model_kind(train_model),
                                     set, train_seed, fit_opts);
      nlohmann::json j = {{"feature_set", features::to_string(set)},
                          {"feature_version", features::kFeatureOrderVersion},
                          {"split_fingerprint", spec.fingerprint()},
                          {"model", calibration::to_json(model)}};
      open_out(train_out) << j.dump(2) << "\n";
    } else if (*eval) {
      const auto records = eval_in.load();
      const auto spec = read_split(eval_split, *parse_split_protocol(eval_protocol));
      const auto j = read_json(eval_model);
      const auto set = features::parse_feature_set(j.at("feature_set").get<std::string>());
      if (!set) throw Error("parse", "model file has an unknown feature set");
      const auto model =
          calibration::calibrated_model_from_json(j.at("model"), j.at("feature_version").get<std::string>());
      auto e = probes::evaluate(model, probes::select(records, spec.test), *set, eval_opts);
      e.split = spec.protocol;
      e.split_fingerprint = spec.fingerprint();
      open_out(eval_out) << probes::to_json(e).dump(2) << "\n";
      for (const auto& m : e.metrics) std::printf("%-32s %.4f [%.4f, %.4f]\n", m.name.c_str(), m.point, m.ci_lo, m.ci_hi);
    } else if (*probe) {
      const auto records = probe_in.load();
      const auto spec = read_split(probe_split, *parse_split_protocol(probe_protocol));
      const auto kind = *models::parse_model_kind(probe_model);
      probe_opts.bootstrap.seed = probe_seed;
      probe_shuffle.global_seed = probe_seed;
      const auto base = probes::train_and_evaluate(records, spec, kind, features::FeatureSet::kBase, probe_seed,
                                                   probe_opts);
      nlohmann::json j = {{"base", probes::to_json(base.evaluation)}, {"probes", nlohmann::json::array()}};
      std::vector<probes::ProbeResult> results;
      results.push_back(probes::run_shuffle_probe(base.model, probes::select(records, spec.test), base.evaluation,
                                                  probe_shuffle, probe_opts));
      for (auto set : {features::FeatureSet::kLengthOnly, features::FeatureSet::kCompositionOnly}) {
        results.push_back(probes::run_ablation(records, spec, kind, set, probe_seed, base.evaluation, probe_opts));
      }
      for (const auto& r : results) {
        j["probes"].push_back(probes::to_json(r));
        std::printf("%-18s auroc delta %+.4f\n", std::string(probes::to_string(r.kind)).c_str(),
                    r.delta_vs_base.at("auroc"));
      }
      open_out(probe_out) << j.dump(2) << "\n";
    } else if (*report) {
      const auto j = read_json(report_in);
      if (j.value("format", "") != bench::kReportFormat) throw Error("parse", "not a run report");
      std::printf("%-8s %-7s %-22s %-22s %-8s %-8s\n", "split", "model", "AUROC [95% CI]", "AUPRC [95% CI]", "Brier",
                  "ECE");
      for (const auto& e : j.at("evaluations")) {
        auto metric = [&](const std::string& name) -> const nlohmann::json& {
          for (const auto& m : e.at("metrics")) {
            if (m.at("name") == name) return m;
          }
          throw Error("parse", "report lacks metric " + name);
        };
        auto ci = [&](const std::string& name) {
          const auto& m = metric(name);
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.3f [%.3f, %.3f]", m.at("point").get<double>(),
                        m.at("ci_lo").get<double>(), m.at("ci_hi").get<double>());
          return std::string(buf);
        };
        std::printf("%-8s %-7s %-22s %-22s %-8.4f %-8.4f\n", e.at("split").get<std::string>().c_str(),
                    e.at("model").get<std::string>().c_str(), ci("auroc").c_str(), ci("auprc").c_str(),
                    metric("brier").at("point").get<double>(), metric("ece").at("point").get<double>());
      }
    } else if (*synth) {
      synth_spec.motif = *synthetic::parse_motif_kind(synth_motif);
      const auto c = synthetic::generate(synth_spec);
      fasta::write_file(synth_out, corpus::to_fasta(c.records));
      if (!synth_meta.empty()) {
        std::vector<corpus::MetadataRow> rows;
        for (const auto& r : c.records) {
          auto m = corpus::metadata_of(r);
          m.cluster_id = c.family_of.at(r.accession);
          rows.push_back(m);
        }
        corpus::write_metadata_csv(synth_meta, rows);
      }
      std::cout << c.records.size() << " records in " << synth_spec.n_families << " families\n";
    } else if (*all) {
      for (const auto& [flag, key, value] : {std::tuple{"--features", "features", &run_features},
                                             {"--splits", "splits", &run_splits},
                                             {"--models", "models", &run_models},
                                             {"--norm", "norm", &run_norm},
                                             {"--bootstrap", "bootstrap", &run_bootstrap}}) {
        if (all->count(flag)) bench::apply_setting(run, key, *value);
      }
      for (const auto& kv : run_settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Error("config", "--set expects key=value, got '" + kv + "'");
        bench::apply_setting(run, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (no_probes) run.probes = false;
      if (no_subgroups) run.subgroups = false;
      const auto out = bench::run_all(run);
      std::cout << "wrote " << out.files.size() << " files to " << run.out_dir << "\n";
      if (!out.leaks.empty()) {
        print_leaks(out.leaks);
        return 4;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
