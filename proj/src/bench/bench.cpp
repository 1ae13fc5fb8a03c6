#include "seqscreen/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "seqscreen/csv.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::bench {
namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("config", "'" + key + "' expects a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error("config", "'" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
    }
  }
  throw Error("config", "'" + key + "' expects a non-negative integer, got '" + v + "'");
}

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    if (e.code().find(':') != std::string::npos) throw;
    throw Error(name + ":" + e.code(), name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(name + ":internal", name + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("io", "failed writing '" + path.string() + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

nlohmann::json config_echo(const RunConfig& cfg) {
  nlohmann::json j;
  j["metadata"] = cfg.metadata_path;
  j["fasta"] = cfg.fasta_path;
  j["taxonomy"] = cfg.taxonomy_path;
  j["fetch"] = cfg.fetch;
  j["features"] = features::to_string(cfg.feature_set);
  j["splits"] = nlohmann::json::array();
  for (auto s : cfg.splits) j["splits"].push_back(to_string(s));
  j["models"] = nlohmann::json::array();
  for (auto m : cfg.models) j["models"].push_back(models::to_string(m));
  j["seed"] = cfg.seed;
  j["boot"] = cfg.n_boot;
  j["threshold"] = cfg.threshold;
  j["train_fraction"] = cfg.train_fraction;
  j["norm"] = homology::to_string(cfg.identity_norm);
  j["logreg_c"] = cfg.hyper.logreg_C;
  j["svm_c"] = cfg.hyper.svm_C;
  j["trees"] = cfg.hyper.n_trees;
  j["bootstrap"] = cfg.bootstrap_mode == metrics::BootstrapMode::kStratified ? "stratified" : "iid";
  j["alt_rule"] = cfg.alternative_rule;
  j["shuffles"] = cfg.n_shuffles;
  j["probes"] = cfg.probes;
  j["subgroups"] = cfg.subgroups;
  j["resplit"] = cfg.resplit;
  j["length_match"] = cfg.length_match;
  j["min_len"] = cfg.curation.min_len;
  j["max_len"] = cfg.curation.max_len;
  return j;
}

std::map<std::string, Label> label_map(const std::vector<corpus::SequenceRecord>& records) {
  std::map<std::string, Label> out;
  for (const auto& r : records) out[r.accession] = r.label;
  return out;
}

/// Keeps only accessions present in `keep`; returns how many were dropped.
std::size_t restrict_split(homology::SplitSpec& spec, const std::map<std::string, Label>& keep) {
  const std::size_t before = spec.train.size() + spec.test.size();
  auto drop = [&](std::vector<std::string>& v) {
    v.erase(std::remove_if(v.begin(), v.end(), [&](const std::string& a) { return !keep.count(a); }), v.end());
  };
  drop(spec.train);
  drop(spec.test);
  return before - spec.train.size() - spec.test.size();
}

struct SplitInfo {
  homology::SplitSpec spec;
  std::string source;
  std::vector<std::string> warnings;
};

void metric_columns(std::vector<std::string>& row, const std::vector<metrics::MetricEstimate>& est,
                    const std::vector<std::string>& names) {
  for (const auto& n : names) {
    const auto& m = metrics::find(est, n);
    row.push_back(fmt(m.point));
    row.push_back(fmt(m.ci_lo));
    row.push_back(fmt(m.ci_hi));
  }
}

std::vector<std::string> metric_header(const std::vector<std::string>& names) {
  std::vector<std::string> h;
  for (const auto& n : names) {
    h.push_back(n);
    h.push_back(n + "_lo");
    h.push_back(n + "_hi");
  }
  return h;
}

std::string csv_text(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (splits.empty()) throw Error("config", "at least one split protocol is required");
  if (models.empty()) throw Error("config", "at least one model is required");
  if (n_boot == 0) throw Error("config", "boot must be positive");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("config", "threshold must be in (0, 1]");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("config", "train-fraction must be in (0, 1)");
  if (n_shuffles == 0) throw Error("config", "shuffles must be positive");
  if (fasta_path.empty() && !fetch) throw Error("config", "need --fasta or --fetch");
  if (fetch && metadata_path.empty()) throw Error("config", "--fetch needs --metadata accessions");
  curation.validate();
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "metadata") cfg.metadata_path = value;
  else if (key == "fasta") cfg.fasta_path = value;
  else if (key == "taxonomy") cfg.taxonomy_path = value;
  else if (key == "fetch") cfg.fetch = parse_bool(key, value);
  else if (key == "cache") cfg.fetch_options.cache_dir = value;
  else if (key == "endpoint") cfg.fetch_options.endpoint = value;
  else if (key == "out") cfg.out_dir = value;
  else if (key == "features") {
    const auto fs = features::parse_feature_set(value);
    if (!fs) throw Error("config", "unknown feature set '" + value + "'");
    cfg.feature_set = *fs;
  } else if (key == "splits") {
    cfg.splits.clear();
    for (const auto& t : split_list(value)) {
      const auto p = parse_split_protocol(t);
      if (!p) throw Error("config", "unknown split protocol '" + t + "'");
      cfg.splits.push_back(*p);
    }
  } else if (key == "models") {
    cfg.models.clear();
    for (const auto& t : split_list(value)) {
      const auto m = models::parse_model_kind(t);
      if (!m) throw Error("config", "unknown model '" + t + "'");
      cfg.models.push_back(*m);
    }
  } else if (key == "seed") cfg.seed = parse_uint(key, value);
  else if (key == "boot") cfg.n_boot = parse_uint(key, value);
  else if (key == "threshold") cfg.threshold = parse_double(key, value);
  else if (key == "train-fraction") cfg.train_fraction = parse_double(key, value);
  else if (key == "norm") {
    const auto n = homology::parse_identity_norm(value);
    if (!n) throw Error("config", "unknown identity norm '" + value + "'");
    cfg.identity_norm = *n;
  } else if (key == "logreg-c") cfg.hyper.logreg_C = parse_double(key, value);
  else if (key == "svm-c") cfg.hyper.svm_C = parse_double(key, value);
  else if (key == "trees") cfg.hyper.n_trees = parse_uint(key, value);
  else if (key == "bootstrap") {
    if (value == "stratified") cfg.bootstrap_mode = metrics::BootstrapMode::kStratified;
    else if (value == "iid") cfg.bootstrap_mode = metrics::BootstrapMode::kIid;
    else throw Error("config", "bootstrap must be stratified or iid");
  } else if (key == "alt-rule") cfg.alternative_rule = parse_bool(key, value);
  else if (key == "shuffles") cfg.n_shuffles = parse_uint(key, value);
  else if (key == "probes") cfg.probes = parse_bool(key, value);
  else if (key == "subgroups") cfg.subgroups = parse_bool(key, value);
  else if (key == "resplit") cfg.resplit = parse_bool(key, value);
  else if (key == "length-match") cfg.length_match = parse_bool(key, value);
  else if (key == "min-len") cfg.curation.min_len = parse_uint(key, value);
  else if (key == "max-len") cfg.curation.max_len = parse_uint(key, value);
  else throw Error("config", "unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open config '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    auto trim = [](std::string s) {
      const auto l = s.find_first_not_of(" \t\r");
      const auto r = s.find_last_not_of(" \t\r");
      return l == std::string::npos ? std::string() : s.substr(l, r - l + 1);
    };
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

// ---------------------------------------------------------------------------

LengthHistogram length_histogram(const std::vector<corpus::SequenceRecord>& records, std::size_t bins) {
  if (bins == 0) throw Error("config", "histogram needs at least one bin");
  std::size_t lo = std::numeric_limits<std::size_t>::max(), hi = 0, n_h = 0, n_b = 0;
  for (const auto& r : records) {
    lo = std::min(lo, r.length());
    hi = std::max(hi, r.length());
    (r.label == Label::kHazard ? n_h : n_b) += 1;
  }
  if (n_h == 0 || n_b == 0) throw Error("empty", "length histogram needs both classes");
  LengthHistogram h;
  const double a = static_cast<double>(lo), b = static_cast<double>(hi == lo ? hi + 1 : hi);
  for (std::size_t k = 0; k <= bins; ++k) {
    h.edges.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(bins));
  }
  h.hazard.assign(bins, 0);
  h.benign.assign(bins, 0);
  for (const auto& r : records) {
    auto k = static_cast<std::size_t>((static_cast<double>(r.length()) - a) / (b - a) * static_cast<double>(bins));
    k = std::min(k, bins - 1);
    ++(r.label == Label::kHazard ? h.hazard : h.benign)[k];
  }
  return h;
}

std::string length_histogram_csv(const LengthHistogram& h) {
  std::vector<std::vector<std::string>> rows = {{"edge_lo", "edge_hi", "hazard", "benign"}};
  for (std::size_t k = 0; k < h.hazard.size(); ++k) {
    rows.push_back({fmt(h.edges[k], 2), fmt(h.edges[k + 1], 2), std::to_string(h.hazard[k]),
                    std::to_string(h.benign[k])});
  }
  return csv_text(rows);
}

std::string length_histogram_svg(const LengthHistogram& h) {
  const double W = 640, H = 360, left = 60, right = 20, top = 30, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  std::size_t peak = 1;
  for (std::size_t k = 0; k < h.hazard.size(); ++k) peak = std::max({peak, h.hazard[k], h.benign[k]});
  const double x0 = h.edges.front(), x1 = h.edges.back();
  auto X = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto Y = [&](double c) { return top + ph - c / static_cast<double>(peak) * ph; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">Sequence length by class</text>\n";
  auto series = [&](const std::vector<std::size_t>& counts, const char* color) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (!counts[k]) continue;
      s << "<rect x=\"" << fmt(X(h.edges[k]), 2) << "\" y=\"" << fmt(Y(static_cast<double>(counts[k])), 2)
        << "\" width=\"" << fmt(X(h.edges[k + 1]) - X(h.edges[k]), 2) << "\" height=\""
        << fmt(top + ph - Y(static_cast<double>(counts[k])), 2) << "\" fill=\"" << color
        << "\" fill-opacity=\"0.5\"/>\n";
    }
  };
  series(h.benign, "#3060c0");
  series(h.hazard, "#c03030");
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = x0 + (x1 - x0) * t / 4.0;
    s << "<text x=\"" << fmt(X(v), 2) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << fmt(v, 0) << "</text>\n";
  }
  s << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << peak
    << "</text>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">length (residues)</text>\n";
  s << "<rect x=\"" << W - 150 << "\" y=\"36\" width=\"12\" height=\"12\" fill=\"#c03030\" fill-opacity=\"0.5\"/>"
    << "<text x=\"" << W - 132 << "\" y=\"46\" font-size=\"12\">hazard</text>\n";
  s << "<rect x=\"" << W - 150 << "\" y=\"54\" width=\"12\" height=\"12\" fill=\"#3060c0\" fill-opacity=\"0.5\"/>"
    << "<text x=\"" << W - 132 << "\" y=\"64\" font-size=\"12\">benign</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string reliability_csv(const metrics::ReliabilityBins& bins) {
  std::vector<std::vector<std::string>> rows = {{"edge_lo", "edge_hi", "mean_prob", "frac_pos", "count"}};
  for (const auto& b : bins.bins) {
    rows.push_back({fmt(b.edge_lo), fmt(b.edge_hi), fmt(b.mean_prob), fmt(b.frac_pos), std::to_string(b.count)});
  }
  return csv_text(rows);
}

std::string reliability_svg(const metrics::ReliabilityBins& bins, const std::string& title) {
  const double S = 360, left = 60, top = 40, side = 260;
  auto X = [&](double v) { return left + v * side; };
  auto Y = [&](double v) { return top + side - v * side; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S + 20 << "\" height=\"" << S + 10 << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left + side / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
    << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << side << "\" height=\"" << side
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << X(0) << "\" y1=\"" << Y(0) << "\" x2=\"" << X(1) << "\" y2=\"" << Y(1)
    << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  std::string path;
  for (const auto& b : bins.bins) {
    if (!b.count) continue;
    path += (path.empty() ? "M" : " L") + fmt(X(b.mean_prob), 2) + "," + fmt(Y(b.frac_pos), 2);
    s << "<circle cx=\"" << fmt(X(b.mean_prob), 2) << "\" cy=\"" << fmt(Y(b.frac_pos), 2)
      << "\" r=\"3.5\" fill=\"#c03030\"><title>n=" << b.count << "</title></circle>\n";
  }
  if (!path.empty()) s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"#c03030\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s << "<text x=\"" << fmt(X(v), 2) << "\" y=\"" << top + side + 16
      << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(v, 2) << "</text>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << fmt(Y(v) + 4, 2) << "\" text-anchor=\"end\" font-size=\"11\">"
      << fmt(v, 2) << "</text>\n";
  }
  s << "<text x=\"" << left + side / 2 << "\" y=\"" << top + side + 36
    << "\" text-anchor=\"middle\" font-size=\"12\">mean predicted probability</text>\n";
  s << "<text x=\"16\" y=\"" << top + side / 2 << "\" transform=\"rotate(-90 16 " << top + side / 2
    << ")\" text-anchor=\"middle\" font-size=\"12\">fraction hazard</text>\n";
  s << "</svg>\n";
  return s.str();
}

nlohmann::json to_json(const metrics::SubgroupResult& r) {
  nlohmann::json j = {{"family", r.family}, {"key", r.key},     {"support", r.support}, {"n_pos", r.n_pos},
                      {"n_neg", r.n_neg},   {"sufficient", r.sufficient}, {"note", r.note}};
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : r.metrics) j["metrics"].push_back(probes::to_json(m));
  return j;
}

std::vector<corpus::LeakHit> safety_scan(const std::vector<corpus::SequenceRecord>& records,
                                         const std::vector<std::string>& paths, std::size_t window) {
  const corpus::ResidueLeakScanner scanner(records, window);
  std::vector<corpus::LeakHit> hits;
  for (const auto& p : paths) {
    auto h = scanner.scan_file(p);
    hits.insert(hits.end(), h.begin(), h.end());
  }
  return hits;
}

// ---------------------------------------------------------------------------

std::vector<corpus::SequenceRecord> load_records(const RunConfig& cfg,
                                                 std::vector<corpus::MetadataRow>* metadata_out) {
  std::vector<corpus::MetadataRow> metadata;
  if (!cfg.metadata_path.empty()) metadata = corpus::read_metadata_csv(cfg.metadata_path);
  std::map<std::string, corpus::Superkingdom> taxonomy;
  if (!cfg.taxonomy_path.empty()) taxonomy = corpus::read_taxonomy_csv(cfg.taxonomy_path);

  std::vector<fasta::Record> entries;
  if (cfg.fetch) {
    std::vector<std::string> accessions;
    for (const auto& m : metadata) accessions.push_back(m.accession);
    const auto fetched = corpus::fetch_by_accession(accessions, cfg.fetch_options);
    if (!fetched.failures.empty()) {
      throw Error("fetch", std::to_string(fetched.failures.size()) + " accessions could not be fetched, first '" +
                               fetched.failures.front().accession + "': " + fetched.failures.front().reason);
    }
    for (const auto& e : fetched.entries) entries.push_back({e.accession, e.record.residues});
  } else {
    entries = fasta::parse_file(cfg.fasta_path);
  }
  auto records = corpus::ingest(entries, metadata.empty() ? nullptr : &metadata,
                                taxonomy.empty() ? nullptr : &taxonomy);
  if (metadata_out) *metadata_out = std::move(metadata);
  return records;
}

RunOutput run_all(const RunConfig& cfg) {
  stage("config", [&] { cfg.validate(); });
  std::vector<corpus::MetadataRow> metadata;
  const auto records = stage("load", [&] { return load_records(cfg, &metadata); });
  return run_records(cfg, records, metadata.empty() ? nullptr : &metadata);
}

RunOutput run_records(const RunConfig& cfg, const std::vector<corpus::SequenceRecord>& input,
                      const std::vector<corpus::MetadataRow>* metadata) {
  stage("config", [&] {
    if (cfg.splits.empty() || cfg.models.empty()) throw Error("config", "need at least one split and one model");
    cfg.curation.validate();
  });
  RunOutput out;
  nlohmann::json& report = out.report;
  report["format"] = kReportFormat;
  report["config"] = config_echo(cfg);
  report["notes"] = {
      "operating points and calibration metrics use the mean of the cross-fitted fold probabilities",
      "shuffle probes score calibrated probabilities of the unchanged model",
      "per_example holds (accession, label, prob) for every test row; no residues are stored"};

  // curate, then optionally length-match the negatives
  std::vector<corpus::SequenceRecord> records;
  stage("curate", [&] {
    const auto cur = corpus::curate(input, cfg.curation);
    report["curation"] = {{"input", cur.audit.input},       {"viral", cur.audit.viral},
                          {"non_canonical", cur.audit.non_canonical}, {"too_short", cur.audit.too_short},
                          {"too_long", cur.audit.too_long}, {"duplicates", cur.audit.duplicates},
                          {"kept", cur.audit.kept}};
    records = cur.kept;
    if (cfg.length_match) {
      std::vector<corpus::SequenceRecord> pos, neg;
      for (const auto& r : records) (r.label == Label::kHazard ? pos : neg).push_back(r);
      const auto m = corpus::length_match(pos, neg, cfg.curation);
      report["length_match"] = {{"bin_edges", m.bin_edges},
                                {"positives_per_bin", m.positives_per_bin},
                                {"selected_per_bin", m.selected_per_bin},
                                {"warnings", m.warnings}};
      records = pos;
      records.insert(records.end(), m.negatives.begin(), m.negatives.end());
    }
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.accession < b.accession; });
  });
  const auto labels = label_map(records);
  std::size_t n_hazard = 0;
  std::string joined;
  for (const auto& r : records) {
    n_hazard += r.label == Label::kHazard;
    joined += r.accession + "\n";
  }
  report["environment"] = {{"version", kVersion}, {"seed", cfg.seed}, {"corpus_hash", hex64(stable_hash(joined))}};
  report["corpus"] = {{"n", records.size()}, {"hazard", n_hazard}, {"benign", records.size() - n_hazard}};

  std::map<std::string, const corpus::MetadataRow*> meta_by_acc;
  if (metadata) {
    for (const auto& m : *metadata) meta_by_acc[m.accession] = &m;
  }
  auto metadata_has = [&](auto member) {
    if (!metadata || cfg.resplit) return false;
    for (const auto& r : records) {
      const auto it = meta_by_acc.find(r.accession);
      if (it == meta_by_acc.end() || !((*it->second).*member)) return false;
    }
    return true;
  };

  // clusters
  homology::ClusterTable table;
  stage("cluster", [&] {
    const bool needs_clusters =
        std::find(cfg.splits.begin(), cfg.splits.end(), SplitProtocol::kCluster) != cfg.splits.end() || cfg.subgroups;
    std::string source = "greedy";
    if (metadata_has(&corpus::MetadataRow::cluster_id)) {
      std::map<std::string, std::int64_t> ids;
      for (const auto& r : records) ids[r.accession] = *meta_by_acc.at(r.accession)->cluster_id;
      table = homology::table_from_assignments(ids, cfg.threshold);
      source = "metadata";
    } else if (needs_clusters) {
      homology::ClusterOptions co;
      co.threshold = cfg.threshold;
      co.norm = cfg.identity_norm;
      homology::ClusterStats stats;
      table = homology::greedy_cluster(records, co, &stats);
      report["clustering_stats"] = {{"identity_evaluations", stats.identity_evaluations},
                                    {"prefilter_rejections", stats.prefilter_rejections}};
    }
    report["clustering"] = {{"source", source}, {"threshold", cfg.threshold}, {"n_clusters", table.clusters.size()}};
  });
  const auto cluster_of = table.assignments();

  // splits
  std::vector<SplitInfo> splits;
  stage("split", [&] {
    for (auto protocol : cfg.splits) {
      SplitInfo info;
      const bool from_meta = protocol == SplitProtocol::kRandom
                                 ? metadata_has(&corpus::MetadataRow::split_random)
                                 : metadata_has(&corpus::MetadataRow::split_cluster);
      if (from_meta) {
        info.spec = homology::split_from_metadata(*metadata, protocol);
        info.spec.seed = cfg.seed;
        info.spec.train_fraction = cfg.train_fraction;
        if (const auto dropped = restrict_split(info.spec, labels)) {
          info.warnings.push_back(std::to_string(dropped) + " metadata accessions were removed by curation");
        }
        info.source = "metadata";
      } else {
        auto res = protocol == SplitProtocol::kRandom
                       ? homology::make_random_split(labels, cfg.train_fraction, cfg.seed)
                       : homology::make_cluster_split(table, labels, cfg.train_fraction, cfg.seed);
        info.spec = std::move(res.spec);
        info.warnings = std::move(res.warnings);
        info.source = "computed";
      }
      splits.push_back(std::move(info));
    }
    report["splits"] = nlohmann::json::array();
    for (const auto& s : splits) {
      report["splits"].push_back({{"protocol", to_string(s.spec.protocol)},
                                  {"source", s.source},
                                  {"n_train", s.spec.train.size()},
                                  {"n_test", s.spec.test.size()},
                                  {"fingerprint", hex64(s.spec.fingerprint())},
                                  {"warnings", s.warnings}});
    }
  });

  probes::EvalOptions eo;
  eo.bootstrap.n_boot = cfg.n_boot;
  eo.bootstrap.seed = cfg.seed;
  eo.bootstrap.mode = cfg.bootstrap_mode;
  eo.calibration.hyper = cfg.hyper;
  eo.alternative_rule = cfg.alternative_rule;

  std::map<std::string, std::size_t> length_of;
  std::map<std::string, std::string> kingdom_of;
  for (const auto& r : records) {
    length_of[r.accession] = r.length();
    if (r.superkingdom) kingdom_of[r.accession] = std::string(corpus::to_string(*r.superkingdom));
  }

  std::vector<Cell> cells;
  for (const auto& s : splits) {
    const auto test = probes::select(records, s.spec.test);
    for (auto kind : cfg.models) {
      const std::string name = std::string(models::to_string(kind)) + "/" + std::string(to_string(s.spec.protocol));
      Cell cell;
      const auto run = stage("train:" + name, [&] {
        return probes::train_and_evaluate(records, s.spec, kind, cfg.feature_set, cfg.seed, eo);
      });
      cell.evaluation = run.evaluation;
      if (cfg.probes) {
        stage("probe:" + name, [&] {
          probes::ShuffleOptions so;
          so.global_seed = cfg.seed;
          so.n_shuffles = cfg.n_shuffles;
          cell.probes.push_back(probes::run_shuffle_probe(run.model, test, run.evaluation, so, eo));
          for (auto set : {features::FeatureSet::kLengthOnly, features::FeatureSet::kCompositionOnly}) {
            cell.probes.push_back(
                probes::run_ablation(records, s.spec, kind, set, cfg.seed, run.evaluation, eo));
          }
        });
      }
      if (cfg.subgroups) {
        stage("subgroups:" + name, [&] {
          std::map<std::string, std::size_t> test_lengths;
          for (const auto& a : s.spec.test) test_lengths[a] = length_of.at(a);
          const auto& ex = cell.evaluation.examples;
          auto add = [&](std::vector<metrics::SubgroupResult> r) {
            cell.subgroups.insert(cell.subgroups.end(), r.begin(), r.end());
          };
          add(metrics::subgroup_report(ex, metrics::length_groups(test_lengths), "length_bin",
                                       metrics::kMinSupport, eo.bootstrap));
          add(metrics::positive_cluster_report(ex, cluster_of, metrics::kMinSupport, eo.bootstrap));
          add(metrics::superkingdom_report(ex, kingdom_of, metrics::kMinSupport, eo.bootstrap));
        });
      }
      cells.push_back(std::move(cell));
    }
  }

  report["evaluations"] = nlohmann::json::array();
  for (const auto& c : cells) {
    auto j = probes::to_json(c.evaluation);
    j["per_example"] = std::move(j["examples"]);
    j.erase("examples");
    j["probes"] = nlohmann::json::array();
    for (const auto& p : c.probes) {
      auto pj = probes::to_json(p);
      pj["evaluation"].erase("examples");
      j["probes"].push_back(std::move(pj));
    }
    j["subgroups"] = nlohmann::json::array();
    for (const auto& g : c.subgroups) j["subgroups"].push_back(to_json(g));
    report["evaluations"].push_back(std::move(j));
  }

  // artifacts
  stage("report", [&] {
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    auto emit = [&](const std::string& name, const std::string& text) {
      write_text(dir / name, text);
      out.files.push_back(name);
    };

    const std::vector<std::string> t1 = {"auroc", "auprc", "tpr_at_1pct_fpr", "fpr_at_95pct_tpr"};
    const std::vector<std::string> t2 = {"brier", "ece"};
    std::vector<std::vector<std::string>> table1, table2, subgroups, probes_rows;
    auto head = [](const std::vector<std::string>& names) {
      std::vector<std::string> h = {"split", "model", "features", "n_test"};
      const auto m = metric_header(names);
      h.insert(h.end(), m.begin(), m.end());
      return h;
    };
    table1.push_back(head(t1));
    table2.push_back(head(t2));
    if (cfg.alternative_rule) {
      for (const auto& n : {"tpr_at_1pct_fpr_constrained", "fpr_at_95pct_tpr_constrained"}) {
        for (const auto& h : metric_header({n})) table1.front().push_back(h);
      }
    }
    subgroups.push_back({"split", "model", "family", "key", "support", "n_pos", "n_neg", "sufficient", "note",
                         "auroc", "auroc_lo", "auroc_hi", "auprc", "auprc_lo", "auprc_hi"});
    probes_rows.push_back({"split", "model", "probe", "metric", "point", "ci_lo", "ci_hi", "delta_vs_base"});
    for (const auto& c : cells) {
      const auto& e = c.evaluation;
      const std::string split(to_string(e.split)), model(models::to_string(e.model_kind));
      std::vector<std::string> r1 = {split, model, std::string(features::to_string(e.feature_set)),
                                     std::to_string(e.examples.size())};
      auto r2 = r1;
      metric_columns(r1, e.metrics, t1);
      if (cfg.alternative_rule) {
        metric_columns(r1, e.metrics, {"tpr_at_1pct_fpr_constrained", "fpr_at_95pct_tpr_constrained"});
      }
      metric_columns(r2, e.metrics, t2);
      table1.push_back(r1);
      table2.push_back(r2);
      for (const auto& g : c.subgroups) {
        std::vector<std::string> row = {split, model, g.family, g.key, std::to_string(g.support),
                                        std::to_string(g.n_pos), std::to_string(g.n_neg),
                                        g.sufficient ? "1" : "0", g.note};
        if (g.sufficient) metric_columns(row, g.metrics, {"auroc", "auprc"});
        else row.insert(row.end(), 6, "");
        subgroups.push_back(row);
      }
      for (const auto& p : c.probes) {
        for (const auto& m : p.evaluation.metrics) {
          const auto d = p.delta_vs_base.find(m.name);
          probes_rows.push_back({split, model, std::string(probes::to_string(p.kind)), m.name, fmt(m.point),
                                 fmt(m.ci_lo), fmt(m.ci_hi), d == p.delta_vs_base.end() ? "" : fmt(d->second)});
        }
      }
      const std::string stem = "reliability_" + model + "_" + split;
      emit(stem + ".csv", reliability_csv(e.reliability));
      emit(stem + ".svg", reliability_svg(e.reliability, "Reliability: " + model + ", " + split + " split"));
    }
    emit("table1.csv", csv_text(table1));
    emit("table2.csv", csv_text(table2));
    if (cfg.subgroups) emit("subgroups.csv", csv_text(subgroups));
    if (cfg.probes) emit("probes.csv", csv_text(probes_rows));

    std::vector<corpus::MetadataRow> rows;
    for (const auto& r : records) {
      auto row = corpus::metadata_of(r);
      if (const auto it = cluster_of.find(r.accession); it != cluster_of.end()) row.cluster_id = it->second;
      for (const auto& s : splits) {
        auto side = s.spec.side_of(r.accession);
        (s.spec.protocol == SplitProtocol::kRandom ? row.split_random : row.split_cluster) = side;
      }
      rows.push_back(std::move(row));
    }
    std::ostringstream meta;
    corpus::write_metadata_csv(meta, rows);
    emit("metadata_out.csv", meta.str());

    const auto hist = length_histogram(records);
    emit("lengths.svg", length_histogram_svg(hist));
    emit("lengths.csv", length_histogram_csv(hist));
    emit("report.json", report.dump(2) + "\n");

    std::vector<std::string> paths;
    for (const auto& f : out.files) paths.push_back((dir / f).string());
    out.leaks = safety_scan(input, paths);
  });
  return out;
}

}  // namespace seqscreen::bench
