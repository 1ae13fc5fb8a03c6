#include "seqscreen/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "seqscreen/csv.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::corpus {

std::string_view to_string(Superkingdom kingdom) {
  switch (kingdom) {
    case Superkingdom::kBacteria: return "Bacteria";
    case Superkingdom::kArchaea: return "Archaea";
    case Superkingdom::kEukaryota: return "Eukaryota";
    case Superkingdom::kUnknown: break;
  }
  return "Unknown";
}

std::optional<Superkingdom> parse_superkingdom(std::string_view token) {
  if (token == "Bacteria") return Superkingdom::kBacteria;
  if (token == "Archaea") return Superkingdom::kArchaea;
  if (token == "Eukaryota") return Superkingdom::kEukaryota;
  if (token == "Unknown") return Superkingdom::kUnknown;
  return std::nullopt;
}

bool is_canonical(std::string_view residues) {
  return std::all_of(residues.begin(), residues.end(), [](char c) {
    return kCanonicalAlphabet.find(c) != std::string_view::npos;
  });
}

void CurationConfig::validate() const {
  if (min_len < 1) throw Error("config", "min_len must be >= 1");
  if (max_len < min_len) throw Error("config", "max_len must be >= min_len");
  if (length_match_bins < 1) throw Error("config", "length_match_bins must be >= 1");
}

CurationResult curate(const std::vector<SequenceRecord>& records, const CurationConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw Error("empty", "empty corpus");

  CurationResult result;
  result.audit.input = records.size();

  std::unordered_set<std::string_view> seen_accessions;
  std::vector<const SequenceRecord*> passing;
  for (const auto& rec : records) {
    if (!seen_accessions.insert(rec.accession).second) {
      throw Error("duplicate_accession", "duplicate accession '" + rec.accession + "'");
    }
    if (cfg.exclude_viral && rec.viral) {
      ++result.audit.viral;
    } else if (cfg.canonical_only && !is_canonical(rec.residues)) {
      ++result.audit.non_canonical;
    } else if (rec.length() < cfg.min_len) {
      ++result.audit.too_short;
    } else if (rec.length() > cfg.max_len) {
      ++result.audit.too_long;
    } else {
      passing.push_back(&rec);
    }
  }

  if (cfg.dedup_exact) {
    std::unordered_map<std::string_view, const SequenceRecord*> keeper;
    for (const auto* rec : passing) {
      auto [it, inserted] = keeper.try_emplace(rec->residues, rec);
      if (!inserted && rec->accession < it->second->accession) it->second = rec;
    }
    for (const auto* rec : passing) {
      if (keeper.at(rec->residues) == rec) {
        result.kept.push_back(*rec);
      } else {
        ++result.audit.duplicates;
      }
    }
  } else {
    for (const auto* rec : passing) result.kept.push_back(*rec);
  }
  result.audit.kept = result.kept.size();
  return result;
}

std::vector<double> quantile_edges(std::vector<double> values, std::size_t bins) {
  if (values.empty()) throw Error("empty", "quantiles of an empty sample");
  if (bins == 0) throw Error("config", "bins must be >= 1");
  std::sort(values.begin(), values.end());
  std::vector<double> edges(bins + 1);
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t i = 0; i <= bins; ++i) {
    const double pos = last * static_cast<double>(i) / static_cast<double>(bins);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    edges[i] = values[lo] + (values[hi] - values[lo]) * frac;
  }
  edges.front() = values.front();
  edges.back() = values.back();
  return edges;
}

std::optional<std::size_t> bin_of(const std::vector<double>& edges, double value) {
  if (edges.size() < 2 || value < edges.front() || value > edges.back()) return std::nullopt;
  const auto interior_begin = edges.begin() + 1;
  const auto interior_end = edges.end() - 1;
  return static_cast<std::size_t>(std::upper_bound(interior_begin, interior_end, value) -
                                  interior_begin);
}

LengthMatchResult length_match(const std::vector<SequenceRecord>& positives,
                               const std::vector<SequenceRecord>& negatives,
                               const CurationConfig& cfg) {
  cfg.validate();
  if (positives.empty()) throw Error("empty", "length matching needs positives");
  if (negatives.empty()) throw Error("empty", "length matching needs negatives");

  LengthMatchResult result;
  std::vector<double> pos_lengths;
  pos_lengths.reserve(positives.size());
  for (const auto& rec : positives) pos_lengths.push_back(static_cast<double>(rec.length()));
  result.bin_edges = quantile_edges(pos_lengths, cfg.length_match_bins);

  const std::size_t bins = cfg.length_match_bins;
  result.positives_per_bin.assign(bins, 0);
  result.selected_per_bin.assign(bins, 0);
  for (double len : pos_lengths) ++result.positives_per_bin[*bin_of(result.bin_edges, len)];

  std::vector<std::vector<const SequenceRecord*>> pool(bins);
  for (const auto& rec : negatives) {
    if (auto b = bin_of(result.bin_edges, static_cast<double>(rec.length()))) {
      pool[*b].push_back(&rec);
    }
  }

  Rng rng(cfg.seed);
  for (std::size_t b = 0; b < bins; ++b) {
    auto& candidates = pool[b];
    std::sort(candidates.begin(), candidates.end(),
              [](const auto* x, const auto* y) { return x->accession < y->accession; });
    const std::size_t want = result.positives_per_bin[b];
    if (candidates.size() < want) {
      std::ostringstream msg;
      msg << "length bin " << b << " [" << result.bin_edges[b] << ", " << result.bin_edges[b + 1]
          << "]: " << want << " positives but only " << candidates.size() << " negatives";
      result.warnings.push_back(msg.str());
    }
    const std::size_t take = std::min(want, candidates.size());
    // Partial Fisher-Yates from the front.
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
      result.negatives.push_back(*candidates[i]);
    }
    result.selected_per_bin[b] = take;
  }
  std::sort(result.negatives.begin(), result.negatives.end(),
            [](const auto& x, const auto& y) { return x.accession < y.accession; });
  return result;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& metadata_columns() {
  static const std::vector<std::string> cols = {"accession",  "label",        "length",
                                                "source",     "cluster_id",   "split_random",
                                                "split_cluster"};
  return cols;
}

std::optional<SplitSide> parse_split_cell(const std::string& cell, std::size_t line,
                                          const char* column) {
  if (cell.empty()) return std::nullopt;
  if (auto side = parse_split_side(cell)) return side;
  throw ParseError(line, std::string("unknown ") + column + " token '" + cell + "'");
}

template <typename Int>
Int parse_int(const std::string& cell, std::size_t line, const char* column) {
  Int value{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError(line, std::string("invalid ") + column + " '" + cell + "'");
  }
  return value;
}

}  // namespace

std::vector<MetadataRow> read_metadata_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  if (table.header != metadata_columns()) {
    for (const auto& col : metadata_columns()) table.column(col);  // names the missing one
    throw ParseError(1, "header must be exactly '" + std::string(kMetadataHeader) + "'");
  }
  std::vector<MetadataRow> rows;
  rows.reserve(table.rows.size());
  std::unordered_set<std::string> seen;
  for (const auto& row : table.rows) {
    const auto& f = row.fields;
    MetadataRow out;
    out.accession = f[0];
    if (out.accession.empty()) throw ParseError(row.line, "empty accession");
    if (!seen.insert(out.accession).second) {
      throw ParseError(row.line, "duplicate accession '" + out.accession + "'");
    }
    auto label = parse_label(f[1]);
    if (!label) throw ParseError(row.line, "unknown label token '" + f[1] + "'");
    out.label = *label;
    out.length = parse_int<std::size_t>(f[2], row.line, "length");
    out.source = f[3];
    if (!f[4].empty()) out.cluster_id = parse_int<std::int64_t>(f[4], row.line, "cluster_id");
    out.split_random = parse_split_cell(f[5], row.line, "split_random");
    out.split_cluster = parse_split_cell(f[6], row.line, "split_cluster");
    rows.push_back(std::move(out));
  }
  return rows;
}

std::vector<MetadataRow> read_metadata_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open metadata CSV '" + path + "'");
  return read_metadata_csv(in);
}

void write_metadata_csv(std::ostream& out, const std::vector<MetadataRow>& rows) {
  out << kMetadataHeader << '\n';
  std::unordered_set<std::string_view> seen;
  for (const auto& row : rows) {
    if (!seen.insert(row.accession).second) {
      throw Error("duplicate_accession", "duplicate accession '" + row.accession + "'");
    }
    csv::write_row(out, {row.accession, std::string(to_string(row.label)),
                         std::to_string(row.length), row.source,
                         row.cluster_id ? std::to_string(*row.cluster_id) : "",
                         row.split_random ? std::string(to_string(*row.split_random)) : "",
                         row.split_cluster ? std::string(to_string(*row.split_cluster)) : ""});
  }
}

void write_metadata_csv(const std::string& path, const std::vector<MetadataRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write metadata CSV '" + path + "'");
  write_metadata_csv(out, rows);
}

MetadataRow metadata_of(const SequenceRecord& record) {
  MetadataRow row;
  row.accession = record.accession;
  row.label = record.label;
  row.length = record.length();
  row.source = record.source;
  return row;
}

std::map<std::string, Superkingdom> read_taxonomy_csv(const std::string& path) {
  const csv::Table table = csv::read_file(path);
  const std::size_t acc_col = table.column("accession");
  const std::size_t sk_col = table.column("superkingdom");
  std::map<std::string, Superkingdom> out;
  for (const auto& row : table.rows) {
    auto sk = parse_superkingdom(row.fields[sk_col]);
    if (!sk) throw ParseError(row.line, "unknown superkingdom '" + row.fields[sk_col] + "'");
    out[row.fields[acc_col]] = *sk;
  }
  return out;
}

void write_taxonomy_csv(const std::string& path, const std::vector<SequenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write taxonomy CSV '" + path + "'");
  out << "accession,superkingdom\n";
  for (const auto& rec : records) {
    if (!rec.superkingdom) continue;
    csv::write_row(out, {rec.accession, std::string(to_string(*rec.superkingdom))});
  }
}

// ---------------------------------------------------------------------------

std::vector<SequenceRecord> ingest(const std::vector<fasta::Record>& entries,
                                   const std::vector<MetadataRow>* metadata,
                                   const std::map<std::string, Superkingdom>* taxonomy) {
  std::unordered_map<std::string, const fasta::Record*> by_accession;
  std::vector<std::string> order;
  for (const auto& entry : entries) {
    std::string acc = fasta::accession_of(entry.header);
    if (acc.empty()) throw Error("ingest", "FASTA record with empty accession");
    if (!by_accession.emplace(acc, &entry).second) {
      throw Error("duplicate_accession", "duplicate FASTA accession '" + acc + "'");
    }
    order.push_back(std::move(acc));
  }

  auto apply_tags = [](SequenceRecord& rec, const std::map<std::string, std::string>& tags) {
    if (auto it = tags.find("superkingdom"); it != tags.end()) {
      rec.superkingdom = parse_superkingdom(it->second);
    }
    if (auto it = tags.find("viral"); it != tags.end()) {
      rec.viral = it->second == "1" || it->second == "true" || it->second == "yes";
    }
  };

  std::vector<SequenceRecord> records;
  if (metadata) {
    records.reserve(metadata->size());
    for (const auto& row : *metadata) {
      auto it = by_accession.find(row.accession);
      if (it == by_accession.end()) {
        throw Error("ingest", "no sequence for accession '" + row.accession + "'");
      }
      SequenceRecord rec;
      rec.accession = row.accession;
      rec.residues = it->second->residues;
      rec.label = row.label;
      rec.source = row.source;
      apply_tags(rec, fasta::header_tags(it->second->header));
      records.push_back(std::move(rec));
    }
  } else {
    records.reserve(order.size());
    for (const auto& acc : order) {
      const auto& entry = *by_accession.at(acc);
      const auto tags = fasta::header_tags(entry.header);
      auto label_it = tags.find("label");
      if (label_it == tags.end()) {
        throw Error("ingest", "record '" + acc + "' has no label (no metadata and no label= tag)");
      }
      auto label = parse_label(label_it->second);
      if (!label) throw Error("ingest", "record '" + acc + "': unknown label '" + label_it->second + "'");
      SequenceRecord rec;
      rec.accession = acc;
      rec.residues = entry.residues;
      rec.label = *label;
      if (auto it = tags.find("source"); it != tags.end()) rec.source = it->second;
      apply_tags(rec, tags);
      records.push_back(std::move(rec));
    }
  }
  if (taxonomy) {
    for (auto& rec : records) {
      if (auto it = taxonomy->find(rec.accession); it != taxonomy->end()) {
        rec.superkingdom = it->second;
      }
    }
  }
  return records;
}

std::vector<fasta::Record> to_fasta(const std::vector<SequenceRecord>& records) {
  std::vector<fasta::Record> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    std::string header = rec.accession + " label=" + std::string(to_string(rec.label));
    if (!rec.source.empty()) header += " source=" + rec.source;
    if (rec.superkingdom) header += " superkingdom=" + std::string(to_string(*rec.superkingdom));
    if (rec.viral) header += " viral=1";
    out.push_back({std::move(header), rec.residues});
  }
  return out;
}

// ---------------------------------------------------------------------------

ResidueLeakScanner::ResidueLeakScanner(const std::vector<SequenceRecord>& records,
                                       std::size_t window)
    : window_(window) {
  if (window_ == 0) throw Error("config", "leak window must be positive");
  sources_.reserve(records.size());
  for (const auto& rec : records) sources_.emplace_back(rec.accession, rec.residues);
  for (std::size_t r = 0; r < sources_.size(); ++r) {
    const std::string_view res = sources_[r].second;
    for (std::size_t i = 0; i + window_ <= res.size(); ++i) {
      windows_.try_emplace(res.substr(i, window_), r);
    }
  }
}

std::vector<LeakHit> ResidueLeakScanner::scan(std::string_view artifact_name,
                                              std::string_view text) const {
  std::vector<LeakHit> hits;
  std::string upper(text);
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  const std::string_view view = upper;
  for (std::size_t i = 0; i + window_ <= view.size(); ++i) {
    auto it = windows_.find(view.substr(i, window_));
    if (it != windows_.end()) {
      hits.push_back({std::string(artifact_name), i, sources_[it->second].first});
    }
  }
  return hits;
}

std::vector<LeakHit> ResidueLeakScanner::scan_file(const std::string& path) const {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open artifact '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scan(path, buffer.str());
}

}  // namespace seqscreen::corpus
