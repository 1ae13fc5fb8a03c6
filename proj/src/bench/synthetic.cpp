#include "seqscreen/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "seqscreen/features.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::synthetic {
namespace {

using Weights = std::array<double, features::kAlphabetSize>;

char draw(Rng& rng, const Weights& w, double total) {
  double u = rng.uniform() * total;
  for (std::size_t c = 0; c < w.size(); ++c) {
    u -= w[c];
    if (u < 0) return features::kAlphabet[c];
  }
  return features::kAlphabet[w.size() - 1];
}

std::size_t draw_length(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.below(hi - lo + 1);
}

}  // namespace

std::string_view to_string(MotifKind kind) {
  switch (kind) {
    case MotifKind::kComposition: return "composition";
    case MotifKind::kDipeptide: return "dipeptide";
    case MotifKind::kLength: break;
  }
  return "length";
}

std::optional<MotifKind> parse_motif_kind(std::string_view token) {
  if (token == "composition") return MotifKind::kComposition;
  if (token == "dipeptide") return MotifKind::kDipeptide;
  if (token == "length") return MotifKind::kLength;
  return std::nullopt;
}

void Spec::validate() const {
  if (n_families < 2) throw Error("config", "need at least two families");
  if (family_size < 1) throw Error("config", "family_size must be positive");
  if (min_length < 2 || min_length > max_length) throw Error("config", "bad length range");
  if (!(family_identity > 0.0 && family_identity <= 1.0)) throw Error("config", "family_identity must be in (0, 1]");
  if (!(signal >= 0.0 && signal <= 1.0)) throw Error("config", "signal must be in [0, 1]");
  if (!(family_jitter >= 0.0)) throw Error("config", "family_jitter must be non-negative");
  if (!(hazard_fraction > 0.0 && hazard_fraction < 1.0)) throw Error("config", "hazard_fraction must be in (0, 1)");
  if (n_families * family_size > 99999) throw Error("config", "corpus too large for SYN accessions");
}

std::vector<std::pair<char, char>> dipeptide_motifs(std::size_t count) {
  const auto& w = features::default_scales().instability;
  struct Pair {
    double gap;
    std::size_t a, b;
  };
  std::vector<Pair> pairs;
  for (std::size_t a = 0; a < features::kAlphabetSize; ++a) {
    for (std::size_t b = 0; b < features::kAlphabetSize; ++b) {
      if (a != b) pairs.push_back({w[a][b] - w[b][a], a, b});
    }
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.gap > y.gap; });
  std::vector<std::pair<char, char>> out;
  std::vector<bool> used(features::kAlphabetSize, false);
  // distinct residues across motifs so reversed pairs never form a forward motif
  for (const auto& p : pairs) {
    if (out.size() == count) break;
    if (used[p.a] || used[p.b]) continue;
    used[p.a] = used[p.b] = true;
    out.emplace_back(features::kAlphabet[p.a], features::kAlphabet[p.b]);
  }
  return out;
}

Corpus generate(const Spec& spec) {
  spec.validate();
  const std::size_t n_hazard = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.hazard_fraction * static_cast<double>(spec.n_families))), 1,
      spec.n_families - 1);
  std::vector<int> family_label(spec.n_families, 0);
  std::fill(family_label.begin(), family_label.begin() + static_cast<std::ptrdiff_t>(n_hazard), 1);
  Rng master(spec.seed);
  master.shuffle(std::span<int>(family_label));

  const auto motifs = dipeptide_motifs();
  const std::size_t range = spec.max_length - spec.min_length;
  const auto shift = static_cast<std::size_t>(std::floor(spec.signal * static_cast<double>(range) / 2.0));
  static constexpr std::string_view kCharged = "KRED";

  struct Draft {
    std::string residues;
    int label;
    std::size_t family;
  };
  std::vector<Draft> drafts;
  const corpus::Superkingdom benign_kingdoms[] = {corpus::Superkingdom::kBacteria,
                                                  corpus::Superkingdom::kEukaryota,
                                                  corpus::Superkingdom::kArchaea};
  std::vector<corpus::Superkingdom> kingdom(spec.n_families);
  std::size_t benign_seen = 0;
  for (std::size_t f = 0; f < spec.n_families; ++f) {
    Rng rng(derive_seed(spec.seed, f));
    const int label = family_label[f];
    kingdom[f] = label ? corpus::Superkingdom::kBacteria : benign_kingdoms[benign_seen++ % 3];

    Weights w;
    w.fill(1.0);
    if (spec.motif == MotifKind::kComposition && label) {
      for (char c : kCharged) w[static_cast<std::size_t>(features::residue_index(c))] *= 1.0 + spec.signal;
    }
    if (spec.family_jitter > 0) {
      for (auto& v : w) v *= std::exp(spec.family_jitter * rng.normal());
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);

    std::size_t lo = spec.min_length, hi = spec.max_length;
    if (spec.motif == MotifKind::kLength) {
      if (label) lo += shift;
      else hi -= shift;
    }
    const std::size_t len = draw_length(rng, lo, hi);
    std::string ancestor;
    while (ancestor.size() < len) {
      if (spec.motif == MotifKind::kDipeptide && ancestor.size() + 2 <= len && rng.uniform() < 0.15 * spec.signal) {
        const auto [a, b] = motifs[rng.below(motifs.size())];
        ancestor += label ? a : b;
        ancestor += label ? b : a;
      } else {
        ancestor += draw(rng, w, total);
      }
    }
    const double rate = 1.0 - spec.family_identity;
    for (std::size_t m = 0; m < spec.family_size; ++m) {
      std::string member = ancestor;
      for (auto& c : member) {
        if (rng.uniform() < rate) c = draw(rng, w, total);
      }
      drafts.push_back({std::move(member), label, f});
    }
  }

  // accession numbers are assigned in a shuffled order so they carry no family information
  std::vector<std::size_t> order(drafts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  master.shuffle(std::span<std::size_t>(order));
  Corpus out;
  out.records.resize(drafts.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& d = drafts[order[k]];
    char acc[32];
    std::snprintf(acc, sizeof acc, "SYN%05zu", k);
    auto& r = out.records[k];
    r.accession = acc;
    r.residues = d.residues;
    r.label = d.label ? Label::kHazard : Label::kBenign;
    r.source = d.label ? "synthetic_hazard" : "synthetic_benign";
    r.superkingdom = kingdom[d.family];
    out.family_of[r.accession] = static_cast<std::int64_t>(d.family);
  }
  return out;
}

double adjusted_rand_index(const std::map<std::string, std::int64_t>& a,
                           const std::map<std::string, std::int64_t>& b) {
  if (a.size() != b.size()) throw Error("shape", "labelings cover different key sets");
  std::map<std::pair<std::int64_t, std::int64_t>, double> table;
  std::map<std::int64_t, double> rows, cols;
  auto ib = b.begin();
  for (const auto& [key, la] : a) {
    if (ib->first != key) throw Error("shape", "labelings cover different key sets");
    table[{la, ib->second}] += 1;
    rows[la] += 1;
    cols[ib->second] += 1;
    ++ib;
  }
  const auto pairs = [](double n) { return n * (n - 1) / 2; };
  double index = 0, sum_rows = 0, sum_cols = 0;
  for (const auto& [k, n] : table) index += pairs(n);
  for (const auto& [k, n] : rows) sum_rows += pairs(n);
  for (const auto& [k, n] : cols) sum_cols += pairs(n);
  const double total = pairs(static_cast<double>(a.size()));
  if (total == 0) return 1.0;
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;  // both trivial partitions
  return (index - expected) / (max_index - expected);
}

}  // namespace seqscreen::synthetic
