#include "seqscreen/features.hpp"

#include <cmath>
#include <cstdio>
#include <span>
#include <ostream>

#include "seqscreen/csv.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::features {
namespace {

ResidueScales make_default_scales() {
  ResidueScales s;
  //              A     C     D     E     F     G     H     I     K     L
  //              M     N     P     Q     R     S     T     V     W     Y
  s.hydropathy = {1.8,  2.5,  -3.5, -3.5, 2.8,  -0.4, -3.2, 4.5,  -3.9, 3.8,
                  1.9,  -3.5, -1.6, -3.5, -4.5, -0.8, -0.7, 4.2,  -0.9, -1.3};
  s.avg_mass = {71.0788,  103.1388, 115.0886, 129.1155, 147.1766, 57.0519,  137.1411,
                113.1594, 128.1741, 113.1594, 131.1926, 114.1038, 97.1167,  128.1307,
                156.1875, 87.0782,  101.1051, 99.1326,  186.2132, 163.1760};
  s.instability = {{
    /* A */ {1.0, 44.94, -7.49, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0},
    /* C */ {1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 33.6, 1.0, 1.0, 20.26, 33.6, 1.0, 20.26, -6.54, 1.0, 1.0, 33.6, -6.54, 24.68, 1.0},
    /* D */ {1.0, 1.0, 1.0, 1.0, -6.54, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, -6.54, 20.26, -14.03, 1.0, 1.0, 1.0},
    /* E */ {1.0, 44.94, 20.26, 33.6, 1.0, 1.0, -6.54, 20.26, 1.0, 1.0, 1.0, 1.0, 20.26, 20.26, 1.0, 20.26, 1.0, 1.0, -14.03, 1.0},
    /* F */ {1.0, 1.0, 13.34, 1.0, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 33.601},
    /* G */ {-7.49, 1.0, 1.0, -6.54, 1.0, 13.34, 1.0, -7.49, -7.49, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 13.34, -7.49},
    /* H */ {1.0, 1.0, 1.0, 1.0, -9.37, -9.37, 1.0, 44.94, 24.68, 1.0, 1.0, 24.68, -1.88, 1.0, 1.0, 1.0, -6.54, 1.0, -1.88, 44.94},
    /* I */ {1.0, 1.0, 1.0, 44.94, 1.0, 1.0, 13.34, 1.0, -7.49, 20.26, 1.0, 1.0, -1.88, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0},
    /* K */ {1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, -7.49, 1.0, -7.49, 33.6, 1.0, -6.54, 24.64, 33.6, 1.0, 1.0, -7.49, 1.0, 1.0},
    /* L */ {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, 1.0, 20.26, 33.6, 20.26, 1.0, 1.0, 1.0, 24.68, 1.0},
    /* M */ {13.34, 1.0, 1.0, 1.0, 1.0, 1.0, 58.28, 1.0, 1.0, 1.0, -1.88, 1.0, 44.94, -6.54, -6.54, 44.94, -1.88, 1.0, 1.0, 24.68},
    /* N */ {1.0, -1.88, 1.0, 1.0, -14.03, -14.03, 1.0, 44.94, 24.68, 1.0, 1.0, 1.0, -1.88, -6.54, 1.0, 1.0, -7.49, 1.0, -9.37, 1.0},
    /* P */ {20.26, -6.54, -6.54, 18.38, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, -6.54, 1.0, 20.26, 20.26, -6.54, 20.26, 1.0, 20.26, -1.88, 1.0},
    /* Q */ {1.0, -6.54, 20.26, 20.26, -6.54, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 20.26, 20.26, 1.0, 44.94, 1.0, -6.54, 1.0, -6.54},
    /* R */ {1.0, 1.0, 1.0, 1.0, 1.0, -7.49, 20.26, 1.0, 1.0, 1.0, 1.0, 13.34, 20.26, 20.26, 58.28, 44.94, 1.0, 1.0, 58.28, -6.54},
    /* S */ {1.0, 33.6, 1.0, 20.26, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 44.94, 20.26, 20.26, 20.26, 1.0, 1.0, 1.0, 1.0},
    /* T */ {1.0, 1.0, 1.0, 20.26, 13.34, -7.49, 1.0, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0, -6.54, 1.0, 1.0, 1.0, 1.0, -14.03, 1.0},
    /* V */ {1.0, 1.0, -14.03, 1.0, 1.0, -7.49, 1.0, 1.0, -1.88, 1.0, 1.0, 1.0, 20.26, 1.0, 1.0, 1.0, -7.49, 1.0, 1.0, -6.54},
    /* W */ {-14.03, 1.0, 1.0, 1.0, 1.0, -9.37, 24.68, 1.0, 1.0, 13.34, 24.68, 13.34, 1.0, 1.0, 1.0, 1.0, -14.03, -7.49, 1.0, 1.0},
    /* Y */ {24.68, 1.0, 24.68, -6.54, 1.0, -7.49, 13.34, 1.0, 1.0, 1.0, 44.94, 1.0, 13.34, 1.0, -15.91, 1.0, -7.49, 1.0, -9.37, 13.34}
  }};
  return s;
}

void require_valid(std::string_view residues) {
  if (residues.empty()) throw Error("empty", "empty sequence");
}

double fraction(const Counts& counts, char residue, std::size_t length) {
  return static_cast<double>(counts[static_cast<std::size_t>(residue_index(residue))]) /
         static_cast<double>(length);
}

// Henderson-Hasselbalch sum from residue counts.
double charge_from_counts(const Counts& counts, double ph, const PkaSet& pka) {
  auto positive = [ph](double n, double pk) { return n / (1.0 + std::pow(10.0, ph - pk)); };
  auto negative = [ph](double n, double pk) { return -n / (1.0 + std::pow(10.0, pk - ph)); };
  auto n = [&counts](char r) {
    return static_cast<double>(counts[static_cast<std::size_t>(residue_index(r))]);
  };
  double charge = positive(1.0, pka.n_term);
  charge += positive(n('K'), pka.lys);
  charge += positive(n('R'), pka.arg);
  charge += positive(n('H'), pka.his);
  charge += negative(1.0, pka.c_term);
  charge += negative(n('D'), pka.asp);
  charge += negative(n('E'), pka.glu);
  charge += negative(n('C'), pka.cys);
  charge += negative(n('Y'), pka.tyr);
  return charge;
}

double pi_from_counts(const Counts& counts, const PkaSet& pka) {
  double lo = 0.0;
  double hi = 14.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double charge = charge_from_counts(counts, mid, pka);
    // Near the pI of peptides without ionizable side chains the charge curve
    // is nearly flat, so |charge| alone would stop far from the root.
    if (hi - lo < 1e-4) return mid;
    if (charge > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

int residue_index(char residue) {
  const auto pos = kAlphabet.find(residue);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

Counts count_residues(std::string_view residues) {
  require_valid(residues);
  Counts counts{};
  for (char c : residues) {
    const int idx = residue_index(c);
    if (idx < 0) throw Error("alphabet", std::string("non-canonical residue '") + c + "'");
    ++counts[static_cast<std::size_t>(idx)];
  }
  return counts;
}

const ResidueScales& default_scales() {
  static const ResidueScales scales = make_default_scales();
  return scales;
}

std::array<double, kAlphabetSize> composition(std::string_view residues) {
  const Counts counts = count_residues(residues);
  std::array<double, kAlphabetSize> out{};
  const auto length = static_cast<double>(residues.size());
  for (std::size_t i = 0; i < kAlphabetSize; ++i) out[i] = static_cast<double>(counts[i]) / length;
  return out;
}

double aliphatic_index(std::string_view residues) {
  const Counts counts = count_residues(residues);
  const std::size_t len = residues.size();
  return 100.0 * (fraction(counts, 'A', len) + 2.9 * fraction(counts, 'V', len) +
                  3.1 * fraction(counts, 'I', len) + 3.9 * fraction(counts, 'L', len));
}

double gravy(std::string_view residues, const ResidueScales& scales) {
  const Counts counts = count_residues(residues);
  double total = 0.0;
  for (std::size_t i = 0; i < kAlphabetSize; ++i) {
    total += static_cast<double>(counts[i]) * scales.hydropathy[i];
  }
  return total / static_cast<double>(residues.size());
}

double aromaticity(std::string_view residues) {
  const Counts counts = count_residues(residues);
  const auto n = [&counts](char r) { return counts[static_cast<std::size_t>(residue_index(r))]; };
  return static_cast<double>(n('F') + n('W') + n('Y')) / static_cast<double>(residues.size());
}

double molecular_weight(std::string_view residues, const ResidueScales& scales) {
  const Counts counts = count_residues(residues);
  double mass = scales.water_mass;
  for (std::size_t i = 0; i < kAlphabetSize; ++i) {
    mass += static_cast<double>(counts[i]) * scales.avg_mass[i];
  }
  return mass;
}

double net_charge(std::string_view residues, double ph, const ResidueScales& scales) {
  if (!(ph >= 0.0 && ph <= 14.0)) throw Error("domain", "pH must lie in [0, 14]");
  return charge_from_counts(count_residues(residues), ph, scales.pka);
}

double isoelectric_point(std::string_view residues, const ResidueScales& scales) {
  return pi_from_counts(count_residues(residues), scales.pka);
}

double instability_index(std::string_view residues, const ResidueScales& scales) {
  count_residues(residues);
  if (residues.size() < 2) throw Error("domain", "instability index needs a dipeptide");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < residues.size(); ++i) {
    const auto a = static_cast<std::size_t>(residue_index(residues[i]));
    const auto b = static_cast<std::size_t>(residue_index(residues[i + 1]));
    total += scales.instability[a][b];
  }
  return 10.0 / static_cast<double>(residues.size()) * total;
}

std::string_view to_string(FeatureSet set) {
  switch (set) {
    case FeatureSet::kBase: return "base";
    case FeatureSet::kLengthOnly: return "length_only";
    case FeatureSet::kCompositionOnly: break;
  }
  return "composition_only";
}

std::optional<FeatureSet> parse_feature_set(std::string_view token) {
  if (token == "base") return FeatureSet::kBase;
  if (token == "length_only") return FeatureSet::kLengthOnly;
  if (token == "composition_only") return FeatureSet::kCompositionOnly;
  return std::nullopt;
}

const std::vector<std::string>& feature_names(FeatureSet set) {
  static const std::vector<std::string> composition_names = [] {
    std::vector<std::string> names;
    for (char c : kAlphabet) names.push_back(std::string("comp_") + c);
    return names;
  }();
  static const std::vector<std::string> base_names = [] {
    std::vector<std::string> names = composition_names;
    for (const char* n : {"length", "mol_weight", "pI", "gravy", "aromaticity", "instability",
                          "aliphatic", "net_charge_pH7"}) {
      names.emplace_back(n);
    }
    return names;
  }();
  static const std::vector<std::string> length_names = {"length"};
  switch (set) {
    case FeatureSet::kBase: return base_names;
    case FeatureSet::kLengthOnly: return length_names;
    case FeatureSet::kCompositionOnly: break;
  }
  return composition_names;
}

FeatureVector featurize(const corpus::SequenceRecord& record, FeatureSet set,
                        const ResidueScales& scales) {
  FeatureVector fv;
  fv.accession = record.accession;
  fv.set = set;
  fv.names = feature_names(set);
  const std::string_view res = record.residues;
  if (set == FeatureSet::kLengthOnly) {
    require_valid(res);
    fv.values = {static_cast<double>(res.size())};
    return fv;
  }
  const auto comp = composition(res);
  fv.values.assign(comp.begin(), comp.end());
  if (set == FeatureSet::kCompositionOnly) return fv;

  fv.values.push_back(static_cast<double>(res.size()));
  fv.values.push_back(molecular_weight(res, scales));
  fv.values.push_back(isoelectric_point(res, scales));
  fv.values.push_back(gravy(res, scales));
  fv.values.push_back(aromaticity(res));
  fv.values.push_back(instability_index(res, scales));
  fv.values.push_back(aliphatic_index(res));
  fv.values.push_back(net_charge(res, 7.0, scales));
  return fv;
}

FeatureMatrix featurize_all(const std::vector<corpus::SequenceRecord>& records, FeatureSet set,
                            const ResidueScales& scales) {
  FeatureMatrix m;
  m.set = set;
  m.names = feature_names(set);
  m.accessions.resize(records.size());
  m.rows.resize(records.size());
  parallel::for_each_index(records.size(), [&](std::size_t i) {
    FeatureVector fv = featurize(records[i], set, scales);
    m.accessions[i] = std::move(fv.accession);
    m.rows[i] = std::move(fv.values);
  });
  return m;
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix) {
  std::vector<std::string> header = {"accession"};
  header.insert(header.end(), matrix.names.begin(), matrix.names.end());
  csv::write_row(out, header);
  char buf[64];
  for (std::size_t r = 0; r < matrix.rows.size(); ++r) {
    std::vector<std::string> row = {matrix.accessions[r]};
    for (double v : matrix.rows[r]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      row.emplace_back(buf);
    }
    csv::write_row(out, row);
  }
}

corpus::SequenceRecord shuffle_residues(const corpus::SequenceRecord& record,
                                        std::uint64_t global_seed) {
  corpus::SequenceRecord out = record;
  Rng rng(stable_hash(record.accession) ^ global_seed);
  rng.shuffle(std::span<char>(out.residues.data(), out.residues.size()));
  return out;
}

}  // namespace seqscreen::features
