#include "seqscreen/homology.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "seqscreen/csv.hpp"
#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen::homology {
namespace {

constexpr std::size_t kSymbolClasses = 21;  // 20 canonical + "other"

std::array<std::uint8_t, 256> make_symbol_table() {
  std::array<std::uint8_t, 256> table{};
  table.fill(20);
  for (std::size_t i = 0; i < corpus::kCanonicalAlphabet.size(); ++i) {
    table[static_cast<unsigned char>(corpus::kCanonicalAlphabet[i])] = static_cast<std::uint8_t>(i);
  }
  return table;
}

const std::array<std::uint8_t, 256> kSymbol = make_symbol_table();

inline std::uint8_t symbol(char c) { return kSymbol[static_cast<unsigned char>(c)]; }

}  // namespace

std::string_view to_string(IdentityNorm norm) {
  return norm == IdentityNorm::kMinLength ? "min" : "max";
}

std::optional<IdentityNorm> parse_identity_norm(std::string_view token) {
  if (token == "min") return IdentityNorm::kMinLength;
  if (token == "max") return IdentityNorm::kMaxLength;
  return std::nullopt;
}

LcsIndex::LcsIndex(std::string_view sequence)
    : length_(sequence.size()), words_((sequence.size() + 63) / 64) {
  masks_.assign(kSymbolClasses * words_, 0);
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const std::uint8_t s = symbol(sequence[i]);
    if (s == 20) continue;  // non-canonical symbols never match
    masks_[s * words_ + i / 64] |= std::uint64_t{1} << (i % 64);
  }
}

std::size_t LcsIndex::lcs_with(std::string_view other) const {
  if (length_ == 0 || other.empty()) return 0;
  std::vector<std::uint64_t> v(words_, ~std::uint64_t{0});
  for (char c : other) {
    const std::uint8_t s = symbol(c);
    if (s == 20) continue;
    const std::uint64_t* m = &masks_[s * words_];
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < words_; ++w) {
      const std::uint64_t old = v[w];
      const std::uint64_t u = old & m[w];
      const std::uint64_t sum1 = old + u;
      const std::uint64_t c1 = sum1 < old ? 1 : 0;
      const std::uint64_t sum2 = sum1 + carry;
      const std::uint64_t c2 = sum2 < sum1 ? 1 : 0;
      carry = c1 | c2;
      v[w] = sum2 | (old & ~m[w]);
    }
  }
  std::size_t ones = 0;
  for (std::size_t w = 0; w + 1 < words_; ++w) ones += static_cast<std::size_t>(std::popcount(v[w]));
  const std::size_t tail_bits = length_ - 64 * (words_ - 1);
  const std::uint64_t tail_mask =
      tail_bits == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << tail_bits) - 1);
  ones += static_cast<std::size_t>(std::popcount(v[words_ - 1] & tail_mask));
  return length_ - ones;
}

std::size_t lcs_length(std::string_view a, std::string_view b) {
  // Pattern on the longer side keeps the outer loop short.
  if (a.size() < b.size()) std::swap(a, b);
  return LcsIndex(a).lcs_with(b);
}

double identity_from_lcs(std::size_t lcs, std::size_t len_a, std::size_t len_b,
                         IdentityNorm norm) {
  const std::size_t denom =
      norm == IdentityNorm::kMinLength ? std::min(len_a, len_b) : std::max(len_a, len_b);
  if (denom == 0) return 0.0;
  return static_cast<double>(lcs) / static_cast<double>(denom);
}

double identity(std::string_view a, std::string_view b, IdentityNorm norm) {
  return identity_from_lcs(lcs_length(a, b), a.size(), b.size(), norm);
}

// ---------------------------------------------------------------------------

KmerProfile make_profile(std::string_view sequence, int k) {
  if (k < 1 || k > 6) throw Error("config", "k-mer size must be in [1, 6]");
  KmerProfile p;
  p.k = k;
  p.length = sequence.size();
  for (char c : sequence) ++p.counts[symbol(c)];
  if (sequence.size() >= static_cast<std::size_t>(k)) {
    p.kmers.reserve(sequence.size() - static_cast<std::size_t>(k) + 1);
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= sequence.size(); ++i) {
      std::uint32_t code = 0;
      bool valid = true;
      for (int j = 0; j < k; ++j) {
        const std::uint8_t s = symbol(sequence[i + static_cast<std::size_t>(j)]);
        if (s == 20) valid = false;
        code = code * kSymbolClasses + s;
      }
      if (valid) p.kmers.push_back(code);
    }
    std::sort(p.kmers.begin(), p.kmers.end());
  }
  return p;
}

std::size_t lcs_upper_bound(const KmerProfile& a, const KmerProfile& b) {
  if (a.k != b.k) throw Error("config", "profiles built with different k");
  std::size_t composition_bound = 0;
  for (std::size_t s = 0; s < 20; ++s) composition_bound += std::min(a.counts[s], b.counts[s]);
  std::size_t bound = std::min({composition_bound, a.length, b.length});
  if (a.k >= 2) {
    std::size_t shared = 0;
    auto ia = a.kmers.begin();
    auto ib = b.kmers.begin();
    while (ia != a.kmers.end() && ib != b.kmers.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++shared;
        ++ia;
        ++ib;
      }
    }
    const auto k = static_cast<std::size_t>(a.k);
    const std::size_t kmer_bound = (shared + (k - 1) * (a.length + b.length + 1)) / (2 * k - 1);
    bound = std::min(bound, kmer_bound);
  }
  return bound;
}

PrefilterVerdict kmer_prefilter(const KmerProfile& a, const KmerProfile& b, double threshold,
                                IdentityNorm norm) {
  const double best = identity_from_lcs(lcs_upper_bound(a, b), a.length, b.length, norm);
  return best < threshold ? PrefilterVerdict::kReject : PrefilterVerdict::kMaybe;
}

PrefilterVerdict kmer_prefilter(std::string_view a, std::string_view b, int k, double threshold,
                                IdentityNorm norm) {
  return kmer_prefilter(make_profile(a, k), make_profile(b, k), threshold, norm);
}

// ---------------------------------------------------------------------------

std::map<std::string, std::int64_t> ClusterTable::assignments() const {
  std::map<std::string, std::int64_t> out;
  for (const auto& c : clusters) {
    for (const auto& m : c.members) out[m] = c.id;
  }
  return out;
}

std::size_t ClusterTable::member_count() const {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.members.size();
  return n;
}

ClusterTable greedy_cluster(const std::vector<corpus::SequenceRecord>& records,
                            const ClusterOptions& options, ClusterStats* stats) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0)) {
    throw Error("config", "identity threshold must lie in (0, 1]");
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (records[x].length() != records[y].length()) return records[x].length() > records[y].length();
    return records[x].accession < records[y].accession;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (records[order[i]].accession == records[order[i - 1]].accession) {
      throw Error("duplicate_accession", "duplicate accession '" + records[order[i]].accession + "'");
    }
  }

  struct Rep {
    std::size_t record;
    LcsIndex index;
    KmerProfile profile;
  };
  std::vector<Rep> reps;
  ClusterTable table;
  table.threshold = options.threshold;
  const std::size_t block = std::max<std::size_t>(16, 8 * parallel::max_threads());
  ClusterStats local;

  for (std::size_t idx : order) {
    const auto& rec = records[idx];
    const KmerProfile profile = make_profile(rec.residues, options.kmer);
    std::optional<std::size_t> hit;
    for (std::size_t start = 0; start < reps.size() && !hit; start += block) {
      const std::size_t end = std::min(reps.size(), start + block);
      // 0 = not similar, 1 = similar, 2 = rejected by prefilter
      std::vector<std::uint8_t> verdict(end - start, 0);
      parallel::for_each_index(end - start, [&](std::size_t j) {
        const Rep& rep = reps[start + j];
        if (options.use_prefilter &&
            kmer_prefilter(rep.profile, profile, options.threshold, options.norm) ==
                PrefilterVerdict::kReject) {
          verdict[j] = 2;
          return;
        }
        const std::size_t lcs = rep.index.lcs_with(rec.residues);
        const double id =
            identity_from_lcs(lcs, rep.index.size(), rec.residues.size(), options.norm);
        verdict[j] = id >= options.threshold ? 1 : 0;
      });
      for (std::size_t j = 0; j < verdict.size(); ++j) {
        if (verdict[j] == 2) {
          ++local.prefilter_rejections;
          continue;
        }
        ++local.identity_evaluations;
        if (verdict[j] == 1) {
          hit = start + j;
          break;
        }
      }
    }
    if (hit) {
      table.clusters[*hit].members.push_back(rec.accession);
    } else {
      Cluster c;
      c.id = static_cast<std::int64_t>(table.clusters.size());
      c.representative = rec.accession;
      c.members.push_back(rec.accession);
      table.clusters.push_back(std::move(c));
      reps.push_back({idx, LcsIndex(rec.residues), profile});
    }
  }
  if (stats) *stats = local;
  return table;
}

std::vector<std::string> verify_cluster_table(const ClusterTable& table,
                                              const std::vector<corpus::SequenceRecord>& records,
                                              IdentityNorm norm) {
  std::vector<std::string> problems;
  std::map<std::string, const corpus::SequenceRecord*> by_acc;
  for (const auto& r : records) by_acc[r.accession] = &r;
  std::map<std::string, std::size_t> seen;
  for (const auto& c : table.clusters) {
    for (const auto& m : c.members) ++seen[m];
  }
  for (const auto& [acc, rec] : by_acc) {
    const auto it = seen.find(acc);
    if (it == seen.end()) problems.push_back(acc + " is in no cluster");
    else if (it->second != 1) problems.push_back(acc + " is in " + std::to_string(it->second) + " clusters");
  }
  for (const auto& [acc, n] : seen) {
    if (!by_acc.count(acc)) problems.push_back(acc + " is clustered but not in the corpus");
  }
  std::vector<const corpus::SequenceRecord*> reps;
  for (const auto& c : table.clusters) {
    auto rit = by_acc.find(c.representative);
    if (rit == by_acc.end()) continue;
    reps.push_back(rit->second);
    for (const auto& m : c.members) {
      if (m == c.representative) continue;
      auto mit = by_acc.find(m);
      if (mit == by_acc.end()) continue;
      const double id = identity(rit->second->residues, mit->second->residues, norm);
      if (!(id >= table.threshold)) {
        problems.push_back(m + " has identity " + std::to_string(id) + " with representative " +
                           c.representative);
      }
    }
  }
  std::vector<std::string> rep_problems(reps.size());
  parallel::for_each_index(reps.size(), [&](std::size_t i) {
    const LcsIndex index(reps[i]->residues);
    for (std::size_t j = i + 1; j < reps.size(); ++j) {
      const double id = identity_from_lcs(index.lcs_with(reps[j]->residues), reps[i]->length(),
                                          reps[j]->length(), norm);
      if (id >= table.threshold) {
        rep_problems[i] += "representatives " + reps[i]->accession + " and " + reps[j]->accession +
                           " have identity " + std::to_string(id) + "; ";
      }
    }
  });
  for (auto& p : rep_problems) {
    if (!p.empty()) problems.push_back(std::move(p));
  }
  return problems;
}

ClusterTable table_from_assignments(const std::map<std::string, std::int64_t>& assignments,
                                    double threshold) {
  std::map<std::int64_t, Cluster> by_id;
  for (const auto& [acc, id] : assignments) {
    auto& c = by_id[id];
    c.id = id;
    c.members.push_back(acc);  // map iteration is sorted by accession
  }
  ClusterTable table;
  table.threshold = threshold;
  for (auto& [id, c] : by_id) {
    c.representative = c.members.front();
    table.clusters.push_back(std::move(c));
  }
  return table;
}

void write_cluster_csv(std::ostream& out, const ClusterTable& table) {
  out << "accession,cluster_id,is_representative\n";
  for (const auto& c : table.clusters) {
    for (const auto& m : c.members) {
      csv::write_row(out, {m, std::to_string(c.id), m == c.representative ? "1" : "0"});
    }
  }
}

ClusterTable read_cluster_csv(std::istream& in, double threshold) {
  const csv::Table t = csv::read(in);
  const std::size_t acc_col = t.column("accession");
  const std::size_t id_col = t.column("cluster_id");
  const bool has_rep = t.has_column("is_representative");
  const std::size_t rep_col = has_rep ? t.column("is_representative") : 0;
  std::map<std::int64_t, Cluster> by_id;
  std::vector<std::int64_t> id_order;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    const std::string& acc = row.fields[acc_col];
    if (!seen.insert(acc).second) throw ParseError(row.line, "duplicate accession '" + acc + "'");
    std::int64_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoll(row.fields[id_col], &used);
      if (used != row.fields[id_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(row.line, "invalid cluster_id '" + row.fields[id_col] + "'");
    }
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) id_order.push_back(id);
    it->second.id = id;
    it->second.members.push_back(acc);
    if (has_rep && row.fields[rep_col] == "1") it->second.representative = acc;
  }
  ClusterTable table;
  table.threshold = threshold;
  for (std::int64_t id : id_order) {
    Cluster c = std::move(by_id[id]);
    if (c.representative.empty()) c.representative = *std::min_element(c.members.begin(), c.members.end());
    auto rep_it = std::find(c.members.begin(), c.members.end(), c.representative);
    std::rotate(c.members.begin(), rep_it, rep_it + 1);
    table.clusters.push_back(std::move(c));
  }
  return table;
}

// ---------------------------------------------------------------------------

std::optional<SplitSide> SplitSpec::side_of(const std::string& accession) const {
  if (std::binary_search(train.begin(), train.end(), accession)) return SplitSide::kTrain;
  if (std::binary_search(test.begin(), test.end(), accession)) return SplitSide::kTest;
  return std::nullopt;
}

std::uint64_t SplitSpec::fingerprint() const {
  std::string buf = "train\n";
  for (const auto& a : train) buf += a + "\n";
  buf += "test\n";
  for (const auto& a : test) buf += a + "\n";
  return stable_hash(buf);
}

std::vector<std::size_t> allocate_train_counts(const std::vector<std::size_t>& strata_sizes,
                                               double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw Error("config", "train_fraction must lie in [0, 1]");
  }
  std::size_t n = 0;
  for (std::size_t s : strata_sizes) n += s;
  std::vector<std::size_t> counts(strata_sizes.size(), 0);
  if (n == 0) return counts;

  double test_exact = (1.0 - train_fraction) * static_cast<double>(n);
  if (std::abs(test_exact - std::round(test_exact)) < 1e-9) test_exact = std::round(test_exact);
  const auto n_test = std::min(n, static_cast<std::size_t>(std::ceil(test_exact)));
  const std::size_t n_train = n - n_test;

  std::vector<double> remainders(strata_sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < strata_sizes.size(); ++i) {
    const double share = train_fraction * static_cast<double>(strata_sizes[i]);
    double floor_share = std::floor(share);
    if (share - floor_share > 1.0 - 1e-9) floor_share += 1.0;
    counts[i] = static_cast<std::size_t>(floor_share);
    remainders[i] = share - floor_share;
    assigned += counts[i];
  }
  std::vector<std::size_t> by_remainder(strata_sizes.size());
  for (std::size_t i = 0; i < by_remainder.size(); ++i) by_remainder[i] = i;
  std::stable_sort(by_remainder.begin(), by_remainder.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b] + 1e-12;
  });
  // sum of floors <= n_train <= sum of ceilings, so one pass tops up exactly
  for (std::size_t r = 0; assigned < n_train && r < by_remainder.size(); ++r) {
    const std::size_t i = by_remainder[r];
    if (counts[i] < strata_sizes[i]) {
      ++counts[i];
      ++assigned;
    }
  }
  if (train_fraction > 0.0) {
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (strata_sizes[i] > 0 && counts[i] == 0) counts[i] = 1;
    }
  }
  return counts;
}

std::map<std::int64_t, Label> majority_labels(const ClusterTable& table,
                                              const std::map<std::string, Label>& labels) {
  std::map<std::int64_t, Label> out;
  for (const auto& c : table.clusters) {
    std::size_t hazards = 0;
    for (const auto& m : c.members) {
      auto it = labels.find(m);
      if (it == labels.end()) throw Error("split", "unlabelled cluster member '" + m + "'");
      if (it->second == Label::kHazard) ++hazards;
    }
    out[c.id] = 2 * hazards >= c.members.size() ? Label::kHazard : Label::kBenign;
  }
  return out;
}

namespace {

// Strata are ordered hazard, benign; stratum i draws from derive_seed(seed, i).
template <typename Item>
std::vector<std::vector<Item>> choose_train(std::vector<std::vector<Item>> strata,
                                            double train_fraction, std::uint64_t seed,
                                            std::vector<std::vector<Item>>& test_out) {
  std::vector<std::size_t> sizes;
  for (const auto& s : strata) sizes.push_back(s.size());
  const auto train_counts = allocate_train_counts(sizes, train_fraction);
  std::vector<std::vector<Item>> train_out(strata.size());
  test_out.assign(strata.size(), {});
  for (std::size_t i = 0; i < strata.size(); ++i) {
    auto& items = strata[i];
    std::sort(items.begin(), items.end());
    Rng rng(derive_seed(seed, i));
    rng.shuffle(std::span<Item>(items));
    train_out[i].assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(train_counts[i]));
    test_out[i].assign(items.begin() + static_cast<std::ptrdiff_t>(train_counts[i]), items.end());
  }
  return train_out;
}

void check_fraction(double train_fraction) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw Error("config", "train_fraction must lie in [0, 1]");
  }
}

}  // namespace

SplitResult make_cluster_split(const ClusterTable& table,
                               const std::map<std::string, Label>& labels,
                               double train_fraction, std::uint64_t seed) {
  check_fraction(train_fraction);
  const auto majority = majority_labels(table, labels);
  std::vector<std::vector<std::int64_t>> strata(2);
  for (const auto& [id, label] : majority) strata[label == Label::kHazard ? 0 : 1].push_back(id);

  SplitResult result;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    if (strata[i].size() == 1 && train_fraction > 0.0 && train_fraction < 1.0) {
      result.warnings.push_back(std::string(i == 0 ? "hazard" : "benign") +
                                " stratum has a single cluster; it goes to train");
    }
  }
  std::vector<std::vector<std::int64_t>> test_ids;
  const auto train_ids = choose_train(strata, train_fraction, seed, test_ids);

  std::map<std::int64_t, const Cluster*> by_id;
  for (const auto& c : table.clusters) by_id[c.id] = &c;
  auto expand = [&](const std::vector<std::vector<std::int64_t>>& ids, std::vector<std::string>& out) {
    for (const auto& stratum : ids) {
      for (std::int64_t id : stratum) {
        const auto& members = by_id.at(id)->members;
        out.insert(out.end(), members.begin(), members.end());
      }
    }
    std::sort(out.begin(), out.end());
  };
  result.spec.protocol = SplitProtocol::kCluster;
  result.spec.seed = seed;
  result.spec.train_fraction = train_fraction;
  expand(train_ids, result.spec.train);
  expand(test_ids, result.spec.test);
  return result;
}

SplitResult make_random_split(const std::map<std::string, Label>& labels, double train_fraction,
                              std::uint64_t seed) {
  check_fraction(train_fraction);
  std::vector<std::vector<std::string>> strata(2);
  for (const auto& [acc, label] : labels) strata[label == Label::kHazard ? 0 : 1].push_back(acc);
  std::vector<std::vector<std::string>> test_accs;
  const auto train_accs = choose_train(strata, train_fraction, seed, test_accs);

  SplitResult result;
  result.spec.protocol = SplitProtocol::kRandom;
  result.spec.seed = seed;
  result.spec.train_fraction = train_fraction;
  for (const auto& s : train_accs) result.spec.train.insert(result.spec.train.end(), s.begin(), s.end());
  for (const auto& s : test_accs) result.spec.test.insert(result.spec.test.end(), s.begin(), s.end());
  std::sort(result.spec.train.begin(), result.spec.train.end());
  std::sort(result.spec.test.begin(), result.spec.test.end());
  return result;
}

SplitSpec split_from_metadata(const std::vector<corpus::MetadataRow>& rows,
                              SplitProtocol protocol) {
  SplitSpec spec;
  spec.protocol = protocol;
  for (const auto& row : rows) {
    const auto& side = protocol == SplitProtocol::kRandom ? row.split_random : row.split_cluster;
    if (!side) {
      throw Error("split", "metadata row '" + row.accession + "' has no " +
                               std::string(to_string(protocol)) + " split assignment");
    }
    (*side == SplitSide::kTrain ? spec.train : spec.test).push_back(row.accession);
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.test.begin(), spec.test.end());
  const double n = static_cast<double>(rows.size());
  spec.train_fraction = n > 0 ? static_cast<double>(spec.train.size()) / n : 0.0;
  return spec;
}

void write_split_csv(std::ostream& out, const SplitSpec& spec) {
  out << "accession,split\n";
  std::vector<std::pair<std::string, SplitSide>> rows;
  for (const auto& a : spec.train) rows.emplace_back(a, SplitSide::kTrain);
  for (const auto& a : spec.test) rows.emplace_back(a, SplitSide::kTest);
  std::sort(rows.begin(), rows.end());
  for (const auto& [acc, side] : rows) csv::write_row(out, {acc, std::string(to_string(side))});
}

SplitSpec read_split_csv(std::istream& in, SplitProtocol protocol) {
  const csv::Table t = csv::read(in);
  const std::size_t acc_col = t.column("accession");
  const std::size_t split_col = t.column("split");
  SplitSpec spec;
  spec.protocol = protocol;
  std::set<std::string> seen;
  for (const auto& row : t.rows) {
    const std::string& acc = row.fields[acc_col];
    if (!seen.insert(acc).second) throw ParseError(row.line, "duplicate accession '" + acc + "'");
    auto side = parse_split_side(row.fields[split_col]);
    if (!side) throw ParseError(row.line, "unknown split token '" + row.fields[split_col] + "'");
    (*side == SplitSide::kTrain ? spec.train : spec.test).push_back(acc);
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.test.begin(), spec.test.end());
  const double n = static_cast<double>(seen.size());
  spec.train_fraction = n > 0 ? static_cast<double>(spec.train.size()) / n : 0.0;
  return spec;
}

}  // namespace seqscreen::homology
