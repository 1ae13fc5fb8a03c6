#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "seqscreen/corpus.hpp"
#include "seqscreen/csv.hpp"
#include "seqscreen/fasta.hpp"
#include "seqscreen/fetch.hpp"
#include "test_util.hpp"

using namespace seqscreen;
using namespace seqscreen::corpus;
using testutil::make_record;
using testutil::random_protein;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("seqscreen_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parse_fasta") {
  std::istringstream in(">x\nACD\nEFG\n");
  auto recs = fasta::parse(in);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].header == "x");
  CHECK(recs[0].residues == "ACDEFG");

  std::istringstream empty("");
  CHECK(fasta::parse(empty).empty());

  std::istringstream crlf(">a desc  \r\nacd \r\n\r\n>b\r\nKL\r\n");
  recs = fasta::parse(crlf);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].header == "a desc");
  CHECK(recs[0].residues == "ACD");
  CHECK(recs[1].residues == "KL");

  std::istringstream bad("\nACD\n>x\n");
  try {
    fasta::parse(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("FASTA round trip of 1000 generated records preserves order and lengths") {
  Rng rng(1);
  std::vector<fasta::Record> recs;
  for (int i = 0; i < 1000; ++i) {
    recs.push_back({"r" + std::to_string(i), random_protein(rng, 1 + rng.below(400))});
  }
  std::stringstream ss;
  fasta::write(ss, recs);
  std::string line;
  std::size_t longest = 0;
  std::istringstream lines(ss.str());
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] != '>') longest = std::max(longest, line.size());
  }
  CHECK(longest == 60);
  const auto back = fasta::parse(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].header == recs[i].header);
    CHECK(back[i].residues.size() == recs[i].residues.size());
    CHECK(back[i].residues == recs[i].residues);
  }
}

TEST_CASE("accession_of and header tags") {
  CHECK(fasta::accession_of("sp|P69905|HBA_HUMAN Hemoglobin") == "P69905");
  CHECK(fasta::accession_of("ACC1 label=hazard") == "ACC1");
  auto tags = fasta::header_tags("ACC1 label=hazard source=x junk");
  CHECK(tags["label"] == "hazard");
  CHECK(tags["source"] == "x");
  CHECK(tags.count("junk") == 0);
}

TEST_CASE("csv quoting") {
  std::stringstream ss;
  csv::write_row(ss, {"a,b", "c\"d", "e"});
  CHECK(ss.str() == "\"a,b\",\"c\"\"d\",e\n");
  std::istringstream in("h1,h2,h3\n" + ss.str());
  auto t = csv::read(in);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].fields[0] == "a,b");
  CHECK(t.rows[0].fields[1] == "c\"d");
}

TEST_CASE("curate: length boundaries") {
  Rng rng(2);
  CurationConfig cfg;
  std::vector<SequenceRecord> recs = {make_record("short", random_protein(rng, 29)),
                                      make_record("lo", random_protein(rng, 30)),
                                      make_record("hi", random_protein(rng, 1000)),
                                      make_record("long", random_protein(rng, 1001))};
  auto r = curate(recs, cfg);
  REQUIRE(r.kept.size() == 2);
  CHECK(r.kept[0].accession == "lo");
  CHECK(r.kept[1].accession == "hi");
  CHECK(r.audit.too_short == 1);
  CHECK(r.audit.too_long == 1);
}

TEST_CASE("curate: dedup keeps smallest accession") {
  Rng rng(3);
  const auto s = random_protein(rng, 50);
  auto r = curate({make_record("B1", s), make_record("A1", s)}, {});
  REQUIRE(r.kept.size() == 1);
  CHECK(r.kept[0].accession == "A1");
  CHECK(r.audit.duplicates == 1);
}

TEST_CASE("curate: non-canonical, viral, empty, duplicate accession") {
  Rng rng(4);
  auto x = make_record("X", random_protein(rng, 40) + "X");
  auto v = make_record("V", random_protein(rng, 40));
  v.viral = true;
  auto r = curate({x, v, make_record("ok", random_protein(rng, 40))}, {});
  CHECK(r.kept.size() == 1);
  CHECK(r.audit.non_canonical == 1);
  CHECK(r.audit.viral == 1);
  CHECK_THROWS_WITH(curate({}, {}), "empty corpus");
  CHECK_THROWS(curate({make_record("d", random_protein(rng, 40)), make_record("d", random_protein(rng, 40))}, {}));
  CurationConfig bad;
  bad.max_len = 10;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("curate is idempotent") {
  Rng rng(5);
  std::vector<SequenceRecord> recs;
  for (int i = 0; i < 300; ++i) {
    std::string s = random_protein(rng, 10 + rng.below(1100));
    if (i % 17 == 0) s[0] = 'B';
    recs.push_back(make_record("R" + std::to_string(i), s));
    if (i % 13 == 0) recs.push_back(make_record("D" + std::to_string(i), s));
  }
  const auto once = curate(recs, {});
  const auto twice = curate(once.kept, {});
  REQUIRE(once.kept.size() == twice.kept.size());
  for (std::size_t i = 0; i < once.kept.size(); ++i) CHECK(once.kept[i].accession == twice.kept[i].accession);
  for (const auto& k : once.kept) {
    CHECK(is_canonical(k.residues));
    CHECK(k.length() >= 30);
    CHECK(k.length() <= 1000);
  }
}

TEST_CASE("quantile_edges follows numpy linear interpolation") {
  auto e = quantile_edges({1, 2, 3, 4}, 2);
  REQUIRE(e.size() == 3);
  CHECK(e[0] == 1.0);
  CHECK(e[1] == 2.5);
  CHECK(e[2] == 4.0);
  CHECK(bin_of(e, 4.0) == std::optional<std::size_t>(1));
  CHECK(bin_of(e, 2.5) == std::optional<std::size_t>(1));
  CHECK(bin_of(e, 2.4) == std::optional<std::size_t>(0));
  CHECK_FALSE(bin_of(e, 4.5).has_value());
}

TEST_CASE("length_match: single populated bin with shortfall") {
  Rng rng(6);
  std::vector<SequenceRecord> pos, neg;
  for (int i = 0; i < 100; ++i) pos.push_back(make_record("P" + std::to_string(i), random_protein(rng, 100), Label::kHazard));
  for (int i = 0; i < 50; ++i) neg.push_back(make_record("N" + std::to_string(i), random_protein(rng, 100)));
  for (int i = 0; i < 50; ++i) neg.push_back(make_record("M" + std::to_string(i), random_protein(rng, 900)));
  const auto r = length_match(pos, neg, {});
  CHECK(r.negatives.size() == 50);
  for (const auto& n : r.negatives) CHECK(n.length() == 100);
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("length_match: identical distributions return all negatives") {
  Rng rng(7);
  std::vector<SequenceRecord> pos, neg;
  for (int i = 0; i < 60; ++i) {
    const std::size_t len = 30 + rng.below(500);
    pos.push_back(make_record("P" + std::to_string(i), random_protein(rng, len), Label::kHazard));
    neg.push_back(make_record("N" + std::to_string(i), random_protein(rng, len)));
  }
  CHECK(length_match(pos, neg, {}).negatives.size() == 60);
  CHECK_THROWS(length_match(pos, {}, {}));
}

TEST_CASE("length_match: per-bin counts equal positive counts on a skewed pool") {
  Rng rng(8);
  std::vector<SequenceRecord> pos, neg;
  for (int i = 0; i < 200; ++i) {
    pos.push_back(make_record("P" + std::to_string(i), random_protein(rng, 200 + rng.below(600)), Label::kHazard));
  }
  for (int i = 0; i < 6000; ++i) {
    neg.push_back(make_record("N" + std::to_string(i), random_protein(rng, 30 + rng.below(970))));
  }
  CurationConfig cfg;
  const auto r = length_match(pos, neg, cfg);
  CHECK(r.warnings.empty());
  // independent histogram of both sides using the same edges
  const auto edges = quantile_edges([&] {
    std::vector<double> v;
    for (const auto& p : pos) v.push_back(static_cast<double>(p.length()));
    return v;
  }(), cfg.length_match_bins);
  std::vector<std::size_t> hp(cfg.length_match_bins), hn(cfg.length_match_bins);
  for (const auto& p : pos) ++hp[*bin_of(edges, static_cast<double>(p.length()))];
  for (const auto& n : r.negatives) ++hn[*bin_of(edges, static_cast<double>(n.length()))];
  CHECK(hp == hn);
  const auto again = length_match(pos, neg, cfg);
  REQUIRE(again.negatives.size() == r.negatives.size());
  for (std::size_t i = 0; i < r.negatives.size(); ++i) CHECK(again.negatives[i].accession == r.negatives[i].accession);
}

TEST_CASE("metadata CSV round trip and errors") {
  std::vector<MetadataRow> rows(3);
  rows[0] = {"A1", Label::kHazard, 120, "toxins", 0, SplitSide::kTrain, SplitSide::kTest};
  rows[1] = {"A2", Label::kBenign, 200, "swissprot", 1, SplitSide::kTest, SplitSide::kTrain};
  rows[2] = {"A3", Label::kBenign, 300, "src, with comma", std::nullopt, std::nullopt, std::nullopt};
  std::stringstream ss;
  write_metadata_csv(ss, rows);
  CHECK(ss.str().rfind(std::string(kMetadataHeader) + "\n", 0) == 0);
  CHECK(read_metadata_csv(ss) == rows);

  std::istringstream viral(std::string(kMetadataHeader) + "\nA1,viral,10,s,0,train,test\n");
  try {
    read_metadata_csv(viral);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream dup(std::string(kMetadataHeader) + "\nA1,hazard,10,s,0,train,test\nA1,hazard,10,s,0,train,test\n");
  CHECK_THROWS_AS(read_metadata_csv(dup), ParseError);
  std::istringstream missing("accession,label,length\nA1,hazard,10\n");
  CHECK_THROWS_AS(read_metadata_csv(missing), ParseError);
}

TEST_CASE("ingest from tags and metadata") {
  std::vector<fasta::Record> entries = {{"A1 label=hazard source=t superkingdom=Bacteria", "ACDEF"},
                                        {"A2 label=benign", "KLMNP"}};
  auto recs = ingest(entries, nullptr, nullptr);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].label == Label::kHazard);
  CHECK(recs[0].superkingdom == Superkingdom::kBacteria);
  const auto fa = to_fasta(recs);
  const auto again = ingest(fa, nullptr, nullptr);
  CHECK(again[0].source == "t");

  std::vector<MetadataRow> meta(1);
  meta[0] = {"A2", Label::kHazard, 5, "m", std::nullopt, std::nullopt, std::nullopt};
  recs = ingest(entries, &meta, nullptr);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].label == Label::kHazard);
  meta[0].accession = "nope";
  CHECK_THROWS(ingest(entries, &meta, nullptr));
}

TEST_CASE("leak scanner finds 20-residue windows only") {
  Rng rng(9);
  const auto s = random_protein(rng, 80);
  ResidueLeakScanner scanner({make_record("H", s, Label::kHazard)});
  CHECK(scanner.scan("a", "prefix " + s.substr(10, 20) + " suffix").size() == 1);
  CHECK(scanner.scan("a", s.substr(10, 19)).empty());
  std::string lower = s.substr(30, 25);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  CHECK_FALSE(scanner.scan("a", lower).empty());
}

TEST_CASE("metadata records carry no residues") {
  Rng rng(10);
  std::vector<SequenceRecord> recs;
  std::vector<MetadataRow> rows;
  for (int i = 0; i < 30; ++i) {
    recs.push_back(make_record("H" + std::to_string(i), random_protein(rng, 100), Label::kHazard));
    rows.push_back(metadata_of(recs.back()));
  }
  std::stringstream ss;
  write_metadata_csv(ss, rows);
  CHECK(ResidueLeakScanner(recs).scan("meta", ss.str()).empty());
}

namespace {

struct LocalArchive {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::map<std::string, std::string> sequences;

  LocalArchive() {
    sequences["P00001"] = "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQAPILSRVGDGTQDNLSGAEKAVQVKVKALPDAQFEVV";
    sequences["P00002"] = "MSDNGPQNQRNAPRITFGGPSDSTGSNQNGERSGARSKQRRPQGLPNNTASWFTALTQHGK";
    server.Get(R"(/uniprotkb/([A-Za-z0-9_]+)\.fasta)", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      const auto it = sequences.find(req.matches[1]);
      if (it == sequences.end()) {
        res.status = 404;
        return;
      }
      std::string body = ">sp|" + it->first + "|TEST_ENTRY test protein\n";
      for (std::size_t i = 0; i < it->second.size(); i += 60) body += it->second.substr(i, 60) + "\n";
      res.set_content(body, "text/plain");
    });
    server.Get(R"(/uniprotkb/([A-Za-z0-9_]+)\.json)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto it = sequences.find(req.matches[1]);
      if (it == sequences.end()) {
        res.status = 404;
        return;
      }
      nlohmann::json j;
      j["sequence"]["length"] = it->second.size();
      res.set_content(j.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalArchive() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST_CASE("fetch: cache, 404 failures, reported length") {
  LocalArchive archive;
  const auto cache = temp_dir("fetch");
  FetchOptions opts;
  opts.cache_dir = cache.string();
  opts.endpoint = "http://127.0.0.1:" + std::to_string(archive.port) + "/uniprotkb/{accession}.fasta";
  opts.rate_limit = 50.0;
  opts.initial_backoff = std::chrono::milliseconds(1);

  auto r = fetch_by_accession({"P00001", "MISSING", "P00002"}, opts);
  REQUIRE(r.entries.size() == 2);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].accession == "MISSING");
  CHECK(r.failures[0].reason.find("404") != std::string::npos);
  CHECK(archive.hits == 3);  // 404 is not retried

  // length reported by the archive's own metadata endpoint
  httplib::Client meta("127.0.0.1", archive.port);
  for (const auto& e : r.entries) {
    auto res = meta.Get("/uniprotkb/" + e.accession + ".json");
    REQUIRE(res);
    const auto j = nlohmann::json::parse(res->body);
    CHECK(e.record.residues.size() == j["sequence"]["length"].get<std::size_t>());
  }

  archive.hits = 0;
  auto cached = fetch_by_accession({"P00001", "P00002"}, opts);
  CHECK(archive.hits == 0);
  CHECK(cached.network_requests == 0);
  REQUIRE(cached.entries.size() == 2);
  CHECK(cached.entries[0].from_cache);
  CHECK(cached.entries[0].record.residues == archive.sequences["P00001"]);

  auto unsafe = fetch_by_accession({"../etc"}, opts);
  CHECK(unsafe.failures.size() == 1);
  fs::remove_all(cache);
}

TEST_CASE("fetch: malformed cache entry is reported with its accession") {
  const auto cache = temp_dir("fetch_bad");
  std::ofstream(cache / "BAD1.fasta") << "ACDEF\n";
  FetchOptions opts;
  opts.cache_dir = cache.string();
  auto r = fetch_by_accession({"BAD1"}, opts);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].reason.find("BAD1") != std::string::npos);
  fs::remove_all(cache);
}

TEST_CASE("fetch: live public archive (set SEQSCREEN_LIVE_FETCH=1)") {
  if (!std::getenv("SEQSCREEN_LIVE_FETCH")) return;
  const auto cache = temp_dir("fetch_live");
  FetchOptions opts;
  opts.cache_dir = cache.string();
  auto r = fetch_by_accession({"P69905"}, opts);
  REQUIRE(r.entries.size() == 1);
  httplib::Client meta("https://rest.uniprot.org");
  auto res = meta.Get("/uniprotkb/P69905.json?fields=length");
  REQUIRE(res);
  const auto j = nlohmann::json::parse(res->body);
  CHECK(r.entries[0].record.residues.size() == j["sequence"]["length"].get<std::size_t>());
  fs::remove_all(cache);
}
