#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "seqscreen/fasta.hpp"

namespace seqscreen::corpus {

struct FetchOptions {
  std::string cache_dir = "seq_cache";
  /// `{accession}` is substituted. http:// and https:// are supported.
  std::string endpoint = "https://rest.uniprot.org/uniprotkb/{accession}.fasta";
  double rate_limit = 2.0;  // requests per second
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{30};
};

struct FetchFailure {
  std::string accession;
  std::string reason;
};

struct FetchedEntry {
  std::string accession;
  fasta::Record record;
  bool from_cache = false;
};

struct FetchResult {
  std::vector<FetchedEntry> entries;  // input order, failures omitted
  std::vector<FetchFailure> failures;
  std::size_t network_requests = 0;
};

/// Cache file for an accession: <cache_dir>/<accession>.fasta.
std::string cache_path(const std::string& cache_dir, const std::string& accession);

/// Fetches one FASTA record per accession. Cached accessions are never
/// re-requested; fresh downloads are validated and written to the cache.
/// Transport errors and 5xx/429 responses are retried with exponential
/// backoff; other HTTP errors fail immediately. Failures are collected per
/// accession and never abort the batch.
FetchResult fetch_by_accession(const std::vector<std::string>& accessions,
                               const FetchOptions& options);

}  // namespace seqscreen::corpus
