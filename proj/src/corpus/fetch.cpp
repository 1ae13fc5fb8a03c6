#include "seqscreen/fetch.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <optional>
#include <thread>

#include "httplib.h"
#include "seqscreen/common.hpp"

namespace seqscreen::corpus {
namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_template;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("config", "endpoint needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string substitute(std::string text, const std::string& accession) {
  const std::string key = "{accession}";
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos)) {
    text.replace(pos, key.size(), accession);
    pos += accession.size();
  }
  return text;
}

bool safe_accession(const std::string& acc) {
  if (acc.empty() || acc.size() > 64) return false;
  for (char c : acc) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return acc != "." && acc != "..";
}

fasta::Record parse_single(const std::string& body, const std::string& accession) {
  std::istringstream in(body);
  std::vector<fasta::Record> records;
  try {
    records = fasta::parse(in);
  } catch (const ParseError& e) {
    throw Error("malformed_fasta", accession + ": " + e.what());
  }
  if (records.size() != 1 || records.front().residues.empty()) {
    throw Error("malformed_fasta", accession + ": expected exactly one non-empty FASTA record");
  }
  return records.front();
}

class Throttle {
 public:
  explicit Throttle(double per_second)
      : interval_(per_second > 0 ? std::chrono::duration<double>(1.0 / per_second)
                                 : std::chrono::duration<double>(0)) {}
  void wait() {
    const auto now = std::chrono::steady_clock::now();
    if (started_ && now < next_) std::this_thread::sleep_until(next_);
    started_ = true;
    next_ = std::max(now, next_) +
            std::chrono::duration_cast<std::chrono::steady_clock::duration>(interval_);
  }

 private:
  std::chrono::duration<double> interval_;
  std::chrono::steady_clock::time_point next_{};
  bool started_ = false;
};

}  // namespace

std::string cache_path(const std::string& cache_dir, const std::string& accession) {
  return (std::filesystem::path(cache_dir) / (accession + ".fasta")).string();
}

FetchResult fetch_by_accession(const std::vector<std::string>& accessions,
                               const FetchOptions& options) {
  FetchResult result;
  std::filesystem::create_directories(options.cache_dir);
  const Endpoint endpoint = split_endpoint(options.endpoint);
  std::optional<httplib::Client> client;
  Throttle throttle(options.rate_limit);

  for (const auto& acc : accessions) {
    if (!safe_accession(acc)) {
      result.failures.push_back({acc, "accession contains characters unsafe for a cache filename"});
      continue;
    }
    const std::string path = cache_path(options.cache_dir, acc);
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::stringstream body;
      body << in.rdbuf();
      try {
        result.entries.push_back({acc, parse_single(body.str(), acc), true});
      } catch (const Error& e) {
        result.failures.push_back({acc, e.what()});
      }
      continue;
    }

    if (!client) {
      client.emplace(endpoint.scheme_host_port);
      client->set_connection_timeout(options.timeout);
      client->set_read_timeout(options.timeout);
      client->set_follow_location(true);
    }
    const std::string target = substitute(endpoint.path_template, acc);
    std::string failure;
    std::optional<std::string> body;
    auto backoff = options.initial_backoff;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      throttle.wait();
      ++result.network_requests;
      auto response = client->Get(target);
      if (!response) {
        failure = "transport error: " + httplib::to_string(response.error());
        continue;
      }
      if (response->status == 200) {
        body = response->body;
        break;
      }
      failure = "HTTP " + std::to_string(response->status);
      const bool retryable = response->status == 429 || response->status >= 500;
      if (!retryable) break;
    }
    if (!body) {
      result.failures.push_back({acc, failure});
      continue;
    }
    try {
      fasta::Record record = parse_single(*body, acc);
      const std::string tmp = path + ".part";
      fasta::write_file(tmp, {record});
      std::filesystem::rename(tmp, path);
      result.entries.push_back({acc, std::move(record), false});
    } catch (const Error& e) {
      result.failures.push_back({acc, e.what()});
    }
  }
  return result;
}

}  // namespace seqscreen::corpus
