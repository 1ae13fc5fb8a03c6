#include "seqscreen/common.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "seqscreen/parallel.hpp"
#include "seqscreen/rng.hpp"

namespace seqscreen {

std::string_view to_string(Label label) {
  return label == Label::kHazard ? "hazard" : "benign";
}

std::optional<Label> parse_label(std::string_view token) {
  if (token == "hazard") return Label::kHazard;
  if (token == "benign") return Label::kBenign;
  return std::nullopt;
}

std::string_view to_string(SplitSide side) {
  return side == SplitSide::kTrain ? "train" : "test";
}

std::optional<SplitSide> parse_split_side(std::string_view token) {
  if (token == "train") return SplitSide::kTrain;
  if (token == "test") return SplitSide::kTest;
  return std::nullopt;
}

std::string_view to_string(SplitProtocol protocol) {
  return protocol == SplitProtocol::kRandom ? "random" : "cluster";
}

std::optional<SplitProtocol> parse_split_protocol(std::string_view token) {
  if (token == "random") return SplitProtocol::kRandom;
  if (token == "cluster") return SplitProtocol::kCluster;
  return std::nullopt;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

namespace parallel {
namespace {
std::atomic<unsigned> g_max_threads{1};
}

void set_max_threads(unsigned n) { g_max_threads = n == 0 ? 1 : n; }
unsigned max_threads() { return g_max_threads; }

void for_each_index(std::size_t n, const std::function<void(std::size_t)>& body) {
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(g_max_threads.load(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace parallel
}  // namespace seqscreen
