#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace seqscreen {

inline constexpr std::string_view kVersion = "0.3.0";
inline constexpr std::uint64_t kDefaultSeed = 1337;

/// Base class for every error raised by the library. `code()` is a short
/// machine-readable token ("parse", "degenerate", "config", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("parse", "line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Raised by metrics that are undefined on the given sample (e.g. AUROC with
/// a single class). Bootstrap skips resamples that raise this.
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error("degenerate", what) {}
};

enum class Label : int { kBenign = 0, kHazard = 1 };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view token);
inline int as_int(Label label) { return static_cast<int>(label); }

enum class SplitSide { kTrain, kTest };
std::string_view to_string(SplitSide side);
std::optional<SplitSide> parse_split_side(std::string_view token);

enum class SplitProtocol { kRandom, kCluster };
std::string_view to_string(SplitProtocol protocol);
std::optional<SplitProtocol> parse_split_protocol(std::string_view token);

}  // namespace seqscreen
