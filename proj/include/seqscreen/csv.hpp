#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace seqscreen::csv {

struct Row {
  std::size_t line = 0;  // 1-based line number in the source
  std::vector<std::string> fields;
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  /// Column index of `name`, or throws ParseError(1, "missing column ...").
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

/// RFC-4180 style: comma separated, double-quoted fields may contain commas
/// and doubled quotes. Records are single-line. CRLF tolerated. The first
/// non-empty line is the header.
Table read(std::istream& in);
Table read_file(const std::string& path);

std::vector<std::string> split_line(std::string_view line, std::size_t line_no);

/// Quotes the field only when it contains a comma, quote, or line break.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace seqscreen::csv
