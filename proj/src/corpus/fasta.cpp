#include "seqscreen/fasta.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include "seqscreen/common.hpp"

namespace seqscreen::fasta {
namespace {

std::string_view rstrip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view lstrip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  return s;
}

}  // namespace

std::vector<Record> parse(std::istream& in) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = rstrip(line);
    if (view.empty()) continue;
    if (view.front() == '>') {
      records.push_back({std::string(rstrip(lstrip(view.substr(1)))), {}});
      continue;
    }
    if (records.empty()) throw ParseError(line_no, "sequence data before any '>' header");
    std::string& residues = records.back().residues;
    for (char c : view) {
      if (std::isspace(static_cast<unsigned char>(c))) continue;
      residues.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return records;
}

std::vector<Record> parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open FASTA file '" + path + "'");
  return parse(in);
}

void write(std::ostream& out, const std::vector<Record>& records, std::size_t width) {
  for (const auto& rec : records) {
    out << '>' << rec.header << '\n';
    for (std::size_t pos = 0; pos < rec.residues.size(); pos += width) {
      out << std::string_view(rec.residues).substr(pos, width) << '\n';
    }
  }
}

void write_file(const std::string& path, const std::vector<Record>& records, std::size_t width) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write FASTA file '" + path + "'");
  write(out, records, width);
}

std::string accession_of(std::string_view header) {
  header = lstrip(header);
  const auto end = header.find_first_of(" \t");
  std::string_view token = header.substr(0, end);
  const auto first_bar = token.find('|');
  if (first_bar != std::string_view::npos) {
    const auto second_bar = token.find('|', first_bar + 1);
    if (second_bar != std::string_view::npos) {
      return std::string(token.substr(first_bar + 1, second_bar - first_bar - 1));
    }
  }
  return std::string(token);
}

std::map<std::string, std::string> header_tags(std::string_view header) {
  std::map<std::string, std::string> tags;
  header = lstrip(header);
  auto pos = header.find_first_of(" \t");
  while (pos != std::string_view::npos) {
    header = lstrip(header.substr(pos));
    if (header.empty()) break;
    pos = header.find_first_of(" \t");
    std::string_view token = header.substr(0, pos);
    const auto eq = token.find('=');
    if (eq != std::string_view::npos && eq > 0) {
      tags[std::string(token.substr(0, eq))] = std::string(token.substr(eq + 1));
    }
  }
  return tags;
}

}  // namespace seqscreen::fasta
