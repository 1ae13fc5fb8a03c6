#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace seqscreen::fasta {

struct Record {
  std::string header;    // text after '>' with trailing whitespace removed
  std::string residues;  // upper-cased, wrapped lines concatenated
};

/// Reads every record in order. Blank lines are ignored, CRLF and trailing
/// whitespace are tolerated. A sequence line before the first header throws
/// ParseError carrying the 1-based line number.
std::vector<Record> parse(std::istream& in);
std::vector<Record> parse_file(const std::string& path);

/// Writes records with residues wrapped at `width` columns.
void write(std::ostream& out, const std::vector<Record>& records, std::size_t width = 60);
void write_file(const std::string& path, const std::vector<Record>& records,
                std::size_t width = 60);

/// Accession carried by a header: the first whitespace-delimited token, or
/// the middle field of UniProt-style "db|ACCESSION|ENTRY" tokens.
std::string accession_of(std::string_view header);

/// `key=value` tags following the first token of a header. Values end at the
/// next space; later duplicates win.
std::map<std::string, std::string> header_tags(std::string_view header);

}  // namespace seqscreen::fasta
