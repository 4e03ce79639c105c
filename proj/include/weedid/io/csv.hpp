#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace weedid::io {

using CsvRow = std::vector<std::string>;

// RFC 4180 style: fields may be double-quoted, "" escapes a quote inside a
// quoted field, quoted fields may span lines. Throws Error(MalformedFile) on
// an unterminated quote.
std::vector<CsvRow> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);
std::string format_csv_row(const CsvRow& row);

}  // namespace weedid::io
