#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace fxplain::csv {

using Row = std::vector<std::string>;

/// Reads RFC 4180 style CSV: quoted fields may contain commas, doubled quotes
/// and newlines. A trailing '\r' on each record is dropped. Blank lines are
/// skipped. Throws ParseError on an unterminated quote.
std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::string& path);

/// Quotes a field only when it contains a delimiter, quote or newline.
std::string escape(std::string_view field);
std::string join(const Row& row);

}  // namespace fxplain::csv
