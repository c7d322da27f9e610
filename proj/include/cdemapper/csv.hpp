// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cdemapper::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader: quoted fields may contain commas, quotes ("") and newlines.
/// A trailing newline does not produce an empty row. Throws ParseError on an
/// unterminated quote.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read(std::istream& in);

/// Quotes a field only when it contains a comma, quote, CR or LF.
std::string escape_field(std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Splits a `|`-separated list. `\|` is a literal pipe and `\\` a literal
/// backslash. An empty cell yields an empty list.
std::vector<std::string> split_values(std::string_view cell);
std::string join_values(const std::vector<std::string>& values);

} // namespace cdemapper::csv
