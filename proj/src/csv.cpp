// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/csv.hpp"

#include <iterator>
#include <istream>
#include <ostream>

#include "cdemapper/errors.hpp"

namespace cdemapper::csv {

std::vector<Row> parse(std::string_view text) {
    // UTF-8 BOM from spreadsheet exports.
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    std::vector<Row> rows;
    Row row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t quote_start = 0;
    std::size_t quote_line = 0;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field_started && field.empty()) {
                in_quotes = true;
                field_started = true;
                quote_start = i;
                quote_line = line;
            } else {
                field.push_back(c);
            }
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            [[fallthrough]];
        case '\n':
            ++line;
            end_row();
            break;
        default:
            field_started = true;
            field.push_back(c);
        }
    }
    if (in_quotes) {
        throw ParseError("unterminated quoted field", quote_start, quote_line);
    }
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::vector<Row> read(std::istream& in) {
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse(text);
}

std::string escape_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape_field(row[i]);
    }
    out << '\n';
}

std::vector<std::string> split_values(std::string_view cell) {
    std::vector<std::string> out;
    if (cell.empty()) return out;
    std::string cur;
    for (std::size_t i = 0; i < cell.size(); ++i) {
        char c = cell[i];
        if (c == '\\' && i + 1 < cell.size() && (cell[i + 1] == '|' || cell[i + 1] == '\\')) {
            cur.push_back(cell[++i]);
        } else if (c == '|') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string join_values(const std::vector<std::string>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back('|');
        for (char c : values[i]) {
            if (c == '|' || c == '\\') out.push_back('\\');
            out.push_back(c);
        }
    }
    return out;
}

} // namespace cdemapper::csv
