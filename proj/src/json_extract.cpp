// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/json_extract.hpp"

namespace cdemapper {
namespace {

// End (exclusive) of the balanced value starting at `open`, or npos.
std::size_t balanced_end(std::string_view text, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{' || c == '[') ++depth;
        else if (c == '}' || c == ']') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

} // namespace

std::optional<nlohmann::json> extract_json(std::string_view text) {
    std::size_t pos = 0;
    while ((pos = text.find_first_of("{[", pos)) != std::string_view::npos) {
        auto end = balanced_end(text, pos);
        if (end != std::string_view::npos) {
            auto parsed = nlohmann::json::parse(text.substr(pos, end - pos), nullptr, false);
            if (!parsed.is_discarded()) return parsed;
        }
        ++pos;
    }
    return std::nullopt;
}

} // namespace cdemapper
