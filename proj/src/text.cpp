// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/text.hpp"

#include <clocale>
#include <cwctype>
#include <locale.h>

namespace cdemapper {
namespace {

// Decodes one code point starting at s[i]. Returns -1 and advances one byte on
// an invalid sequence.
char32_t decode(std::string_view s, std::size_t& i, bool& ok) {
    auto b0 = static_cast<unsigned char>(s[i]);
    ok = true;
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    else { ok = false; ++i; return 0; }
    if (i + len > s.size()) { ok = false; ++i; return 0; }
    for (int k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) { ok = false; ++i; return 0; }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Unicode classification comes from the C.UTF-8 ctype tables, independent of
// the process locale. Falls back to ASCII when the locale is unavailable.
class CType {
public:
    CType() : loc_(newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0))) {}
    ~CType() {
        if (loc_ != static_cast<locale_t>(0)) freelocale(loc_);
    }
    CType(const CType&) = delete;
    CType& operator=(const CType&) = delete;

    bool is_word(char32_t cp) const {
        if (cp < 0x80) {
            return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
        }
        if (loc_ == static_cast<locale_t>(0)) return false;
        return iswalnum_l(static_cast<wint_t>(cp), loc_) != 0;
    }

    char32_t lower(char32_t cp) const {
        if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
        if (loc_ == static_cast<locale_t>(0)) return cp;
        return static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc_));
    }

private:
    locale_t loc_;
};

const CType& ctype() {
    static const CType instance;
    return instance;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    const auto& ct = ctype();
    std::vector<std::string> tokens;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        bool ok = true;
        char32_t cp = decode(text, i, ok);
        if (ok && ct.is_word(cp)) {
            encode(ct.lower(cp), cur);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    return out;
}

std::string unicode_lower(std::string_view s) {
    const auto& ct = ctype();
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        bool ok = true;
        char32_t cp = decode(s, i, ok);
        if (ok) encode(ct.lower(cp), out);
        else out.append(s.substr(start, i - start));
    }
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return unicode_lower(a) == unicode_lower(b);
}

std::string_view trim(std::string_view s) {
    const char* ws = " \t\r\n\f\v";
    auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

std::string truncate_utf8(std::string_view s, std::size_t max_chars) {
    std::size_t i = 0;
    std::size_t count = 0;
    while (i < s.size() && count < max_chars) {
        bool ok = true;
        decode(s, i, ok);
        ++count;
    }
    return std::string(s.substr(0, i));
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace cdemapper
