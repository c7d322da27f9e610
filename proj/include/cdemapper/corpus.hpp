// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdemapper {

struct PermissibleValue {
    std::string value_name;
    std::optional<std::string> code;
    std::optional<std::string> code_system;

    bool operator==(const PermissibleValue&) const = default;
};

/// One NIH Common Data Element as it appears in the corpus export.
struct CdeRecord {
    std::string tiny_id;
    std::string name;
    std::vector<std::string> question_texts;
    std::string definition;
    std::string collection;
    std::vector<std::string> designations;
    std::vector<PermissibleValue> permissible_values;
    std::string detail_url;

    bool operator==(const CdeRecord&) const = default;
};

/// Lexically indexed fields, in a fixed order used for per-field arrays.
enum class Field : std::size_t {
    Name = 0,
    Designations,
    QuestionTexts,
    Definition,
    PermissibleValues,
    Collection,
};

inline constexpr std::size_t kFieldCount = 6;

inline constexpr std::array<std::string_view, kFieldCount> kFieldNames{
    "name", "designations", "question_texts", "definition", "permissible_values", "collection",
};

std::string_view field_name(Field f);
std::optional<Field> field_from_name(std::string_view name);

struct IndexableDocument {
    std::string tiny_id;
    std::string collection;
    std::array<std::string, kFieldCount> fielded_text;
    std::string embedding_text;

    const std::string& text(Field f) const { return fielded_text[static_cast<std::size_t>(f)]; }

    bool operator==(const IndexableDocument&) const = default;
};

struct Rejection {
    std::size_t position = 0; // 0-based index in the export array
    std::string tiny_id;      // may be empty
    std::string reason;
};

struct CorpusLoad {
    std::vector<CdeRecord> records;
    std::vector<Rejection> rejections;
};

/// Reads the JSON export (top-level array). Invalid records go to the
/// rejection report. Throws ParseError on malformed JSON or a non-conforming
/// shape, IntegrityError on a duplicate tinyId.
CorpusLoad load_corpus(std::istream& in);
CorpusLoad load_corpus_file(const std::string& path);

/// Writes records in the export shape accepted by load_corpus.
void serialize_corpus(const std::vector<CdeRecord>& records, std::ostream& out);

/// Returns the reason a record fails its invariants, or nullopt when valid.
std::optional<std::string> validate(const CdeRecord& record);

IndexableDocument preprocess(const CdeRecord& record);

} // namespace cdemapper
