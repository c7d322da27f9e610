// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

using nlohmann::json;

std::string_view field_name(Field f) {
    return kFieldNames[static_cast<std::size_t>(f)];
}

std::optional<Field> field_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kFieldCount; ++i) {
        if (kFieldNames[i] == name) return static_cast<Field>(i);
    }
    return std::nullopt;
}

namespace {

std::size_t line_of(std::string_view text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

struct ShapeError {
    std::string message;
};

std::string get_string(const json& obj, const char* key, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) throw ShapeError{std::string("missing key '") + key + "'"};
        return {};
    }
    if (!it->is_string()) throw ShapeError{std::string("key '") + key + "' must be a string"};
    return it->get<std::string>();
}

std::vector<std::string> get_strings(const json& obj, const char* key) {
    std::vector<std::string> out;
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return out;
    if (!it->is_array()) throw ShapeError{std::string("key '") + key + "' must be an array"};
    for (const auto& v : *it) {
        if (!v.is_string()) throw ShapeError{std::string("key '") + key + "' must hold strings"};
        out.push_back(v.get<std::string>());
    }
    return out;
}

CdeRecord record_from_json(const json& obj) {
    if (!obj.is_object()) throw ShapeError{"array element is not an object"};
    CdeRecord r;
    r.tiny_id = get_string(obj, "tinyId", false);
    r.name = get_string(obj, "name", false);
    r.designations = get_strings(obj, "designations");
    r.question_texts = get_strings(obj, "questionTexts");
    r.definition = get_string(obj, "definition", false);
    r.collection = get_string(obj, "collection", false);
    r.detail_url = get_string(obj, "detailUrl", false);
    if (auto it = obj.find("permissibleValues"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw ShapeError{"key 'permissibleValues' must be an array"};
        for (const auto& pv : *it) {
            if (!pv.is_object()) throw ShapeError{"permissible value is not an object"};
            PermissibleValue v;
            v.value_name = get_string(pv, "valueName", false);
            if (auto c = pv.find("code"); c != pv.end() && c->is_string()) v.code = c->get<std::string>();
            if (auto c = pv.find("codeSystem"); c != pv.end() && c->is_string()) v.code_system = c->get<std::string>();
            r.permissible_values.push_back(std::move(v));
        }
    }
    return r;
}

json record_to_json(const CdeRecord& r) {
    json pvs = json::array();
    for (const auto& v : r.permissible_values) {
        json pv = {{"valueName", v.value_name}};
        if (v.code) pv["code"] = *v.code;
        if (v.code_system) pv["codeSystem"] = *v.code_system;
        pvs.push_back(std::move(pv));
    }
    return json{
        {"tinyId", r.tiny_id},
        {"name", r.name},
        {"designations", r.designations},
        {"questionTexts", r.question_texts},
        {"definition", r.definition},
        {"collection", r.collection},
        {"permissibleValues", std::move(pvs)},
        {"detailUrl", r.detail_url},
    };
}

} // namespace

std::optional<std::string> validate(const CdeRecord& record) {
    if (trim(record.tiny_id).empty()) return "empty tinyId";
    if (trim(record.name).empty()) return "empty name";
    if (trim(record.collection).empty()) return "empty collection";
    for (const auto& v : record.permissible_values) {
        if (trim(v.value_name).empty()) return "permissible value with empty valueName";
    }
    return std::nullopt;
}

CorpusLoad load_corpus(std::istream& in) {
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("corpus export: ") + e.what(), e.byte, line_of(text, e.byte == 0 ? 0 : e.byte - 1));
    }
    if (!doc.is_array()) throw ParseError("corpus export: top-level value must be an array", 0, 1);

    CorpusLoad out;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        CdeRecord r;
        try {
            r = record_from_json(doc[i]);
        } catch (const ShapeError& e) {
            throw ParseError("corpus export: element " + std::to_string(i) + ": " + e.message, 0, 1);
        }
        if (auto reason = validate(r)) {
            out.rejections.push_back({i, r.tiny_id, *reason});
            continue;
        }
        if (!seen.insert(r.tiny_id).second) {
            throw IntegrityError("duplicate tinyId '" + r.tiny_id + "'");
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

CorpusLoad load_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open corpus file '" + path + "'");
    return load_corpus(in);
}

void serialize_corpus(const std::vector<CdeRecord>& records, std::ostream& out) {
    json arr = json::array();
    for (const auto& r : records) arr.push_back(record_to_json(r));
    out << arr.dump(1) << '\n';
}

IndexableDocument preprocess(const CdeRecord& record) {
    IndexableDocument doc;
    doc.tiny_id = record.tiny_id;
    doc.collection = record.collection;

    auto set = [&](Field f, std::string v) { doc.fielded_text[static_cast<std::size_t>(f)] = std::move(v); };
    std::vector<std::string> value_names;
    value_names.reserve(record.permissible_values.size());
    for (const auto& v : record.permissible_values) value_names.push_back(v.value_name);

    set(Field::Name, record.name);
    set(Field::Designations, join(record.designations, " "));
    set(Field::QuestionTexts, join(record.question_texts, " "));
    set(Field::Definition, record.definition);
    set(Field::PermissibleValues, join(value_names, " "));
    set(Field::Collection, record.collection);

    // Name, definition, then value names; question texts and collection stay lexical-only.
    std::vector<std::string> segments;
    segments.push_back(record.name);
    if (!record.definition.empty()) segments.push_back(record.definition);
    for (auto& v : value_names) {
        if (!v.empty()) segments.push_back(std::move(v));
    }
    doc.embedding_text = join(segments, "\n");
    return doc;
}

} // namespace cdemapper
