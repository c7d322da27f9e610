// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/index_store.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"

namespace cdemapper {

namespace fs = std::filesystem;
using nlohmann::json;

IndexBundle::IndexBundle(std::vector<CdeRecord> records, std::optional<LexicalIndex> lexical,
                         std::optional<VectorIndex> vectors, IndexMeta meta)
    : records_(std::move(records)), lexical_(std::move(lexical)), vectors_(std::move(vectors)), meta_(std::move(meta)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (!by_id_.emplace(records_[i].tiny_id, i).second) {
            throw IntegrityError("duplicate tinyId '" + records_[i].tiny_id + "'");
        }
        ++collection_counts_[records_[i].collection];
    }
    if (lexical_ && lexical_->doc_count() != records_.size()) {
        throw IntegrityError("lexical index does not cover the corpus");
    }
}

const CdeRecord* IndexBundle::find(const std::string& tiny_id) const {
    auto it = by_id_.find(tiny_id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

namespace {

json params_to_json(const Bm25Params& p) {
    json weights = json::object();
    for (std::size_t f = 0; f < kFieldCount; ++f) weights[std::string(kFieldNames[f])] = p.field_weights[f];
    return json{{"k1", p.k1}, {"b", p.b}, {"field_weights", weights}};
}

Bm25Params params_from_json(const json& j) {
    Bm25Params p;
    p.k1 = j.at("k1").get<double>();
    p.b = j.at("b").get<double>();
    for (std::size_t f = 0; f < kFieldCount; ++f) {
        p.field_weights[f] = j.at("field_weights").at(std::string(kFieldNames[f])).get<double>();
    }
    return p;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write '" + path.string() + "'");
    out << content;
}

json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("index artifact is missing '" + path.filename().string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ArtifactError("index artifact '" + path.string() + "' is corrupt: " + e.what());
    }
}

} // namespace

void save_index(const IndexBundle& bundle, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path root(dir);
    const auto& m = bundle.meta();
    json meta{
        {"format_version", kIndexFormatVersion},
        {"corpus_snapshot_date", m.snapshot.corpus_date},
        {"record_count", m.snapshot.record_count},
        {"bm25", params_to_json(m.params)},
        {"embedding_model", m.embedding_model},
        {"embedding_dimension", m.embedding_dimension},
        {"has_lexical", bundle.lexical().has_value()},
        {"has_vectors", bundle.vectors().has_value()},
    };
    write_file(root / "meta.json", meta.dump(2) + "\n");

    std::ostringstream corpus;
    serialize_corpus(bundle.records(), corpus);
    write_file(root / "corpus.json", corpus.str());

    if (bundle.lexical()) write_file(root / "lexical.json", bundle.lexical()->to_json().dump());
    if (bundle.vectors()) bundle.vectors()->save((root / "vectors.bin").string());
    else fs::remove(root / "vectors.bin");
}

IndexBundle load_index(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw ArtifactError("index directory '" + dir + "' does not exist");
    const json meta = read_json(root / "meta.json");
    const int version = meta.value("format_version", -1);
    if (version != kIndexFormatVersion) {
        throw ArtifactError("index format version " + std::to_string(version) + " does not match supported version " +
                            std::to_string(kIndexFormatVersion) + "; rebuild the index");
    }
    IndexMeta m;
    m.format_version = version;
    m.snapshot.corpus_date = meta.at("corpus_snapshot_date").get<std::string>();
    m.snapshot.record_count = meta.at("record_count").get<std::size_t>();
    m.params = params_from_json(meta.at("bm25"));
    m.embedding_model = meta.value("embedding_model", "");
    m.embedding_dimension = meta.value("embedding_dimension", std::size_t{0});

    std::ifstream corpus_in(root / "corpus.json", std::ios::binary);
    if (!corpus_in) throw ArtifactError("index artifact is missing 'corpus.json'");
    auto corpus = load_corpus(corpus_in);

    std::optional<LexicalIndex> lexical;
    if (meta.value("has_lexical", true)) {
        lexical = LexicalIndex::from_json(read_json(root / "lexical.json"), m.params, m.snapshot);
    }
    std::optional<VectorIndex> vectors;
    if (meta.value("has_vectors", false)) {
        vectors = VectorIndex::load((root / "vectors.bin").string());
        if (vectors->dimension() != m.embedding_dimension) throw ArtifactError("vector dimension disagrees with meta.json");
    }
    return IndexBundle(std::move(corpus.records), std::move(lexical), std::move(vectors), std::move(m));
}

} // namespace cdemapper
