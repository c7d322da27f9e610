// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdemapper/corpus.hpp"
#include "cdemapper/index.hpp"

namespace cdemapper {

inline constexpr int kIndexFormatVersion = 1;

struct IndexMeta {
    int format_version = kIndexFormatVersion;
    SnapshotMeta snapshot;
    Bm25Params params;
    /// Empty when the artifact was built without embeddings.
    std::string embedding_model;
    std::size_t embedding_dimension = 0;
};

/// Everything the pipeline reads: the corpus itself plus both indexes.
/// Immutable after construction; share by const reference across threads.
class IndexBundle {
public:
    IndexBundle() = default;
    IndexBundle(std::vector<CdeRecord> records, std::optional<LexicalIndex> lexical,
                std::optional<VectorIndex> vectors, IndexMeta meta);

    /// Bundle over no documents. Every search on it returns nothing.
    static IndexBundle empty() { return IndexBundle{}; }

    const std::vector<CdeRecord>& records() const { return records_; }
    const CdeRecord* find(const std::string& tiny_id) const;
    const std::optional<LexicalIndex>& lexical() const { return lexical_; }
    const std::optional<VectorIndex>& vectors() const { return vectors_; }
    const IndexMeta& meta() const { return meta_; }
    /// Collection name to CDE count, sorted by name.
    const std::map<std::string, std::size_t>& collections() const { return collection_counts_; }

private:
    std::vector<CdeRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::optional<LexicalIndex> lexical_;
    std::optional<VectorIndex> vectors_;
    IndexMeta meta_;
    std::map<std::string, std::size_t> collection_counts_;
};

/// Writes `meta.json`, `corpus.json`, `lexical.json` and (when present)
/// `vectors.bin` into `dir`, creating it if needed.
void save_index(const IndexBundle& bundle, const std::string& dir);

/// Throws ArtifactError when files are missing or the format version differs.
IndexBundle load_index(const std::string& dir);

} // namespace cdemapper
