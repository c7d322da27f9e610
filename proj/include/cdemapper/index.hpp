// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdemapper/corpus.hpp"

namespace cdemapper {

/// Okapi BM25 parameters plus per-field boosts. Defaults match the standard
/// similarity of common search servers (k1 = 1.2, b = 0.75).
struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
    std::array<double, kFieldCount> field_weights{3.0, 2.0, 1.5, 1.0, 1.0, 0.5};

    double weight(Field f) const { return field_weights[static_cast<std::size_t>(f)]; }
    /// Throws std::invalid_argument when k1 < 0, b outside [0,1], a negative
    /// weight, or no positive weight.
    void validate() const;

    bool operator==(const Bm25Params&) const = default;
};

/// Parses "name=3,definition=1" style overrides onto `base`.
Bm25Params parse_field_weights(std::string_view spec, Bm25Params base = {});

struct SnapshotMeta {
    std::string corpus_date;
    std::size_t record_count = 0;

    bool operator==(const SnapshotMeta&) const = default;
};

enum class HitSource { Lexical, Vector };

struct ScoredHit {
    std::string tiny_id;
    double score = 0.0;
    HitSource source = HitSource::Lexical;
};

/// Restricts results to documents whose collection is in the set.
using CollectionFilter = std::optional<std::set<std::string>>;

/// ln(1 + (N - df + 0.5) / (df + 0.5)); strictly positive for 0 <= df <= N.
double bm25_idf(std::size_t doc_count, std::size_t doc_freq);

/// Saturated, length-normalized term frequency component of BM25.
double bm25_tf(double tf, double len, double avg_len, double k1, double b);

class LexicalIndex {
public:
    struct Posting {
        std::uint32_t doc = 0;
        std::array<std::uint32_t, kFieldCount> tf{};
    };

    /// Throws BuildError on an empty corpus or duplicate tiny_id.
    static LexicalIndex build(std::span<const IndexableDocument> docs, Bm25Params params, SnapshotMeta meta = {});

    /// Top-k by summed weighted per-field BM25, ties by tiny_id ascending.
    /// Query terms are a multiset: a repeated term contributes once per occurrence.
    std::vector<ScoredHit> search(std::string_view query, const CollectionFilter& collections, std::size_t k) const;

    std::size_t doc_count() const { return ids_.size(); }
    const std::string& doc_id(std::size_t doc) const { return ids_[doc]; }
    const std::string& doc_collection(std::size_t doc) const { return collections_[doc]; }
    std::uint32_t doc_length(std::size_t doc, Field f) const { return lengths_[doc][static_cast<std::size_t>(f)]; }
    double avg_length(Field f) const { return avg_lengths_[static_cast<std::size_t>(f)]; }
    const Bm25Params& params() const { return params_; }
    const SnapshotMeta& meta() const { return meta_; }
    std::size_t vocabulary_size() const { return postings_.size(); }
    /// Empty span for unknown terms.
    std::span<const Posting> postings(const std::string& term) const;

    nlohmann::json to_json() const;
    static LexicalIndex from_json(const nlohmann::json& j, Bm25Params params, SnapshotMeta meta);

private:
    LexicalIndex() = default;
    void compute_averages();

    Bm25Params params_;
    SnapshotMeta meta_;
    std::vector<std::string> ids_;
    std::vector<std::string> collections_;
    std::vector<std::array<std::uint32_t, kFieldCount>> lengths_;
    std::array<double, kFieldCount> avg_lengths_{};
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

LexicalIndex build_lexical_index(std::span<const IndexableDocument> docs, const Bm25Params& params);
std::vector<ScoredHit> search_lexical(const LexicalIndex& index, std::string_view query,
                                      const CollectionFilter& collections, std::size_t k);

struct VectorEntry {
    std::string tiny_id;
    std::string collection;
    std::vector<float> vector;
};

/// Exact brute-force cosine index. Vectors are L2-normalized on insert.
class VectorIndex {
public:
    /// Throws DimensionError on mixed dimensions, zero-norm or non-finite
    /// vectors, and BuildError on duplicate ids or an empty input.
    static VectorIndex build(std::vector<VectorEntry> entries);

    /// Throws DimensionError when the query has the wrong dimension or zero norm.
    std::vector<ScoredHit> search(std::span<const float> query, const CollectionFilter& collections,
                                  std::size_t k) const;

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return ids_.size(); }
    const std::string& doc_id(std::size_t i) const { return ids_[i]; }
    const std::string& doc_collection(std::size_t i) const { return collections_[i]; }
    std::span<const float> vector(std::size_t i) const {
        return {data_.data() + i * dimension_, dimension_};
    }

    void save(const std::string& path) const;
    static VectorIndex load(const std::string& path);

private:
    VectorIndex() = default;

    std::size_t dimension_ = 0;
    std::vector<std::string> ids_;
    std::vector<std::string> collections_;
    std::vector<float> data_;
};

VectorIndex build_vector_index(std::vector<VectorEntry> entries);
std::vector<ScoredHit> search_vector(const VectorIndex& index, std::span<const float> query,
                                     const CollectionFilter& collections, std::size_t k);

/// Orders hits by score descending, then tiny_id ascending, keeping the first k.
void rank_top_k(std::vector<ScoredHit>& hits, std::size_t k);

} // namespace cdemapper
