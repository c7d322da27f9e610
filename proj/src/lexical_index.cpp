// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/index.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

using nlohmann::json;

void Bm25Params::validate() const {
    if (!(k1 >= 0.0)) throw std::invalid_argument("bm25: k1 must be >= 0");
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("bm25: b must lie in [0, 1]");
    bool any_positive = false;
    for (double w : field_weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("bm25: field weights must be >= 0");
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) throw std::invalid_argument("bm25: at least one field weight must be > 0");
}

Bm25Params parse_field_weights(std::string_view spec, Bm25Params base) {
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        auto comma = spec.find(',', pos);
        auto item = trim(spec.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (!item.empty()) {
            auto eq = item.find('=');
            if (eq == std::string_view::npos) throw std::invalid_argument("field weight '" + std::string(item) + "' lacks '='");
            auto name = trim(item.substr(0, eq));
            auto field = field_from_name(name);
            if (!field) throw std::invalid_argument("unknown field '" + std::string(name) + "'");
            std::string value(trim(item.substr(eq + 1)));
            std::size_t used = 0;
            double w = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("bad weight '" + value + "'");
            base.field_weights[static_cast<std::size_t>(*field)] = w;
        }
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    base.validate();
    return base;
}

double bm25_idf(std::size_t doc_count, std::size_t doc_freq) {
    const auto n = static_cast<double>(doc_count);
    const auto df = static_cast<double>(doc_freq);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double bm25_tf(double tf, double len, double avg_len, double k1, double b) {
    return tf / (tf + k1 * (1.0 - b + b * len / avg_len));
}

void rank_top_k(std::vector<ScoredHit>& hits, std::size_t k) {
    auto before = [](const ScoredHit& a, const ScoredHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tiny_id < b.tiny_id;
    };
    if (hits.size() > k) {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), before);
        hits.resize(k);
    } else {
        std::sort(hits.begin(), hits.end(), before);
    }
}

LexicalIndex LexicalIndex::build(std::span<const IndexableDocument> docs, Bm25Params params, SnapshotMeta meta) {
    params.validate();
    if (docs.empty()) throw BuildError("cannot build a lexical index over an empty corpus");

    LexicalIndex idx;
    idx.params_ = params;
    idx.meta_ = std::move(meta);
    idx.ids_.reserve(docs.size());
    idx.collections_.reserve(docs.size());
    idx.lengths_.reserve(docs.size());

    std::unordered_set<std::string> seen;
    std::unordered_map<std::string, std::array<std::uint32_t, kFieldCount>> doc_tf;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const auto& doc = docs[d];
        if (!seen.insert(doc.tiny_id).second) throw BuildError("duplicate tiny_id '" + doc.tiny_id + "'");
        idx.ids_.push_back(doc.tiny_id);
        idx.collections_.push_back(doc.collection);

        doc_tf.clear();
        std::array<std::uint32_t, kFieldCount> lengths{};
        for (std::size_t f = 0; f < kFieldCount; ++f) {
            auto tokens = tokenize(doc.fielded_text[f]);
            lengths[f] = static_cast<std::uint32_t>(tokens.size());
            for (auto& t : tokens) ++doc_tf[std::move(t)][f];
        }
        idx.lengths_.push_back(lengths);
        for (auto& [term, tf] : doc_tf) {
            idx.postings_[term].push_back({static_cast<std::uint32_t>(d), tf});
        }
    }
    idx.compute_averages();
    return idx;
}

void LexicalIndex::compute_averages() {
    for (std::size_t f = 0; f < kFieldCount; ++f) {
        // Integer sum keeps the mean exact up to one final rounding.
        std::uint64_t total = 0;
        for (const auto& l : lengths_) total += l[f];
        avg_lengths_[f] = lengths_.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(lengths_.size());
    }
}

std::span<const LexicalIndex::Posting> LexicalIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return {};
    return it->second;
}

std::vector<ScoredHit> LexicalIndex::search(std::string_view query, const CollectionFilter& collections,
                                            std::size_t k) const {
    if (k == 0) throw std::invalid_argument("search_lexical: k must be >= 1");
    std::vector<ScoredHit> hits;
    const auto terms = tokenize(query);
    if (terms.empty()) return hits;

    std::vector<double> scores(ids_.size(), 0.0);
    std::vector<char> touched(ids_.size(), 0);
    std::vector<std::uint32_t> touched_docs;

    for (const auto& term : terms) {
        auto list = postings(term);
        if (list.empty()) continue;
        const double idf = bm25_idf(ids_.size(), list.size());
        for (const auto& p : list) {
            double total = 0.0;
            for (std::size_t f = 0; f < kFieldCount; ++f) {
                const double w = params_.field_weights[f];
                if (p.tf[f] == 0 || w == 0.0) continue;
                total += w * idf * bm25_tf(p.tf[f], lengths_[p.doc][f], avg_lengths_[f], params_.k1, params_.b);
            }
            if (total == 0.0) continue;
            scores[p.doc] += total;
            if (!touched[p.doc]) {
                touched[p.doc] = 1;
                touched_docs.push_back(p.doc);
            }
        }
    }

    hits.reserve(touched_docs.size());
    for (auto d : touched_docs) {
        if (collections && !collections->contains(collections_[d])) continue;
        hits.push_back({ids_[d], scores[d], HitSource::Lexical});
    }
    rank_top_k(hits, k);
    return hits;
}

json LexicalIndex::to_json() const {
    json postings = json::object();
    // Sorted for a byte-stable artifact.
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, _] : postings_) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
    for (const auto* term : terms) {
        json list = json::array();
        for (const auto& p : postings_.at(*term)) {
            json row = json::array({p.doc});
            for (auto tf : p.tf) row.push_back(tf);
            list.push_back(std::move(row));
        }
        postings[*term] = std::move(list);
    }
    return json{
        {"ids", ids_},
        {"collections", collections_},
        {"lengths", lengths_},
        {"postings", std::move(postings)},
    };
}

LexicalIndex LexicalIndex::from_json(const json& j, Bm25Params params, SnapshotMeta meta) {
    params.validate();
    LexicalIndex idx;
    idx.params_ = params;
    idx.meta_ = std::move(meta);
    idx.ids_ = j.at("ids").get<std::vector<std::string>>();
    idx.collections_ = j.at("collections").get<std::vector<std::string>>();
    idx.lengths_ = j.at("lengths").get<std::vector<std::array<std::uint32_t, kFieldCount>>>();
    if (idx.collections_.size() != idx.ids_.size() || idx.lengths_.size() != idx.ids_.size()) {
        throw ArtifactError("lexical index: inconsistent document tables");
    }
    for (const auto& [term, list] : j.at("postings").items()) {
        auto& out = idx.postings_[term];
        out.reserve(list.size());
        for (const auto& row : list) {
            if (row.size() != kFieldCount + 1) throw ArtifactError("lexical index: malformed posting for '" + term + "'");
            Posting p;
            p.doc = row[0].get<std::uint32_t>();
            if (p.doc >= idx.ids_.size()) throw ArtifactError("lexical index: posting references unknown document");
            for (std::size_t f = 0; f < kFieldCount; ++f) p.tf[f] = row[f + 1].get<std::uint32_t>();
            out.push_back(p);
        }
    }
    idx.compute_averages();
    return idx;
}

LexicalIndex build_lexical_index(std::span<const IndexableDocument> docs, const Bm25Params& params) {
    return LexicalIndex::build(docs, params);
}

std::vector<ScoredHit> search_lexical(const LexicalIndex& index, std::string_view query,
                                      const CollectionFilter& collections, std::size_t k) {
    return index.search(query, collections, k);
}

} // namespace cdemapper
