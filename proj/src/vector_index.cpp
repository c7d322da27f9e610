// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/index.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "cdemapper/errors.hpp"

namespace cdemapper {
namespace {

constexpr char kMagic[4] = {'C', 'D', 'E', 'V'};
constexpr std::uint32_t kVectorFormat = 1;

double l2_norm(std::span<const float> v) {
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

template <typename T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ArtifactError("vector index: truncated file");
    return value;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    auto len = get<std::uint32_t>(in);
    std::string s(len, '\0');
    if (!in.read(s.data(), len)) throw ArtifactError("vector index: truncated file");
    return s;
}

} // namespace

VectorIndex VectorIndex::build(std::vector<VectorEntry> entries) {
    if (entries.empty()) throw BuildError("cannot build a vector index from no vectors");
    VectorIndex idx;
    idx.dimension_ = entries.front().vector.size();
    if (idx.dimension_ == 0) throw DimensionError("vector index: zero-dimensional vector");
    idx.ids_.reserve(entries.size());
    idx.collections_.reserve(entries.size());
    idx.data_.reserve(entries.size() * idx.dimension_);

    std::unordered_set<std::string> seen;
    for (auto& e : entries) {
        if (e.vector.size() != idx.dimension_) {
            throw DimensionError("vector index: '" + e.tiny_id + "' has dimension " + std::to_string(e.vector.size()) +
                                 ", expected " + std::to_string(idx.dimension_));
        }
        for (float x : e.vector) {
            if (!std::isfinite(x)) throw DimensionError("vector index: '" + e.tiny_id + "' has a non-finite entry");
        }
        const double norm = l2_norm(e.vector);
        if (norm == 0.0) throw DimensionError("vector index: '" + e.tiny_id + "' has zero norm");
        if (!seen.insert(e.tiny_id).second) throw BuildError("duplicate tiny_id '" + e.tiny_id + "'");
        for (float x : e.vector) idx.data_.push_back(static_cast<float>(static_cast<double>(x) / norm));
        idx.ids_.push_back(std::move(e.tiny_id));
        idx.collections_.push_back(std::move(e.collection));
    }
    return idx;
}

std::vector<ScoredHit> VectorIndex::search(std::span<const float> query, const CollectionFilter& collections,
                                           std::size_t k) const {
    if (k == 0) throw std::invalid_argument("search_vector: k must be >= 1");
    if (query.size() != dimension_) {
        throw DimensionError("search_vector: query dimension " + std::to_string(query.size()) + ", index dimension " +
                             std::to_string(dimension_));
    }
    const double norm = l2_norm(query);
    if (norm == 0.0) throw DimensionError("search_vector: zero-norm query");

    std::vector<double> q(query.begin(), query.end());
    for (auto& x : q) x /= norm;

    std::vector<ScoredHit> hits;
    hits.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (collections && !collections->contains(collections_[i])) continue;
        const float* v = data_.data() + i * dimension_;
        double dot = 0.0;
        for (std::size_t j = 0; j < dimension_; ++j) dot += q[j] * static_cast<double>(v[j]);
        hits.push_back({ids_[i], dot, HitSource::Vector});
    }
    rank_top_k(hits, k);
    return hits;
}

void VectorIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVectorFormat);
    put<std::uint64_t>(out, dimension_);
    put<std::uint64_t>(out, ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        put_string(out, ids_[i]);
        put_string(out, collections_[i]);
    }
    out.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(float)));
    if (!out) throw ArtifactError("failed writing '" + path + "'");
}

VectorIndex VectorIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open '" + path + "'");
    char magic[4];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ArtifactError("'" + path + "' is not a vector index");
    }
    if (auto version = get<std::uint32_t>(in); version != kVectorFormat) {
        throw ArtifactError("vector index format " + std::to_string(version) + " unsupported");
    }
    VectorIndex idx;
    idx.dimension_ = get<std::uint64_t>(in);
    auto count = get<std::uint64_t>(in);
    idx.ids_.reserve(count);
    idx.collections_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        idx.ids_.push_back(get_string(in));
        idx.collections_.push_back(get_string(in));
    }
    idx.data_.resize(count * idx.dimension_);
    if (!in.read(reinterpret_cast<char*>(idx.data_.data()), static_cast<std::streamsize>(idx.data_.size() * sizeof(float)))) {
        throw ArtifactError("vector index: truncated file");
    }
    return idx;
}

VectorIndex build_vector_index(std::vector<VectorEntry> entries) {
    return VectorIndex::build(std::move(entries));
}

std::vector<ScoredHit> search_vector(const VectorIndex& index, std::span<const float> query,
                                     const CollectionFilter& collections, std::size_t k) {
    return index.search(query, collections, k);
}

} // namespace cdemapper
