// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cdemapper/errors.hpp"
#include "cdemapper/index.hpp"
#include "cdemapper/transports.hpp"
#include "test_support.hpp"

using namespace cdemapper;

namespace {

std::vector<float> random_unit(std::mt19937& rng, std::size_t dim) {
    std::normal_distribution<float> g;
    std::vector<float> v(dim);
    double norm = 0;
    for (auto& x : v) {
        x = g(rng);
        norm += double(x) * x;
    }
    for (auto& x : v) x = float(x / std::sqrt(norm));
    return v;
}

} // namespace

TEST(VectorIndex, MatchesFullScanOracle) {
    std::mt19937 rng(11);
    const std::size_t dim = 32;
    std::vector<VectorEntry> entries;
    for (int i = 0; i < 500; ++i) {
        entries.push_back({"v" + std::to_string(i), i % 3 == 0 ? "A" : "B", random_unit(rng, dim)});
    }
    auto stored = entries;
    auto index = build_vector_index(std::move(entries));

    for (int q = 0; q < 100; ++q) {
        auto query = random_unit(rng, dim);
        // Oracle: cosine against the normalized stored vectors, argsort by (-score, id).
        std::vector<std::pair<double, std::string>> all;
        for (std::size_t i = 0; i < index.size(); ++i) {
            auto v = index.vector(i);
            double dot = 0, qn = 0;
            for (std::size_t j = 0; j < dim; ++j) {
                dot += double(v[j]) * double(query[j]);
                qn += double(query[j]) * double(query[j]);
            }
            all.emplace_back(dot / std::sqrt(qn), index.doc_id(i));
        }
        std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        auto hits = search_vector(index, query, std::nullopt, 10);
        ASSERT_EQ(hits.size(), 10u);
        for (std::size_t i = 0; i < hits.size(); ++i) {
            EXPECT_EQ(hits[i].tiny_id, all[i].second);
            EXPECT_NEAR(hits[i].score, all[i].first, 1e-12);
            EXPECT_EQ(hits[i].source, HitSource::Vector);
        }
    }

    for (int i : {0, 17, 499}) {
        auto hits = search_vector(index, stored[i].vector, std::nullopt, 1);
        EXPECT_EQ(hits[0].tiny_id, stored[i].tiny_id);
        EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
    }
}

TEST(VectorIndex, CollectionFilter) {
    std::mt19937 rng(3);
    std::vector<VectorEntry> entries;
    for (int i = 0; i < 30; ++i) entries.push_back({"v" + std::to_string(i), i < 10 ? "A" : "B", random_unit(rng, 8)});
    auto index = build_vector_index(entries);
    auto hits = search_vector(index, random_unit(rng, 8), std::set<std::string>{"A"}, 50);
    EXPECT_EQ(hits.size(), 10u);
    for (const auto& h : hits) EXPECT_LT(std::stoi(h.tiny_id.substr(1)), 10);
}

TEST(VectorIndex, NormalizesOnInsert) {
    auto index = build_vector_index({{"a", "C", {3.0f, 4.0f}}});
    EXPECT_FLOAT_EQ(index.vector(0)[0], 0.6f);
    EXPECT_FLOAT_EQ(index.vector(0)[1], 0.8f);
    std::vector<float> q{30.0f, 40.0f};
    EXPECT_NEAR(search_vector(index, q, std::nullopt, 1)[0].score, 1.0, 1e-6);
}

TEST(VectorIndex, RejectsBadInput) {
    EXPECT_THROW(build_vector_index({}), BuildError);
    EXPECT_THROW(build_vector_index({{"a", "C", {1, 0}}, {"b", "C", {1, 0, 0}}}), DimensionError);
    EXPECT_THROW(build_vector_index({{"a", "C", {0, 0}}}), DimensionError);
    EXPECT_THROW(build_vector_index({{"a", "C", {NAN, 1}}}), DimensionError);
    EXPECT_THROW(build_vector_index({{"a", "C", {1, 0}}, {"a", "C", {0, 1}}}), BuildError);
    auto index = build_vector_index({{"a", "C", {1, 0}}});
    std::vector<float> wrong{1, 0, 0}, zero{0, 0};
    EXPECT_THROW(search_vector(index, wrong, std::nullopt, 1), DimensionError);
    EXPECT_THROW(search_vector(index, zero, std::nullopt, 1), DimensionError);
}

TEST(VectorIndex, BinaryRoundTrip) {
    std::mt19937 rng(5);
    std::vector<VectorEntry> entries;
    for (int i = 0; i < 20; ++i) entries.push_back({"v" + std::to_string(i), "C" + std::to_string(i % 2), random_unit(rng, 16)});
    auto index = build_vector_index(entries);
    testing_support::TempDir dir;
    index.save(dir.str("v.bin"));
    auto copy = VectorIndex::load(dir.str("v.bin"));
    ASSERT_EQ(copy.size(), index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        EXPECT_EQ(copy.doc_id(i), index.doc_id(i));
        EXPECT_EQ(copy.doc_collection(i), index.doc_collection(i));
        EXPECT_TRUE(std::equal(copy.vector(i).begin(), copy.vector(i).end(), index.vector(i).begin()));
    }
    std::ofstream(dir.str("junk.bin")) << "not a vector file";
    EXPECT_THROW(VectorIndex::load(dir.str("junk.bin")), ArtifactError);
}

TEST(MockEmbedding, DeterministicAndNormalized) {
    auto a = MockTransport::hashed_embedding("Visual acuity left eye");
    auto b = MockTransport::hashed_embedding("Visual acuity left eye");
    ASSERT_EQ(a.size(), MockTransport::kDimension);
    EXPECT_EQ(a, b);
    double norm = std::inner_product(a.begin(), a.end(), a.begin(), 0.0);
    EXPECT_NEAR(norm, 1.0, 1e-6);
    // Shared tokens make texts closer than disjoint ones.
    auto c = MockTransport::hashed_embedding("visual acuity");
    auto d = MockTransport::hashed_embedding("serum potassium");
    EXPECT_GT(std::inner_product(a.begin(), a.end(), c.begin(), 0.0), std::inner_product(a.begin(), a.end(), d.begin(), 0.0));
}
