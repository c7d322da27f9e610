// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sstream>

#include "cdemapper/corpus.hpp"
#include "cdemapper/errors.hpp"
#include "test_support.hpp"

using namespace cdemapper;

namespace {

CorpusLoad load_text(const std::string& text) {
    std::istringstream in(text);
    return load_corpus(in);
}

std::string record_json(const std::string& id, const std::string& name, const std::string& collection = "NINDS") {
    return R"({"tinyId":")" + id + R"(","name":")" + name + R"(","collection":")" + collection +
           R"(","definition":"d","designations":[],"questionTexts":[],"permissibleValues":[],"detailUrl":""})";
}

} // namespace

TEST(Corpus, FixtureRoundTripsThroughSerialize) {
    auto first = load_corpus_file(testing_support::fixture("corpus.json"));
    ASSERT_TRUE(first.rejections.empty());
    ASSERT_EQ(first.records.size(), 1957u);
    std::ostringstream out;
    serialize_corpus(first.records, out);
    auto second = load_text(out.str());
    EXPECT_EQ(second.records, first.records);

    std::set<std::string> collections;
    for (const auto& r : first.records) collections.insert(r.collection);
    EXPECT_EQ(collections.size(), 19u);
}

TEST(Corpus, DuplicateTinyIdNamesTheId) {
    std::string text = "[" + record_json("a", "A") + "," + record_json("b", "B") + "," + record_json("c", "C") + "," +
                       record_json("b", "B2") + "," + record_json("e", "E") + "]";
    try {
        load_text(text);
        FAIL() << "expected IntegrityError";
    } catch (const IntegrityError& e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
}

TEST(Corpus, InvalidRecordsAreRejectedNotFatal) {
    std::string text = "[" + record_json("a", "A") + "," + record_json("b", "  ") + "," + record_json("", "C") + "," +
                       record_json("d", "D", "") + "]";
    auto load = load_text(text);
    ASSERT_EQ(load.records.size(), 1u);
    ASSERT_EQ(load.rejections.size(), 3u);
    EXPECT_EQ(load.rejections[0].position, 1u);
    EXPECT_EQ(load.rejections[0].reason, "empty name");
    EXPECT_EQ(load.rejections[1].reason, "empty tinyId");
    EXPECT_EQ(load.rejections[2].tiny_id, "d");
}

TEST(Corpus, MalformedJsonReportsPosition) {
    try {
        load_text("[\n{\"tinyId\": }\n]");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(load_text("{}"), ParseError);
    EXPECT_THROW(load_text(R"([{"tinyId":"a","name":"A","collection":"X","designations":"oops"}])"), ParseError);
}

TEST(Corpus, MissingFileIsNotFound) {
    EXPECT_THROW(load_corpus_file("/nonexistent/corpus.json"), NotFoundError);
}

TEST(Preprocess, FieldsAndEmbeddingText) {
    CdeRecord r;
    r.tiny_id = "x1";
    r.name = "Imaging Modality Type";
    r.collection = "NINDS";
    r.definition = "Type of imaging modality";
    r.designations = {"Imaging modality", "Modality"};
    r.question_texts = {"Which modality?"};
    r.permissible_values = {{"CT", {}, {}}, {"MRI", {}, {}}};
    auto doc = preprocess(r);
    EXPECT_EQ(doc.text(Field::Collection), "NINDS");
    EXPECT_EQ(doc.text(Field::Name), "Imaging Modality Type");
    EXPECT_EQ(doc.text(Field::Designations), "Imaging modality Modality");
    EXPECT_EQ(doc.text(Field::PermissibleValues), "CT MRI");
    EXPECT_EQ(doc.embedding_text, "Imaging Modality Type\nType of imaging modality\nCT\nMRI");

    r.definition.clear();
    r.permissible_values.clear();
    EXPECT_EQ(preprocess(r).embedding_text, "Imaging Modality Type");
}

TEST(Preprocess, FieldNamesRoundTrip) {
    for (std::size_t f = 0; f < kFieldCount; ++f) {
        auto field = static_cast<Field>(f);
        EXPECT_EQ(field_from_name(field_name(field)), field);
    }
    EXPECT_FALSE(field_from_name("title"));
}
