// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include "cdemapper/csv.hpp"
#include "test_support.hpp"

using testing_support::fixture;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(CDEMAPPER_CLI) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

class CliTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir();
        ASSERT_EQ(run("--mock-llm index build --corpus " + q(fixture("corpus.json")) + " --out " + q(dir_->str("index")) +
                      " --snapshot-date 2024-06-01"),
                  0);
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static std::string index() { return dir_->str("index"); }

    static TempDir* dir_;
    TempDir scratch_;
};

TempDir* CliTest::dir_ = nullptr;

} // namespace

TEST_F(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("map --index x --input y --out z --preset bm42"), 1);
    EXPECT_EQ(run("eval --index x"), 1);
}

TEST_F(CliTest, MissingCorpusIsDataError) {
    EXPECT_EQ(run("index build --corpus " + q(scratch_.str("absent.json")) + " --out " + q(scratch_.str("idx"))), 2);
    EXPECT_FALSE(std::filesystem::exists(scratch_.path() / "idx" / "meta.json"));
}

TEST_F(CliTest, EvalWritesEveryRowForEveryPreset) {
    const auto report = scratch_.str("report.txt");
    const auto table = scratch_.str("report.csv");
    ASSERT_EQ(run("--mock-llm eval --index " + q(index()) + " --gold " + q(fixture("gold.csv")) +
                  " --presets bm25,bm25+emb,bm25+rank --report " + q(report) + " --csv " + q(table)),
              0);
    auto rows = cdemapper::csv::parse(slurp(table));
    std::size_t result_rows = 0;
    for (std::size_t i = 1; i < rows.size() && !(rows[i].size() == 1 && rows[i][0].empty()); ++i) {
        if (rows[i][0] == "dataset") break;
        ++result_rows;
        if (rows[i][3] == "BM25+Rank") {
            EXPECT_EQ(rows[i][5], "-");
            EXPECT_EQ(rows[i][6], "-");
        }
    }
    EXPECT_EQ(result_rows, 4u * 3u * 3u);
    EXPECT_NE(slurp(report).find("Acc@10 (%)"), std::string::npos);
}

TEST_F(CliTest, EvalRejectsUnknownGoldTarget) {
    const auto gold = scratch_.str("gold.csv");
    std::ofstream(gold) << "dataset,source_name,source_description,source_values,accepted_target_ids\n"
                           "Eye,Acuity,,,ZZZ99\n";
    EXPECT_EQ(run("--mock-llm eval --index " + q(index()) + " --gold " + q(gold) + " --report " + q(scratch_.str("r.txt"))), 2);
}

TEST_F(CliTest, MapIsDeterministic) {
    const auto a = scratch_.str("a.csv");
    const auto b = scratch_.str("b.csv");
    const std::string base = "--mock-llm map --index " + q(index()) + " --input " + q(fixture("eye_dictionary.csv")) +
                             " --preset bm25+rank --collections NEI,NIH-Endorsed --out ";
    ASSERT_EQ(run(base + q(a)), 0);
    ASSERT_EQ(run(base + q(b)), 0);
    const auto first = slurp(a);
    EXPECT_EQ(first, slurp(b));
    auto rows = cdemapper::csv::parse(first);
    ASSERT_EQ(rows.size(), 41u);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i][7], "auto_top1");
        EXPECT_EQ(rows[i][9], "mapped");
    }
}

TEST_F(CliTest, UnreachableLlmIsUpstreamFailure) {
    const auto config = scratch_.str("llm.conf");
    std::ofstream(config) << "llm.endpoint_url = http://127.0.0.1:1/v1\nllm.timeout = 1\nllm.max_retries = 0\n";
    EXPECT_EQ(run("--llm-config " + q(config) + " map --index " + q(index()) + " --input " + q(fixture("eye_dictionary.csv")) +
                  " --preset bm25+rank --out " + q(scratch_.str("out.csv"))),
              3);
}
