// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>
#include <thread>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/json_extract.hpp"
#include "cdemapper/llm_gateway.hpp"
#include "cdemapper/prompts.hpp"
#include "cdemapper/transports.hpp"
#include "test_support.hpp"

using namespace cdemapper;
using nlohmann::json;

namespace {

// Replays canned answers; an integer entry is thrown as a TransportError with that status.
class ScriptedTransport : public LlmTransport {
public:
    struct Step {
        std::string content;
        int status = 0;
    };

    void push(std::string content) { steps_.push_back({std::move(content), 0}); }
    void fail(int status) { steps_.push_back({{}, status}); }

    std::string chat(const ChatRequest& request) override {
        std::lock_guard lock(mu_);
        requests.push_back(request);
        if (steps_.empty()) throw TransportError("script exhausted", 500);
        auto step = steps_.front();
        steps_.pop_front();
        if (step.status) throw TransportError("scripted failure", step.status);
        return step.content;
    }

    std::vector<std::vector<float>> embed(const std::string&, const std::vector<std::string>& texts) override {
        std::lock_guard lock(mu_);
        ++embed_calls;
        batch_sizes.push_back(texts.size());
        for (const auto& t : texts) {
            if (t.find("poison") != std::string::npos) throw TransportError("bad input", 400);
        }
        std::vector<std::vector<float>> out;
        for (const auto& t : texts) out.push_back(MockTransport::hashed_embedding(t));
        return out;
    }

    std::vector<ChatRequest> requests;
    std::size_t embed_calls = 0;
    std::vector<std::size_t> batch_sizes;

private:
    std::mutex mu_;
    std::deque<Step> steps_;
};

LlmConfig fast_config() {
    LlmConfig c;
    c.backoff_seconds = 0.0;
    return c;
}

std::string instruction_of(const std::string& prompt) {
    const std::string head = "Instruction: ";
    EXPECT_EQ(prompt.compare(0, head.size(), head), 0);
    auto end = prompt.find("\n\nInput: ");
    return prompt.substr(head.size(), end - head.size());
}

std::vector<PermissibleValue> values(std::initializer_list<const char*> names) {
    std::vector<PermissibleValue> out;
    for (auto n : names) out.push_back({n, {}, {}});
    return out;
}

std::vector<RerankCandidate> candidates(int n) {
    std::vector<RerankCandidate> out;
    for (int i = 0; i < n; ++i) out.push_back({"c" + std::to_string(i), "Candidate " + std::to_string(i)});
    return out;
}

} // namespace

TEST(PromptFidelity, InstructionsMatchCheckedInFixtures) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push(R"({"term":"x","description":""})");
    t->push(R"(["c1","c0"])");
    t->push(R"({"value":"Yes","score":1})");
    LlmGateway gw(fast_config(), t);
    gw.expand_query("heart attack", "");
    gw.rerank("x", "", candidates(2));
    gw.map_value("Y", values({"Yes", "No"}));
    ASSERT_EQ(t->requests.size(), 3u);

    using testing_support::fixture;
    using testing_support::slurp;
    const std::string files[] = {"prompts/query_expansion.txt", "prompts/rerank.txt", "prompts/value_mapping.txt"};
    for (std::size_t i = 0; i < 3; ++i) {
        ASSERT_EQ(t->requests[i].messages.size(), 1u);
        EXPECT_EQ(t->requests[i].messages[0].role, "user");
        EXPECT_EQ(instruction_of(t->requests[i].messages[0].content), slurp(fixture(files[i]))) << files[i];
    }
    EXPECT_EQ(t->requests[0].model, "gpt-4o");
    EXPECT_EQ(t->requests[0].temperature, 0.0);
}

TEST(PromptFidelity, PromptSections) {
    auto p = build_rerank_prompt("Race", "self identified", {{"C1", "Race — d (NIH-Endorsed)"}});
    EXPECT_NE(p.find("\n\nInput: {\"description\":\"self identified\",\"term\":\"Race\"}"), std::string::npos);
    EXPECT_NE(p.find("\n\nSearch Results: [{\"id\":\"C1\",\"text\":\"Race — d (NIH-Endorsed)\"}]"), std::string::npos);
    EXPECT_NE(p.find(std::string("\n\nOutput: ") + std::string(prompts::kRerankOutput)), std::string::npos);
    auto v = build_value_mapping_prompt("M", values({"Male", "Female"}));
    EXPECT_NE(v.find("\n\nValue Set: [\"Male\",\"Female\"]"), std::string::npos);
}

TEST(Gateway, ExpansionParsesFencedJson) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push("Here you go:\n```json\n{\"term\": \" myocardial infarction \", \"description\": \"MI\"}\n```");
    LlmGateway gw(fast_config(), t);
    auto r = gw.expand_query("heart attack", "");
    EXPECT_FALSE(r.fell_back);
    EXPECT_EQ(r.attempts, 1);
    EXPECT_EQ(r.value.term, "myocardial infarction");
    EXPECT_EQ(r.value.description, "MI");
}

TEST(Gateway, ExpansionRetriesThenFallsBackToInput) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push("not json");
    t->fail(500);
    t->push(R"({"description":"no term"})");
    LlmGateway gw(fast_config(), t);
    auto r = gw.expand_query("heart attack", "desc");
    EXPECT_TRUE(r.fell_back);
    EXPECT_EQ(r.attempts, 3);
    EXPECT_EQ(gw.request_count(), 3u);
    EXPECT_EQ(r.value, (ExpandedQuery{"heart attack", "desc"}));
}

TEST(Gateway, ExpansionRecoversOnSecondAttempt) {
    auto t = std::make_shared<ScriptedTransport>();
    t->fail(429);
    t->push(R"({"term":"stroke","description":""})");
    LlmGateway gw(fast_config(), t);
    auto r = gw.expand_query("cva", "");
    EXPECT_FALSE(r.fell_back);
    EXPECT_EQ(r.attempts, 2);
    EXPECT_EQ(r.value.term, "stroke");
}

TEST(Gateway, RerankRejectsNonPermutations) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push(R"(["c2","c0"])");            // missing c1
    t->push(R"(["c2","c0","c1","zz"])");  // foreign id
    t->push(R"([{"id":"c2"},{"id":"c0"},{"id":"c1"}])");
    LlmGateway gw(fast_config(), t);
    auto r = gw.rerank("t", "", candidates(3));
    EXPECT_FALSE(r.fell_back);
    EXPECT_EQ(r.attempts, 3);
    EXPECT_EQ(r.value.order, (std::vector<std::string>{"c2", "c0", "c1"}));
}

TEST(Gateway, RerankFallsBackToInputOrder) {
    auto t = std::make_shared<ScriptedTransport>();
    for (int i = 0; i < 3; ++i) t->push(R"(["c0","c0","c1"])");
    LlmGateway gw(fast_config(), t);
    auto r = gw.rerank("t", "", candidates(3));
    EXPECT_TRUE(r.fell_back);
    EXPECT_EQ(r.value.order, (std::vector<std::string>{"c0", "c1", "c2"}));
}

TEST(Gateway, RerankValidatesInput) {
    LlmGateway gw(fast_config(), std::make_shared<ScriptedTransport>());
    EXPECT_THROW(gw.rerank("t", "", candidates(11)), std::invalid_argument);
    EXPECT_THROW(gw.rerank("t", "", {}), std::invalid_argument);
    EXPECT_THROW(gw.rerank("t", "", {{"a", "x"}, {"a", "y"}}), std::invalid_argument);
}

TEST(Gateway, ValueMappingClampsScore) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push(R"({"value":"Female","score":1.7})");
    LlmGateway gw(fast_config(), t);
    auto r = gw.map_value("F", values({"Male", "Female"}));
    EXPECT_EQ(r.value, (ValueMatch{"F", "Female", 1.0}));
}

TEST(Gateway, ValueMappingFallbackPrefersExactMatch) {
    auto t = std::make_shared<ScriptedTransport>();
    t->push(R"({"value":"Caucasian","score":0.9})");  // not in the set
    t->push(R"({"value":"White"})");                  // no score
    t->fail(503);
    LlmGateway gw(fast_config(), t);
    auto r = gw.map_value("white", values({"Asian", "White", "Unknown"}));
    EXPECT_TRUE(r.fell_back);
    EXPECT_EQ(r.value, (ValueMatch{"white", "White", 1.0}));
}

TEST(Gateway, ValueMappingFallbackUsesOverlapWithZeroScore) {
    auto t = std::make_shared<ScriptedTransport>();
    LlmGateway gw(fast_config(), t);
    auto r = gw.map_value("Not Hispanic", values({"Hispanic or Latino", "Not Hispanic or Latino", "Unknown"}));
    EXPECT_TRUE(r.fell_back);
    EXPECT_EQ(r.value.target_value, "Not Hispanic or Latino");
    EXPECT_EQ(r.value.score, 0.0);
    EXPECT_THROW(gw.map_value("x", {}), std::invalid_argument);
}

TEST(Gateway, EmbeddingBatchesAndCaches) {
    auto t = std::make_shared<ScriptedTransport>();
    auto config = fast_config();
    config.embed_batch_size = 64;
    LlmGateway gw(config, t);
    std::vector<std::string> texts;
    for (int i = 0; i < 150; ++i) texts.push_back("text " + std::to_string(i));
    auto first = gw.embed(texts);
    EXPECT_EQ(t->embed_calls, 3u);
    auto sizes = t->batch_sizes;
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{22, 64, 64}));
    auto second = gw.embed({texts[5], texts[149]});
    EXPECT_EQ(t->embed_calls, 3u);
    EXPECT_EQ(second[0], first[5]);
    EXPECT_EQ(second[1], first[149]);
    EXPECT_THROW(gw.embed({"ok", ""}), std::invalid_argument);
}

TEST(Gateway, EmbeddingFailureNamesBatches) {
    auto t = std::make_shared<ScriptedTransport>();
    auto config = fast_config();
    config.embed_batch_size = 2;
    config.max_concurrent_requests = 1;
    LlmGateway gw(config, t);
    try {
        gw.embed({"a", "b", "c", "poison", "e"});
        FAIL() << "expected GatewayError";
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.failed_batches(), (std::vector<std::size_t>{1}));
    }
    // Two good batches once, the bad one three times.
    EXPECT_EQ(t->embed_calls, 5u);
}

TEST(Gateway, AuditLogRedactsApiKey) {
    testing_support::TempDir dir;
    ::setenv("CDEMAPPER_TEST_KEY", "sk-very-secret", 1);
    auto t = std::make_shared<ScriptedTransport>();
    t->push(R"({"term":"echo sk-very-secret","description":""})");
    auto config = fast_config();
    config.api_key_env = "CDEMAPPER_TEST_KEY";
    config.audit_log_path = dir.str("audit.jsonl");
    {
        LlmGateway gw(config, t);
        gw.expand_query("sk-very-secret", "");
    }
    auto log = testing_support::slurp(config.audit_log_path);
    EXPECT_EQ(log.find("sk-very-secret"), std::string::npos);
    EXPECT_NE(log.find("[REDACTED]"), std::string::npos);
    auto line = json::parse(log.substr(0, log.find('\n')));
    EXPECT_EQ(line["op"], "expand_query");
}

TEST(Gateway, LimiterCapsConcurrency) {
    class SlowTransport : public LlmTransport {
    public:
        std::string chat(const ChatRequest&) override {
            int now = ++inflight;
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --inflight;
            return R"({"term":"t","description":""})";
        }
        std::vector<std::vector<float>> embed(const std::string&, const std::vector<std::string>&) override { return {}; }
        std::atomic<int> inflight{0}, peak{0};
    };
    auto t = std::make_shared<SlowTransport>();
    auto config = fast_config();
    config.max_concurrent_requests = 2;
    LlmGateway gw(config, t);
    {
        std::vector<std::jthread> threads;
        for (int i = 0; i < 8; ++i) threads.emplace_back([&] { gw.expand_query("x", ""); });
    }
    EXPECT_LE(t->peak.load(), 2);
    EXPECT_GE(t->peak.load(), 1);
}

TEST(LlmConfig, Validation) {
    LlmConfig c;
    EXPECT_NO_THROW(c.validate());
    c.max_retries = -1;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = LlmConfig{};
    c.max_concurrent_requests = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(OverlapScore, Values) {
    EXPECT_DOUBLE_EQ(overlap_score("White", "white"), 1.0);
    EXPECT_DOUBLE_EQ(overlap_score("M", "Male"), 0.5);
    EXPECT_DOUBLE_EQ(overlap_score("Not Hispanic or Latino", "Hispanic or Latino"), 0.75);
    EXPECT_DOUBLE_EQ(overlap_score("Yes", "No"), 0.0);
    EXPECT_DOUBLE_EQ(overlap_score("", "No"), 0.0);
}

TEST(JsonExtract, FindsFirstBalancedValue) {
    EXPECT_EQ(*extract_json(R"(answer: {"a": "}{", "b": [1, 2]} trailing {"c": 1})"), json::parse(R"({"a":"}{","b":[1,2]})"));
    EXPECT_EQ(*extract_json("```json\n[\"x\", \"y\"]\n```"), json::parse(R"(["x","y"])"));
    EXPECT_EQ(*extract_json("{broken then [1]"), json::parse("[1]"));
    EXPECT_FALSE(extract_json("no json here"));
    EXPECT_FALSE(extract_json(""));
}

TEST(MockTransport, AnswersAllThreePrompts) {
    auto gw = make_mock_gateway();
    auto e = gw->expand_query("Ethnicity", "self reported");
    EXPECT_FALSE(e.fell_back);
    EXPECT_EQ(e.value, (ExpandedQuery{"Ethnicity", "self reported"}));

    auto r = gw->rerank("Race", "", {{"a", "Race category — x (NINDS)"}, {"b", "Race — y (NIH-Endorsed)"}, {"c", "Race — z (NEI)"}});
    EXPECT_FALSE(r.fell_back);
    EXPECT_EQ(r.value.order, (std::vector<std::string>{"b", "c", "a"}));

    auto v = gw->map_value("White", values({"Asian", "White", "Unknown"}));
    EXPECT_FALSE(v.fell_back);
    EXPECT_EQ(v.value, (ValueMatch{"White", "White", 1.0}));
    auto m = gw->map_value("M", values({"Male", "Female", "Unknown"}));
    EXPECT_EQ(m.value.target_value, "Male");
    EXPECT_DOUBLE_EQ(m.value.score, 0.5);
}

TEST(MockTransport, IdentityRuleKeepsOrder) {
    LlmGateway gw(fast_config(), std::make_shared<MockTransport>(MockTransport::RerankRule::Identity));
    auto r = gw.rerank("Race", "", {{"a", "Other — x (NINDS)"}, {"b", "Race — y (NIH-Endorsed)"}});
    EXPECT_EQ(r.value.order, (std::vector<std::string>{"a", "b"}));
}
