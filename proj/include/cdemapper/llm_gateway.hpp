// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdemapper/corpus.hpp"

namespace cdemapper {

struct LlmConfig {
    std::string endpoint_url = "https://api.openai.com/v1";
    std::string model_name = "gpt-4o";
    std::string embedding_model_name = "text-embedding-3-small";
    /// Name of the environment variable holding the API key, never the key itself.
    std::string api_key_env = "OPENAI_API_KEY";
    double request_timeout = 60.0;
    /// Re-asks after a failed or unparseable answer.
    int max_retries = 2;
    int max_concurrent_requests = 4;
    std::size_t embed_batch_size = 64;
    /// First backoff delay after a rate-limit response; doubles per retry.
    double backoff_seconds = 0.5;
    /// JSONL audit of every request/response when non-empty.
    std::string audit_log_path;

    void validate() const;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
};

class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, int status = 0)
        : std::runtime_error(what), status_(status) {}
    int status() const noexcept { return status_; }
    bool rate_limited() const noexcept { return status_ == 429; }

private:
    int status_;
};

/// Wire-level access to a chat/embedding provider. Implementations must be
/// safe to call from several threads at once.
class LlmTransport {
public:
    virtual ~LlmTransport() = default;
    /// Returns the assistant message content. Throws TransportError.
    virtual std::string chat(const ChatRequest& request) = 0;
    /// One raw (not necessarily normalized) vector per input. Throws TransportError.
    virtual std::vector<std::vector<float>> embed(const std::string& model, const std::vector<std::string>& texts) = 0;
    virtual bool offline() const { return false; }
};

struct ExpandedQuery {
    std::string term;
    std::string description;

    bool operator==(const ExpandedQuery&) const = default;
};

struct RerankCandidate {
    std::string tiny_id;
    std::string display_text;
};

struct RerankResult {
    std::vector<std::string> order;
};

struct ValueMatch {
    std::string source_value;
    std::string target_value;
    double score = 0.0;

    bool operator==(const ValueMatch&) const = default;
};

/// A gateway answer. `fell_back` marks results produced by the non-LLM
/// fallback after every attempt failed.
template <typename T>
struct GatewayResult {
    T value;
    bool fell_back = false;
    int attempts = 0;
};

/// Counting limiter for outbound requests.
class RequestLimiter {
public:
    explicit RequestLimiter(int permits) : permits_(permits) {}
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int permits_;
};

/// Embedding, query expansion, candidate re-ranking and value mapping over a
/// chat/embedding transport. Chat operations never throw on model failure:
/// after `max_retries` re-asks they degrade to the non-LLM answer.
class LlmGateway {
public:
    LlmGateway(LlmConfig config, std::shared_ptr<LlmTransport> transport);
    ~LlmGateway();
    LlmGateway(const LlmGateway&) = delete;
    LlmGateway& operator=(const LlmGateway&) = delete;

    /// Unit-norm vectors in input order. Throws GatewayError carrying the
    /// failed batch indices once retries are exhausted, std::invalid_argument
    /// on an empty text.
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts);

    GatewayResult<ExpandedQuery> expand_query(const std::string& term, const std::string& description);

    /// Requires 1..10 candidates. The result is always a permutation of the input ids.
    GatewayResult<RerankResult> rerank(const std::string& term, const std::string& description,
                                       const std::vector<RerankCandidate>& candidates);

    /// Requires a non-empty value set. The match is always a member of it.
    GatewayResult<ValueMatch> map_value(const std::string& value_name, const std::vector<PermissibleValue>& value_set);

    const LlmConfig& config() const { return config_; }
    bool offline() const { return transport_->offline(); }
    std::size_t request_count() const { return requests_.load(); }

private:
    std::string chat_once(const std::string& op, const std::string& prompt);
    void audit(const std::string& op, const std::string& request, const std::string& response, const std::string& error);
    void backoff(int attempt);

    LlmConfig config_;
    std::shared_ptr<LlmTransport> transport_;
    RequestLimiter limiter_;
    std::atomic<std::size_t> requests_{0};

    std::mutex cache_mu_;
    std::unordered_map<std::string, std::vector<float>> embed_cache_;

    std::mutex audit_mu_;
    std::ofstream audit_;
    std::string api_key_;
};

/// Prompt bodies exactly as sent (single user message).
std::string build_expansion_prompt(const std::string& term, const std::string& description);
std::string build_rerank_prompt(const std::string& term, const std::string& description,
                                const std::vector<RerankCandidate>& candidates);
std::string build_value_mapping_prompt(const std::string& value_name, const std::vector<PermissibleValue>& value_set);

/// Token-overlap similarity used by the offline fallback and the mock:
/// equal tokens count 1, a prefix relation counts 0.5, divided by the size of
/// the token union. Exact case-insensitive string equality scores 1.0.
double overlap_score(const std::string& a, const std::string& b);

} // namespace cdemapper
