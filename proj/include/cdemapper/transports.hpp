// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "cdemapper/llm_gateway.hpp"

namespace cdemapper {

/// Deterministic offline provider. It answers the three fixed prompts by
/// reading their Input / Search Results / Value Set sections:
///  - query expansion echoes the input term and description;
///  - re-ranking stably moves candidates whose name (display text before
///    the dash separator) equals the term case-insensitively to the front;
///  - value mapping picks the best overlap_score member.
/// Embeddings are L2-normalized 256-bucket hashed bags of tokens.
class MockTransport : public LlmTransport {
public:
    enum class RerankRule { PromoteExactName, Identity };

    static constexpr std::size_t kDimension = 256;

    explicit MockTransport(RerankRule rule = RerankRule::PromoteExactName) : rule_(rule) {}

    std::string chat(const ChatRequest& request) override;
    std::vector<std::vector<float>> embed(const std::string& model, const std::vector<std::string>& texts) override;
    bool offline() const override { return true; }

    static std::vector<float> hashed_embedding(const std::string& text);

private:
    RerankRule rule_;
};

/// Chat-completions / embeddings client over HTTP(S). The base URL is the
/// provider root, e.g. "https://api.openai.com/v1" or "http://localhost:8000/v1".
class HttpTransport : public LlmTransport {
public:
    explicit HttpTransport(LlmConfig config);

    std::string chat(const ChatRequest& request) override;
    std::vector<std::vector<float>> embed(const std::string& model, const std::vector<std::string>& texts) override;

private:
    std::string post(const std::string& path, const std::string& body);

    LlmConfig config_;
    std::string scheme_host_;
    std::string base_path_;
    std::string api_key_;
};

} // namespace cdemapper
