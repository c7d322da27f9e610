// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdemapper/index.hpp"
#include "cdemapper/index_store.hpp"
#include "cdemapper/llm_gateway.hpp"
#include "cdemapper/source_element.hpp"

namespace cdemapper {

enum class LexicalQueryMode { NameOnly, NameAndDescription };
enum class ExpansionScope { BothRetrievers, LexicalOnly };

struct PipelineConfig {
    bool use_expansion = false;
    bool use_embedding = false;
    bool use_rerank = false;
    CollectionFilter collections;
    std::size_t top_k = 10;
    std::size_t rrf_k = 60;
    LexicalQueryMode lexical_query_mode = LexicalQueryMode::NameAndDescription;
    /// Each retriever returns top_k * depth_factor hits before fusion.
    std::size_t depth_factor = 3;
    ExpansionScope expansion_scope = ExpansionScope::BothRetrievers;

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

/// The four named configurations: "bm25", "bm25+emb", "bm25+rank", "bm25+emb+rank".
/// Throws std::invalid_argument for any other name.
PipelineConfig preset(std::string_view name);
std::optional<std::string> preset_name(const PipelineConfig& config);
inline constexpr std::string_view kPresetNames[] = {"bm25", "bm25+emb", "bm25+rank", "bm25+emb+rank"};

/// Applies flat keys (`preset`, `expansion`, `embedding`, `rerank`,
/// `collections`, `top_k`, `rrf_k`, `lexical_query_mode`, `depth_factor`,
/// `expansion_scope`) on top of `base`. Unknown keys are rejected.
PipelineConfig parse_config(const std::map<std::string, std::string>& kv, PipelineConfig base = {});
std::map<std::string, std::string> to_key_values(const PipelineConfig& config);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const nlohmann::json& j);

struct FusedHit {
    std::string tiny_id;
    double fused_score = 0.0;
};

/// Reciprocal rank fusion: sum over lists of 1 / (rrf_k + rank), rank 1-based.
/// Sorted by fused score descending, then tiny_id ascending.
std::vector<FusedHit> fuse(const std::vector<ScoredHit>& lexical, const std::vector<ScoredHit>& vector, std::size_t rrf_k);

struct Candidate {
    std::string tiny_id;
    std::string name;
    std::string collection;
    std::optional<double> lexical_score;
    std::optional<double> vector_score;
    double fused_score = 0.0;
    std::size_t rank = 0;
    bool llm_suggested = false;
    std::string detail_url;
};

struct StageTimings {
    double expansion_ms = 0;
    double lexical_ms = 0;
    double embedding_ms = 0;
    double fusion_ms = 0;
    double rerank_ms = 0;
};

struct CandidateList {
    std::string element_id;
    PipelineConfig config;
    /// Query actually sent to the retrievers (after expansion, if any).
    std::string query_term;
    std::string query_description;
    std::vector<Candidate> candidates;
    StageTimings timings;
    /// True when an LLM stage was requested but fell back or was unavailable.
    bool degraded = false;
    std::vector<std::string> notes;
};

nlohmann::json to_json(const Candidate& c);
nlohmann::json to_json(const CandidateList& list, bool include_timings = true);
CandidateList candidate_list_from_json(const nlohmann::json& j);

/// Runs expansion, hybrid retrieval, fusion, truncation and the optional
/// "LLM suggested" promotion. `gateway` may be null when no LLM stage is
/// enabled; enabled stages without a gateway mark the result degraded.
CandidateList recommend(const SourceElement& element, const PipelineConfig& config, const IndexBundle& bundle,
                        LlmGateway* gateway);

/// Raw user query, no expansion and no re-ranking.
CandidateList manual_search(const std::string& query, const CollectionFilter& collections, const IndexBundle& bundle,
                            const PipelineConfig& config, LlmGateway* gateway);

struct ValueMappingOutcome {
    /// False when the target CDE has no permissible values.
    bool available = false;
    std::vector<ValueMatch> matches;
    bool degraded = false;
};

ValueMappingOutcome map_values(const std::vector<std::string>& source_values, const CdeRecord& target, LlmGateway& gateway);

/// Builds both indexes over a validated corpus. Vectors are computed through
/// `gateway` when given; pass nullptr for a lexical-only artifact.
IndexBundle build_index(std::vector<CdeRecord> records, const Bm25Params& params, const std::string& snapshot_date,
                        LlmGateway* gateway);

/// Name, then the definition after a dash separator, then the collection in
/// parentheses. At most 300 characters.
std::string rerank_display_text(const CdeRecord& record);

} // namespace cdemapper
