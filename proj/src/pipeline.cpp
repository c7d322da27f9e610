// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

using nlohmann::json;

void PipelineConfig::validate() const {
    if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
    if (rrf_k < 1) throw std::invalid_argument("rrf_k must be >= 1");
    if (depth_factor < 1) throw std::invalid_argument("depth_factor must be >= 1");
}

PipelineConfig preset(std::string_view name) {
    PipelineConfig c;
    if (name == "bm25") return c;
    if (name == "bm25+emb") { c.use_embedding = true; return c; }
    if (name == "bm25+rank") { c.use_rerank = true; return c; }
    if (name == "bm25+emb+rank") { c.use_embedding = true; c.use_rerank = true; return c; }
    throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected bm25, bm25+emb, bm25+rank or bm25+emb+rank)");
}

std::optional<std::string> preset_name(const PipelineConfig& config) {
    if (config.use_expansion) return std::nullopt;
    if (config.use_embedding) return config.use_rerank ? "bm25+emb+rank" : "bm25+emb";
    return config.use_rerank ? "bm25+rank" : "bm25";
}

namespace {

bool parse_switch(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw std::invalid_argument(key + " must be on or off, got '" + v + "'");
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long n = 0;
    try {
        n = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || n < 1) throw std::invalid_argument(key + " must be a positive integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
}

CollectionFilter parse_collections(const std::string& v) {
    std::set<std::string> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        auto comma = v.find(',', pos);
        auto item = trim(std::string_view(v).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (!item.empty()) out.emplace(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) return std::nullopt;
    return out;
}

std::string mode_name(LexicalQueryMode m) {
    return m == LexicalQueryMode::NameOnly ? "name_only" : "name_and_description";
}

LexicalQueryMode parse_mode(const std::string& v) {
    if (v == "name_only") return LexicalQueryMode::NameOnly;
    if (v == "name_and_description") return LexicalQueryMode::NameAndDescription;
    throw std::invalid_argument("lexical_query_mode must be name_only or name_and_description, got '" + v + "'");
}

std::string scope_name(ExpansionScope s) {
    return s == ExpansionScope::LexicalOnly ? "lexical" : "both";
}

ExpansionScope parse_scope(const std::string& v) {
    if (v == "both") return ExpansionScope::BothRetrievers;
    if (v == "lexical") return ExpansionScope::LexicalOnly;
    throw std::invalid_argument("expansion_scope must be both or lexical, got '" + v + "'");
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string join_text(const std::string& a, const std::string& b, const char* sep) {
    if (trim(b).empty()) return a;
    return a + sep + b;
}

} // namespace

PipelineConfig parse_config(const std::map<std::string, std::string>& kv, PipelineConfig base) {
    if (auto it = kv.find("preset"); it != kv.end()) {
        auto p = preset(it->second);
        base.use_expansion = p.use_expansion;
        base.use_embedding = p.use_embedding;
        base.use_rerank = p.use_rerank;
    }
    for (const auto& [key, value] : kv) {
        if (key == "preset") continue;
        else if (key == "expansion") base.use_expansion = parse_switch(key, value);
        else if (key == "embedding") base.use_embedding = parse_switch(key, value);
        else if (key == "rerank") base.use_rerank = parse_switch(key, value);
        else if (key == "collections") base.collections = parse_collections(value);
        else if (key == "top_k") base.top_k = parse_count(key, value);
        else if (key == "rrf_k") base.rrf_k = parse_count(key, value);
        else if (key == "depth_factor") base.depth_factor = parse_count(key, value);
        else if (key == "lexical_query_mode") base.lexical_query_mode = parse_mode(value);
        else if (key == "expansion_scope") base.expansion_scope = parse_scope(value);
        else throw std::invalid_argument("unknown pipeline option '" + key + "'");
    }
    base.validate();
    return base;
}

std::map<std::string, std::string> to_key_values(const PipelineConfig& c) {
    std::vector<std::string> cols;
    if (c.collections) cols.assign(c.collections->begin(), c.collections->end());
    return {
        {"expansion", c.use_expansion ? "on" : "off"},
        {"embedding", c.use_embedding ? "on" : "off"},
        {"rerank", c.use_rerank ? "on" : "off"},
        {"collections", join(cols, ",")},
        {"top_k", std::to_string(c.top_k)},
        {"rrf_k", std::to_string(c.rrf_k)},
        {"depth_factor", std::to_string(c.depth_factor)},
        {"lexical_query_mode", mode_name(c.lexical_query_mode)},
        {"expansion_scope", scope_name(c.expansion_scope)},
    };
}

json config_to_json(const PipelineConfig& c) {
    json j{
        {"expansion", c.use_expansion},
        {"embedding", c.use_embedding},
        {"rerank", c.use_rerank},
        {"collections", c.collections ? json(std::vector<std::string>(c.collections->begin(), c.collections->end())) : json(nullptr)},
        {"top_k", c.top_k},
        {"rrf_k", c.rrf_k},
        {"depth_factor", c.depth_factor},
        {"lexical_query_mode", mode_name(c.lexical_query_mode)},
        {"expansion_scope", scope_name(c.expansion_scope)},
    };
    if (auto name = preset_name(c)) j["preset"] = *name;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    if (auto it = j.find("preset"); it != j.end() && it->is_string()) {
        auto p = preset(it->get<std::string>());
        c.use_embedding = p.use_embedding;
        c.use_rerank = p.use_rerank;
    }
    c.use_expansion = j.value("expansion", c.use_expansion);
    c.use_embedding = j.value("embedding", c.use_embedding);
    c.use_rerank = j.value("rerank", c.use_rerank);
    if (auto it = j.find("collections"); it != j.end() && it->is_array() && !it->empty()) {
        c.collections = it->get<std::set<std::string>>();
    }
    c.top_k = j.value("top_k", c.top_k);
    c.rrf_k = j.value("rrf_k", c.rrf_k);
    c.depth_factor = j.value("depth_factor", c.depth_factor);
    if (auto it = j.find("lexical_query_mode"); it != j.end()) c.lexical_query_mode = parse_mode(it->get<std::string>());
    if (auto it = j.find("expansion_scope"); it != j.end()) c.expansion_scope = parse_scope(it->get<std::string>());
    c.validate();
    return c;
}

std::vector<FusedHit> fuse(const std::vector<ScoredHit>& lexical, const std::vector<ScoredHit>& vector, std::size_t rrf_k) {
    if (rrf_k < 1) throw std::invalid_argument("rrf_k must be >= 1");
    std::unordered_map<std::string, double> scores;
    std::vector<std::string> order;
    for (const auto* list : {&lexical, &vector}) {
        for (std::size_t i = 0; i < list->size(); ++i) {
            const auto& id = (*list)[i].tiny_id;
            auto [it, inserted] = scores.emplace(id, 0.0);
            if (inserted) order.push_back(id);
            it->second += 1.0 / static_cast<double>(rrf_k + i + 1);
        }
    }
    std::vector<FusedHit> out;
    out.reserve(order.size());
    for (auto& id : order) out.push_back({id, scores[id]});
    std::sort(out.begin(), out.end(), [](const FusedHit& a, const FusedHit& b) {
        if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
        return a.tiny_id < b.tiny_id;
    });
    return out;
}

std::string rerank_display_text(const CdeRecord& r) {
    std::string text = r.name;
    if (!r.definition.empty()) text += " \xE2\x80\x94 " + r.definition;
    text += " (" + r.collection + ")";
    return truncate_utf8(text, 300);
}

CandidateList recommend(const SourceElement& element, const PipelineConfig& config, const IndexBundle& bundle,
                        LlmGateway* gateway) {
    config.validate();
    if (trim(element.name).empty()) throw std::invalid_argument("recommend: element name is empty");

    CandidateList out;
    out.element_id = element.element_id;
    out.config = config;
    out.query_term = element.name;
    out.query_description = element.description;
    if (!bundle.lexical()) return out;

    auto degrade = [&](std::string note) {
        out.degraded = true;
        out.notes.push_back(std::move(note));
    };

    // 1. expansion
    std::string term = element.name;
    std::string description = element.description;
    if (config.use_expansion) {
        auto t0 = std::chrono::steady_clock::now();
        if (gateway) {
            auto expanded = gateway->expand_query(element.name, element.description);
            if (expanded.fell_back) degrade("query expansion fell back to the original query");
            term = expanded.value.term;
            description = expanded.value.description;
        } else {
            degrade("query expansion requested without an LLM gateway");
        }
        out.timings.expansion_ms = elapsed_ms(t0);
    }
    out.query_term = term;
    out.query_description = description;

    const std::size_t depth = config.top_k * config.depth_factor;

    // 2. lexical retrieval
    auto t0 = std::chrono::steady_clock::now();
    const std::string lexical_query =
        config.lexical_query_mode == LexicalQueryMode::NameOnly ? term : join_text(term, description, " ");
    auto lexical = bundle.lexical()->search(lexical_query, config.collections, depth);
    out.timings.lexical_ms = elapsed_ms(t0);

    // 3. embedding retrieval
    std::vector<ScoredHit> dense;
    if (config.use_embedding) {
        t0 = std::chrono::steady_clock::now();
        const bool original = config.use_expansion && config.expansion_scope == ExpansionScope::LexicalOnly;
        const std::string text = original ? join_text(element.name, element.description, "\n") : join_text(term, description, "\n");
        if (!gateway) {
            degrade("embedding search requested without an LLM gateway");
        } else if (!bundle.vectors()) {
            degrade("embedding search requested but the index has no vectors");
        } else {
            if (bundle.meta().embedding_model != gateway->config().embedding_model_name) {
                throw std::invalid_argument("index embeddings come from '" + bundle.meta().embedding_model +
                                            "' but the gateway uses '" + gateway->config().embedding_model_name + "'");
            }
            try {
                auto q = gateway->embed({text});
                dense = bundle.vectors()->search(q.front(), config.collections, depth);
            } catch (const GatewayError& e) {
                degrade(std::string("embedding search unavailable: ") + e.what());
            }
        }
        out.timings.embedding_ms = elapsed_ms(t0);
    }

    // 4-5. fusion and truncation
    t0 = std::chrono::steady_clock::now();
    auto fused = fuse(lexical, dense, config.rrf_k);
    if (fused.size() > config.top_k) fused.resize(config.top_k);

    std::unordered_map<std::string, double> lexical_scores, dense_scores;
    for (const auto& h : lexical) lexical_scores.emplace(h.tiny_id, h.score);
    for (const auto& h : dense) dense_scores.emplace(h.tiny_id, h.score);

    for (const auto& f : fused) {
        const CdeRecord* rec = bundle.find(f.tiny_id);
        if (!rec) throw IntegrityError("index references unknown tinyId '" + f.tiny_id + "'");
        Candidate c;
        c.tiny_id = f.tiny_id;
        c.name = rec->name;
        c.collection = rec->collection;
        c.detail_url = rec->detail_url;
        c.fused_score = f.fused_score;
        if (auto it = lexical_scores.find(f.tiny_id); it != lexical_scores.end()) c.lexical_score = it->second;
        if (auto it = dense_scores.find(f.tiny_id); it != dense_scores.end()) c.vector_score = it->second;
        out.candidates.push_back(std::move(c));
    }
    out.timings.fusion_ms = elapsed_ms(t0);

    // 6. rerank: promote the reranker's first choice, keep everything else in place
    if (config.use_rerank && !out.candidates.empty()) {
        t0 = std::chrono::steady_clock::now();
        if (!gateway) {
            degrade("re-ranking requested without an LLM gateway");
        } else {
            std::vector<RerankCandidate> inputs;
            // The re-ranking prompt takes at most ten results.
            const auto shown = std::min<std::size_t>(out.candidates.size(), 10);
            for (std::size_t i = 0; i < shown; ++i) {
                const auto& c = out.candidates[i];
                inputs.push_back({c.tiny_id, rerank_display_text(*bundle.find(c.tiny_id))});
            }
            auto reranked = gateway->rerank(element.name, element.description, inputs);
            if (reranked.fell_back) degrade("re-ranking fell back to retrieval order");
            const auto& top = reranked.value.order.front();
            auto it = std::find_if(out.candidates.begin(), out.candidates.end(),
                                   [&](const Candidate& c) { return c.tiny_id == top; });
            it->llm_suggested = true;
            std::rotate(out.candidates.begin(), it, it + 1);
        }
        out.timings.rerank_ms = elapsed_ms(t0);
    }

    for (std::size_t i = 0; i < out.candidates.size(); ++i) out.candidates[i].rank = i + 1;
    return out;
}

CandidateList manual_search(const std::string& query, const CollectionFilter& collections, const IndexBundle& bundle,
                            const PipelineConfig& config, LlmGateway* gateway) {
    if (trim(query).empty()) throw std::invalid_argument("manual_search: query is empty");
    PipelineConfig c = config;
    c.use_expansion = false;
    c.use_rerank = false;
    c.collections = collections;
    c.lexical_query_mode = LexicalQueryMode::NameOnly;
    SourceElement element;
    element.name = query;
    return recommend(element, c, bundle, gateway);
}

ValueMappingOutcome map_values(const std::vector<std::string>& source_values, const CdeRecord& target, LlmGateway& gateway) {
    ValueMappingOutcome out;
    if (target.permissible_values.empty()) return out;
    out.available = true;
    for (const auto& v : source_values) {
        auto m = gateway.map_value(v, target.permissible_values);
        out.degraded = out.degraded || m.fell_back;
        out.matches.push_back(std::move(m.value));
    }
    return out;
}

json to_json(const Candidate& c) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{
        {"tiny_id", c.tiny_id},
        {"name", c.name},
        {"collection", c.collection},
        {"lexical_score", opt(c.lexical_score)},
        {"vector_score", opt(c.vector_score)},
        {"fused_score", c.fused_score},
        {"rank", c.rank},
        {"llm_suggested", c.llm_suggested},
        {"detail_url", c.detail_url},
    };
}

json to_json(const CandidateList& list, bool include_timings) {
    json candidates = json::array();
    for (const auto& c : list.candidates) candidates.push_back(to_json(c));
    json j{
        {"element_id", list.element_id},
        {"config", config_to_json(list.config)},
        {"query", {{"term", list.query_term}, {"description", list.query_description}}},
        {"candidates", std::move(candidates)},
        {"degraded", list.degraded},
        {"notes", list.notes},
    };
    if (include_timings) {
        j["timings_ms"] = {
            {"expansion", list.timings.expansion_ms}, {"lexical", list.timings.lexical_ms},
            {"embedding", list.timings.embedding_ms}, {"fusion", list.timings.fusion_ms},
            {"rerank", list.timings.rerank_ms},
        };
    }
    return j;
}

CandidateList candidate_list_from_json(const json& j) {
    CandidateList list;
    list.element_id = j.value("element_id", "");
    list.config = config_from_json(j.at("config"));
    if (auto q = j.find("query"); q != j.end()) {
        list.query_term = q->value("term", "");
        list.query_description = q->value("description", "");
    }
    for (const auto& c : j.at("candidates")) {
        Candidate cand;
        cand.tiny_id = c.at("tiny_id").get<std::string>();
        cand.name = c.value("name", "");
        cand.collection = c.value("collection", "");
        if (c.contains("lexical_score") && c["lexical_score"].is_number()) cand.lexical_score = c["lexical_score"].get<double>();
        if (c.contains("vector_score") && c["vector_score"].is_number()) cand.vector_score = c["vector_score"].get<double>();
        cand.fused_score = c.value("fused_score", 0.0);
        cand.rank = c.value("rank", std::size_t{0});
        cand.llm_suggested = c.value("llm_suggested", false);
        cand.detail_url = c.value("detail_url", "");
        list.candidates.push_back(std::move(cand));
    }
    list.degraded = j.value("degraded", false);
    list.notes = j.value("notes", std::vector<std::string>{});
    return list;
}

IndexBundle build_index(std::vector<CdeRecord> records, const Bm25Params& params, const std::string& snapshot_date,
                        LlmGateway* gateway) {
    std::vector<IndexableDocument> docs;
    docs.reserve(records.size());
    for (const auto& r : records) docs.push_back(preprocess(r));

    IndexMeta meta;
    meta.params = params;
    meta.snapshot = {snapshot_date, records.size()};
    auto lexical = LexicalIndex::build(docs, params, meta.snapshot);

    std::optional<VectorIndex> vectors;
    if (gateway) {
        std::vector<std::string> texts;
        texts.reserve(docs.size());
        for (const auto& d : docs) texts.push_back(d.embedding_text);
        auto embedded = gateway->embed(texts);
        std::vector<VectorEntry> entries;
        entries.reserve(docs.size());
        for (std::size_t i = 0; i < docs.size(); ++i) {
            entries.push_back({docs[i].tiny_id, docs[i].collection, std::move(embedded[i])});
        }
        vectors = VectorIndex::build(std::move(entries));
        meta.embedding_model = gateway->config().embedding_model_name;
        meta.embedding_dimension = vectors->dimension();
    }
    return IndexBundle(std::move(records), std::move(lexical), std::move(vectors), std::move(meta));
}

} // namespace cdemapper
