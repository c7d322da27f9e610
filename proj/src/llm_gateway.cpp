// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/llm_gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/json_extract.hpp"
#include "cdemapper/prompts.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

using nlohmann::json;

void LlmConfig::validate() const {
    if (!(request_timeout > 0.0)) throw std::invalid_argument("llm: request_timeout must be > 0");
    if (max_retries < 0 || max_retries > 5) throw std::invalid_argument("llm: max_retries must lie in [0, 5]");
    if (max_concurrent_requests < 1) throw std::invalid_argument("llm: max_concurrent_requests must be >= 1");
    if (embed_batch_size < 1) throw std::invalid_argument("llm: embed_batch_size must be >= 1");
}

void RequestLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return permits_ > 0; });
    --permits_;
}

void RequestLimiter::release() {
    {
        std::lock_guard lock(mu_);
        ++permits_;
    }
    cv_.notify_one();
}

namespace {

class Permit {
public:
    explicit Permit(RequestLimiter& l) : l_(l) { l_.acquire(); }
    ~Permit() { l_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

private:
    RequestLimiter& l_;
};

void warn(const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
}

std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<float> normalized(std::vector<float> v) {
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * x;
    const double norm = std::sqrt(sum);
    if (norm == 0.0 || !std::isfinite(norm)) throw TransportError("embedding with zero or non-finite norm");
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
}

std::optional<ExpandedQuery> parse_expansion(const std::string& content) {
    auto j = extract_json(content);
    if (!j || !j->is_object()) return std::nullopt;
    auto term = j->find("term");
    auto desc = j->find("description");
    if (term == j->end() || !term->is_string()) return std::nullopt;
    ExpandedQuery q;
    q.term = std::string(trim(term->get<std::string>()));
    if (desc != j->end() && desc->is_string()) q.description = std::string(trim(desc->get<std::string>()));
    if (q.term.empty()) return std::nullopt;
    return q;
}

// Accepts ["id", ...] or [{"id": ...}, ...]; rejects anything that is not an
// exact permutation of `ids`.
std::optional<RerankResult> parse_rerank(const std::string& content, const std::vector<RerankCandidate>& candidates) {
    auto j = extract_json(content);
    if (!j) return std::nullopt;
    if (j->is_object()) {
        for (const char* key : {"results", "reranked", "ids", "search_results"}) {
            if (auto it = j->find(key); it != j->end() && it->is_array()) {
                j = *it;
                break;
            }
        }
    }
    if (!j->is_array()) return std::nullopt;
    RerankResult r;
    for (const auto& item : *j) {
        if (item.is_string()) {
            r.order.push_back(item.get<std::string>());
        } else if (item.is_object()) {
            auto it = item.find("id");
            if (it == item.end()) it = item.find("tiny_id");
            if (it == item.end() || !it->is_string()) return std::nullopt;
            r.order.push_back(it->get<std::string>());
        } else {
            return std::nullopt;
        }
    }
    std::vector<std::string> expected;
    for (const auto& c : candidates) expected.push_back(c.tiny_id);
    auto got = r.order;
    std::sort(expected.begin(), expected.end());
    std::sort(got.begin(), got.end());
    if (got != expected) return std::nullopt;
    return r;
}

std::optional<ValueMatch> parse_value_match(const std::string& content, const std::string& value_name,
                                            const std::vector<PermissibleValue>& value_set) {
    auto j = extract_json(content);
    if (!j) return std::nullopt;
    if (j->is_array()) {
        if (j->empty()) return std::nullopt;
        j = (*j)[0];
    }
    if (!j->is_object()) return std::nullopt;
    std::optional<std::string> answer;
    for (const char* key : {"value", "value_name", "valueName", "matched_value", "concept", "name"}) {
        if (auto it = j->find(key); it != j->end() && it->is_string()) {
            answer = it->get<std::string>();
            break;
        }
    }
    std::optional<double> score;
    for (const char* key : {"score", "similarity", "similarity_score"}) {
        if (auto it = j->find(key); it != j->end() && it->is_number()) {
            score = it->get<double>();
            break;
        }
    }
    if (!answer || !score || !std::isfinite(*score)) return std::nullopt;
    auto wanted = trim(*answer);
    for (const auto& v : value_set) {
        if (v.value_name == wanted) return ValueMatch{value_name, v.value_name, std::clamp(*score, 0.0, 1.0)};
    }
    for (const auto& v : value_set) {
        if (iequals(v.value_name, wanted)) return ValueMatch{value_name, v.value_name, std::clamp(*score, 0.0, 1.0)};
    }
    return std::nullopt;
}

} // namespace

double overlap_score(const std::string& a, const std::string& b) {
    if (iequals(trim(a), trim(b))) return 1.0;
    const auto ta = tokenize(a);
    const auto tb = tokenize(b);
    if (ta.empty() || tb.empty()) return 0.0;
    std::vector<char> used(tb.size(), 0);
    double weight = 0.0;
    std::size_t pairs = 0;
    for (const auto& x : ta) {
        std::size_t pick = tb.size();
        double w = 0.0;
        for (std::size_t i = 0; i < tb.size(); ++i) {
            if (!used[i] && tb[i] == x) {
                pick = i;
                w = 1.0;
                break;
            }
        }
        if (pick == tb.size()) {
            for (std::size_t i = 0; i < tb.size(); ++i) {
                if (!used[i] && (tb[i].starts_with(x) || x.starts_with(tb[i]))) {
                    pick = i;
                    w = 0.5;
                    break;
                }
            }
        }
        if (pick != tb.size()) {
            used[pick] = 1;
            weight += w;
            ++pairs;
        }
    }
    return weight / static_cast<double>(ta.size() + tb.size() - pairs);
}

std::string build_expansion_prompt(const std::string& term, const std::string& description) {
    json input{{"term", term}, {"description", description}};
    std::string p = "Instruction: ";
    p += prompts::kQueryExpansionInstruction;
    p += "\n\nInput: " + input.dump();
    p += "\n\nOutput: ";
    p += prompts::kQueryExpansionOutput;
    return p;
}

std::string build_rerank_prompt(const std::string& term, const std::string& description,
                                const std::vector<RerankCandidate>& candidates) {
    json input{{"term", term}, {"description", description}};
    json results = json::array();
    for (const auto& c : candidates) results.push_back({{"id", c.tiny_id}, {"text", c.display_text}});
    std::string p = "Instruction: ";
    p += prompts::kRerankInstruction;
    p += "\n\nInput: " + input.dump();
    p += "\n\nSearch Results: " + results.dump();
    p += "\n\nOutput: ";
    p += prompts::kRerankOutput;
    return p;
}

std::string build_value_mapping_prompt(const std::string& value_name, const std::vector<PermissibleValue>& value_set) {
    json input{{"value name", value_name}};
    json values = json::array();
    for (const auto& v : value_set) values.push_back(v.value_name);
    std::string p = "Instruction: ";
    p += prompts::kValueMappingInstruction;
    p += "\n\nInput: " + input.dump();
    p += "\n\nValue Set: " + values.dump();
    p += "\n\nOutput: ";
    p += prompts::kValueMappingOutput;
    return p;
}

LlmGateway::LlmGateway(LlmConfig config, std::shared_ptr<LlmTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), limiter_(config_.max_concurrent_requests) {
    config_.validate();
    if (!transport_) throw std::invalid_argument("llm gateway requires a transport");
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    if (!config_.audit_log_path.empty()) {
        audit_.open(config_.audit_log_path, std::ios::app);
        if (!audit_) throw std::runtime_error("cannot open audit log '" + config_.audit_log_path + "'");
    }
}

LlmGateway::~LlmGateway() = default;

void LlmGateway::audit(const std::string& op, const std::string& request, const std::string& response,
                       const std::string& error) {
    if (!audit_.is_open()) return;
    auto redact = [this](std::string s) {
        if (api_key_.empty()) return s;
        for (auto pos = s.find(api_key_); pos != std::string::npos; pos = s.find(api_key_, pos)) {
            s.replace(pos, api_key_.size(), "[REDACTED]");
        }
        return s;
    };
    json line{{"at", now_iso()}, {"op", op}, {"request", redact(request)}, {"response", redact(response)}};
    if (!error.empty()) line["error"] = redact(error);
    std::lock_guard lock(audit_mu_);
    audit_ << line.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    audit_.flush();
}

void LlmGateway::backoff(int attempt) {
    if (config_.backoff_seconds <= 0.0) return;
    auto delay = config_.backoff_seconds * std::pow(2.0, attempt);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
}

std::string LlmGateway::chat_once(const std::string& op, const std::string& prompt) {
    ChatRequest req{config_.model_name, {{"user", prompt}}, 0.0};
    Permit permit(limiter_);
    ++requests_;
    try {
        auto content = transport_->chat(req);
        audit(op, prompt, content, {});
        return content;
    } catch (const TransportError& e) {
        audit(op, prompt, {}, e.what());
        throw;
    }
}

std::vector<std::vector<float>> LlmGateway::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out(texts.size());
    std::vector<std::size_t> missing;
    {
        std::lock_guard lock(cache_mu_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (texts[i].empty()) throw std::invalid_argument("embed: text " + std::to_string(i) + " is empty");
            auto it = embed_cache_.find(config_.embedding_model_name + '\x1f' + texts[i]);
            if (it != embed_cache_.end()) out[i] = it->second;
            else missing.push_back(i);
        }
    }
    if (missing.empty()) return out;

    const std::size_t batch = config_.embed_batch_size;
    const std::size_t batches = (missing.size() + batch - 1) / batch;
    std::vector<std::size_t> failed;
    std::mutex failed_mu;
    std::atomic<std::size_t> next{0};

    auto run_batch = [&](std::size_t b) {
        const std::size_t lo = b * batch;
        const std::size_t hi = std::min(missing.size(), lo + batch);
        std::vector<std::string> inputs;
        for (std::size_t i = lo; i < hi; ++i) inputs.push_back(texts[missing[i]]);
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            try {
                std::vector<std::vector<float>> vectors;
                {
                    Permit permit(limiter_);
                    ++requests_;
                    vectors = transport_->embed(config_.embedding_model_name, inputs);
                }
                if (vectors.size() != inputs.size()) throw TransportError("embedding count mismatch");
                for (std::size_t i = lo; i < hi; ++i) out[missing[i]] = normalized(std::move(vectors[i - lo]));
                const auto dim = out[missing[lo]].size();
                for (std::size_t i = lo; i < hi; ++i) {
                    if (out[missing[i]].size() != dim) throw TransportError("embedding dimension varies within a batch");
                }
                return;
            } catch (const TransportError& e) {
                audit("embed", "batch " + std::to_string(b), {}, e.what());
                if (attempt < config_.max_retries) backoff(attempt);
            }
        }
        std::lock_guard lock(failed_mu);
        failed.push_back(b);
    };

    const auto workers = std::min<std::size_t>(batches, static_cast<std::size_t>(config_.max_concurrent_requests));
    if (workers <= 1) {
        for (std::size_t b = 0; b < batches; ++b) run_batch(b);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t b; (b = next.fetch_add(1)) < batches;) run_batch(b);
            });
        }
    }
    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        throw GatewayError("embedding failed for " + std::to_string(failed.size()) + " batch(es)", failed);
    }
    std::lock_guard lock(cache_mu_);
    for (auto i : missing) embed_cache_.emplace(config_.embedding_model_name + '\x1f' + texts[i], out[i]);
    return out;
}

GatewayResult<ExpandedQuery> LlmGateway::expand_query(const std::string& term, const std::string& description) {
    if (trim(term).empty()) throw std::invalid_argument("expand_query: term must be non-empty");
    const auto prompt = build_expansion_prompt(term, description);
    int attempt = 0;
    for (; attempt <= config_.max_retries; ++attempt) {
        try {
            if (auto q = parse_expansion(chat_once("expand_query", prompt))) {
                if (q->description.empty()) q->description = description;
                return {std::move(*q), false, attempt + 1};
            }
        } catch (const TransportError& e) {
            if (e.rate_limited() && attempt < config_.max_retries) backoff(attempt);
        }
    }
    warn("query expansion failed for '" + term + "'; using the original query");
    return {{term, description}, true, attempt};
}

GatewayResult<RerankResult> LlmGateway::rerank(const std::string& term, const std::string& description,
                                               const std::vector<RerankCandidate>& candidates) {
    if (candidates.empty() || candidates.size() > 10) {
        throw std::invalid_argument("rerank: expected 1..10 candidates, got " + std::to_string(candidates.size()));
    }
    std::set<std::string> ids;
    for (const auto& c : candidates) ids.insert(c.tiny_id);
    if (ids.size() != candidates.size()) throw std::invalid_argument("rerank: duplicate candidate ids");

    RerankResult identity;
    for (const auto& c : candidates) identity.order.push_back(c.tiny_id);
    if (candidates.size() == 1) return {identity, false, 0};

    const auto prompt = build_rerank_prompt(term, description, candidates);
    int attempt = 0;
    for (; attempt <= config_.max_retries; ++attempt) {
        try {
            if (auto r = parse_rerank(chat_once("rerank", prompt), candidates)) return {std::move(*r), false, attempt + 1};
        } catch (const TransportError& e) {
            if (e.rate_limited() && attempt < config_.max_retries) backoff(attempt);
        }
    }
    warn("rerank failed for '" + term + "'; keeping retrieval order");
    return {identity, true, attempt};
}

GatewayResult<ValueMatch> LlmGateway::map_value(const std::string& value_name,
                                                const std::vector<PermissibleValue>& value_set) {
    if (value_set.empty()) throw std::invalid_argument("map_value: value set is empty");
    const auto prompt = build_value_mapping_prompt(value_name, value_set);
    int attempt = 0;
    for (; attempt <= config_.max_retries; ++attempt) {
        try {
            if (auto m = parse_value_match(chat_once("map_value", prompt), value_name, value_set)) {
                return {std::move(*m), false, attempt + 1};
            }
        } catch (const TransportError& e) {
            if (e.rate_limited() && attempt < config_.max_retries) backoff(attempt);
        }
    }
    warn("value mapping failed for '" + value_name + "'; using lexical fallback");
    for (const auto& v : value_set) {
        if (iequals(trim(v.value_name), trim(value_name))) return {{value_name, v.value_name, 1.0}, true, attempt};
    }
    const PermissibleValue* best = &value_set.front();
    double best_score = -1.0;
    for (const auto& v : value_set) {
        double s = overlap_score(value_name, v.value_name);
        if (s > best_score) {
            best_score = s;
            best = &v;
        }
    }
    return {{value_name, best->value_name, 0.0}, true, attempt};
}

} // namespace cdemapper
