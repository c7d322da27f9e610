// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "cdemapper/json_extract.hpp"
#include "cdemapper/prompts.hpp"
#include "cdemapper/text.hpp"
#include "cdemapper/transports.hpp"

namespace cdemapper {

using nlohmann::json;

namespace {

// JSON that follows `label` on its own paragraph of the prompt.
json section(const std::string& prompt, const std::string& label) {
    auto pos = prompt.find("\n\n" + label);
    if (pos == std::string::npos) throw TransportError("mock: prompt lacks '" + label + "'", 400);
    auto start = pos + 2 + label.size();
    auto end = prompt.find("\n\n", start);
    auto parsed = extract_json(std::string_view(prompt).substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (!parsed) throw TransportError("mock: unparseable '" + label + "' section", 400);
    return *parsed;
}

std::string display_name(const std::string& display_text) {
    static const std::string sep = " \xE2\x80\x94 ";
    auto pos = display_text.find(sep);
    return pos == std::string::npos ? display_text : display_text.substr(0, pos);
}

} // namespace

std::vector<float> MockTransport::hashed_embedding(const std::string& text) {
    std::vector<float> v(kDimension, 0.0f);
    auto tokens = tokenize(text);
    if (tokens.empty()) {
        v[fnv1a64(text) % kDimension] = 1.0f;
        return v;
    }
    for (const auto& t : tokens) v[fnv1a64(t) % kDimension] += 1.0f;
    double sum = 0.0;
    for (float x : v) sum += static_cast<double>(x) * x;
    const double norm = std::sqrt(sum);
    for (auto& x : v) x = static_cast<float>(x / norm);
    return v;
}

std::vector<std::vector<float>> MockTransport::embed(const std::string&, const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hashed_embedding(t));
    return out;
}

std::string MockTransport::chat(const ChatRequest& request) {
    if (request.messages.empty()) throw TransportError("mock: empty request", 400);
    const auto& prompt = request.messages.back().content;
    auto has = [&](std::string_view instruction) { return prompt.find(instruction) != std::string::npos; };

    if (has(prompts::kQueryExpansionInstruction)) {
        auto input = section(prompt, "Input:");
        return json{{"term", input.value("term", "")}, {"description", input.value("description", "")}}.dump();
    }
    if (has(prompts::kRerankInstruction)) {
        auto input = section(prompt, "Input:");
        auto results = section(prompt, "Search Results:");
        const auto term = input.value("term", "");
        std::vector<std::pair<std::string, bool>> items;
        for (const auto& r : results) {
            auto id = r.at("id").get<std::string>();
            bool exact = rule_ == RerankRule::PromoteExactName &&
                         iequals(trim(display_name(r.value("text", ""))), trim(term));
            items.emplace_back(std::move(id), exact);
        }
        std::stable_partition(items.begin(), items.end(), [](const auto& p) { return p.second; });
        json out = json::array();
        for (const auto& [id, _] : items) out.push_back(id);
        return out.dump();
    }
    if (has(prompts::kValueMappingInstruction)) {
        auto input = section(prompt, "Input:");
        auto values = section(prompt, "Value Set:");
        const auto name = input.value("value name", "");
        std::string best;
        double best_score = -1.0;
        for (const auto& v : values) {
            auto candidate = v.get<std::string>();
            double s = overlap_score(name, candidate);
            if (s > best_score) {
                best_score = s;
                best = candidate;
            }
        }
        return json::array({{{"value", best}, {"score", std::max(best_score, 0.0)}}}).dump();
    }
    throw TransportError("mock: unrecognized prompt", 400);
}

} // namespace cdemapper
