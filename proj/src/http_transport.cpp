// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cdemapper/transports.hpp"

namespace cdemapper {

using nlohmann::json;

HttpTransport::HttpTransport(LlmConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& url = config_.endpoint_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("llm endpoint '" + url + "' lacks a scheme");
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_ = url.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

std::string HttpTransport::post(const std::string& path, const std::string& body) {
    httplib::Client client(scheme_host_);
    const auto secs = static_cast<time_t>(config_.request_timeout);
    const auto usecs = static_cast<time_t>((config_.request_timeout - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(base_path_ + path, headers, body, "application/json");
    if (!res) throw TransportError("request to " + scheme_host_ + base_path_ + path + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw TransportError("HTTP " + std::to_string(res->status) + " from " + base_path_ + path, res->status);
    }
    return res->body;
}

std::string HttpTransport::chat(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    json body{{"model", request.model}, {"messages", std::move(messages)}, {"temperature", request.temperature}};
    auto reply = json::parse(post("/chat/completions", body.dump()), nullptr, false);
    if (reply.is_discarded()) throw TransportError("chat completion response is not JSON");
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw TransportError("chat completion response lacks choices[0].message.content");
    }
}

std::vector<std::vector<float>> HttpTransport::embed(const std::string& model, const std::vector<std::string>& texts) {
    json body{{"model", model}, {"input", texts}};
    auto reply = json::parse(post("/embeddings", body.dump()), nullptr, false);
    if (reply.is_discarded()) throw TransportError("embeddings response is not JSON");
    std::vector<std::vector<float>> out(texts.size());
    try {
        for (const auto& item : reply.at("data")) {
            auto index = item.at("index").get<std::size_t>();
            if (index >= out.size()) throw TransportError("embedding index out of range");
            out[index] = item.at("embedding").get<std::vector<float>>();
        }
    } catch (const json::exception&) {
        throw TransportError("embeddings response is malformed");
    }
    for (const auto& v : out) {
        if (v.empty()) throw TransportError("embeddings response is missing vectors");
    }
    return out;
}

} // namespace cdemapper
