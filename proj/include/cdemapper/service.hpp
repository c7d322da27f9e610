// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cdemapper/index_store.hpp"
#include "cdemapper/llm_gateway.hpp"
#include "cdemapper/pipeline.hpp"
#include "cdemapper/project_store.hpp"

namespace httplib {
class Server;
}

namespace cdemapper {

/// Reads `key = value` lines; `#` starts a comment. Throws std::invalid_argument
/// on a line without '='.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

/// Applies `llm.*` keys (endpoint_url, model, embedding_model, api_key_env,
/// timeout, max_retries, max_concurrent, batch_size, backoff, audit_log).
LlmConfig llm_config_from(const std::map<std::string, std::string>& kv, LlmConfig base = {});

/// Embedding model name reported by the offline mock.
inline constexpr const char* kMockEmbeddingModel = "mock-hashed-256";

/// Gateway over the deterministic mock transport.
std::shared_ptr<LlmGateway> make_mock_gateway(LlmConfig config = {});
/// Gateway over HTTP, or the mock when `mock` is set.
std::shared_ptr<LlmGateway> make_gateway(const LlmConfig& config, bool mock);

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string index_path;
    std::string store_path = "cdemapper-projects";
    std::string static_dir;
    std::vector<std::string> cors_allowlist;
    bool mock_llm = false;
    LlmConfig llm;
    /// Defaults for new projects; `pipeline.*` keys in the config file.
    PipelineConfig pipeline;

    static ServiceConfig from_key_values(const std::map<std::string, std::string>& kv);
};

enum class JobState { Running, Completed, Failed };

struct JobStatus {
    std::string job_id;
    std::string project_id;
    std::size_t total = 0;
    std::size_t processed = 0;
    JobState state = JobState::Running;
    std::string error;
};

std::string_view job_state_name(JobState s);

/// The HTTP/JSON API over one index bundle, gateway and project store.
class Service {
public:
    Service(ServiceConfig config, std::shared_ptr<const IndexBundle> bundle, std::shared_ptr<LlmGateway> gateway);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves until stop(). Returns false when binding fails.
    bool listen();
    /// Binds to an ephemeral port on `host` and serves on a background thread.
    int start_background();
    void stop();

    httplib::Server& server() { return *server_; }
    ProjectStore& store() { return store_; }
    std::optional<JobStatus> job(const std::string& job_id) const;
    /// Blocks until the job leaves the running state.
    void wait_for_job(const std::string& job_id);

    /// Runs recommend for every element of a project on a background thread.
    std::string start_map_all(const std::string& project_id);

private:
    struct Job;
    void routes();

    ServiceConfig config_;
    std::shared_ptr<const IndexBundle> bundle_;
    std::shared_ptr<LlmGateway> gateway_;
    ProjectStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::jthread server_thread_;

    mutable std::mutex jobs_mu_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::atomic<std::size_t> next_job_{1};
};

} // namespace cdemapper
