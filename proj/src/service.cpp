// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"
#include "cdemapper/transports.hpp"

namespace cdemapper {

using nlohmann::json;

std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        auto body = trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        }
        out[std::string(trim(body.substr(0, eq)))] = std::string(trim(body.substr(eq + 1)));
    }
    return out;
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open config file '" + path + "'");
    return parse_key_values(in);
}

LlmConfig llm_config_from(const std::map<std::string, std::string>& kv, LlmConfig c) {
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("llm.endpoint_url")) c.endpoint_url = *v;
    if (auto v = get("llm.model")) c.model_name = *v;
    if (auto v = get("llm.embedding_model")) c.embedding_model_name = *v;
    if (auto v = get("llm.api_key_env")) c.api_key_env = *v;
    if (auto v = get("llm.timeout")) c.request_timeout = std::stod(*v);
    if (auto v = get("llm.max_retries")) c.max_retries = std::stoi(*v);
    if (auto v = get("llm.max_concurrent")) c.max_concurrent_requests = std::stoi(*v);
    if (auto v = get("llm.batch_size")) c.embed_batch_size = std::stoul(*v);
    if (auto v = get("llm.backoff")) c.backoff_seconds = std::stod(*v);
    if (auto v = get("llm.audit_log")) c.audit_log_path = *v;
    c.validate();
    return c;
}

std::shared_ptr<LlmGateway> make_mock_gateway(LlmConfig config) {
    config.embedding_model_name = kMockEmbeddingModel;
    config.model_name = "mock";
    config.backoff_seconds = 0.0;
    return std::make_shared<LlmGateway>(std::move(config), std::make_shared<MockTransport>());
}

std::shared_ptr<LlmGateway> make_gateway(const LlmConfig& config, bool mock) {
    if (mock) return make_mock_gateway(config);
    return std::make_shared<LlmGateway>(config, std::make_shared<HttpTransport>(config));
}

ServiceConfig ServiceConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    ServiceConfig c;
    std::map<std::string, std::string> pipeline;
    for (const auto& [key, value] : kv) {
        if (key == "host") c.host = value;
        else if (key == "port") c.port = std::stoi(value);
        else if (key == "index") c.index_path = value;
        else if (key == "store") c.store_path = value;
        else if (key == "static_dir") c.static_dir = value;
        else if (key == "mock_llm") c.mock_llm = value == "on" || value == "true" || value == "1";
        else if (key == "cors_allowlist") {
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!trim(item).empty()) c.cors_allowlist.emplace_back(trim(item));
            }
        } else if (key.starts_with("pipeline.")) {
            pipeline[key.substr(9)] = value;
        } else if (!key.starts_with("llm.")) {
            throw std::invalid_argument("unknown service option '" + key + "'");
        }
    }
    c.llm = llm_config_from(kv);
    c.pipeline = parse_config(pipeline);
    if (c.index_path.empty()) throw std::invalid_argument("service config requires 'index'");
    return c;
}

std::string_view job_state_name(JobState s) {
    switch (s) {
    case JobState::Running: return "running";
    case JobState::Completed: return "completed";
    case JobState::Failed: return "failed";
    }
    return "running";
}

struct Service::Job {
    mutable std::mutex mu;
    std::condition_variable cv;
    JobStatus status;
    std::jthread thread;
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
    if (trim(req.body).empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw std::invalid_argument("request body must be a JSON object");
    return j;
}

CollectionFilter collections_from(const json& j) {
    auto it = j.find("collections");
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_array()) throw std::invalid_argument("'collections' must be an array of names");
    auto names = it->get<std::set<std::string>>();
    if (names.empty()) return std::nullopt;
    return names;
}

json record_to_json(const CdeRecord& r) {
    json pvs = json::array();
    for (const auto& v : r.permissible_values) {
        json pv{{"value_name", v.value_name}};
        pv["code"] = v.code ? json(*v.code) : json(nullptr);
        pv["code_system"] = v.code_system ? json(*v.code_system) : json(nullptr);
        pvs.push_back(pv);
    }
    return json{{"tiny_id", r.tiny_id},         {"name", r.name},
                {"question_texts", r.question_texts}, {"definition", r.definition},
                {"collection", r.collection},   {"designations", r.designations},
                {"permissible_values", pvs},    {"detail_url", r.detail_url}};
}

json element_json(const ProjectElement& e) {
    json j{{"element_id", e.source.element_id},
           {"name", e.source.name},
           {"description", e.source.description},
           {"values", e.source.value_set},
           {"status", status_name(e.status)},
           {"has_candidates", e.last_candidates.has_value()}};
    if (!e.decisions.empty()) j["decision"] = decision_to_json(e.decisions.back());
    return j;
}

json project_summary(const Project& p) {
    std::map<std::string, std::size_t> counts;
    for (auto s : {ElementStatus::Unmapped, ElementStatus::CandidatesReady, ElementStatus::Mapped, ElementStatus::NoMatch}) {
        counts[std::string(status_name(s))] = 0;
    }
    for (const auto& e : p.elements) ++counts[std::string(status_name(e.status))];
    return json{{"project_id", p.project_id},
                {"name", p.name},
                {"created_at", p.created_at},
                {"config", config_to_json(p.config)},
                {"index_snapshot_date", p.index_snapshot_date},
                {"element_count", p.elements.size()},
                {"status_counts", counts}};
}

json job_json(const JobStatus& s) {
    json j{{"job_id", s.job_id},     {"project_id", s.project_id}, {"total", s.total},
           {"processed", s.processed}, {"state", job_state_name(s.state)}};
    if (!s.error.empty()) j["error"] = s.error;
    return j;
}

} // namespace

Service::Service(ServiceConfig config, std::shared_ptr<const IndexBundle> bundle, std::shared_ptr<LlmGateway> gateway)
    : config_(std::move(config)), bundle_(std::move(bundle)), gateway_(std::move(gateway)), store_(config_.store_path),
      server_(std::make_unique<httplib::Server>()) {
    if (!bundle_) throw std::invalid_argument("service requires an index bundle");
    routes();
}

Service::~Service() {
    stop();
    std::lock_guard lock(jobs_mu_);
    for (auto& [_, job] : jobs_) {
        if (job->thread.joinable()) job->thread.join();
    }
}

bool Service::listen() {
    return server_->listen(config_.host, config_.port);
}

int Service::start_background() {
    int port = server_->bind_to_any_port(config_.host);
    if (port < 0) throw std::runtime_error("cannot bind " + config_.host);
    server_thread_ = std::jthread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::stop() {
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

std::optional<JobStatus> Service::job(const std::string& job_id) const {
    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(jobs_mu_);
        auto it = jobs_.find(job_id);
        if (it == jobs_.end()) return std::nullopt;
        job = it->second;
    }
    std::lock_guard lock(job->mu);
    return job->status;
}

void Service::wait_for_job(const std::string& job_id) {
    std::shared_ptr<Job> job;
    {
        std::lock_guard lock(jobs_mu_);
        auto it = jobs_.find(job_id);
        if (it == jobs_.end()) throw NotFoundError("unknown job '" + job_id + "'");
        job = it->second;
    }
    std::unique_lock lock(job->mu);
    job->cv.wait(lock, [&] { return job->status.state != JobState::Running; });
}

std::string Service::start_map_all(const std::string& project_id) {
    const Project project = store_.get(project_id);
    auto job = std::make_shared<Job>();
    job->status.job_id = "j" + std::to_string(next_job_++);
    job->status.project_id = project_id;
    job->status.total = project.elements.size();
    const auto id = job->status.job_id;
    {
        std::lock_guard lock(jobs_mu_);
        jobs_[id] = job;
    }
    if (project.elements.empty()) {
        std::lock_guard lock(job->mu);
        job->status.state = JobState::Completed;
        job->cv.notify_all();
        return id;
    }

    const auto workers = std::max(1, gateway_ ? gateway_->config().max_concurrent_requests : 1);
    job->thread = std::jthread([this, job, project, workers] {
        std::atomic<std::size_t> next{0};
        std::mutex err_mu;
        std::string first_error;
        auto work = [&] {
            for (std::size_t i; (i = next.fetch_add(1)) < project.elements.size();) {
                const auto& e = project.elements[i];
                try {
                    auto list = recommend(e.source, project.config, *bundle_, gateway_.get());
                    store_.record_candidates(project.project_id, e.source.element_id, list);
                } catch (const std::exception& ex) {
                    std::lock_guard lock(err_mu);
                    if (first_error.empty()) first_error = e.source.element_id + ": " + ex.what();
                }
                std::lock_guard lock(job->mu);
                ++job->status.processed;
            }
        };
        {
            std::vector<std::jthread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        }
        std::lock_guard lock(job->mu);
        job->status.state = first_error.empty() ? JobState::Completed : JobState::Failed;
        job->status.error = first_error;
        job->cv.notify_all();
    });
    return id;
}

void Service::routes() {
    auto& srv = *server_;

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const NotFoundError& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const ImportError& e) {
            send_error(res, 400, "import_error", e.what());
        } catch (const ParseError& e) {
            send_error(res, 400, "parse_error", e.what());
        } catch (const IntegrityError& e) {
            send_error(res, 422, "integrity_error", e.what());
        } catch (const std::invalid_argument& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal_error", e.what());
        } catch (...) {
            send_error(res, 500, "internal_error", "unknown error");
        }
    });

    if (!config_.cors_allowlist.empty()) {
        auto allow = config_.cors_allowlist;
        srv.set_post_routing_handler([allow](const httplib::Request& req, httplib::Response& res) {
            auto origin = req.get_header_value("Origin");
            if (std::find(allow.begin(), allow.end(), origin) != allow.end() ||
                std::find(allow.begin(), allow.end(), "*") != allow.end()) {
                res.set_header("Access-Control-Allow-Origin", origin.empty() ? "*" : origin);
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            }
        });
        srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }

    srv.Get("/api/collections", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& [name, count] : bundle_->collections()) out.push_back({{"name", name}, {"count", count}});
        send_json(res, 200, out);
    });

    srv.Get(R"(/api/cde/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto id = req.matches[1].str();
        const auto* rec = bundle_->find(id);
        if (!rec) return send_error(res, 404, "not_found", "unknown tinyId '" + id + "'");
        send_json(res, 200, record_to_json(*rec));
    });

    srv.Post("/api/search", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        auto query = body.value("query", "");
        if (trim(query).empty()) return send_error(res, 400, "bad_request", "'query' must be non-empty");
        auto config = config_.pipeline;
        if (body.contains("top_k")) config.top_k = body["top_k"].get<std::size_t>();
        if (body.contains("embedding")) config.use_embedding = body["embedding"].get<bool>();
        send_json(res, 200, to_json(manual_search(query, collections_from(body), *bundle_, config, gateway_.get())));
    });

    srv.Get("/api/projects", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& id : store_.list_projects()) out.push_back(project_summary(store_.get(id)));
        send_json(res, 200, out);
    });

    srv.Post("/api/projects", [this](const httplib::Request& req, httplib::Response& res) {
        std::string csv_text;
        std::string name = "untitled";
        PipelineConfig config = config_.pipeline;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("file")) return send_error(res, 400, "bad_request", "multipart upload needs a 'file' part");
            csv_text = req.get_file_value("file").content;
            if (req.has_file("name")) name = req.get_file_value("name").content;
            else if (!req.get_file_value("file").filename.empty()) name = req.get_file_value("file").filename;
            if (req.has_file("config")) {
                auto text = req.get_file_value("config").content;
                auto j = json::parse(text, nullptr, false);
                if (!j.is_discarded() && j.is_object()) {
                    std::map<std::string, std::string> kv;
                    for (const auto& [k, v] : j.items()) {
                        if (v.is_string()) kv[k] = v.get<std::string>();
                        else if (v.is_array()) kv[k] = join(v.get<std::vector<std::string>>(), ",");
                        else if (v.is_boolean()) kv[k] = v.get<bool>() ? "on" : "off";
                        else kv[k] = v.dump();
                    }
                    config = parse_config(kv, config);
                } else {
                    std::istringstream in(text);
                    config = parse_config(parse_key_values(in), config);
                }
            }
        } else {
            csv_text = req.body;
            if (req.has_param("name")) name = req.get_param_value("name");
            std::map<std::string, std::string> kv;
            for (const auto& [k, v] : req.params) {
                if (k != "name") kv[k] = v;
            }
            config = parse_config(kv, config);
        }
        std::istringstream in(csv_text);
        auto import = import_source_csv(in);
        auto project = store_.create_project(name, config, import, bundle_->meta().snapshot.corpus_date);
        auto summary = project_summary(project);
        json rejected = json::array();
        for (const auto& r : import.rejected) rejected.push_back({{"row", r.row}, {"reason", r.reason}});
        summary["rejected"] = rejected;
        send_json(res, 201, summary);
    });

    srv.Get(R"(/api/projects/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, project_summary(store_.get(req.matches[1].str())));
    });

    srv.Get(R"(/api/projects/([^/]+)/elements)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto project = store_.get(req.matches[1].str());
        std::vector<const ProjectElement*> rows;
        std::optional<ElementStatus> filter;
        if (auto s = req.get_param_value("status"); !s.empty()) {
            filter = status_from_name(s);
            if (!filter) return send_error(res, 400, "bad_request", "unknown status '" + s + "'");
        }
        for (const auto& e : project.elements) {
            if (!filter || e.status == *filter) rows.push_back(&e);
        }
        auto sort = req.get_param_value("sort");
        bool desc = sort.starts_with("-");
        if (desc) sort = sort.substr(1);
        if (sort == "name") {
            std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->source.name < b->source.name; });
        } else if (sort == "status") {
            std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->status < b->status; });
        } else if (!sort.empty() && sort != "id") {
            return send_error(res, 400, "bad_request", "sort must be id, name or status (prefix '-' for descending)");
        }
        if (desc) std::reverse(rows.begin(), rows.end());

        std::size_t page = 1, page_size = 25;
        if (auto p = req.get_param_value("page"); !p.empty()) page = std::max<long>(1, std::stol(p));
        if (auto p = req.get_param_value("page_size"); !p.empty()) page_size = std::clamp<long>(std::stol(p), 1, 500);
        json items = json::array();
        for (std::size_t i = (page - 1) * page_size; i < rows.size() && i < page * page_size; ++i) {
            items.push_back(element_json(*rows[i]));
        }
        send_json(res, 200, {{"total", rows.size()}, {"page", page}, {"page_size", page_size}, {"elements", items}});
    });

    srv.Get(R"(/api/projects/([^/]+)/elements/([^/]+)/candidates)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto project = store_.get(req.matches[1].str());
        const auto* e = project.element(req.matches[2].str());
        if (!e) return send_error(res, 404, "not_found", "unknown element '" + req.matches[2].str() + "'");
        if (!e->last_candidates) return send_error(res, 404, "not_found", "no candidates computed yet");
        send_json(res, 200, to_json(*e->last_candidates, false));
    });

    srv.Post(R"(/api/projects/([^/]+)/elements/([^/]+)/candidates)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto project_id = req.matches[1].str();
        const auto element_id = req.matches[2].str();
        const auto project = store_.get(project_id);
        const auto* e = project.element(element_id);
        if (!e) return send_error(res, 404, "not_found", "unknown element '" + element_id + "'");
        auto list = recommend(e->source, project.config, *bundle_, gateway_.get());
        store_.record_candidates(project_id, element_id, list);
        send_json(res, 200, to_json(list));
    });

    srv.Post(R"(/api/projects/([^/]+)/map-all)", [this](const httplib::Request& req, httplib::Response& res) {
        auto id = start_map_all(req.matches[1].str());
        send_json(res, 202, job_json(*job(id)));
    });

    srv.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        auto s = job(req.matches[1].str());
        if (!s) return send_error(res, 404, "not_found", "unknown job '" + req.matches[1].str() + "'");
        send_json(res, 200, job_json(*s));
    });

    srv.Post(R"(/api/projects/([^/]+)/elements/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        body["element_id"] = req.matches[2].str();
        if (!body.contains("origin")) body["origin"] = "human_selected";
        auto decision = decision_from_json(body);
        auto status = store_.record_decision(req.matches[1].str(), std::move(decision), *bundle_);
        send_json(res, 200, {{"element_id", req.matches[2].str()}, {"status", status_name(status)}});
    });

    srv.Post(R"(/api/projects/([^/]+)/elements/([^/]+)/value-mappings)", [this](const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req);
        const auto project = store_.get(req.matches[1].str());
        const auto* e = project.element(req.matches[2].str());
        if (!e) return send_error(res, 404, "not_found", "unknown element '" + req.matches[2].str() + "'");
        auto tiny_id = body.value("tiny_id", "");
        const auto* target = bundle_->find(tiny_id);
        if (!target) return send_error(res, 404, "not_found", "unknown tinyId '" + tiny_id + "'");
        if (!gateway_) return send_error(res, 503, "llm_unavailable", "no LLM gateway configured");
        json matches = json::array();
        ValueMappingOutcome outcome;
        if (!e->source.value_set.empty()) outcome = map_values(e->source.value_set, *target, *gateway_);
        else outcome.available = !target->permissible_values.empty();
        for (const auto& m : outcome.matches) {
            matches.push_back({{"source", m.source_value}, {"target", m.target_value}, {"score", m.score}});
        }
        send_json(res, 200, {{"tiny_id", tiny_id}, {"available", outcome.available}, {"degraded", outcome.degraded}, {"matches", matches}});
    });

    srv.Get(R"(/api/projects/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto project_id = req.matches[1].str();
        std::ostringstream out;
        store_.export_mappings(project_id, *bundle_, out);
        res.set_header("Content-Disposition", "attachment; filename=\"" + project_id + "-mappings.csv\"");
        res.set_content(out.str(), "text/csv");
    });

    if (!config_.static_dir.empty()) srv.set_mount_point("/", config_.static_dir);
}

} // namespace cdemapper
