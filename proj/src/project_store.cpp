// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/project_store.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "cdemapper/csv.hpp"
#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kExportHeader[] = {
    "source_name", "source_description", "source_values", "target_tiny_id", "target_name", "target_collection",
    "target_detail_url", "origin", "value_mappings", "status",
};

std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

json element_to_json(const SourceElement& e) {
    json extra = json::array();
    for (const auto& [k, v] : e.extra) extra.push_back(json::array({k, v}));
    return json{{"element_id", e.element_id}, {"name", e.name}, {"description", e.description},
                {"value_set", e.value_set}, {"extra", extra}};
}

SourceElement element_from_json(const json& j) {
    SourceElement e;
    e.element_id = j.at("element_id").get<std::string>();
    e.name = j.at("name").get<std::string>();
    e.description = j.value("description", "");
    e.value_set = j.value("value_set", std::vector<std::string>{});
    for (const auto& kv : j.value("extra", json::array())) e.extra.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    return e;
}

// Advisory lock on a project directory for the duration of a write.
class FileLock {
public:
    explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_RDWR | O_CREAT, 0644)) {
        if (fd_ < 0) throw std::runtime_error("cannot open lock file '" + path.string() + "'");
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw std::runtime_error("cannot lock '" + path.string() + "'");
        }
    }
    ~FileLock() {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_;
};

void append_line(const fs::path& path, const std::string& line) {
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string data = line + "\n";
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        auto n = ::write(fd, p, left);
        if (n < 0) {
            ::close(fd);
            throw std::runtime_error("write to '" + path.string() + "' failed");
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

void write_atomic(const fs::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << content;
    }
    fs::rename(tmp, path);
}

ProjectElement* find_element(Project& p, const std::string& id) {
    for (auto& e : p.elements) {
        if (e.source.element_id == id) return &e;
    }
    return nullptr;
}

void apply_event(Project& p, const json& event) {
    const auto type = event.at("type").get<std::string>();
    const auto& payload = event.at("payload");
    if (type == "created") {
        p.project_id = payload.at("project_id").get<std::string>();
        p.name = payload.at("name").get<std::string>();
        p.created_at = event.at("at").get<std::string>();
        p.config = config_from_json(payload.at("config"));
        p.index_snapshot_date = payload.value("index_snapshot_date", "");
        p.extra_columns = payload.value("extra_columns", std::vector<std::string>{});
        for (const auto& e : payload.at("elements")) p.elements.push_back({element_from_json(e), ElementStatus::Unmapped, {}, {}});
    } else if (type == "candidates") {
        auto* e = find_element(p, payload.at("element_id").get<std::string>());
        if (!e) throw IntegrityError("event references unknown element");
        e->last_candidates = candidate_list_from_json(payload.at("list"));
        // A fresh candidate list does not undo an existing decision.
        if (e->decisions.empty()) e->status = ElementStatus::CandidatesReady;
    } else if (type == "decision") {
        auto d = decision_from_json(payload);
        auto* e = find_element(p, d.element_id);
        if (!e) throw IntegrityError("event references unknown element");
        e->status = d.selected_tiny_id ? ElementStatus::Mapped : ElementStatus::NoMatch;
        e->decisions.push_back(std::move(d));
    } else {
        throw IntegrityError("unknown event type '" + type + "'");
    }
}

Project project_from_json(const json& j) {
    Project p;
    p.project_id = j.at("project_id").get<std::string>();
    p.name = j.at("name").get<std::string>();
    p.created_at = j.at("created_at").get<std::string>();
    p.config = config_from_json(j.at("config"));
    p.index_snapshot_date = j.value("index_snapshot_date", "");
    p.extra_columns = j.value("extra_columns", std::vector<std::string>{});
    for (const auto& ej : j.at("elements")) {
        ProjectElement e;
        e.source = element_from_json(ej.at("source"));
        e.status = status_from_name(ej.at("status").get<std::string>()).value();
        if (ej.contains("last_candidates") && !ej["last_candidates"].is_null()) {
            e.last_candidates = candidate_list_from_json(ej["last_candidates"]);
        }
        for (const auto& d : ej.at("decisions")) e.decisions.push_back(decision_from_json(d));
        p.elements.push_back(std::move(e));
    }
    return p;
}

} // namespace

std::string_view status_name(ElementStatus s) {
    switch (s) {
    case ElementStatus::Unmapped: return "unmapped";
    case ElementStatus::CandidatesReady: return "candidates_ready";
    case ElementStatus::Mapped: return "mapped";
    case ElementStatus::NoMatch: return "no_match";
    }
    return "unmapped";
}

std::optional<ElementStatus> status_from_name(std::string_view name) {
    for (auto s : {ElementStatus::Unmapped, ElementStatus::CandidatesReady, ElementStatus::Mapped, ElementStatus::NoMatch}) {
        if (status_name(s) == name) return s;
    }
    return std::nullopt;
}

std::string_view origin_name(DecisionOrigin o) {
    switch (o) {
    case DecisionOrigin::AutoTop1: return "auto_top1";
    case DecisionOrigin::HumanSelected: return "human_selected";
    case DecisionOrigin::ManualSearch: return "manual_search";
    }
    return "human_selected";
}

std::optional<DecisionOrigin> origin_from_name(std::string_view name) {
    for (auto o : {DecisionOrigin::AutoTop1, DecisionOrigin::HumanSelected, DecisionOrigin::ManualSearch}) {
        if (origin_name(o) == name) return o;
    }
    return std::nullopt;
}

bool MappingDecision::same_choice(const MappingDecision& o) const {
    return element_id == o.element_id && selected_tiny_id == o.selected_tiny_id && origin == o.origin &&
           value_mappings == o.value_mappings;
}

const ProjectElement* Project::element(const std::string& element_id) const {
    for (const auto& e : elements) {
        if (e.source.element_id == element_id) return &e;
    }
    return nullptr;
}

json decision_to_json(const MappingDecision& d) {
    json vm = json::array();
    for (const auto& m : d.value_mappings) vm.push_back({{"source", m.source_value}, {"target", m.target_value}, {"score", m.score}});
    return json{
        {"element_id", d.element_id},
        {"selected_tiny_id", d.selected_tiny_id ? json(*d.selected_tiny_id) : json(nullptr)},
        {"origin", origin_name(d.origin)},
        {"value_mappings", vm},
        {"decided_at", d.decided_at},
    };
}

MappingDecision decision_from_json(const json& j) {
    MappingDecision d;
    d.element_id = j.at("element_id").get<std::string>();
    if (auto it = j.find("selected_tiny_id"); it != j.end() && it->is_string()) d.selected_tiny_id = it->get<std::string>();
    auto origin = origin_from_name(j.value("origin", "human_selected"));
    if (!origin) throw std::invalid_argument("unknown decision origin '" + j.value("origin", "") + "'");
    d.origin = *origin;
    for (const auto& m : j.value("value_mappings", json::array())) {
        d.value_mappings.push_back({m.at("source").get<std::string>(), m.at("target").get<std::string>(), m.value("score", 0.0)});
    }
    d.decided_at = j.value("decided_at", "");
    return d;
}

json project_to_json(const Project& p) {
    json elements = json::array();
    for (const auto& e : p.elements) {
        json decisions = json::array();
        for (const auto& d : e.decisions) decisions.push_back(decision_to_json(d));
        elements.push_back({
            {"source", element_to_json(e.source)},
            {"status", status_name(e.status)},
            {"last_candidates", e.last_candidates ? to_json(*e.last_candidates, false) : json(nullptr)},
            {"decisions", decisions},
        });
    }
    return json{
        {"project_id", p.project_id},
        {"name", p.name},
        {"created_at", p.created_at},
        {"config", config_to_json(p.config)},
        {"index_snapshot_date", p.index_snapshot_date},
        {"extra_columns", p.extra_columns},
        {"elements", elements},
    };
}

SourceImport import_source_csv(std::istream& in) {
    auto rows = csv::read(in);
    if (rows.empty()) throw ImportError("source CSV is empty; expected a header with 'name', 'description', 'values'");
    const auto& header = rows[0];

    std::optional<std::size_t> name_col, desc_col, values_col;
    std::vector<std::pair<std::size_t, std::string>> extra_cols;
    const std::set<std::string> export_only(std::begin(kExportHeader) + 3, std::end(kExportHeader));
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string h(trim(header[i]));
        if (h == "name" || h == "source_name") name_col = i;
        else if (h == "description" || h == "source_description") desc_col = i;
        else if (h == "values" || h == "source_values") values_col = i;
        else if (!export_only.contains(h)) extra_cols.emplace_back(i, header[i]);
    }
    if (!name_col) throw ImportError("source CSV lacks a 'name' column; found: " + join(header, ", "));

    SourceImport out;
    for (const auto& [_, h] : extra_cols) out.extra_columns.push_back(h);
    auto cell = [](const csv::Row& r, std::optional<std::size_t> c) {
        return c && *c < r.size() ? r[*c] : std::string();
    };
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        SourceElement e;
        e.name = cell(row, name_col);
        if (trim(e.name).empty()) {
            out.rejected.push_back({r + 1, "empty name"});
            continue;
        }
        e.element_id = std::to_string(out.elements.size() + 1);
        e.description = cell(row, desc_col);
        e.value_set = csv::split_values(cell(row, values_col));
        for (const auto& [c, h] : extra_cols) e.extra.emplace_back(h, c < row.size() ? row[c] : std::string());
        out.elements.push_back(std::move(e));
    }
    return out;
}

struct ProjectStore::Slot {
    std::mutex mu;
    Project project;
    std::size_t event_count = 0;
    fs::path dir;
};

ProjectStore::ProjectStore(std::string root) : root_(std::move(root)) {
    fs::create_directories(root_);
}

ProjectStore::~ProjectStore() = default;

ProjectStore::Slot& ProjectStore::slot(const std::string& project_id) const {
    std::lock_guard lock(mu_);
    if (auto it = slots_.find(project_id); it != slots_.end()) return *it->second;

    const fs::path dir = fs::path(root_) / project_id;
    if (project_id.empty() || project_id.find('/') != std::string::npos || project_id.find("..") != std::string::npos ||
        !fs::exists(dir / "events.jsonl")) {
        throw NotFoundError("unknown project '" + project_id + "'");
    }
    auto s = std::make_unique<Slot>();
    s->dir = dir;

    std::vector<json> events;
    {
        std::ifstream in(dir / "events.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            auto ev = json::parse(line, nullptr, false);
            // A torn final line from a crash mid-append is ignored.
            if (ev.is_discarded()) break;
            events.push_back(std::move(ev));
        }
    }
    bool from_snapshot = false;
    if (std::ifstream snap(dir / "snapshot.json"); snap) {
        auto j = json::parse(snap, nullptr, false);
        if (!j.is_discarded() && j.value("event_count", std::size_t{0}) == events.size()) {
            s->project = project_from_json(j.at("project"));
            from_snapshot = true;
        }
    }
    if (!from_snapshot) {
        for (const auto& ev : events) apply_event(s->project, ev);
    }
    s->event_count = events.size();
    auto& ref = *s;
    slots_.emplace(project_id, std::move(s));
    return ref;
}

void ProjectStore::append_event(Slot& s, const std::string& type, json payload) {
    json event{{"type", type}, {"at", now_iso()}, {"payload", std::move(payload)}};
    FileLock lock(s.dir / ".lock");
    append_line(s.dir / "events.jsonl", event.dump());
    apply_event(s.project, event);
    ++s.event_count;
    json snapshot{{"event_count", s.event_count}, {"project", project_to_json(s.project)}};
    write_atomic(s.dir / "snapshot.json", snapshot.dump());
}

Project ProjectStore::create_project(const std::string& name, const PipelineConfig& config, const SourceImport& import,
                                     const std::string& index_snapshot_date) {
    config.validate();
    std::set<std::string> ids;
    for (const auto& e : import.elements) {
        if (trim(e.name).empty()) throw std::invalid_argument("element '" + e.element_id + "' has an empty name");
        if (!ids.insert(e.element_id).second) throw std::invalid_argument("duplicate element id '" + e.element_id + "'");
    }

    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::string project_id;
    fs::path dir;
    {
        std::lock_guard lock(mu_);
        do {
            char buf[24];
            std::snprintf(buf, sizeof(buf), "p%012llx", static_cast<unsigned long long>(rng() & 0xFFFFFFFFFFFFULL));
            project_id = buf;
            dir = fs::path(root_) / project_id;
        } while (fs::exists(dir));
        fs::create_directories(dir);
    }

    auto s = std::make_unique<Slot>();
    s->dir = dir;
    json elements = json::array();
    for (const auto& e : import.elements) elements.push_back(element_to_json(e));
    {
        std::lock_guard lock(s->mu);
        append_event(*s, "created",
                     {{"project_id", project_id},
                      {"name", name},
                      {"config", config_to_json(config)},
                      {"index_snapshot_date", index_snapshot_date},
                      {"extra_columns", import.extra_columns},
                      {"elements", elements}});
    }
    Project copy = s->project;
    std::lock_guard lock(mu_);
    slots_.emplace(project_id, std::move(s));
    return copy;
}

std::vector<std::string> ProjectStore::list_projects() const {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(root_)) {
        if (entry.is_directory() && fs::exists(entry.path() / "events.jsonl")) out.push_back(entry.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

Project ProjectStore::get(const std::string& project_id) const {
    auto& s = slot(project_id);
    std::lock_guard lock(s.mu);
    return s.project;
}

ElementStatus ProjectStore::record_candidates(const std::string& project_id, const std::string& element_id,
                                              const CandidateList& candidates) {
    auto& s = slot(project_id);
    std::lock_guard lock(s.mu);
    if (!find_element(s.project, element_id)) throw NotFoundError("unknown element '" + element_id + "'");
    auto list = candidates;
    list.element_id = element_id;
    append_event(s, "candidates", {{"element_id", element_id}, {"list", to_json(list, false)}});
    return find_element(s.project, element_id)->status;
}

ElementStatus ProjectStore::record_decision(const std::string& project_id, MappingDecision decision,
                                            const IndexBundle& bundle) {
    auto& s = slot(project_id);
    std::lock_guard lock(s.mu);
    auto* e = find_element(s.project, decision.element_id);
    if (!e) throw NotFoundError("unknown element '" + decision.element_id + "'");

    if (decision.selected_tiny_id) {
        const auto& id = *decision.selected_tiny_id;
        if (!bundle.find(id)) throw IntegrityError("selected tinyId '" + id + "' is not in the corpus");
        const auto& shown = e->last_candidates;
        auto shown_contains = [&] {
            return shown && std::any_of(shown->candidates.begin(), shown->candidates.end(),
                                        [&](const Candidate& c) { return c.tiny_id == id; });
        };
        switch (decision.origin) {
        case DecisionOrigin::AutoTop1:
            if (!shown || shown->candidates.empty() || shown->candidates.front().tiny_id != id) {
                throw std::invalid_argument("auto_top1 decision must select the rank-1 candidate");
            }
            break;
        case DecisionOrigin::HumanSelected:
            if (!shown_contains()) throw std::invalid_argument("'" + id + "' was not among the element's candidates");
            break;
        case DecisionOrigin::ManualSearch:
            break;
        }
    } else if (!decision.value_mappings.empty()) {
        throw std::invalid_argument("a no-match decision cannot carry value mappings");
    }

    if (!e->decisions.empty() && e->decisions.back().same_choice(decision)) return e->status;
    decision.decided_at = now_iso();
    append_event(s, "decision", decision_to_json(decision));
    return e->status;
}

void ProjectStore::export_mappings(const std::string& project_id, const IndexBundle& bundle, std::ostream& out) const {
    const Project p = get(project_id);
    csv::Row header(std::begin(kExportHeader), std::end(kExportHeader));
    header.insert(header.end(), p.extra_columns.begin(), p.extra_columns.end());
    csv::write_row(out, header);
    for (const auto& e : p.elements) {
        csv::Row row{e.source.name, e.source.description, csv::join_values(e.source.value_set)};
        const MappingDecision* d = e.decisions.empty() ? nullptr : &e.decisions.back();
        const CdeRecord* target = d && d->selected_tiny_id ? bundle.find(*d->selected_tiny_id) : nullptr;
        if (d && d->selected_tiny_id) {
            row.push_back(*d->selected_tiny_id);
            row.push_back(target ? target->name : "");
            row.push_back(target ? target->collection : "");
            row.push_back(target ? target->detail_url : "");
        } else {
            row.insert(row.end(), 4, "");
        }
        row.push_back(d ? std::string(origin_name(d->origin)) : "");
        std::vector<std::string> pairs;
        if (d) {
            for (const auto& m : d->value_mappings) pairs.push_back(m.source_value + "=" + m.target_value);
        }
        row.push_back(csv::join_values(pairs));
        row.push_back(std::string(status_name(e.status)));
        for (const auto& [_, v] : e.source.extra) row.push_back(v);
        csv::write_row(out, row);
    }
}

} // namespace cdemapper
