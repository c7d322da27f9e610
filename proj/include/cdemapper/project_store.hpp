// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdemapper/index_store.hpp"
#include "cdemapper/llm_gateway.hpp"
#include "cdemapper/pipeline.hpp"
#include "cdemapper/source_element.hpp"

namespace cdemapper {

struct ImportRejection {
    std::size_t row = 0; // 1-based file row, header is row 1
    std::string reason;
};

struct SourceImport {
    std::vector<SourceElement> elements;
    std::vector<ImportRejection> rejected;
    /// Header names beyond the recognized columns, in file order.
    std::vector<std::string> extra_columns;
};

/// Reads a data dictionary CSV with columns `name`, `description`, `values`
/// (`source_name`, `source_description`, `source_values` are accepted too, so
/// an export re-imports). Values are `|`-separated. Export-only columns are
/// ignored; any other column is kept as opaque extra data. Element ids are
/// assigned "1", "2", ... in row order. Throws ImportError without a name column.
SourceImport import_source_csv(std::istream& in);

enum class ElementStatus { Unmapped, CandidatesReady, Mapped, NoMatch };
enum class DecisionOrigin { AutoTop1, HumanSelected, ManualSearch };

std::string_view status_name(ElementStatus s);
std::optional<ElementStatus> status_from_name(std::string_view name);
std::string_view origin_name(DecisionOrigin o);
std::optional<DecisionOrigin> origin_from_name(std::string_view name);

struct MappingDecision {
    std::string element_id;
    /// nullopt records an explicit "no match".
    std::optional<std::string> selected_tiny_id;
    DecisionOrigin origin = DecisionOrigin::HumanSelected;
    std::vector<ValueMatch> value_mappings;
    std::string decided_at; // set by the store

    /// Equality ignoring decided_at.
    bool same_choice(const MappingDecision& other) const;
};

struct ProjectElement {
    SourceElement source;
    ElementStatus status = ElementStatus::Unmapped;
    std::optional<CandidateList> last_candidates;
    /// Append-only; the last entry is the current decision.
    std::vector<MappingDecision> decisions;
};

struct Project {
    std::string project_id;
    std::string name;
    std::string created_at;
    PipelineConfig config;
    std::string index_snapshot_date;
    std::vector<std::string> extra_columns;
    std::vector<ProjectElement> elements;

    const ProjectElement* element(const std::string& element_id) const;
};

nlohmann::json project_to_json(const Project& p);
nlohmann::json decision_to_json(const MappingDecision& d);
MappingDecision decision_from_json(const nlohmann::json& j);

/// One directory per project under `root`, each holding an append-only
/// `events.jsonl` and a compacted `snapshot.json`. Writes to a project are
/// serialized by an in-process mutex and an advisory file lock.
class ProjectStore {
public:
    explicit ProjectStore(std::string root);
    ~ProjectStore();
    ProjectStore(const ProjectStore&) = delete;
    ProjectStore& operator=(const ProjectStore&) = delete;

    Project create_project(const std::string& name, const PipelineConfig& config, const SourceImport& import,
                           const std::string& index_snapshot_date = {});
    std::vector<std::string> list_projects() const;
    /// Throws NotFoundError for an unknown project.
    Project get(const std::string& project_id) const;

    /// Stores the candidate snapshot shown for an element and moves it to candidates_ready.
    ElementStatus record_candidates(const std::string& project_id, const std::string& element_id,
                                    const CandidateList& candidates);

    /// Validates and appends a decision. Re-sending the current decision is a no-op.
    /// Throws NotFoundError (project/element), IntegrityError (id not in corpus)
    /// or std::invalid_argument (origin inconsistent with the candidate snapshot).
    ElementStatus record_decision(const std::string& project_id, MappingDecision decision, const IndexBundle& bundle);

    void export_mappings(const std::string& project_id, const IndexBundle& bundle, std::ostream& out) const;

    const std::string& root() const { return root_; }

private:
    struct Slot;
    Slot& slot(const std::string& project_id) const;
    void append_event(Slot& s, const std::string& type, nlohmann::json payload);

    std::string root_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::unique_ptr<Slot>> slots_;
};

} // namespace cdemapper
