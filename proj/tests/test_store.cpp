// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <thread>

#include <nlohmann/json.hpp>

#include "cdemapper/csv.hpp"
#include "cdemapper/errors.hpp"
#include "cdemapper/project_store.hpp"
#include "test_support.hpp"

using namespace cdemapper;
using testing_support::fixture;
using testing_support::fixture_bundle;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

SourceImport import_text(const std::string& text) {
    std::istringstream in(text);
    return import_source_csv(in);
}

std::string export_text(const ProjectStore& store, const std::string& id) {
    std::ostringstream out;
    store.export_mappings(id, *fixture_bundle(), out);
    return out.str();
}

// Source columns (name, description, values) plus trailing extras, re-serialized.
std::vector<std::string> source_cells(const std::string& csv_text, bool is_export) {
    std::vector<std::string> out;
    auto rows = csv::parse(csv_text);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        csv::Row cells(rows[r].begin(), rows[r].begin() + 3);
        auto extra_from = is_export ? 10 : 3;
        cells.insert(cells.end(), rows[r].begin() + extra_from, rows[r].end());
        std::ostringstream line;
        csv::write_row(line, cells);
        out.push_back(line.str());
    }
    return out;
}

void map_all_top1(ProjectStore& store, const std::string& id) {
    auto project = store.get(id);
    for (const auto& e : project.elements) {
        auto list = recommend(e.source, project.config, *fixture_bundle(), nullptr);
        store.record_candidates(id, e.source.element_id, list);
        if (!list.candidates.empty() && e.source.element_id != "3") {
            store.record_decision(id, {e.source.element_id, list.candidates.front().tiny_id, DecisionOrigin::AutoTop1, {}, {}},
                                  *fixture_bundle());
        }
    }
    store.record_decision(id, {"3", std::nullopt, DecisionOrigin::HumanSelected, {}, {}}, *fixture_bundle());
}

} // namespace

TEST(Import, ColumnsAliasesAndRejections) {
    auto imp = import_text("source_name,extra,source_description,values,target_tiny_id\n"
                           "Race,x1,race of person,White|Asian,C1\n"
                           ",x2,,,\n"
                           "Sex,x3,,,\n");
    ASSERT_EQ(imp.elements.size(), 2u);
    EXPECT_EQ(imp.elements[0].element_id, "1");
    EXPECT_EQ(imp.elements[1].element_id, "2");
    EXPECT_EQ(imp.elements[0].value_set, (std::vector<std::string>{"White", "Asian"}));
    EXPECT_EQ(imp.extra_columns, (std::vector<std::string>{"extra"}));
    EXPECT_EQ(imp.elements[1].extra.at(0).second, "x3");
    ASSERT_EQ(imp.rejected.size(), 1u);
    EXPECT_EQ(imp.rejected[0].row, 3u);

    EXPECT_THROW(import_text("description,values\nx,y\n"), ImportError);
    EXPECT_THROW(import_text(""), ImportError);
    EXPECT_THROW(import_text("name\n\"open"), ParseError);
}

TEST(Store, ImportExportReimportIsByteIdentical) {
    TempDir dir;
    ProjectStore store(dir.str());
    const auto original = slurp(fixture("dictionary50.csv"));
    auto imp = import_text(original);
    ASSERT_EQ(imp.elements.size(), 50u);
    auto project = store.create_project("dict50", preset("bm25"), imp, "2024-06-01");
    map_all_top1(store, project.project_id);
    const auto exported = export_text(store, project.project_id);
    EXPECT_EQ(source_cells(exported, true), source_cells(original, false));

    auto again = store.create_project("again", preset("bm25"), import_text(exported));
    const auto reexported = export_text(store, again.project_id);
    EXPECT_EQ(source_cells(reexported, true), source_cells(original, false));

    auto header = csv::parse(exported).at(0);
    EXPECT_EQ(header, (csv::Row{"source_name", "source_description", "source_values", "target_tiny_id", "target_name",
                                "target_collection", "target_detail_url", "origin", "value_mappings", "status", "form",
                                "note"}));
}

TEST(Store, KillAndReloadRestoresState) {
    TempDir dir;
    std::string id, before;
    {
        ProjectStore store(dir.str());
        auto project = store.create_project("reload", preset("bm25"), import_text(slurp(fixture("dictionary50.csv"))));
        id = project.project_id;
        map_all_top1(store, id);
        // A value-mapped human decision replacing an auto decision.
        auto p = store.get(id);
        const auto& second = p.elements[1].last_candidates->candidates.at(1);
        store.record_decision(id, {"2", second.tiny_id, DecisionOrigin::HumanSelected, {{"Yes", "Yes", 1.0}}, {}},
                              *fixture_bundle());
        before = project_to_json(store.get(id)).dump();
    }
    {
        ProjectStore store(dir.str());
        EXPECT_EQ(project_to_json(store.get(id)).dump(), before);
    }
    // Without the snapshot the event log alone rebuilds the same state.
    std::filesystem::remove(dir.path() / id / "snapshot.json");
    {
        ProjectStore store(dir.str());
        EXPECT_EQ(project_to_json(store.get(id)).dump(), before);
        auto p = store.get(id);
        EXPECT_EQ(p.elements[1].decisions.size(), 2u);
        EXPECT_EQ(p.elements[2].status, ElementStatus::NoMatch);
        EXPECT_EQ(p.elements[0].status, ElementStatus::Mapped);
    }
    // A torn final line from an interrupted append is ignored.
    std::ofstream(dir.path() / id / "events.jsonl", std::ios::app) << "{\"type\":\"decis";
    {
        ProjectStore store(dir.str());
        EXPECT_EQ(project_to_json(store.get(id)).dump(), before);
    }
}

TEST(Store, EventLogShape) {
    TempDir dir;
    ProjectStore store(dir.str());
    auto p = store.create_project("shape", preset("bm25"), import_text("name\nRace\n"));
    auto list = recommend(p.elements[0].source, p.config, *fixture_bundle(), nullptr);
    store.record_candidates(p.project_id, "1", list);
    std::ifstream in(dir.path() / p.project_id / "events.jsonl");
    std::vector<std::string> types;
    for (std::string line; std::getline(in, line);) {
        auto ev = nlohmann::json::parse(line);
        EXPECT_TRUE(ev.contains("at"));
        EXPECT_TRUE(ev.contains("payload"));
        types.push_back(ev["type"]);
    }
    EXPECT_EQ(types, (std::vector<std::string>{"created", "candidates"}));
    auto snap = nlohmann::json::parse(slurp((dir.path() / p.project_id / "snapshot.json").string()));
    EXPECT_EQ(snap["event_count"], 2);
}

TEST(Store, DecisionValidation) {
    TempDir dir;
    ProjectStore store(dir.str());
    const auto& bundle = *fixture_bundle();
    auto p = store.create_project("v", preset("bm25"), import_text("name\nRace\nSex\n"));
    const auto id = p.project_id;

    EXPECT_THROW(store.record_decision(id, {"1", "C00004", DecisionOrigin::AutoTop1, {}, {}}, bundle), std::invalid_argument);
    EXPECT_THROW(store.record_decision(id, {"1", "C00004", DecisionOrigin::HumanSelected, {}, {}}, bundle), std::invalid_argument);
    EXPECT_THROW(store.record_decision(id, {"1", "NOPE", DecisionOrigin::ManualSearch, {}, {}}, bundle), IntegrityError);
    EXPECT_THROW(store.record_decision(id, {"9", "C00004", DecisionOrigin::ManualSearch, {}, {}}, bundle), NotFoundError);
    EXPECT_THROW(store.record_decision("nope", {"1", "C00004", DecisionOrigin::ManualSearch, {}, {}}, bundle), NotFoundError);
    EXPECT_THROW(store.record_decision(id, {"1", std::nullopt, DecisionOrigin::HumanSelected, {{"a", "b", 1}}, {}}, bundle),
                 std::invalid_argument);

    auto list = recommend(p.elements[0].source, p.config, bundle, nullptr);
    EXPECT_EQ(store.record_candidates(id, "1", list), ElementStatus::CandidatesReady);
    const auto top = list.candidates.front().tiny_id;
    EXPECT_EQ(store.record_decision(id, {"1", top, DecisionOrigin::AutoTop1, {}, {}}, bundle), ElementStatus::Mapped);
    // Identical resend is a no-op.
    store.record_decision(id, {"1", top, DecisionOrigin::AutoTop1, {}, {}}, bundle);
    EXPECT_EQ(store.get(id).elements[0].decisions.size(), 1u);
    // Re-running candidates keeps the decision in force.
    EXPECT_EQ(store.record_candidates(id, "1", list), ElementStatus::Mapped);
    // Manual search may pick anything in the corpus.
    EXPECT_EQ(store.record_decision(id, {"2", "C00004", DecisionOrigin::ManualSearch, {}, {}}, bundle), ElementStatus::Mapped);
    EXPECT_THROW(store.get("../etc"), NotFoundError);
}

TEST(Store, ConcurrentWritersSerialize) {
    TempDir dir;
    const auto& bundle = *fixture_bundle();
    std::string id;
    {
        ProjectStore store(dir.str());
        std::string csv = "name\n";
        for (int i = 0; i < 40; ++i) csv += "Blood pressure " + std::to_string(i) + "\n";
        id = store.create_project("c", preset("bm25"), import_text(csv)).project_id;
        std::vector<std::jthread> threads;
        for (int t = 0; t < 4; ++t) {
            threads.emplace_back([&, t] {
                for (int i = t; i < 40; i += 4) {
                    auto eid = std::to_string(i + 1);
                    auto list = recommend(store.get(id).elements[i].source, preset("bm25"), bundle, nullptr);
                    store.record_candidates(id, eid, list);
                    store.record_decision(id, {eid, list.candidates.front().tiny_id, DecisionOrigin::AutoTop1, {}, {}}, bundle);
                }
            });
        }
    }
    const auto from_snapshot = project_to_json(ProjectStore(dir.str()).get(id)).dump();
    std::filesystem::remove(dir.path() / id / "snapshot.json");
    auto p = ProjectStore(dir.str()).get(id);
    for (const auto& e : p.elements) EXPECT_EQ(e.status, ElementStatus::Mapped) << e.source.element_id;
    EXPECT_EQ(project_to_json(p).dump(), from_snapshot);
}

TEST(Store, ListAndNames) {
    TempDir dir;
    ProjectStore store(dir.str());
    EXPECT_TRUE(store.list_projects().empty());
    auto a = store.create_project("a", preset("bm25"), import_text("name\nx\n"));
    auto b = store.create_project("b", preset("bm25+emb"), import_text("name\ny\n"));
    auto ids = store.list_projects();
    EXPECT_EQ(ids.size(), 2u);
    EXPECT_EQ(store.get(b.project_id).config, preset("bm25+emb"));
    for (auto s : {ElementStatus::Unmapped, ElementStatus::CandidatesReady, ElementStatus::Mapped, ElementStatus::NoMatch}) {
        EXPECT_EQ(status_from_name(status_name(s)), s);
    }
    for (auto o : {DecisionOrigin::AutoTop1, DecisionOrigin::HumanSelected, DecisionOrigin::ManualSearch}) {
        EXPECT_EQ(origin_from_name(origin_name(o)), o);
    }
}
