// SPDX-License-Identifier: Apache-2.0
// Batch command line: index build, map, eval, serve.
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "cdemapper/errors.hpp"
#include "cdemapper/evaluation.hpp"
#include "cdemapper/pipeline.hpp"
#include "cdemapper/project_store.hpp"
#include "cdemapper/service.hpp"
#include "cdemapper/text.hpp"

namespace fs = std::filesystem;
using namespace cdemapper;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kUpstream = 3 };

struct Globals {
    bool mock_llm = false;
    std::string llm_config;
};

LlmConfig load_llm_config(const Globals& g) {
    if (g.llm_config.empty()) return LlmConfig{};
    return llm_config_from(read_key_value_file(g.llm_config));
}

std::shared_ptr<LlmGateway> gateway_for(const Globals& g) {
    return make_gateway(load_llm_config(g), g.mock_llm);
}

std::string today_utc() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NotFoundError("cannot write '" + path + "'");
    return out;
}

CollectionFilter parse_collections(const std::string& spec) {
    if (trim(spec).empty()) return std::nullopt;
    std::set<std::string> names;
    std::stringstream ss(spec);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!trim(item).empty()) names.emplace(trim(item));
    }
    return names;
}

struct IndexBuildArgs {
    std::string corpus, out, field_weights, snapshot_date;
    bool no_embeddings = false;
};

int index_build(const Globals& g, const IndexBuildArgs& a) {
    auto load = load_corpus_file(a.corpus);
    for (const auto& r : load.rejections) {
        std::cerr << "rejected record " << r.position << (r.tiny_id.empty() ? "" : " (" + r.tiny_id + ")") << ": "
                  << r.reason << '\n';
    }
    auto params = a.field_weights.empty() ? Bm25Params{} : parse_field_weights(a.field_weights);
    std::shared_ptr<LlmGateway> gw;
    if (!a.no_embeddings) gw = gateway_for(g);
    auto bundle = build_index(std::move(load.records), params,
                              a.snapshot_date.empty() ? today_utc() : a.snapshot_date, gw.get());
    save_index(bundle, a.out);
    std::cerr << "indexed " << bundle.records().size() << " CDEs in " << bundle.collections().size()
              << " collections" << (bundle.vectors() ? " with embeddings" : "") << '\n';
    return kOk;
}

struct MapArgs {
    std::string index, input, preset, collections, out, store, config;
};

int map_command(const Globals& g, const MapArgs& a) {
    auto bundle = load_index(a.index);
    auto config = preset(a.preset);
    if (!a.config.empty()) config = parse_config(read_key_value_file(a.config), config);
    if (!a.collections.empty()) config.collections = parse_collections(a.collections);
    config.validate();

    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw NotFoundError("cannot open input '" + a.input + "'");
    auto import = import_source_csv(in);
    for (const auto& r : import.rejected) std::cerr << "rejected row " << r.row << ": " << r.reason << '\n';

    std::shared_ptr<LlmGateway> gw;
    if (config.use_embedding || config.use_expansion || config.use_rerank) gw = gateway_for(g);

    fs::path root = a.store;
    bool scratch = root.empty();
    if (scratch) {
        std::random_device rd;
        root = fs::temp_directory_path() / ("cdemapper-map-" + std::to_string(rd()));
    }
    int status = kOk;
    try {
        ProjectStore store(root.string());
        auto project = store.create_project(fs::path(a.input).stem().string(), config, import,
                                            bundle.meta().snapshot.corpus_date);
        std::size_t degraded = 0;
        for (const auto& e : project.elements) {
            auto list = recommend(e.source, config, bundle, gw.get());
            if (list.degraded) {
                ++degraded;
                for (const auto& n : list.notes) std::cerr << "element " << e.source.element_id << ": " << n << '\n';
            }
            store.record_candidates(project.project_id, e.source.element_id, list);
            if (!list.candidates.empty()) {
                MappingDecision d;
                d.element_id = e.source.element_id;
                d.selected_tiny_id = list.candidates.front().tiny_id;
                d.origin = DecisionOrigin::AutoTop1;
                store.record_decision(project.project_id, d, bundle);
            }
        }
        auto out = open_out(a.out);
        store.export_mappings(project.project_id, bundle, out);
        if (!scratch) std::cerr << "project " << project.project_id << " stored under " << root.string() << '\n';
        if (degraded > 0) {
            std::cerr << degraded << " element(s) mapped with degraded LLM stages\n";
            status = kUpstream;
        }
    } catch (...) {
        if (scratch) fs::remove_all(root);
        throw;
    }
    if (scratch) fs::remove_all(root);
    return status;
}

struct EvalArgs {
    std::string index, gold, presets = "bm25,bm25+emb", report, audit, csv;
    std::size_t workers = 1;
};

int eval_command(const Globals& g, const EvalArgs& a) {
    auto bundle = load_index(a.index);
    auto datasets = load_gold_file(a.gold);
    validate_gold(datasets, bundle);

    std::vector<std::string> presets;
    bool llm = false;
    std::stringstream ss(a.presets);
    for (std::string p; std::getline(ss, p, ',');) {
        auto name = std::string(trim(p));
        auto c = preset(name);
        llm = llm || c.use_embedding || c.use_expansion || c.use_rerank;
        presets.push_back(name);
    }
    std::shared_ptr<LlmGateway> gw;
    if (llm) gw = gateway_for(g);

    BenchmarkOptions options;
    options.workers = std::max<std::size_t>(1, a.workers);
    auto result = run_benchmark(datasets, presets, bundle, gw.get(), options);

    {
        auto out = open_out(a.report);
        write_report_text(result.report, out);
    }
    if (!a.csv.empty()) {
        auto out = open_out(a.csv);
        write_report_csv(result.report, out);
    }
    if (!a.audit.empty()) {
        auto out = open_out(a.audit);
        write_audit_jsonl(result.audit, out);
    }
    bool degraded = std::any_of(result.report.rows.begin(), result.report.rows.end(),
                                [](const ReportRow& r) { return r.degraded; });
    if (degraded) {
        std::cerr << "some report rows are degraded; their accuracies are withheld\n";
        return kUpstream;
    }
    return kOk;
}

int serve_command(const Globals& g, const std::string& config_path) {
    auto kv = read_key_value_file(config_path);
    auto config = ServiceConfig::from_key_values(kv);
    if (!g.llm_config.empty()) config.llm = load_llm_config(g);
    config.mock_llm = config.mock_llm || g.mock_llm;
    auto bundle = std::make_shared<const IndexBundle>(load_index(config.index_path));
    auto gw = make_gateway(config.llm, config.mock_llm);
    Service service(config, bundle, gw);
    std::cerr << "serving " << bundle->records().size() << " CDEs on " << config.host << ':' << config.port << '\n';
    if (!service.listen()) {
        std::cerr << "cannot listen on " << config.host << ':' << config.port << '\n';
        return kData;
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Map local data elements to NIH Common Data Elements"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_flag("--mock-llm", g.mock_llm, "Use the deterministic offline LLM mock");
    app.add_option("--llm-config", g.llm_config, "Key-value file with llm.* settings")->check(CLI::ExistingFile);

    auto* index = app.add_subcommand("index", "Corpus index artifacts");
    index->require_subcommand(1);
    IndexBuildArgs ib;
    auto* build = index->add_subcommand("build", "Build lexical and vector indexes");
    build->add_option("--corpus", ib.corpus, "CDE corpus JSON export")->required();
    build->add_option("--out", ib.out, "Output directory")->required();
    build->add_option("--field-weights", ib.field_weights, "e.g. name=3,definition=1");
    build->add_option("--snapshot-date", ib.snapshot_date, "Corpus snapshot date (default: today, UTC)");
    build->add_flag("--no-embeddings", ib.no_embeddings, "Skip the vector index");

    MapArgs ma;
    auto* map = app.add_subcommand("map", "Map a data dictionary, accepting each rank-1 candidate");
    map->add_option("--index", ma.index, "Index directory")->required();
    map->add_option("--input", ma.input, "Source dictionary CSV")->required();
    map->add_option("--preset", ma.preset, "Pipeline preset")
        ->required()
        ->check(CLI::IsMember({"bm25", "bm25+emb", "bm25+rank", "bm25+emb+rank"}));
    map->add_option("--collections", ma.collections, "Comma-separated collection names");
    map->add_option("--config", ma.config, "Key-value pipeline overrides");
    map->add_option("--out", ma.out, "Export CSV path")->required();
    map->add_option("--store", ma.store, "Keep the project in this store directory");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Benchmark presets against gold datasets");
    eval->add_option("--index", ea.index, "Index directory")->required();
    eval->add_option("--gold", ea.gold, "Gold CSV")->required();
    eval->add_option("--presets", ea.presets, "Comma-separated presets")->capture_default_str();
    eval->add_option("--report", ea.report, "Text report path")->required();
    eval->add_option("--csv", ea.csv, "CSV report path");
    eval->add_option("--audit", ea.audit, "Per-element audit JSONL path");
    eval->add_option("--workers", ea.workers, "Parallel recommend calls")->capture_default_str();

    std::string serve_config;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", serve_config, "Service key-value config")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*build) return index_build(g, ib);
        if (*map) return map_command(g, ma);
        if (*eval) return eval_command(g, ea);
        if (*serve) return serve_command(g, serve_config);
    } catch (const GatewayError& e) {
        std::cerr << "upstream failure: " << e.what() << '\n';
        return kUpstream;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
