// SPDX-License-Identifier: Apache-2.0
#include "cdemapper/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "cdemapper/csv.hpp"
#include "cdemapper/errors.hpp"
#include "cdemapper/text.hpp"

namespace cdemapper {

using nlohmann::json;

std::string_view setting_label(MappingSetting s) {
    switch (s) {
    case MappingSetting::OneToOne: return "1 vs 1";
    case MappingSetting::ManyToOne: return "M vs 1";
    case MappingSetting::OneToMany: return "1 vs M";
    }
    return "?";
}

Percent Percent::of(std::int64_t num, std::int64_t den) {
    if (den <= 0 || num < 0) throw std::invalid_argument("percentage needs num >= 0 and den > 0");
    return Percent{(num * 20000 + den) / (2 * den)};
}

std::string Percent::str() const {
    std::ostringstream os;
    os << hundredths / 100 << '.' << std::setw(2) << std::setfill('0') << hundredths % 100;
    return os.str();
}

namespace {

const char* const kGoldHeader[] = {"dataset", "source_name", "source_description", "source_values", "accepted_target_ids"};

std::vector<std::string> split_ids(const std::string& cell) {
    std::set<std::string> ids;
    std::size_t pos = 0;
    while (pos <= cell.size()) {
        auto semi = cell.find(';', pos);
        auto item = trim(std::string_view(cell).substr(pos, semi == std::string::npos ? std::string::npos : semi - pos));
        if (!item.empty()) ids.emplace(item);
        if (semi == std::string::npos) break;
        pos = semi + 1;
    }
    return {ids.begin(), ids.end()};
}

std::string source_key(const SourceElement& s) {
    return s.name + '\x1f' + s.description;
}

} // namespace

std::vector<GoldDataset> load_gold_csv(std::istream& in) {
    auto rows = csv::read(in);
    std::vector<GoldDataset> out;
    if (rows.empty()) return out;

    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[std::string(trim(rows[0][i]))] = i;
    for (const char* name : kGoldHeader) {
        if (!col.contains(name)) {
            throw ImportError(std::string("gold file lacks column '") + name + "'; found: " + join(rows[0], ", "));
        }
    }
    auto cell = [&](const csv::Row& r, const char* name) -> std::string {
        auto i = col[name];
        return i < r.size() ? r[i] : std::string();
    };

    std::map<std::string, std::size_t> position;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() == 1 && row[0].empty()) continue;
        std::string dataset(trim(cell(row, "dataset")));
        std::string name = cell(row, "source_name");
        if (dataset.empty()) throw ImportError("gold row " + std::to_string(r + 1) + ": empty dataset");
        if (trim(name).empty()) throw ImportError("gold row " + std::to_string(r + 1) + ": empty source_name");

        auto [it, inserted] = position.emplace(dataset, out.size());
        if (inserted) out.push_back(GoldDataset{dataset, {}, 0});
        auto& ds = out[it->second];

        auto targets = split_ids(cell(row, "accepted_target_ids"));
        if (targets.empty()) {
            ++ds.unmapped_elements;
            continue;
        }
        GoldEntry e;
        e.dataset_name = dataset;
        e.source.element_id = dataset + "#" + std::to_string(r + 1);
        e.source.name = name;
        e.source.description = cell(row, "source_description");
        e.source.value_set = csv::split_values(cell(row, "source_values"));
        e.accepted_targets = std::move(targets);
        ds.entries.push_back(std::move(e));
    }
    return out;
}

std::vector<GoldDataset> load_gold_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open gold file '" + path + "'");
    return load_gold_csv(in);
}

void write_gold_csv(const std::vector<GoldDataset>& datasets, std::ostream& out) {
    csv::write_row(out, csv::Row(std::begin(kGoldHeader), std::end(kGoldHeader)));
    for (const auto& ds : datasets) {
        for (const auto& e : ds.entries) {
            std::string ids;
            for (std::size_t i = 0; i < e.accepted_targets.size(); ++i) ids += (i ? ";" : "") + e.accepted_targets[i];
            csv::write_row(out, {ds.name, e.source.name, e.source.description, csv::join_values(e.source.value_set), ids});
        }
    }
}

void validate_gold(const std::vector<GoldDataset>& datasets, const IndexBundle& bundle) {
    for (const auto& ds : datasets) {
        for (const auto& e : ds.entries) {
            for (const auto& id : e.accepted_targets) {
                if (!bundle.find(id)) {
                    throw IntegrityError("gold entry '" + e.source.name + "' (" + ds.name + ") accepts unknown tinyId '" + id + "'");
                }
            }
        }
    }
}

Classification classify_settings(const std::vector<GoldEntry>& gold) {
    std::map<std::string, std::set<std::string>> sources_per_target;
    for (const auto& e : gold) {
        for (const auto& t : e.accepted_targets) sources_per_target[t].insert(source_key(e.source));
    }
    Classification c;
    c.settings.reserve(gold.size());
    for (const auto& e : gold) {
        if (e.accepted_targets.size() > 1) {
            c.settings.push_back(MappingSetting::OneToMany);
            bool shared = std::all_of(e.accepted_targets.begin(), e.accepted_targets.end(),
                                      [&](const auto& t) { return sources_per_target[t].size() >= 2; });
            if (shared) {
                ++c.ambiguous;
                std::cerr << "note: '" << e.source.name << "' accepts several targets that other sources share; classified 1 vs M\n";
            }
        } else if (sources_per_target[e.accepted_targets.front()].size() >= 2) {
            c.settings.push_back(MappingSetting::ManyToOne);
        } else {
            c.settings.push_back(MappingSetting::OneToOne);
        }
    }
    return c;
}

std::optional<std::size_t> hit_rank(const CandidateList& list, const std::vector<std::string>& accepted, std::size_t n) {
    const auto limit = std::min(n, list.candidates.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (std::find(accepted.begin(), accepted.end(), list.candidates[i].tiny_id) != accepted.end()) return i + 1;
    }
    return std::nullopt;
}

Percent acc_at_n(const std::unordered_map<std::string, CandidateList>& predictions, const std::vector<GoldEntry>& gold,
                 std::size_t n) {
    if (n < 1) throw std::invalid_argument("acc_at_n: n must be >= 1");
    if (gold.empty()) throw std::invalid_argument("acc_at_n: no gold entries");
    std::int64_t hits = 0;
    for (const auto& e : gold) {
        auto it = predictions.find(e.source.element_id);
        if (it == predictions.end()) {
            std::cerr << "warning: no prediction for '" << e.source.element_id << "'; counted as a miss\n";
            continue;
        }
        if (hit_rank(it->second, e.accepted_targets, n)) ++hits;
    }
    return Percent::of(hits, static_cast<std::int64_t>(gold.size()));
}

Percent coverage(std::size_t total_elements, std::size_t mapped_entries) {
    if (total_elements == 0) throw std::invalid_argument("coverage: total must be > 0");
    if (mapped_entries > total_elements) throw std::invalid_argument("coverage: mapped exceeds total");
    return Percent::of(static_cast<std::int64_t>(mapped_entries), static_cast<std::int64_t>(total_elements));
}

std::map<std::string, DatasetProfile> default_profiles() {
    auto set = [](std::initializer_list<const char*> names) {
        return CollectionFilter(std::set<std::string>(names.begin(), names.end()));
    };
    return {
        {"Eye", {set({"NIH-Endorsed", "NEI"}), true}},
        {"Stroke", {set({"NIH-Endorsed", "NINDS"}), true}},
        {"ADRD", {set({"NIH-Endorsed", "NINDS"}), false}},
        {"COVID-19", {set({"NIH-Endorsed", "Project 5 (COVID-19)"}), true}},
    };
}

std::string method_label(const std::string& preset) {
    if (preset == "bm25") return "BM25";
    if (preset == "bm25+emb") return "BM25 + Emb";
    if (preset == "bm25+rank") return "BM25+Rank";
    if (preset == "bm25+emb+rank") return "BM25+Emb+Rank";
    return preset;
}

BenchmarkResult run_benchmark(const std::vector<GoldDataset>& datasets, const std::vector<std::string>& presets,
                              const IndexBundle& bundle, LlmGateway* gateway, const BenchmarkOptions& options) {
    BenchmarkResult result;
    if (presets.empty()) return result;
    std::vector<PipelineConfig> configs;
    for (const auto& p : presets) {
        auto c = options.base;
        auto switches = preset(p);
        c.use_expansion = false;
        c.use_embedding = switches.use_embedding;
        c.use_rerank = switches.use_rerank;
        configs.push_back(c);
    }

    for (const auto& ds : datasets) {
        auto profile_it = options.profiles.find(ds.name);
        const DatasetProfile profile = profile_it == options.profiles.end() ? DatasetProfile{} : profile_it->second;

        CoverageRow cov{ds.name, ds.total_elements(), ds.entries.size(), std::nullopt};
        if (profile.coverage_applicable && cov.total_elements > 0) cov.rate = coverage(cov.total_elements, cov.mapped_elements);
        result.report.coverage.push_back(cov);

        const auto cls = classify_settings(ds.entries);

        std::vector<std::vector<CandidateList>> lists(presets.size(), std::vector<CandidateList>(ds.entries.size()));
        for (std::size_t p = 0; p < presets.size(); ++p) {
            auto config = configs[p];
            config.collections = profile.collections;
            std::atomic<std::size_t> next{0};
            auto work = [&] {
                for (std::size_t i; (i = next.fetch_add(1)) < ds.entries.size();) {
                    lists[p][i] = recommend(ds.entries[i].source, config, bundle, gateway);
                }
            };
            if (options.workers <= 1) {
                work();
            } else {
                std::vector<std::jthread> pool;
                for (std::size_t w = 0; w < options.workers; ++w) pool.emplace_back(work);
            }
        }

        // Table layout: presets grouped under each (dataset, setting).
        for (MappingSetting setting : kAllSettings) {
            for (std::size_t p = 0; p < presets.size(); ++p) {
                ReportRow row;
                row.dataset = ds.name;
                row.setting = setting;
                row.preset = presets[p];
                std::vector<GoldEntry> subset;
                std::unordered_map<std::string, CandidateList> predictions;
                for (std::size_t i = 0; i < ds.entries.size(); ++i) {
                    if (cls.settings[i] != setting) continue;
                    const auto& e = ds.entries[i];
                    const auto& list = lists[p][i];
                    subset.push_back(e);
                    predictions.emplace(e.source.element_id, list);
                    row.degraded = row.degraded || list.degraded;

                    AuditRecord a;
                    a.dataset = ds.name;
                    a.setting = setting;
                    a.preset = presets[p];
                    a.element_id = e.source.element_id;
                    a.source_name = e.source.name;
                    a.query_term = list.query_term;
                    a.query_description = list.query_description;
                    for (const auto& c : list.candidates) a.candidate_ids.push_back(c.tiny_id);
                    a.accepted_targets = e.accepted_targets;
                    a.hit_rank = hit_rank(list, e.accepted_targets);
                    a.degraded = list.degraded;
                    result.audit.push_back(std::move(a));
                }
                row.entry_count = subset.size();
                if (!subset.empty() && !row.degraded) {
                    row.acc1 = acc_at_n(predictions, subset, 1);
                    if (!configs[p].use_rerank) {
                        row.acc5 = acc_at_n(predictions, subset, 5);
                        row.acc10 = acc_at_n(predictions, subset, 10);
                    }
                }
                result.report.rows.push_back(std::move(row));
            }
        }
    }
    return result;
}

namespace {

std::string cell(const std::optional<Percent>& p) {
    return p ? p->str() : "-";
}

} // namespace

void write_report_csv(const EvaluationReport& report, std::ostream& out) {
    csv::write_row(out, {"dataset", "category", "entries", "method", "acc@1", "acc@5", "acc@10", "degraded"});
    for (const auto& r : report.rows) {
        csv::write_row(out, {r.dataset, std::string(setting_label(r.setting)), std::to_string(r.entry_count), method_label(r.preset),
                             cell(r.acc1), cell(r.acc5), cell(r.acc10), r.degraded ? "yes" : "no"});
    }
    out << '\n';
    csv::write_row(out, {"dataset", "total_elements", "mapped_elements", "coverage"});
    for (const auto& c : report.coverage) {
        csv::write_row(out, {c.dataset, std::to_string(c.total_elements), std::to_string(c.mapped_elements),
                             c.rate ? c.rate->str() : "not applicable"});
    }
}

void write_report_text(const EvaluationReport& report, std::ostream& out) {
    out << "Hit rule: an entry counts as a hit when any accepted target appears in the top N.\n";
    out << "Acc@5/Acc@10 are not applicable after re-ranking (shown as \"-\").\n\n";
    auto line = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                    const std::string& e, const std::string& f) {
        out << std::left << std::setw(10) << a << std::setw(20) << b << std::setw(16) << c << std::right << std::setw(10)
            << d << std::setw(10) << e << std::setw(11) << f << '\n';
    };
    line("Datasets", "Category (numbers)", "Method", "Acc@1 (%)", "Acc@5 (%)", "Acc@10 (%)");
    std::string last_dataset, last_category;
    for (const auto& r : report.rows) {
        std::string category = std::string(setting_label(r.setting)) + " (" + std::to_string(r.entry_count) + ")";
        const bool new_dataset = r.dataset != last_dataset;
        const bool new_category = new_dataset || category != last_category;
        if (r.degraded) {
            line(new_dataset ? r.dataset : "", new_category ? category : "", method_label(r.preset), "degraded", "", "");
        } else {
            line(new_dataset ? r.dataset : "", new_category ? category : "", method_label(r.preset), cell(r.acc1),
                 cell(r.acc5), cell(r.acc10));
        }
        last_dataset = r.dataset;
        last_category = category;
    }
    if (!report.coverage.empty()) {
        out << "\nCoverage\n";
        for (const auto& c : report.coverage) {
            out << std::left << std::setw(10) << c.dataset << ' ' << c.mapped_elements << " of " << c.total_elements << " ("
                << (c.rate ? c.rate->str() + "%" : std::string("not applicable")) << ")\n";
        }
    }
}

void write_audit_jsonl(const std::vector<AuditRecord>& audit, std::ostream& out) {
    for (const auto& a : audit) {
        json j{
            {"dataset", a.dataset},
            {"setting", setting_label(a.setting)},
            {"preset", a.preset},
            {"element_id", a.element_id},
            {"source_name", a.source_name},
            {"query", {{"term", a.query_term}, {"description", a.query_description}}},
            {"candidate_ids", a.candidate_ids},
            {"accepted_targets", a.accepted_targets},
            {"hit_rank", a.hit_rank ? json(*a.hit_rank) : json(nullptr)},
            {"degraded", a.degraded},
        };
        out << j.dump() << '\n';
    }
}

} // namespace cdemapper
