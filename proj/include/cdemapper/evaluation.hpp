// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdemapper/index_store.hpp"
#include "cdemapper/llm_gateway.hpp"
#include "cdemapper/pipeline.hpp"
#include "cdemapper/source_element.hpp"

namespace cdemapper {

enum class MappingSetting { OneToOne, ManyToOne, OneToMany };

/// "1 vs 1", "M vs 1", "1 vs M".
std::string_view setting_label(MappingSetting s);
inline constexpr MappingSetting kAllSettings[] = {MappingSetting::OneToOne, MappingSetting::ManyToOne,
                                                  MappingSetting::OneToMany};

/// A percentage held as exact hundredths, rounded half-up from a ratio.
struct Percent {
    std::int64_t hundredths = 0;

    /// 100 * num / den rounded half-up to two decimals. Requires den > 0.
    static Percent of(std::int64_t num, std::int64_t den);
    double value() const { return static_cast<double>(hundredths) / 100.0; }
    std::string str() const;

    auto operator<=>(const Percent&) const = default;
};

struct GoldEntry {
    SourceElement source;
    /// Sorted, unique, non-empty.
    std::vector<std::string> accepted_targets;
    std::string dataset_name;
};

struct GoldDataset {
    std::string name;
    std::vector<GoldEntry> entries;
    /// Dictionary rows with no valid mapping; they only count toward coverage.
    std::size_t unmapped_elements = 0;

    std::size_t total_elements() const { return entries.size() + unmapped_elements; }
};

/// Normalized gold CSV: dataset, source_name, source_description,
/// source_values (`|`-separated), accepted_target_ids (`;`-separated; empty
/// marks an element without a mapping). Datasets keep first-appearance order.
/// Element ids are "<dataset>#<row>".
std::vector<GoldDataset> load_gold_csv(std::istream& in);
std::vector<GoldDataset> load_gold_file(const std::string& path);
void write_gold_csv(const std::vector<GoldDataset>& datasets, std::ostream& out);

/// Throws IntegrityError naming the first accepted target not in the corpus.
void validate_gold(const std::vector<GoldDataset>& datasets, const IndexBundle& bundle);

struct Classification {
    std::vector<MappingSetting> settings; // parallel to the input entries
    std::size_t ambiguous = 0;            // multi-target entries whose targets are also shared
};

/// OneToMany when an entry accepts several targets; ManyToOne when its single
/// target is shared by at least two distinct source elements; else OneToOne.
Classification classify_settings(const std::vector<GoldEntry>& gold);

/// 1-based rank of the first accepted target among the first `n` candidates.
std::optional<std::size_t> hit_rank(const CandidateList& list, const std::vector<std::string>& accepted,
                                    std::size_t n = SIZE_MAX);

/// Percentage of entries with an accepted target in the top n. Entries with no
/// prediction count as misses. Throws std::invalid_argument when n < 1 or
/// `gold` is empty.
Percent acc_at_n(const std::unordered_map<std::string, CandidateList>& predictions, const std::vector<GoldEntry>& gold,
                 std::size_t n);

/// 100 * mapped / total. Throws std::invalid_argument when total == 0 or mapped > total.
Percent coverage(std::size_t total_elements, std::size_t mapped_entries);

/// Collections searched for a dataset and whether its coverage is reportable.
struct DatasetProfile {
    CollectionFilter collections;
    bool coverage_applicable = true;
};

/// Eye, Stroke, ADRD and COVID-19 with the collection sets they were mapped to.
std::map<std::string, DatasetProfile> default_profiles();

struct ReportRow {
    std::string dataset;
    MappingSetting setting = MappingSetting::OneToOne;
    std::size_t entry_count = 0;
    std::string preset;
    std::optional<Percent> acc1;
    std::optional<Percent> acc5;
    std::optional<Percent> acc10;
    /// An LLM stage fell back for at least one entry; accuracies are withheld.
    bool degraded = false;
};

struct CoverageRow {
    std::string dataset;
    std::size_t total_elements = 0;
    std::size_t mapped_elements = 0;
    std::optional<Percent> rate; // nullopt: not applicable
};

struct EvaluationReport {
    std::vector<ReportRow> rows;
    std::vector<CoverageRow> coverage;
};

struct AuditRecord {
    std::string dataset;
    MappingSetting setting = MappingSetting::OneToOne;
    std::string preset;
    std::string element_id;
    std::string source_name;
    std::string query_term;
    std::string query_description;
    std::vector<std::string> candidate_ids;
    std::vector<std::string> accepted_targets;
    std::optional<std::size_t> hit_rank;
    bool degraded = false;
};

struct BenchmarkResult {
    EvaluationReport report;
    std::vector<AuditRecord> audit;
};

struct BenchmarkOptions {
    /// Applied under each preset's switches (top_k, rrf_k, query mode, ...).
    PipelineConfig base;
    std::map<std::string, DatasetProfile> profiles = default_profiles();
    /// Parallel recommend calls per run; results do not depend on it.
    std::size_t workers = 1;
};

/// Runs every preset over every dataset. Acc@5/10 are only reported for
/// presets without re-ranking.
BenchmarkResult run_benchmark(const std::vector<GoldDataset>& datasets, const std::vector<std::string>& presets,
                              const IndexBundle& bundle, LlmGateway* gateway, const BenchmarkOptions& options = {});

/// "BM25", "BM25 + Emb", "BM25+Rank", "BM25+Emb+Rank".
std::string method_label(const std::string& preset);

void write_report_csv(const EvaluationReport& report, std::ostream& out);
void write_report_text(const EvaluationReport& report, std::ostream& out);
void write_audit_jsonl(const std::vector<AuditRecord>& audit, std::ostream& out);

} // namespace cdemapper
