#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepera/corpus.hpp"
#include "deepera/gateway.hpp"

namespace deepera {

// Answer-overlap normalization: lowercase, strip ASCII punctuation, drop the
// articles a/an/the, split on whitespace.
struct TokenSet {
    std::vector<std::string> tokens;

    bool empty() const { return tokens.empty(); }
    bool operator==(const TokenSet&) const = default;
};

TokenSet normalize_tokens(std::string_view text);

// True when `needle` occurs as a contiguous run inside `haystack`. An empty
// needle never matches.
bool contains_sequence(const TokenSet& haystack, const TokenSet& needle);

// The repo-wide definition of an answer leak.
bool leaks_answer(std::string_view text, std::string_view golden_answer);

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Bag-of-tokens overlap. Both empty => (1,1,1); exactly one empty => (0,0,0).
PRF token_prf(std::string_view pred, std::string_view gold);

// Ranks are 1-based. Absent members were filtered out of the ranked list.
struct RankPair {
    std::optional<std::size_t> original_rank;
    std::optional<std::size_t> distractor_rank;

    bool operator==(const RankPair&) const = default;
};

struct RankingRecord {
    std::string instance_id;
    std::optional<std::size_t> golden_rank;
    std::size_t n = 0;
    std::vector<PassageLabel> labels_by_rank;
    std::vector<RankPair> pairs;
};

// Builds the record for a reranker's output list against the instance labels.
RankingRecord make_ranking_record(const QAInstance& inst, std::span<const Passage> ranked);

class MetricError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class EmptyRecordSet : public MetricError {
public:
    EmptyRecordSet() : MetricError("metric needs at least one ranking record") {}
};

class NoPairs : public MetricError {
public:
    NoPairs() : MetricError("no original/distractor pairs to discriminate") {}
};

class RunMismatch : public MetricError {
    using MetricError::MetricError;
};

class JudgeParseError : public MetricError {
public:
    JudgeParseError(std::string raw, const std::string& reason);
    const std::string& raw_content() const { return raw_; }

private:
    std::string raw_;
};

// Percent of records whose golden passage ranks <= k. Golden-absent = miss.
double hit_rate_at_k(std::span<const RankingRecord> records, std::size_t k);

// Mean of 100*(n-r)/(n-1) (100 when n == 1); golden-absent records score 0.
double relative_position(std::span<const RankingRecord> records);
double relative_position_of(const RankingRecord& record);

// Mean over records of the non-distractor fraction among the first
// min(k, n) ranked passages; a record with an empty list counts as 1.
double noise_robustness(std::span<const RankingRecord> records, std::size_t k);
double noise_robustness_of(const RankingRecord& record, std::size_t k);

// Fraction of pairs where the original outranks its distractor. A pair whose
// original was filtered out fails; a pair whose distractor was filtered out
// succeeds.
double context_discrimination(std::span<const RankingRecord> records);

struct PairTally {
    std::size_t successes = 0;
    std::size_t pairs = 0;
};
PairTally discrimination_tally(const RankingRecord& record);

struct JudgeScore {
    int value = 0;
    std::string rationale;
};

const SchemaSpec& judge_schema();
JudgeScore parse_judge(std::string_view content);
JudgeScore lfs_judge(std::string_view question, std::string_view gold, std::string_view pred,
                     Gateway& gateway);

// Aggregation across repeated runs.
using MetricMap = std::map<std::string, std::optional<double>>;

struct InstanceMetrics {
    std::string instance_id;
    MetricMap values;  // nullopt: not computable for this instance (recorded, not dropped)
    StringMap flags;

    bool operator==(const InstanceMetrics&) const = default;
};

using RunMetrics = std::vector<InstanceMetrics>;

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation across runs; 0 for a single run
    std::size_t n_runs = 0;

    bool operator==(const MetricSummary&) const = default;
};

struct RunInstanceMetrics {
    std::size_t run = 0;
    InstanceMetrics metrics;

    bool operator==(const RunInstanceMetrics&) const = default;
};

struct MetricsReport {
    nlohmann::json provenance = nlohmann::json::object();
    std::vector<RunInstanceMetrics> per_instance;
    std::map<std::string, MetricSummary> aggregate;
    std::size_t judge_failures = 0;

    bool operator==(const MetricsReport&) const = default;
};

// Metric whose run-level value is a weighted mean; weight comes from the
// named companion metric. "cdr" is weighted by "cdr_pairs".
std::optional<std::string> weight_metric_for(std::string_view metric);

// Run-level value of each metric: mean of the non-null per-instance values.
std::map<std::string, double> run_values(const RunMetrics& run);

// Throws RunMismatch when runs disagree on the instance id set.
MetricsReport aggregate_report(const std::vector<RunMetrics>& runs,
                               nlohmann::json provenance = nlohmann::json::object());

}  // namespace deepera
