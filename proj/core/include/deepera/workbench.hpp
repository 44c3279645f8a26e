#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepera/corpus.hpp"
#include "deepera/embed.hpp"
#include "deepera/forge.hpp"
#include "deepera/gateway.hpp"
#include "deepera/metrics.hpp"
#include "deepera/reranker.hpp"

namespace deepera {

enum class RerankerKind { deepera, cosine, none };

std::string_view to_string(RerankerKind k);
std::optional<RerankerKind> parse_reranker_kind(std::string_view s);

struct EvalConfig {
    std::vector<std::size_t> k_list{1, 3, 5};
    std::size_t runs = 3;
    RerankerKind reranker = RerankerKind::deepera;
    std::size_t workers = 4;
    bool judge = true;
    std::size_t sample = 0;  // evaluate a seeded random subset of this size; 0 = all

    void validate() const;
};

struct WorkbenchConfig {
    ProviderConfig provider;
    EmbedProviderConfig embedder;
    PipelineConfig pipeline;
    ForgeConfig forge;
    EvalConfig eval;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigError
};

nlohmann::json config_to_json(const WorkbenchConfig& cfg);
// Missing keys keep their defaults; unknown keys are a ConfigError.
WorkbenchConfig config_from_json(const nlohmann::json& j);
WorkbenchConfig load_config(const std::filesystem::path& path);

// Sets a dotted path ("pipeline.tau") in a config document. The value is
// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, std::string_view dotted_path, std::string_view value);

// SHA-256 of the canonical resolved config.
std::string config_hash(const WorkbenchConfig& cfg);

struct RunManifest {
    std::string config_hash;
    std::string dataset_path;
    std::string started_at;  // ISO-8601 UTC
    std::string finished_at;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

std::string utc_timestamp();

// Ordinal-prefixed blocks "[1] ...", separated by blank lines, in rank order.
std::string format_evidence(std::span<const EvidenceSummary> evidence);

std::string generate_answer(std::string_view question, std::span<const EvidenceSummary> evidence,
                            Gateway& gateway);

// Ranking and evidence produced by one reranker for one instance.
struct RerankOutcome {
    std::vector<Passage> ranking;  // list the ranking metrics are computed on
    std::vector<EvidenceSummary> evidence;
    StringMap flags;
};

RerankOutcome apply_reranker(const QAInstance& inst, const WorkbenchConfig& cfg, Gateway& gateway,
                             const Embedder& embedder);

// Per-instance metrics: f1, precision, recall, lfs, hit@K for each K, rp, nrs, cdr, cdr_pairs.
InstanceMetrics evaluate_instance(const QAInstance& inst, const WorkbenchConfig& cfg, Gateway& gateway,
                                  const Embedder& embedder);

// Seeded subset selection; returns indices in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t sample, std::uint64_t seed);

nlohmann::json eval_provenance(const WorkbenchConfig& cfg, const Embedder& embedder,
                               std::string_view dataset_digest, std::size_t instance_count);

// Evaluates every instance cfg.eval.runs times and aggregates. Aborts only on
// config, auth and unreachable-provider errors.
MetricsReport run_eval(const WorkbenchConfig& cfg, std::span<const QAInstance> dataset, Gateway& gateway,
                       const Embedder& embedder, std::string_view dataset_digest = {});

// Loads and validates the dataset, evaluates, and writes report.json and
// manifest.json into out_dir.
MetricsReport run_eval(const WorkbenchConfig& cfg, const std::filesystem::path& dataset_path,
                       const std::filesystem::path& out_dir);

}  // namespace deepera
