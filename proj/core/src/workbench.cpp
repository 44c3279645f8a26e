#include "deepera/workbench.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "deepera/digest.hpp"
#include "deepera/parallel.hpp"
#include "deepera/prompts.hpp"
#include "deepera/report.hpp"
#include "deepera/text.hpp"

namespace deepera {

using nlohmann::json;

namespace {

// Reads one config section, rejecting unknown keys and ill-typed values.
class Section {
public:
    Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
        if (!doc_.is_object()) throw ConfigError(name_ + " must be a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        auto it = doc_.find(key);
        if (it == doc_.end()) return;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_unsigned()) throw ConfigError(path(key) + " must be a non-negative integer");
        } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
            if (!it->is_number_integer()) throw ConfigError(path(key) + " must be an integer");
        }
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path(key) + " has the wrong type");
        }
    }

    template <typename E, typename Parse>
    void get_enum(const char* key, E& out, Parse parse) {
        std::string s;
        get(key, s);
        if (!doc_.contains(key)) return;
        auto v = parse(s);
        if (!v) throw ConfigError(path(key) + " has unknown value '" + s + "'");
        out = *v;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, _] : doc_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown config key " + path(key));
        }
    }

private:
    std::string path(std::string_view key) const {
        return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
    }

    const json& doc_;
    std::string name_;
    std::set<std::string, std::less<>> seen_;
};

void read_provider(const json& j, ProviderConfig& p) {
    Section s(j, "provider");
    s.get_enum("kind", p.kind, parse_provider_kind);
    s.get("endpoint_url", p.endpoint_url);
    s.get("model", p.model);
    s.get("api_key_env_var", p.api_key_env_var);
    s.get("max_retries", p.max_retries);
    s.get("base_backoff_ms", p.base_backoff_ms);
    s.get("concurrency_limit", p.concurrency_limit);
    s.get("timeout_ms", p.timeout_ms);
    std::string cache_dir = p.cache_dir.string();
    s.get("cache_dir", cache_dir);
    p.cache_dir = cache_dir;
    s.get("fixtures_path", p.fixtures_path);
    s.get("stage_temperature", p.stage_temperature);
    s.finish();
}

void read_embedder(const json& j, EmbedProviderConfig& e) {
    Section s(j, "embedder");
    s.get_enum("kind", e.kind, parse_embed_provider_kind);
    s.get("dim", e.dim);
    s.get("ngram", e.ngram);
    s.get("endpoint_url", e.endpoint_url);
    s.get("model", e.model);
    s.get("api_key_env_var", e.api_key_env_var);
    s.get("timeout_ms", e.timeout_ms);
    s.finish();
}

void read_pipeline(const json& j, PipelineConfig& p) {
    Section s(j, "pipeline");
    s.get("tau", p.tau);
    s.get("top_n", p.top_n);
    s.get("k_out", p.k_out);
    s.get("ablate_intent", p.ablate_intent);
    s.get("ablate_filter", p.ablate_filter);
    s.get("ablate_summarize", p.ablate_summarize);
    s.finish();
}

void read_forge(const json& j, ForgeConfig& f) {
    Section s(j, "forge");
    s.get("max_chunk_chars", f.max_chunk_chars);
    s.get("pool_size", f.pool_size);
    s.get("distractor_count", f.distractor_count);
    s.get("cluster_threshold", f.cluster_threshold);
    s.get("min_cluster", f.min_cluster);
    s.get("guidance_top", f.guidance_top);
    s.get("workers", f.workers);
    s.finish();
}

void read_eval(const json& j, EvalConfig& e) {
    Section s(j, "eval");
    s.get("k_list", e.k_list);
    s.get("runs", e.runs);
    s.get_enum("reranker", e.reranker, parse_reranker_kind);
    s.get("workers", e.workers);
    s.get("judge", e.judge);
    s.get("sample", e.sample);
    s.finish();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

EvidenceSummary verbatim_evidence(const Passage& p) {
    return EvidenceSummary{p.id, p.text, split_sentences(p.text).size(), false, false};
}

void set_count_flag(StringMap& flags, const char* name, std::size_t n) {
    if (n > 0) flags[name] = std::to_string(n);
}

}  // namespace

std::string_view to_string(RerankerKind k) {
    switch (k) {
        case RerankerKind::deepera: return "deepera";
        case RerankerKind::cosine: return "cosine";
        case RerankerKind::none: return "none";
    }
    return "deepera";
}

std::optional<RerankerKind> parse_reranker_kind(std::string_view s) {
    if (s == "deepera") return RerankerKind::deepera;
    if (s == "cosine") return RerankerKind::cosine;
    if (s == "none") return RerankerKind::none;
    return std::nullopt;
}

void EvalConfig::validate() const {
    if (runs < 1) throw ConfigError("eval.runs must be >= 1");
    if (k_list.empty()) throw ConfigError("eval.k_list must not be empty");
    for (auto k : k_list) {
        if (k < 1) throw ConfigError("eval.k_list values must be >= 1");
    }
    if (workers < 1) throw ConfigError("eval.workers must be >= 1");
}

void WorkbenchConfig::validate() const {
    provider.validate();
    embedder.validate();
    pipeline.validate();
    forge.validate();
    eval.validate();
}

json config_to_json(const WorkbenchConfig& cfg) {
    const auto& p = cfg.provider;
    const auto& e = cfg.embedder;
    const auto& pl = cfg.pipeline;
    const auto& f = cfg.forge;
    const auto& ev = cfg.eval;
    return {
        {"provider",
         {{"kind", to_string(p.kind)},
          {"endpoint_url", p.endpoint_url},
          {"model", p.model},
          {"api_key_env_var", p.api_key_env_var},
          {"max_retries", p.max_retries},
          {"base_backoff_ms", p.base_backoff_ms},
          {"concurrency_limit", p.concurrency_limit},
          {"timeout_ms", p.timeout_ms},
          {"cache_dir", p.cache_dir.string()},
          {"fixtures_path", p.fixtures_path},
          {"stage_temperature", p.stage_temperature}}},
        {"embedder",
         {{"kind", to_string(e.kind)},
          {"dim", e.dim},
          {"ngram", e.ngram},
          {"endpoint_url", e.endpoint_url},
          {"model", e.model},
          {"api_key_env_var", e.api_key_env_var},
          {"timeout_ms", e.timeout_ms}}},
        {"pipeline",
         {{"tau", pl.tau},
          {"top_n", pl.top_n},
          {"k_out", pl.k_out},
          {"ablate_intent", pl.ablate_intent},
          {"ablate_filter", pl.ablate_filter},
          {"ablate_summarize", pl.ablate_summarize}}},
        {"forge",
         {{"max_chunk_chars", f.max_chunk_chars},
          {"pool_size", f.pool_size},
          {"distractor_count", f.distractor_count},
          {"cluster_threshold", f.cluster_threshold},
          {"min_cluster", f.min_cluster},
          {"guidance_top", f.guidance_top},
          {"workers", f.workers}}},
        {"eval",
         {{"k_list", ev.k_list},
          {"runs", ev.runs},
          {"reranker", to_string(ev.reranker)},
          {"workers", ev.workers},
          {"judge", ev.judge},
          {"sample", ev.sample}}},
        {"seed", cfg.seed},
    };
}

WorkbenchConfig config_from_json(const json& j) {
    WorkbenchConfig cfg;
    Section root(j, "");
    if (const json* c = root.child("provider")) read_provider(*c, cfg.provider);
    if (const json* c = root.child("embedder")) read_embedder(*c, cfg.embedder);
    if (const json* c = root.child("pipeline")) read_pipeline(*c, cfg.pipeline);
    if (const json* c = root.child("forge")) read_forge(*c, cfg.forge);
    if (const json* c = root.child("eval")) read_eval(*c, cfg.eval);
    root.get("seed", cfg.seed);
    root.finish();
    cfg.validate();
    return cfg;
}

WorkbenchConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    return config_from_json(j);
}

void apply_override(json& doc, std::string_view dotted_path, std::string_view value) {
    if (dotted_path.empty()) throw ConfigError("empty config override path");
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = dotted_path.find('.', start);
        const std::string key(dotted_path.substr(start, dot == std::string_view::npos ? dotted_path.npos : dot - start));
        if (key.empty()) throw ConfigError("malformed config override path: " + std::string(dotted_path));
        if (!node->is_object()) *node = json::object();
        if (dot == std::string_view::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? json(std::string(value)) : std::move(parsed);
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

std::string config_hash(const WorkbenchConfig& cfg) { return sha256_hex(config_to_json(cfg).dump()); }

json RunManifest::to_json() const {
    return {{"config_hash", config_hash},
            {"dataset_path", dataset_path},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"seed", seed}};
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string format_evidence(std::span<const EvidenceSummary> evidence) {
    std::string out;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        if (i > 0) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] " + evidence[i].summary;
    }
    return out;
}

std::string generate_answer(std::string_view question, std::span<const EvidenceSummary> evidence,
                            Gateway& gateway) {
    if (evidence.empty()) throw std::invalid_argument("generate_answer: no evidence");
    ChatRequest req;
    req.tag = "generate";
    req.messages = prompt("generate").render({{"query", std::string(question)}, {"evidence", format_evidence(evidence)}});
    return gateway.complete_chat(req).content;
}

RerankOutcome apply_reranker(const QAInstance& inst, const WorkbenchConfig& cfg, Gateway& gateway,
                             const Embedder& embedder) {
    if (inst.contexts.empty()) throw std::invalid_argument("instance " + inst.id + " has no contexts");
    const std::span<const Passage> pool =
        std::span<const Passage>(inst.contexts).first(std::min(cfg.pipeline.top_n, inst.contexts.size()));
    const std::size_t k_out = cfg.pipeline.k_out;

    RerankOutcome out;
    switch (cfg.eval.reranker) {
        case RerankerKind::none:
            out.ranking.assign(pool.begin(), pool.end());
            break;
        case RerankerKind::cosine:
            for (auto& s : baseline_cosine_rerank(inst.question, pool, embedder)) {
                out.ranking.push_back(std::move(s.passage));
            }
            break;
        case RerankerKind::deepera: {
            RerankResult r = rerank(inst.question, pool, cfg.pipeline, gateway);
            for (auto& s : r.ranked) out.ranking.push_back(std::move(s.passage));
            out.evidence = std::move(r.evidence);
            if (r.intent && r.intent->fallback) out.flags["intent_fallback"] = "true";
            if (r.filter_fallback) out.flags["filter_fallback"] = "true";
            set_count_flag(out.flags, "score_parse_errors", r.score_parse_errors());
            set_count_flag(out.flags, "score_clamps", r.score_clamps());
            set_count_flag(out.flags, "score_provider_errors",
                           static_cast<std::size_t>(std::count_if(r.score_details.begin(), r.score_details.end(),
                                                                  [](const auto& d) { return d.provider_error; })));
            set_count_flag(out.flags, "summaries_truncated", r.summaries_truncated());
            set_count_flag(out.flags, "summary_fallbacks", r.summary_fallbacks());
            return out;
        }
    }
    for (std::size_t i = 0; i < std::min(k_out, out.ranking.size()); ++i) {
        out.evidence.push_back(verbatim_evidence(out.ranking[i]));
    }
    return out;
}

InstanceMetrics evaluate_instance(const QAInstance& inst, const WorkbenchConfig& cfg, Gateway& gateway,
                                  const Embedder& embedder) {
    InstanceMetrics m;
    m.instance_id = inst.id;
    for (const char* name : {"f1", "precision", "recall", "lfs", "rp", "nrs", "cdr", "cdr_pairs"}) {
        m.values[name] = std::nullopt;
    }

    RerankOutcome outcome = apply_reranker(inst, cfg, gateway, embedder);
    m.flags = std::move(outcome.flags);
    if (inst.golden_absent()) m.flags[std::string(kGoldenAbsentKey)] = "true";

    const RankingRecord record = make_ranking_record(inst, outcome.ranking);
    for (std::size_t k : cfg.eval.k_list) {
        m.values["hit@" + std::to_string(k)] = (record.golden_rank && *record.golden_rank <= k) ? 100.0 : 0.0;
    }
    m.values["rp"] = relative_position_of(record);
    m.values["nrs"] = noise_robustness_of(record, cfg.pipeline.k_out);
    const PairTally tally = discrimination_tally(record);
    if (tally.pairs > 0) {
        m.values["cdr"] = static_cast<double>(tally.successes) / static_cast<double>(tally.pairs);
        m.values["cdr_pairs"] = static_cast<double>(tally.pairs);
    }

    std::string answer;
    try {
        answer = generate_answer(inst.question, outcome.evidence, gateway);
    } catch (const ExhaustedRetries& e) {
        m.flags["generation_failed"] = e.what();
        return m;
    } catch (const ProviderRejected& e) {
        m.flags["generation_failed"] = e.what();
        return m;
    }
    const PRF prf = token_prf(answer, inst.golden_answer);
    m.values["f1"] = prf.f1;
    m.values["precision"] = prf.precision;
    m.values["recall"] = prf.recall;

    if (cfg.eval.judge) {
        try {
            m.values["lfs"] = static_cast<double>(lfs_judge(inst.question, inst.golden_answer, answer, gateway).value);
        } catch (const JudgeParseError&) {
            m.flags["judge_failed"] = "true";
        } catch (const ExhaustedRetries&) {
            m.flags["judge_failed"] = "true";
        } catch (const ProviderRejected&) {
            m.flags["judge_failed"] = "true";
        }
    }
    return m;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t sample, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (sample == 0 || sample >= n) return idx;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < sample; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(sample);
    std::sort(idx.begin(), idx.end());
    return idx;
}

json eval_provenance(const WorkbenchConfig& cfg, const Embedder& embedder, std::string_view dataset_digest,
                     std::size_t instance_count) {
    return {
        {"config", config_to_json(cfg)},
        {"config_hash", config_hash(cfg)},
        {"dataset", {{"sha256", std::string(dataset_digest)}, {"instances", instance_count}}},
        {"prompts", prompt_hashes()},
        {"providers",
         {{"llm", std::string(to_string(cfg.provider.kind)) + ":" + cfg.provider.model},
          {"embedder", embedder.id()}}},
        {"metric_definitions",
         {{"rp.local_def", 1},
          {"rp", "100*(n-r)/(n-1) over the ranked list; 100 when n=1; 0 when the golden passage is absent"},
          {"nrs.local_def", 1},
          {"nrs", "non-distractor fraction of the first min(k_out, n) ranked passages"},
          {"cdr.local_def", 1},
          {"cdr", "pooled over original/distractor pairs; original absent fails, distractor absent succeeds"},
          {"lfs.local_def", 1},
          {"lfs", "single holistic judge score 0-5; unparseable judgments excluded and counted"},
          {"ranking_list", "deepera: filtered output; cosine and none: full pool"}}},
        {"decisions",
         {{"ssli_placement", "tail_replacement"},
          {"summarize", "retained k_out passages only"},
          {"default_temperature", 0.0}}},
    };
}

MetricsReport run_eval(const WorkbenchConfig& cfg, std::span<const QAInstance> dataset, Gateway& gateway,
                       const Embedder& embedder, std::string_view dataset_digest) {
    cfg.validate();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const ValidationReport v = validate_instance(dataset[i]);
        if (!v.ok()) throw SchemaViolation(i + 1, v.violations.front().code, v.violations.front().message);
    }
    const auto selected = sample_indices(dataset.size(), cfg.eval.sample, cfg.seed);

    std::vector<RunMetrics> runs;
    for (std::size_t r = 0; r < cfg.eval.runs; ++r) {
        RunMetrics run(selected.size());
        parallel_for(selected.size(), cfg.eval.workers, [&](std::size_t i) {
            run[i] = evaluate_instance(dataset[selected[i]], cfg, gateway, embedder);
        });
        runs.push_back(std::move(run));
    }
    return aggregate_report(runs, eval_provenance(cfg, embedder, dataset_digest, selected.size()));
}

MetricsReport run_eval(const WorkbenchConfig& cfg, const std::filesystem::path& dataset_path,
                       const std::filesystem::path& out_dir) {
    cfg.validate();
    RunManifest manifest;
    manifest.started_at = utc_timestamp();
    manifest.config_hash = config_hash(cfg);
    manifest.dataset_path = dataset_path.string();
    manifest.seed = cfg.seed;

    const std::string text = read_file(dataset_path);
    const auto dataset = parse_dataset(std::string_view(text));
    Gateway gateway(cfg.provider);
    Embedder embedder(cfg.embedder);
    MetricsReport report = run_eval(cfg, dataset, gateway, embedder, sha256_hex(text));

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string());
    emit_report(report, ReportFormat::json, out_dir / "report.json");
    emit_report(report, ReportFormat::csv, out_dir / "report.csv");
    manifest.finished_at = utc_timestamp();
    write_file_atomic(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
    return report;
}

}  // namespace deepera
