// deepera: dataset forging, reranking and evaluation from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "deepera/corpus.hpp"
#include "deepera/forge.hpp"
#include "deepera/gateway.hpp"
#include "deepera/report.hpp"
#include "deepera/reranker.hpp"
#include "deepera/synthetic.hpp"
#include "deepera/vector_index.hpp"
#include "deepera/workbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kProvider = 2, kDataset = 3 };

// Flags shared by every subcommand; each maps onto a config path.
struct CommonFlags {
    std::string config_path;
    std::optional<std::string> provider;
    std::optional<std::string> fixtures;
    std::optional<std::string> cache_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> runs;
    std::optional<std::string> reranker;
    std::optional<double> tau;
    std::optional<std::size_t> top;
    std::optional<std::string> k_list;
    std::optional<std::string> ablate;
    std::optional<std::size_t> workers;
    std::vector<std::string> sets;  // path=value
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file");
    cmd->add_option("--provider", f.provider, "LLM provider: http or mock");
    cmd->add_option("--fixtures", f.fixtures, "FixtureBook JSON for the mock provider");
    cmd->add_option("--cache-dir", f.cache_dir, "Response cache directory");
    cmd->add_option("--seed", f.seed, "Seed for every stochastic choice");
    cmd->add_option("--runs", f.runs, "Repeated evaluation runs");
    cmd->add_option("--reranker", f.reranker, "deepera, cosine or none");
    cmd->add_option("--tau", f.tau, "Relevance threshold");
    cmd->add_option("--top", f.top, "Retrieval pool cap (top_n)");
    cmd->add_option("--k", f.k_list, "HitRate cutoffs, comma separated (e.g. 1,3,5)");
    cmd->add_option("--ablate", f.ablate, "Ablations: v1 (intent), v2 (filter), v3 (summarize), comma separated");
    cmd->add_option("--workers", f.workers, "Concurrent instances or documents");
    cmd->add_option("--set", f.sets, "Config override path=value (repeatable)");
    cmd->allow_extras();
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

deepera::WorkbenchConfig resolve_config(const CommonFlags& f, const std::vector<std::string>& extras,
                                        const std::vector<std::pair<std::string, std::string>>& local) {
    json doc = json::object();
    if (!f.config_path.empty()) doc = deepera::config_to_json(deepera::load_config(f.config_path));

    auto set = [&](std::string_view path, const std::string& value) { deepera::apply_override(doc, path, value); };
    auto set_string = [&](std::string_view path, const std::string& value) {
        deepera::apply_override(doc, path, json(value).dump());
    };
    if (f.provider) set_string("provider.kind", *f.provider);
    if (f.fixtures) set_string("provider.fixtures_path", *f.fixtures);
    if (f.cache_dir) set_string("provider.cache_dir", *f.cache_dir);
    if (f.seed) set("seed", std::to_string(*f.seed));
    if (f.runs) set("eval.runs", std::to_string(*f.runs));
    if (f.reranker) set_string("eval.reranker", *f.reranker);
    if (f.tau) set("pipeline.tau", json(*f.tau).dump());
    if (f.top) set("pipeline.top_n", std::to_string(*f.top));
    if (f.k_list) {
        json ks = json::array();
        for (const auto& k : split_csv(*f.k_list)) {
            try {
                ks.push_back(std::stoul(k));
            } catch (const std::exception&) {
                throw deepera::ConfigError("--k expects integers, got '" + k + "'");
            }
        }
        doc["eval"]["k_list"] = ks;
    }
    if (f.ablate) {
        for (const auto& a : split_csv(*f.ablate)) {
            if (a == "v1") set("pipeline.ablate_intent", "true");
            else if (a == "v2") set("pipeline.ablate_filter", "true");
            else if (a == "v3") set("pipeline.ablate_summarize", "true");
            else throw deepera::ConfigError("--ablate accepts v1, v2, v3; got '" + a + "'");
        }
    }
    if (f.workers) {
        set("eval.workers", std::to_string(*f.workers));
        set("forge.workers", std::to_string(*f.workers));
    }
    for (const auto& [path, value] : local) set(path, value);
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw deepera::ConfigError("--set expects path=value, got '" + s + "'");
        set(s.substr(0, eq), s.substr(eq + 1));
    }
    // Remaining "--section.key value" pairs.
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& arg = extras[i];
        if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos) {
            throw deepera::ConfigError("unrecognized argument '" + arg + "'");
        }
        std::string path = arg.substr(2);
        std::string value;
        if (const auto eq = path.find('='); eq != std::string::npos) {
            value = path.substr(eq + 1);
            path.resize(eq);
        } else if (i + 1 < extras.size()) {
            value = extras[++i];
        } else {
            throw deepera::ConfigError("missing value for '" + arg + "'");
        }
        set(path, value);
    }
    return deepera::config_from_json(doc);
}

void write_text(const fs::path& path, const std::string& content) { deepera::write_file_atomic(path, content); }

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw deepera::IoError("cannot create directory " + dir.string());
}

void print_aggregate(const deepera::MetricsReport& report) {
    for (const auto& [name, s] : report.aggregate) {
        std::cout << name << " = " << s.mean << " +- " << s.std << " (runs=" << s.n_runs << ")\n";
    }
    if (report.judge_failures > 0) std::cout << "judge_failures = " << report.judge_failures << "\n";
}

int cmd_forge(const deepera::WorkbenchConfig& cfg, const std::string& corpus_path, const fs::path& out) {
    const auto docs = deepera::load_corpus(corpus_path);
    deepera::Gateway gateway(cfg.provider);
    deepera::Embedder embedder(cfg.embedder);
    deepera::ForgeLog log;
    const auto result = deepera::run_forge(docs, cfg.forge, embedder, gateway, log);

    ensure_dir(out);
    write_text(out / "base.jsonl", deepera::serialize_dataset(result.base));
    write_text(out / "ssli.jsonl", deepera::serialize_dataset(result.ssli));
    log.write_jsonl((out / "forge_log.jsonl").string());
    std::string clusters;
    for (const auto& c : result.clusters) {
        clusters += json{{"doc_id", c.doc_id}, {"cluster_id", c.cluster_id}, {"kept", c.kept}}.dump() + "\n";
    }
    write_text(out / "clusters.jsonl", clusters);
    std::cout << "documents: " << docs.size() << "\nbase instances: " << result.base.size()
              << "\nssli instances: " << result.ssli.size() << "\nlog events: " << log.events().size() << "\n";
    return kOk;
}

int cmd_index(const deepera::WorkbenchConfig& cfg, const std::string& corpus_path, const fs::path& out) {
    const auto docs = deepera::load_corpus(corpus_path);
    deepera::Embedder embedder(cfg.embedder);
    const auto corpus = deepera::build_chunk_corpus(docs, embedder, cfg.forge.max_chunk_chars);
    if (out.has_parent_path()) ensure_dir(out.parent_path());
    deepera::save_index(corpus.index, out);
    std::cout << "chunks: " << corpus.index.size() << "\ndim: " << corpus.index.dim() << "\nembedder: " << embedder.id()
              << "\n";
    return kOk;
}

int cmd_rerank(const deepera::WorkbenchConfig& cfg, const std::string& dataset_path, const std::string& instance_id,
               const std::string& query, const std::string& corpus_path) {
    deepera::Gateway gateway(cfg.provider);
    deepera::Embedder embedder(cfg.embedder);

    std::string question;
    std::vector<deepera::Passage> pool;
    if (!dataset_path.empty()) {
        const auto dataset = deepera::load_dataset(dataset_path);
        auto it = std::find_if(dataset.begin(), dataset.end(), [&](const auto& inst) {
            return instance_id.empty() || inst.id == instance_id;
        });
        if (it == dataset.end()) throw deepera::ConfigError("no instance '" + instance_id + "' in " + dataset_path);
        question = query.empty() ? it->question : query;
        pool = it->contexts;
    } else {
        if (query.empty() || corpus_path.empty()) {
            throw deepera::ConfigError("rerank needs --dataset, or --query with --corpus");
        }
        const auto docs = deepera::load_corpus(corpus_path);
        const auto corpus = deepera::build_chunk_corpus(docs, embedder, cfg.forge.max_chunk_chars);
        question = query;
        for (const auto& hit : deepera::top_k(embedder.embed(query), corpus.index, cfg.pipeline.top_n).ranked) {
            pool.push_back(corpus.passage(hit.passage_id));
        }
    }

    json out;
    out["question"] = question;
    if (cfg.eval.reranker == deepera::RerankerKind::deepera) {
        const auto r = deepera::rerank(question, pool, cfg.pipeline, gateway);
        if (r.intent) {
            out["intent"] = {{"topic", r.intent->intent.topic},
                             {"entity_type", r.intent->intent.entity_type},
                             {"intent", deepera::to_string(r.intent->intent.intent)},
                             {"expected_answer_type", r.intent->intent.expected_answer_type},
                             {"fallback", r.intent->fallback}};
        }
        for (std::size_t i = 0; i < r.scored.size(); ++i) {
            out["scores"].push_back({{"passage_id", r.scored[i].passage.id}, {"score", r.scored[i].score},
                                     {"parse_error", r.score_details[i].parse_error},
                                     {"clamped", r.score_details[i].clamped}});
        }
        out["filter_fallback"] = r.filter_fallback;
        for (std::size_t i = 0; i < r.ranked.size(); ++i) {
            out["evidence"].push_back({{"rank", r.ranked[i].rank},
                                       {"passage_id", r.ranked[i].passage.id},
                                       {"score", r.ranked[i].score},
                                       {"summary", r.evidence[i].summary},
                                       {"truncated", r.evidence[i].truncated},
                                       {"fallback", r.evidence[i].fallback}});
        }
    } else {
        deepera::QAInstance probe{"query", question, "", deepera::Setting::base, pool, {}};
        const auto outcome = deepera::apply_reranker(probe, cfg, gateway, embedder);
        for (std::size_t i = 0; i < outcome.ranking.size(); ++i) {
            out["ranking"].push_back({{"rank", i + 1}, {"passage_id", outcome.ranking[i].id}});
        }
    }
    std::cout << out.dump(2) << "\n";
    return kOk;
}

int cmd_eval(const deepera::WorkbenchConfig& cfg, const std::string& dataset_path, const fs::path& out) {
    const auto report = deepera::run_eval(cfg, dataset_path, out);
    print_aggregate(report);
    std::cout << "report: " << (out / "report.json").string() << "\n";
    return kOk;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& out) {
    const auto fmt = deepera::parse_report_format(format);
    if (!fmt) throw deepera::ConfigError("--format must be json or csv");
    const auto report = deepera::read_report(in);
    if (out.empty()) {
        std::cout << (*fmt == deepera::ReportFormat::json ? deepera::render_report_json(report)
                                                         : deepera::render_report_csv(report));
    } else {
        deepera::emit_report(report, *fmt, out);
    }
    return kOk;
}

int cmd_synth(const deepera::WorkbenchConfig& cfg, const fs::path& out, std::size_t docs, std::size_t instances) {
    ensure_dir(out);
    const auto corpus = deepera::make_synthetic_corpus(docs, cfg.seed, cfg.forge.max_chunk_chars,
                                                       cfg.forge.distractor_count);
    write_text(out / "corpus.jsonl", deepera::serialize_corpus(corpus.docs));
    corpus.fixtures.save((out / "forge_fixtures.json").string());

    const auto scenario = deepera::make_separation_scenario(instances, cfg.seed, cfg.forge.pool_size,
                                                            cfg.forge.distractor_count);
    write_text(out / "scenario_ssli.jsonl", deepera::serialize_dataset(scenario.ssli));
    write_text(out / "scenario_base.jsonl", deepera::serialize_dataset(scenario.base));
    std::vector<deepera::QAInstance> all = scenario.ssli;
    all.insert(all.end(), scenario.base.begin(), scenario.base.end());
    deepera::oracle_fixtures(all, deepera::ScoreProfile::faithful()).save((out / "oracle_fixtures.json").string());
    deepera::oracle_fixtures(all, deepera::ScoreProfile::adversarial())
        .save((out / "adversarial_fixtures.json").string());

    deepera::WorkbenchConfig demo = cfg;
    demo.provider.kind = deepera::ProviderKind::mock;
    demo.provider.fixtures_path = (out / "oracle_fixtures.json").string();
    write_text(out / "config.json", deepera::config_to_json(demo).dump(2) + "\n");
    std::cout << "corpus: " << corpus.docs.size() << " documents\nscenario: " << scenario.ssli.size()
              << " instances\nwritten to " << out.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deepera: evidence reranking and distractor-robust evaluation workbench"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string corpus_path, dataset_path, out_path, eval_out = "deepera-eval", instance_id, query, report_in, report_format = "json";
    std::optional<std::size_t> pool, distractors, min_cluster;
    std::optional<double> cluster_threshold;
    std::size_t synth_docs = 200, synth_instances = 50;

    auto* forge = app.add_subcommand("forge", "Build base and SSLI datasets from a corpus");
    add_common(forge, flags);
    forge->add_option("--corpus", corpus_path, "Corpus JSONL {id,title,abstract,metadata}")->required();
    forge->add_option("--out", out_path, "Output directory")->required();
    forge->add_option("--pool", pool, "Contexts per instance");
    forge->add_option("--distractors", distractors, "Distractors per SSLI instance");
    forge->add_option("--cluster-threshold", cluster_threshold, "Leader clustering cosine threshold");
    forge->add_option("--min-cluster", min_cluster, "Minimum cluster size");

    auto* index = app.add_subcommand("index", "Chunk and embed a corpus into an index file");
    add_common(index, flags);
    index->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
    index->add_option("--out", out_path, "Index file")->required();

    auto* rerank = app.add_subcommand("rerank", "Rerank one query and print the trace");
    add_common(rerank, flags);
    rerank->add_option("--dataset", dataset_path, "Dataset JSONL");
    rerank->add_option("--instance", instance_id, "Instance id (default: first)");
    rerank->add_option("--query", query, "Question text");
    rerank->add_option("--corpus", corpus_path, "Corpus JSONL, with --query");

    auto* eval = app.add_subcommand("eval", "Evaluate a reranker over a dataset");
    add_common(eval, flags);
    eval->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    eval->add_option("--out", eval_out, "Output directory")->capture_default_str();

    auto* report = app.add_subcommand("report", "Re-emit a report as JSON or CSV");
    report->add_option("--in", report_in, "report.json")->required();
    report->add_option("--format", report_format, "json or csv")->default_val("json");
    report->add_option("--out", out_path, "Output file (default: stdout)");

    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus, scenario dataset and mock fixtures");
    add_common(synth, flags);
    synth->add_option("--out", out_path, "Output directory")->required();
    synth->add_option("--docs", synth_docs, "Synthetic abstracts")->default_val(200);
    synth->add_option("--instances", synth_instances, "Scenario instances")->default_val(50);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        if (cmd == report) return cmd_report(report_in, report_format, out_path);

        std::vector<std::pair<std::string, std::string>> local;
        if (pool) local.emplace_back("forge.pool_size", std::to_string(*pool));
        if (distractors) local.emplace_back("forge.distractor_count", std::to_string(*distractors));
        if (cluster_threshold) local.emplace_back("forge.cluster_threshold", json(*cluster_threshold).dump());
        if (min_cluster) local.emplace_back("forge.min_cluster", std::to_string(*min_cluster));
        const auto cfg = resolve_config(flags, cmd->remaining(), local);

        if (cmd == forge) return cmd_forge(cfg, corpus_path, out_path);
        if (cmd == index) return cmd_index(cfg, corpus_path, out_path);
        if (cmd == rerank) return cmd_rerank(cfg, dataset_path, instance_id, query, corpus_path);
        if (cmd == eval) return cmd_eval(cfg, dataset_path, eval_out);
        if (cmd == synth) return cmd_synth(cfg, out_path, synth_docs, synth_instances);
        return kUsage;
    } catch (const deepera::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const deepera::GatewayError& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return kProvider;
    } catch (const deepera::NoFixture& e) {
        std::cerr << "provider error: " << e.what() << "\n";
        return kProvider;
    } catch (const deepera::DatasetError& e) {
        std::cerr << "dataset error (line " << e.line_no() << "): " << e.what() << "\n";
        return kDataset;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
}
