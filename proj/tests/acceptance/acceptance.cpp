// Acceptance suite. Usage: acceptance <work-dir>
// Prints one PASS/FAIL line per criterion; exit status is nonzero on any failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "deepera/corpus.hpp"
#include "deepera/embed.hpp"
#include "deepera/metrics.hpp"
#include "deepera/report.hpp"
#include "deepera/reranker.hpp"
#include "deepera/synthetic.hpp"
#include "deepera/workbench.hpp"
#include "oracles.hpp"
#include "stub_server.hpp"

using namespace deepera;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failed checks for one criterion.
struct Checker {
    std::vector<std::string> failures;

    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 10) failures.push_back(what);
    }
};

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + DEEPERA_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

double mean_metric(const MetricsReport& r, const std::string& name) { return r.aggregate.at(name).mean; }

WorkbenchConfig eval_config(RerankerKind kind) {
    WorkbenchConfig cfg;
    cfg.eval.reranker = kind;
    cfg.eval.runs = 1;
    cfg.seed = 7;
    return cfg;
}

// 1: ranking metrics equal an enumeration oracle on random permutations.
void metric_oracle(Checker& c, double& elapsed_ms) {
    const auto start = Clock::now();
    std::mt19937_64 rng(20240601);
    std::size_t cases_seen = 0;
    std::size_t cdr_batches = 0;
    for (int batch = 0; batch < 250; ++batch) {
        std::vector<oracle::Case> cases;
        std::vector<RankingRecord> records;
        const int n = std::uniform_int_distribution<int>(1, 12)(rng);
        for (int i = 0; i < n; ++i) {
            cases.push_back(oracle::random_case(rng, cases_seen++));
            records.push_back(make_ranking_record(cases.back().inst, cases.back().ranked));
        }
        const std::string tag = "batch " + std::to_string(batch);
        for (std::size_t k = 1; k <= 10; ++k) {
            c.expect(hit_rate_at_k(records, k) == oracle::hit_at(cases, k), tag + " hit@" + std::to_string(k));
            c.expect(noise_robustness(records, k) ==
                         oracle::mean_of(cases, [&](const oracle::Case& x) { return oracle::nrs_of(x, k); }),
                     tag + " nrs@" + std::to_string(k));
        }
        c.expect(relative_position(records) == oracle::mean_of(cases, oracle::rp_of), tag + " rp");

        oracle::Tally pooled;
        for (const auto& x : cases) {
            const auto t = oracle::cdr_tally(x);
            pooled.successes += t.successes;
            pooled.pairs += t.pairs;
        }
        if (pooled.pairs == 0) {
            bool threw = false;
            try {
                context_discrimination(records);
            } catch (const NoPairs&) {
                threw = true;
            }
            c.expect(threw, tag + " cdr without pairs");
        } else {
            ++cdr_batches;
            c.expect(context_discrimination(records) ==
                         static_cast<double>(pooled.successes) / static_cast<double>(pooled.pairs),
                     tag + " cdr");
        }
    }
    elapsed_ms = ms_since(start);
    c.expect(cases_seen >= 1000, "only " + std::to_string(cases_seen) + " cases");
    c.expect(cdr_batches >= 50, "too few batches with pairs");
    c.expect(elapsed_ms < 5000.0, "runtime over 5 s");
}

// 2: token F1 against hand-computed values.
void token_f1(Checker& c, double& elapsed_ms) {
    struct Case {
        const char* pred;
        const char* gold;
        double p, r, f1;
    };
    const std::string yale = "The collection represents over 720 mammal species.";
    const std::vector<Case> cases = {
        {"about 720 species", "over 720 mammal species", 2.0 / 3, 1.0 / 2, 4.0 / 7},
        {yale.c_str(), yale.c_str(), 1, 1, 1},
        {"red wolf", "snow leopard", 0, 0, 0},
        {"", "", 1, 1, 1},
        {"", "x", 0, 0, 0},
        {"x", "", 0, 0, 0},
        {"The cat", "a cat", 1, 1, 1},
        {"T cells and B cells", "B cells and T cells", 1, 1, 1},
        {"cells cells cells", "cells", 1.0 / 3, 1, 1.0 / 2},
        {"cells", "cells cells cells", 1, 1.0 / 3, 1.0 / 2},
        {"5,086 mammal skins", "5086 skins", 2.0 / 3, 1, 4.0 / 5},
        {"Over 720!", "over 720", 1, 1, 1},
        {"the a an", "", 1, 1, 1},
        {"the", "species", 0, 0, 0},
        {"α-helix structure", "α-helix", 1.0 / 2, 1, 2.0 / 3},
        {"one two three four", "two four six eight ten", 1.0 / 2, 2.0 / 5, 4.0 / 9},
        {"mountain gorilla and red wolf", "red wolf", 2.0 / 5, 1, 4.0 / 7},
        {"21 orders 266 genera 381 species", "381 species", 1.0 / 3, 1, 1.0 / 2},
        {"B cells B cells", "B cells", 1.0 / 2, 1, 2.0 / 3},
        {"Approximately 82% of the collection", "82 percent of collection", 3.0 / 4, 3.0 / 4, 3.0 / 4},
        {"  spaced   out  ", "spaced out", 1, 1, 1},
    };
    const auto start = Clock::now();
    for (const auto& k : cases) {
        const auto got = token_prf(k.pred, k.gold);
        const std::string tag = std::string("\"") + k.pred + "\" vs \"" + k.gold + "\"";
        c.expect(std::abs(got.precision - k.p) <= 1e-9, tag + " precision");
        c.expect(std::abs(got.recall - k.r) <= 1e-9, tag + " recall");
        c.expect(std::abs(got.f1 - k.f1) <= 1e-9, tag + " f1");
    }
    elapsed_ms = ms_since(start);
    c.expect(cases.size() >= 20, "fewer than 20 cases");
}

// 3: threshold filter invariants on random score vectors.
void filter_fidelity(Checker& c, double& elapsed_ms) {
    std::mt19937_64 rng(31337);
    PipelineConfig cfg;
    const auto start = Clock::now();
    std::size_t fallbacks = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 30)(rng);
        std::vector<ScoredPassage> scored;
        for (std::size_t i = 0; i < n; ++i) {
            // Coarse grid so ties and exact-threshold scores occur.
            const double s = trial % 3 == 0 ? std::uniform_int_distribution<int>(0, 10)(rng) / 10.0
                                            : std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            scored.push_back({Passage{"p" + std::to_string(i), "t", PassageLabel::natural, std::nullopt, std::nullopt},
                              s, i + 1});
        }
        const auto out = rank_and_filter(scored, cfg);
        const std::string tag = "trial " + std::to_string(trial);
        c.expect(!out.kept.empty() && out.kept.size() <= cfg.k_out, tag + " size");
        if (out.fallback) ++fallbacks;
        for (std::size_t i = 0; i < out.kept.size(); ++i) {
            if (!out.fallback) c.expect(out.kept[i].score >= cfg.tau, tag + " score below tau");
            if (i > 0) c.expect(out.kept[i - 1].score >= out.kept[i].score, tag + " not non-increasing");
        }
        const double best = std::max_element(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                                return a.score < b.score;
                            })->score;
        c.expect(out.fallback == (best < cfg.tau), tag + " fallback flag");
    }
    elapsed_ms = ms_since(start);
    c.expect(fallbacks > 0, "fallback never exercised");
    c.expect(elapsed_ms < 1000.0, "runtime over 1 s");
}

// 4: distractors embed closer to the query than the golden passage, yet the
// label-faithful pipeline separates them.
void distractor_separation(Checker& c, double& elapsed_ms) {
    const auto start = Clock::now();
    const auto scenario = make_separation_scenario(50, 4);
    const Embedder embedder;
    for (const auto& inst : scenario.ssli) {
        const auto q = embedder.embed(inst.question);
        const auto g = embedder.embed(inst.contexts[*inst.golden_index()].text);
        const double golden_sim = cosine_similarity(q, g);
        for (const auto& p : inst.contexts) {
            if (p.label != PassageLabel::distractor) continue;
            c.expect(cosine_similarity(q, embedder.embed(p.text)) > golden_sim, inst.id + " distractor not closer");
        }
    }
    Gateway gw(ProviderConfig{}, oracle_fixtures(scenario.ssli, ScoreProfile::faithful()));
    const auto cosine = run_eval(eval_config(RerankerKind::cosine), scenario.ssli, gw, embedder);
    const auto deep = run_eval(eval_config(RerankerKind::deepera), scenario.ssli, gw, embedder);
    elapsed_ms = ms_since(start);
    c.expect(mean_metric(cosine, "hit@1") <= 20.0,
             "cosine hit@1 = " + std::to_string(mean_metric(cosine, "hit@1")));
    c.expect(mean_metric(deep, "hit@1") == 100.0, "deepera hit@1 = " + std::to_string(mean_metric(deep, "hit@1")));
    c.expect(mean_metric(deep, "cdr") == 1.0, "deepera cdr = " + std::to_string(mean_metric(deep, "cdr")));
    c.expect(elapsed_ms < 30000.0, "runtime over 30 s");
}

// 5: filter ablation lowers NRS; summarization ablation changes evidence only.
void ablation_ordering(Checker& c, double& elapsed_ms) {
    const auto start = Clock::now();
    const auto scenario = make_separation_scenario(50, 4);
    Gateway gw(ProviderConfig{}, oracle_fixtures(scenario.ssli, ScoreProfile::adversarial()));
    const Embedder embedder;

    const auto full_cfg = eval_config(RerankerKind::deepera);
    auto v2_cfg = full_cfg;
    v2_cfg.pipeline.ablate_filter = true;
    auto v3_cfg = full_cfg;
    v3_cfg.pipeline.ablate_summarize = true;

    const auto full = run_eval(full_cfg, scenario.ssli, gw, embedder);
    const auto v2 = run_eval(v2_cfg, scenario.ssli, gw, embedder);
    const auto v3 = run_eval(v3_cfg, scenario.ssli, gw, embedder);

    c.expect(mean_metric(v2, "nrs") < mean_metric(full, "nrs"),
             "v2 nrs " + std::to_string(mean_metric(v2, "nrs")) + " not below " +
                 std::to_string(mean_metric(full, "nrs")));
    for (const auto& [name, summary] : full.aggregate) {
        const bool ranking = name.rfind("hit@", 0) == 0 || name == "rp" || name == "nrs" || name == "cdr";
        if (ranking) c.expect(v3.aggregate.at(name).mean == summary.mean, "v3 changed " + name);
    }

    bool evidence_differs = false;
    for (const auto& inst : scenario.ssli) {
        const auto a = apply_reranker(inst, full_cfg, gw, embedder);
        const auto b = apply_reranker(inst, v3_cfg, gw, embedder);
        c.expect(a.ranking == b.ranking, inst.id + " v3 ranking differs");
        c.expect(a.evidence.size() == b.evidence.size(), inst.id + " v3 evidence count differs");
        for (std::size_t i = 0; i < std::min(a.evidence.size(), b.evidence.size()); ++i) {
            c.expect(a.evidence[i].passage_id == b.evidence[i].passage_id, inst.id + " v3 evidence order differs");
            if (a.evidence[i].summary != b.evidence[i].summary) evidence_differs = true;
        }
    }
    c.expect(evidence_differs, "v3 evidence text identical to full pipeline");
    elapsed_ms = ms_since(start);
}

// 6: forge on a 200-abstract synthetic corpus through the CLI.
void dataset_validity(Checker& c, double& elapsed_ms, const fs::path& work) {
    const auto syn = work / "synth";
    const auto out = work / "forged";
    fs::remove_all(syn);
    fs::remove_all(out);
    const auto start = Clock::now();
    c.expect(run_cli("synth --docs 200 --seed 7 --out \"" + syn.string() + "\"", work / "synth.log") == 0,
             "synth failed");
    c.expect(run_cli("forge --provider mock --seed 7 --fixtures \"" + (syn / "forge_fixtures.json").string() +
                         "\" --corpus \"" + (syn / "corpus.jsonl").string() + "\" --out \"" + out.string() + "\"",
                     work / "forge.log") == 0,
             "forge failed");
    elapsed_ms = ms_since(start);
    if (!c.failures.empty()) return;

    const auto corpus = load_corpus((syn / "corpus.jsonl").string());
    c.expect(corpus.size() == 200, "corpus size " + std::to_string(corpus.size()));
    const auto base = load_dataset((out / "base.jsonl").string());
    const auto ssli = load_dataset((out / "ssli.jsonl").string());
    c.expect(!base.empty() && !ssli.empty(), "empty datasets");
    const std::size_t want = ForgeConfig{}.distractor_count;
    for (const auto& inst : base) c.expect(validate_instance(inst).ok(), inst.id + " base invalid");
    for (const auto& inst : ssli) {
        c.expect(validate_instance(inst).ok(), inst.id + " ssli invalid");
        std::size_t distractors = 0;
        for (const auto& p : inst.contexts) {
            if (p.label != PassageLabel::distractor) continue;
            ++distractors;
            c.expect(!leaks_answer(p.text, inst.golden_answer), inst.id + " distractor " + p.id + " leaks");
        }
        c.expect(distractors == want, inst.id + " has " + std::to_string(distractors) + " distractors");
    }
    c.expect(elapsed_ms < 60000.0, "runtime over 60 s");
}

// 7: two full CLI evaluations produce byte-identical reports with zero std.
void determinism(Checker& c, double& elapsed_ms, const fs::path& work) {
    const auto syn = work / "synth_eval";
    fs::remove_all(syn);
    const auto start = Clock::now();
    c.expect(run_cli("synth --docs 20 --seed 7 --out \"" + syn.string() + "\"", work / "synth_eval.log") == 0,
             "synth failed");
    std::vector<std::string> reports;
    for (const char* name : {"eval_a", "eval_b"}) {
        const auto out = work / name;
        fs::remove_all(out);
        c.expect(run_cli("eval --provider mock --runs 3 --seed 7 --fixtures \"" +
                             (syn / "oracle_fixtures.json").string() + "\" --dataset \"" +
                             (syn / "scenario_ssli.jsonl").string() + "\" --out \"" + out.string() + "\"",
                         work / (std::string(name) + ".log")) == 0,
                 std::string(name) + " failed");
        reports.push_back(slurp(out / "report.json"));
    }
    elapsed_ms = ms_since(start);
    c.expect(!reports[0].empty() && reports[0] == reports[1], "reports differ");
    if (reports[0].empty()) return;
    const auto report = report_from_json(nlohmann::json::parse(reports[0]));
    c.expect(!report.aggregate.empty(), "no aggregate metrics");
    for (const auto& [name, s] : report.aggregate) {
        c.expect(s.n_runs == 3, name + " n_runs");
        c.expect(s.std == 0.0, name + " std " + std::to_string(s.std));
    }
}

ProviderConfig stub_config(const testing::StubServer& server) {
    ::setenv("DEEPERA_ACCEPTANCE_KEY", "sk-acceptance", 1);
    ProviderConfig cfg;
    cfg.kind = ProviderKind::http;
    cfg.endpoint_url = server.url();
    cfg.api_key_env_var = "DEEPERA_ACCEPTANCE_KEY";
    cfg.base_backoff_ms = 20;
    cfg.timeout_ms = 5000;
    return cfg;
}

ChatRequest request(std::string text) {
    ChatRequest r;
    r.messages = {{Role::system, "sys"}, {Role::user, std::move(text)}};
    r.tag = "probe";
    return r;
}

// 8: retries, backoff, bounded concurrency and cache short-circuit.
void gateway_robustness(Checker& c, double& elapsed_ms, const fs::path& work) {
    const auto start = Clock::now();
    {
        std::atomic<int> n{0};
        testing::StubServer server([&](const httplib::Request&, httplib::Response& res) {
            if (n++ < 3) {
                res.status = n == 2 ? 429 : 503;
                return;
            }
            testing::reply(res, "ok");
        });
        auto cfg = stub_config(server);
        Gateway gw(cfg);
        c.expect(gw.complete_chat(request("retry")).content == "ok", "retry reply");
        c.expect(server.hits() == 4, "retry hits " + std::to_string(server.hits()));
        const auto t = server.arrivals();
        for (std::size_t i = 1; i < t.size(); ++i) {
            const double gap = std::chrono::duration<double, std::milli>(t[i] - t[i - 1]).count();
            c.expect(gap >= cfg.base_backoff_ms * static_cast<double>(1 << (i - 1)),
                     "backoff gap " + std::to_string(i) + " = " + std::to_string(gap));
        }
    }
    {
        testing::StubServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
        auto cfg = stub_config(server);
        cfg.max_retries = 2;
        cfg.base_backoff_ms = 1;
        Gateway gw(cfg);
        bool exhausted = false;
        try {
            gw.complete_chat(request("fail"));
        } catch (const ExhaustedRetries& e) {
            exhausted = e.attempts() == 3 && e.last_status() == 500;
        }
        c.expect(exhausted, "ExhaustedRetries after 3 attempts");
        c.expect(server.hits() == 3, "exhausted hits " + std::to_string(server.hits()));
    }
    {
        testing::StubServer server(
            [](const httplib::Request& req, httplib::Response& res) {
                std::this_thread::sleep_for(10ms);
                testing::reply(res, testing::last_user_message(req));
            },
            32);
        auto cfg = stub_config(server);
        cfg.concurrency_limit = 4;
        Gateway gw(cfg);
        std::atomic<int> wrong{0};
        std::vector<std::thread> threads;
        for (int i = 0; i < 100; ++i) {
            threads.emplace_back([&, i] {
                const std::string q = "query " + std::to_string(i);
                if (gw.complete_chat(request(q)).content != q) ++wrong;
            });
        }
        for (auto& t : threads) t.join();
        c.expect(wrong == 0, "mismatched replies");
        c.expect(server.hits() == 100, "concurrency hits");
        c.expect(server.peak_in_flight() <= 4, "peak in flight " + std::to_string(server.peak_in_flight()));
    }
    {
        testing::StubServer server([](const httplib::Request&, httplib::Response& res) { testing::reply(res, "x"); });
        auto cfg = stub_config(server);
        cfg.cache_dir = work / "gateway_cache";
        fs::remove_all(cfg.cache_dir);
        Gateway gw(cfg);
        const auto first = gw.complete_chat(request("cached"));
        const auto second = gw.complete_chat(request("cached"));
        Gateway other(cfg);
        const auto third = other.complete_chat(request("cached"));
        c.expect(!first.cached && second.cached && third.cached, "cache flags");
        c.expect(server.hits() == 1, "cache hits reached network " + std::to_string(server.hits()));
    }
    elapsed_ms = ms_since(start);
}

// 9: mock latency of one 30-passage query, and concurrent scoring against a
// 50 ms stub.
void throughput(Checker& c, double& elapsed_ms, std::string& detail) {
    const auto scenario = make_separation_scenario(1, 9);
    const auto& inst = scenario.ssli[0];
    c.expect(inst.contexts.size() == 30, "scenario pool size");
    {
        Gateway gw(ProviderConfig{}, oracle_fixtures(scenario.ssli, ScoreProfile::faithful()));
        const auto start = Clock::now();
        const auto r = rerank(inst.question, inst.contexts, PipelineConfig{}, gw);
        elapsed_ms = ms_since(start);
        c.expect(!r.ranked.empty(), "mock rerank empty");
        c.expect(elapsed_ms < 100.0, "mock rerank " + std::to_string(elapsed_ms) + " ms");
    }

    testing::StubServer server(
        [](const httplib::Request& req, httplib::Response& res) {
            std::this_thread::sleep_for(50ms);
            const auto system = testing::system_message(req);
            if (system.find("intent recognition") != std::string::npos) {
                testing::reply(res, R"({"topic":"biology","entity_type":"species","intent":"factual",)"
                                    R"("expected_answer_type":"a count"})");
            } else if (system.find("evidence assessor") != std::string::npos) {
                testing::reply(res, "0.9");
            } else {
                testing::reply(res, "Condensed evidence.");
            }
        },
        32);
    Gateway gw(stub_config(server));
    const auto single_start = Clock::now();
    gw.complete_chat(request("single"));
    const double single_ms = ms_since(single_start);

    const auto start = Clock::now();
    const auto r = rerank(inst.question, inst.contexts, PipelineConfig{}, gw);
    const double query_ms = ms_since(start);
    c.expect(r.scored.size() == 30 && r.ranked.size() == 5, "stub rerank shape");
    c.expect(r.intent && !r.intent->fallback, "stub intent fell back");
    c.expect(query_ms < 10.0 * single_ms,
             "query " + std::to_string(query_ms) + " ms vs single " + std::to_string(single_ms) + " ms");
    std::ostringstream ss;
    ss.precision(1);
    ss << std::fixed << "mock " << elapsed_ms << " ms; stub query " << query_ms << " ms = "
       << query_ms / single_ms << "x single call";
    detail = ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "deepera_acceptance";
    fs::create_directories(work);

    using Plain = std::function<void(Checker&, double&)>;
    struct Criterion {
        std::string name;
        std::function<void(Checker&, double&, std::string&)> run;
    };
    auto plain = [](Plain f) { return [f](Checker& c, double& ms, std::string&) { f(c, ms); }; };
    auto in_work = [&](std::function<void(Checker&, double&, const fs::path&)> f) {
        return [f, &work](Checker& c, double& ms, std::string&) { f(c, ms, work); };
    };

    const std::vector<Criterion> criteria = {
        {"metric-oracle equivalence", plain(metric_oracle)},
        {"token F1 reference suite", plain(token_f1)},
        {"threshold filter fidelity", plain(filter_fidelity)},
        {"distractor separation", plain(distractor_separation)},
        {"ablation ordering", plain(ablation_ordering)},
        {"dataset round trip and validity", in_work(dataset_validity)},
        {"determinism", in_work(determinism)},
        {"gateway robustness", in_work(gateway_robustness)},
        {"throughput sanity", throughput},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Checker c;
        double ms = 0.0;
        std::string detail;
        try {
            criteria[i].run(c, ms, detail);
        } catch (const std::exception& e) {
            c.failures.push_back(std::string("exception: ") + e.what());
        }
        const bool ok = c.failures.empty();
        if (!ok) ++failed;
        std::printf("[%s] %zu. %s (%.1f ms)%s%s\n", ok ? "PASS" : "FAIL", i + 1, criteria[i].name.c_str(), ms,
                    detail.empty() ? "" : ": ", detail.c_str());
        for (const auto& f : c.failures) std::printf("       - %s\n", f.c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
