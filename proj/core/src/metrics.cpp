#include "deepera/metrics.hpp"

#include "deepera/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

namespace deepera {

using nlohmann::json;

TokenSet normalize_tokens(std::string_view text) {
    TokenSet out;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        if (current != "a" && current != "an" && current != "the") out.tokens.push_back(current);
        current.clear();
    };
    for (unsigned char c : text) {
        if (c < 0x80 && std::ispunct(c)) continue;
        if (std::isspace(c)) {
            flush();
        } else {
            current.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        }
    }
    flush();
    return out;
}

bool contains_sequence(const TokenSet& haystack, const TokenSet& needle) {
    if (needle.empty()) return false;
    return std::search(haystack.tokens.begin(), haystack.tokens.end(), needle.tokens.begin(),
                       needle.tokens.end()) != haystack.tokens.end();
}

bool leaks_answer(std::string_view text, std::string_view golden_answer) {
    return contains_sequence(normalize_tokens(text), normalize_tokens(golden_answer));
}

PRF token_prf(std::string_view pred, std::string_view gold) {
    const TokenSet p = normalize_tokens(pred);
    const TokenSet g = normalize_tokens(gold);
    if (p.empty() && g.empty()) return {1.0, 1.0, 1.0};
    if (p.empty() || g.empty()) return {0.0, 0.0, 0.0};

    std::unordered_map<std::string, std::size_t> gold_counts;
    for (const auto& t : g.tokens) ++gold_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : p.tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return {0.0, 0.0, 0.0};
    const double precision = static_cast<double>(overlap) / static_cast<double>(p.tokens.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(g.tokens.size());
    return {precision, recall, 2.0 * precision * recall / (precision + recall)};
}

RankingRecord make_ranking_record(const QAInstance& inst, std::span<const Passage> ranked) {
    RankingRecord rec;
    rec.instance_id = inst.id;
    rec.n = ranked.size();

    std::unordered_map<std::string, std::size_t> rank_of;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        rec.labels_by_rank.push_back(ranked[i].label);
        rank_of.emplace(ranked[i].id, i + 1);
        if (ranked[i].label == PassageLabel::golden && !rec.golden_rank) rec.golden_rank = i + 1;
    }
    auto lookup = [&](const std::string& id) -> std::optional<std::size_t> {
        auto it = rank_of.find(id);
        if (it == rank_of.end()) return std::nullopt;
        return it->second;
    };
    for (const auto& p : inst.contexts) {
        if (p.label != PassageLabel::distractor || !p.pair_of) continue;
        rec.pairs.push_back({lookup(*p.pair_of), lookup(p.id)});
    }
    return rec;
}

JudgeParseError::JudgeParseError(std::string raw, const std::string& reason)
    : MetricError("judge output rejected: " + reason), raw_(std::move(raw)) {}

double hit_rate_at_k(std::span<const RankingRecord> records, std::size_t k) {
    if (k < 1) throw std::invalid_argument("hit_rate_at_k: k must be >= 1");
    if (records.empty()) throw EmptyRecordSet();
    std::size_t hits = 0;
    for (const auto& r : records) {
        if (r.golden_rank && *r.golden_rank <= k) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(records.size());
}

double relative_position_of(const RankingRecord& record) {
    if (!record.golden_rank) return 0.0;
    if (record.n <= 1) return 100.0;
    const double n = static_cast<double>(record.n);
    const double r = static_cast<double>(*record.golden_rank);
    return 100.0 * (n - r) / (n - 1.0);
}

double relative_position(std::span<const RankingRecord> records) {
    if (records.empty()) throw EmptyRecordSet();
    double sum = 0.0;
    for (const auto& r : records) sum += relative_position_of(r);
    return sum / static_cast<double>(records.size());
}

double noise_robustness_of(const RankingRecord& record, std::size_t k) {
    if (k < 1) throw std::invalid_argument("noise_robustness: k must be >= 1");
    const std::size_t cutoff = std::min(k, record.labels_by_rank.size());
    if (cutoff == 0) return 1.0;
    std::size_t clean = 0;
    for (std::size_t i = 0; i < cutoff; ++i) {
        if (record.labels_by_rank[i] != PassageLabel::distractor) ++clean;
    }
    return static_cast<double>(clean) / static_cast<double>(cutoff);
}

double noise_robustness(std::span<const RankingRecord> records, std::size_t k) {
    if (records.empty()) throw EmptyRecordSet();
    double sum = 0.0;
    for (const auto& r : records) sum += noise_robustness_of(r, k);
    return sum / static_cast<double>(records.size());
}

PairTally discrimination_tally(const RankingRecord& record) {
    PairTally t;
    for (const auto& p : record.pairs) {
        ++t.pairs;
        if (!p.original_rank) continue;
        if (!p.distractor_rank || *p.original_rank < *p.distractor_rank) ++t.successes;
    }
    return t;
}

double context_discrimination(std::span<const RankingRecord> records) {
    PairTally total;
    for (const auto& r : records) {
        PairTally t = discrimination_tally(r);
        total.successes += t.successes;
        total.pairs += t.pairs;
    }
    if (total.pairs == 0) throw NoPairs();
    return static_cast<double>(total.successes) / static_cast<double>(total.pairs);
}

const SchemaSpec& judge_schema() {
    static const SchemaSpec schema{{
        {"value", FieldKind::enumeration, {"0", "1", "2", "3", "4", "5"}},
        {"rationale", FieldKind::string, {}},
    }};
    return schema;
}

JudgeScore parse_judge(std::string_view content) {
    FieldMap fields;
    try {
        fields = parse_structured(content, judge_schema());
    } catch (const SchemaParseError& e) {
        throw JudgeParseError(std::string(content), e.what());
    }
    const json& v = fields.at("value");
    int value = v.is_string() ? std::stoi(v.get<std::string>()) : static_cast<int>(v.get<double>());
    return JudgeScore{value, fields.at("rationale").get<std::string>()};
}

JudgeScore lfs_judge(std::string_view question, std::string_view gold, std::string_view pred,
                     Gateway& gateway) {
    if (gold.empty()) throw std::invalid_argument("lfs_judge: golden answer is empty");
    ChatRequest req;
    req.tag = "judge";
    req.messages = prompt("judge").render({{"query", std::string(question)},
                                           {"golden_answer", std::string(gold)},
                                           {"candidate_answer", std::string(pred)}});
    req.response_schema = judge_schema();
    return parse_judge(gateway.complete_chat(req).content);
}

std::optional<std::string> weight_metric_for(std::string_view metric) {
    if (metric == "cdr") return std::string("cdr_pairs");
    return std::nullopt;
}

std::map<std::string, double> run_values(const RunMetrics& run) {
    std::set<std::string> weights;
    std::set<std::string> names;
    for (const auto& inst : run) {
        for (const auto& [name, _] : inst.values) {
            names.insert(name);
            if (auto w = weight_metric_for(name)) weights.insert(*w);
        }
    }
    std::map<std::string, double> out;
    for (const auto& name : names) {
        if (weights.contains(name)) continue;
        const auto weight = weight_metric_for(name);
        double sum = 0.0;
        double total_weight = 0.0;
        for (const auto& inst : run) {
            auto it = inst.values.find(name);
            if (it == inst.values.end() || !it->second) continue;
            double w = 1.0;
            if (weight) {
                auto wit = inst.values.find(*weight);
                w = (wit != inst.values.end() && wit->second) ? *wit->second : 0.0;
            }
            sum += w * *it->second;
            total_weight += w;
        }
        if (total_weight > 0.0) out[name] = sum / total_weight;
    }
    return out;
}

MetricsReport aggregate_report(const std::vector<RunMetrics>& runs, json provenance) {
    MetricsReport report;
    report.provenance = std::move(provenance);
    if (runs.empty()) return report;

    auto ids_of = [](const RunMetrics& run) {
        std::multiset<std::string> ids;
        for (const auto& inst : run) ids.insert(inst.instance_id);
        return ids;
    };
    const auto reference = ids_of(runs.front());
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (ids_of(runs[r]) != reference) {
            throw RunMismatch("run " + std::to_string(r) + " covers a different instance set than run 0");
        }
    }

    std::map<std::string, std::vector<double>> per_metric;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        RunMetrics sorted = runs[r];
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
        for (const auto& [name, value] : run_values(sorted)) per_metric[name].push_back(value);
        for (auto& inst : sorted) {
            if (auto it = inst.flags.find("judge_failed"); it != inst.flags.end() && it->second == "true") {
                ++report.judge_failures;
            }
            report.per_instance.push_back({r, std::move(inst)});
        }
    }

    for (const auto& [name, values] : per_metric) {
        MetricSummary s;
        s.n_runs = values.size();
        double sum = 0.0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(values.size());
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - s.mean) * (v - s.mean);
            s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        report.aggregate[name] = s;
    }
    return report;
}

}  // namespace deepera
