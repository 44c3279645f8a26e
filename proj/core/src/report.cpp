#include "deepera/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace deepera {

using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace

std::string_view to_string(ReportFormat f) { return f == ReportFormat::csv ? "csv" : "json"; }

std::optional<ReportFormat> parse_report_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    return std::nullopt;
}

json report_to_json(const MetricsReport& report) {
    json aggregate = json::object();
    for (const auto& [name, s] : report.aggregate) {
        aggregate[name] = {{"mean", s.mean}, {"std", s.std}, {"n_runs", s.n_runs}};
    }
    json per_instance = json::array();
    for (const auto& row : report.per_instance) {
        json values = json::object();
        for (const auto& [name, v] : row.metrics.values) values[name] = v ? json(*v) : json(nullptr);
        per_instance.push_back({{"run", row.run},
                                {"instance_id", row.metrics.instance_id},
                                {"values", std::move(values)},
                                {"flags", row.metrics.flags}});
    }
    return {{"provenance", report.provenance},
            {"per_instance", std::move(per_instance)},
            {"aggregate", std::move(aggregate)},
            {"judge_failures", report.judge_failures}};
}

MetricsReport report_from_json(const json& j) {
    MetricsReport r;
    try {
        r.provenance = j.at("provenance");
        r.judge_failures = j.value("judge_failures", std::size_t{0});
        for (const auto& [name, s] : j.at("aggregate").items()) {
            r.aggregate[name] = {s.at("mean").get<double>(), s.at("std").get<double>(),
                                 s.at("n_runs").get<std::size_t>()};
        }
        for (const auto& row : j.at("per_instance")) {
            RunInstanceMetrics m;
            m.run = row.at("run").get<std::size_t>();
            m.metrics.instance_id = row.at("instance_id").get<std::string>();
            for (const auto& [name, v] : row.at("values").items()) {
                m.metrics.values[name] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
            }
            m.metrics.flags = row.at("flags").get<StringMap>();
            r.per_instance.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed report: ") + e.what());
    }
    return r;
}

std::string render_report_json(const MetricsReport& report) { return report_to_json(report).dump(2) + "\n"; }

std::string render_report_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "metric,mean,std,n_runs\n";
    for (const auto& [name, s] : report.aggregate) {
        out << name << ',' << format_double(s.mean) << ',' << format_double(s.std) << ',' << s.n_runs << '\n';
    }
    return out.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot write " + path.string());
    }
}

void emit_report(const MetricsReport& report, ReportFormat format, const std::filesystem::path& path) {
    write_file_atomic(path, format == ReportFormat::json ? render_report_json(report) : render_report_csv(report));
}

MetricsReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read report: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw IoError("report is not valid JSON: " + path.string());
    return report_from_json(j);
}

}  // namespace deepera
