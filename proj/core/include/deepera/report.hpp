#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "deepera/metrics.hpp"

namespace deepera {

class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ReportFormat { json, csv };

std::string_view to_string(ReportFormat f);
std::optional<ReportFormat> parse_report_format(std::string_view s);

// {provenance, per_instance[], aggregate{metric:{mean,std,n_runs}}, judge_failures}
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// Canonical text: sorted keys, two-space indent, trailing newline.
std::string render_report_json(const MetricsReport& report);

// Aggregates only; header "metric,mean,std,n_runs", rows sorted by metric.
std::string render_report_csv(const MetricsReport& report);

// Throws IoError.
void emit_report(const MetricsReport& report, ReportFormat format, const std::filesystem::path& path);
MetricsReport read_report(const std::filesystem::path& path);

// Writes `content` to `path` via a temporary file and rename. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace deepera
