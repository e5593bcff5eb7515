#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace kbcx_cli {

/// Bad flags, missing inputs or malformed configs; maps to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Failure reported by the library; maps to exit code 1.
struct RuntimeError : std::runtime_error {
    RuntimeError(const std::string& category, const std::string& message)
        : std::runtime_error(message), category(category) {}
    std::string category;
};

std::string sha256_file(const std::filesystem::path& path);

/// "5" means seeds 1..5; "3,7,9" lists them.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

struct MetricSummary {
    double mean = 0, stdev = 0;
    std::size_t n = 0;
};

/// Per-metric mean and sample (n-1) standard deviation; a single run gets
/// stdev 0. Every row must carry the same metric names.
std::map<std::string, MetricSummary> aggregate_metrics(const std::vector<std::map<std::string, double>>& rows);

/// `metric<TAB>mean<TAB>stdev<TAB>n` rows under a header noting the normalization.
std::string aggregate_tsv(const std::map<std::string, MetricSummary>& summary);
nlohmann::json aggregate_json(const std::map<std::string, MetricSummary>& summary);

/// Reads a metrics file: either {"metrics": {...}} or a flat object of numbers.
std::map<std::string, double> read_metrics_file(const std::filesystem::path& path);

/// Deep merge; values of `overlay` win.
nlohmann::json merge(nlohmann::json base, const nlohmann::json& overlay);

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace kbcx_cli
