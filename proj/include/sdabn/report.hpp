#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sdabn {

/// Parsed contents of one run directory (config_resolved.json + metrics.csv).
struct RunSummary {
    std::string run_name;
    std::string experiment_id;
    std::string noise_kind;
    double noise_level = 0.0;  // sigma or peak
    int blocks = 0;
    // values[split][unit][metric]
    std::map<std::string, std::map<int, std::map<std::string, double>>> values;
};

RunSummary read_run_summary(const std::filesystem::path& run_dir);

/// Merges runs into a per-unit summary table (text + CSV) and emits line
/// plots of metric vs unit and, when several noise levels are present,
/// metric vs noise level.
void write_report(const std::vector<RunSummary>& runs, const std::filesystem::path& out_dir);

}  // namespace sdabn
