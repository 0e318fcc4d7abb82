#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cavflow/config.hpp"
#include "cavflow/rollout.hpp"

namespace cavflow {

/// Writes summary.csv, timing.csv, trace.csv, steps.csv and scenario.json into `out_dir`
/// (created if missing). Everything except timing.csv is a deterministic function of the
/// scenario. Throws std::runtime_error when the directory cannot be written.
void write_results(const RunResult& result, const ScenarioConfig& scenario, const std::filesystem::path& out_dir);

/// One summary row per run, in the given order.
void write_summary(const std::vector<const RunResult*>& results, const std::filesystem::path& file);
void write_timing(const std::vector<const RunResult*>& results, const std::filesystem::path& file);

std::string summary_csv(const std::vector<const RunResult*>& results);
std::string trace_csv(const RunResult& result, const Grid& grid);
std::string steps_csv(const RunResult& result);

}  // namespace cavflow
