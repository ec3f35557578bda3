#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

namespace cyclebif {

struct RunOptions {
    std::filesystem::path out_dir = ".";
    int threads = 1;
    std::uint64_t seed = 0;  // multistart grid jitter; 0 = no jitter
};

struct PipelineResult {
    int exit_code = 1;
    std::string report;  // serialized report.json (empty on configuration errors)
    std::string error;   // human-readable failure, when exit_code == 1
};

/// Full pipeline: cycle -> adjoint -> Malkin -> predictions -> sweep
/// verification. Writes report.json, malkin.csv, fixed_points_<eps>.csv and
/// convergence.csv under out_dir. Exit 0 when the pipeline completed and all
/// enabled assertions passed, 2 on assertion failures, 1 on errors.
PipelineResult run_analyze(const std::string& config_text, const RunOptions& opts);

/// Pipeline through zero classification only; writes report.json, malkin.csv
/// and zeros.csv.
PipelineResult run_malkin(const std::string& config_text, const RunOptions& opts);

int cmd_analyze(const std::filesystem::path& config_path, const RunOptions& opts);
int cmd_malkin(const std::filesystem::path& config_path, const RunOptions& opts);
int cmd_list_systems(std::ostream& os);

}  // namespace cyclebif
