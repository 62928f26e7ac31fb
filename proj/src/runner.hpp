#ifndef BISEL_RUNNER_HPP
#define BISEL_RUNNER_HPP

#include <string>

#include "config.hpp"

namespace bisel {

// Exit codes: 0 ok, 1 verification check failed, 2 runtime error.
struct RunOutcome {
  int exit_code = 0;
  std::string error_json;  // machine-readable error document, empty on success
};

// Dispatches a full experiment: writes the effective config, per-seed metrics
// CSVs, weight snapshots, checkpoints, and (verify mode) the report JSON into
// the resolved output directory. Relative output directories resolve under
// $BISEL_OUTPUT_ROOT when that is set.
RunOutcome run_experiment(const ExperimentConfig& cfg);

std::string resolve_output_dir(const ExperimentConfig& cfg);

// Generates the configured instance and writes it as JSONL.
void write_instance(const ExperimentConfig& cfg, const std::string& out_path);

// Human-readable synopsis of a finished run directory.
std::string report_summary(const std::string& run_dir);

}  // namespace bisel

#endif
