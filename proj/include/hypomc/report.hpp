#pragma once

#include <iosfwd>
#include <optional>

#include "hypomc/config.hpp"
#include "hypomc/flow.hpp"

namespace hypomc::io {

struct RunReport {
    Estimate estimate;
    std::string config_hash;
    std::string estimator_kind;
    double wall_seconds = 0.0;
    double paths_per_second = 0.0;
    std::string canonical_config;
};

// Executes the configured estimator. Per-path CSV rows are written to
// `per_path_out` when requested and non-null.
RunReport run_config(const ExperimentConfig& cfg, std::ostream* per_path_out = nullptr);

// Report body; stable across re-runs of the same (config, seed) apart from
// the "timing" block.
json report_to_json(const RunReport& report, bool include_config_echo = true);

// One row per grid node: t, X1..Xn, J11..Jnn (row-major), Y<i>_<c>.
void write_bundle_csv(std::ostream& os, const FlowBundle& bundle, const TimeGrid& grid);

// Termination and energy statistics table for a control strategy.
struct ControlStats {
    std::int64_t n_paths = 0;
    std::int64_t terminated = 0;
    double termination_rate = 0.0;
    double mean_sigma_prime = 0.0;  // over terminated paths, in time units
    double mean_energy = 0.0;
    double max_energy_ratio = 0.0;  // energy / ||v||
    double max_tv_ratio = 0.0;      // TV / (2 ||v|| / alpha)
    Exclusions excluded;
};

ControlStats control_statistics(const ExperimentConfig& cfg);

// Reduced-N invariant suite behind `hypomc validate`; prints one line per
// check. All checks green on the shipped zoo configuration.
struct ValidationOutcome {
    std::vector<std::pair<std::string, bool>> checks;
    bool all_ok = true;
};

ValidationOutcome run_validation_suite(std::int64_t n_paths, int workers, std::ostream& log);

}  // namespace hypomc::io
