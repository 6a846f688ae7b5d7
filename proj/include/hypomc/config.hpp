#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "hypomc/estimators.hpp"

namespace hypomc::io {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error(field + ": " + what), field_path(field) {}
    std::string field_path;
};

enum class EstimatorKind {
    semigroup_control,
    harmonic_control,
    semigroup_covariance,
    general_semigroup,
    general_harmonic,
    fd_oracle,
    asian_closed,
    asian_general,
};

const char* to_string(EstimatorKind k);

struct ExperimentConfig {
    SdeModel model;
    Vec x0;
    Vec v;
    std::string payoff_src = "x1";
    TimeGrid grid{1.0, 256};
    StoppingRule rule;
    EstimatorKind kind = EstimatorKind::semigroup_control;
    ControlSpec control;
    ClockSpec clock;
    PerturbSpec perturb;
    double fd_eps = 1e-2;
    AsianSpec asian;
    std::int64_t paths = 1000;
    std::uint64_t seed = 1;
    int workers = 1;
    bool per_path_csv = false;

    // Validated, normalised document; serialising and re-parsing it is the
    // identity, and its hash keys the report.
    std::string canonical;
    std::string config_hash;
};

// Parse + validate. Throws ConfigError naming the offending field.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config_file(const std::string& path);

// Round-trip surface: the canonical document of a validated config.
json canonical_json(const ExperimentConfig& cfg);

}  // namespace hypomc::io
