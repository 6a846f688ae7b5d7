#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hypomc {

enum class PathStatus : std::uint8_t {
    ok = 0,
    explosion,              // state blow-up or coefficient domain failure
    singular_covariance,    // C_sigma rejected for weight formation
    unterminated_control,   // h did not reach 0 before the stopping time
    clock_expired,          // barrier clock never reached its budget
    no_exit,                // path never left the domain before the cap
};

struct Exclusions {
    std::int64_t explosion = 0;
    std::int64_t singular_covariance = 0;
    std::int64_t unterminated_control = 0;
    std::int64_t clock_expired = 0;
    std::int64_t no_exit = 0;

    std::int64_t total() const {
        return explosion + singular_covariance + unterminated_control + clock_expired + no_exit;
    }
    void count(PathStatus s) {
        switch (s) {
            case PathStatus::ok: break;
            case PathStatus::explosion: ++explosion; break;
            case PathStatus::singular_covariance: ++singular_covariance; break;
            case PathStatus::unterminated_control: ++unterminated_control; break;
            case PathStatus::clock_expired: ++clock_expired; break;
            case PathStatus::no_exit: ++no_exit; break;
        }
    }
};

// Monte Carlo mean with standard error and exclusion accounting. Reductions
// run in ascending path order, so an Estimate is a pure function of
// (config, seed) regardless of worker count.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t n_requested = 0;
    std::int64_t n_effective = 0;
    Exclusions excluded;
    std::map<std::string, double> diagnostics;

    double diag(const std::string& key) const {
        auto it = diagnostics.find(key);
        return it == diagnostics.end() ? 0.0 : it->second;
    }
};

// Per-path scratch written by sweeps, reduced afterwards in index order.
struct PathTally {
    std::vector<double> value;
    std::vector<double> weight;
    std::vector<double> energy;
    std::vector<PathStatus> status;

    explicit PathTally(std::int64_t n)
        : value(static_cast<std::size_t>(n), 0.0),
          weight(static_cast<std::size_t>(n), 0.0),
          energy(static_cast<std::size_t>(n), 0.0),
          status(static_cast<std::size_t>(n), PathStatus::ok) {}
};

Estimate reduce_tally(const PathTally& tally);

}  // namespace hypomc
