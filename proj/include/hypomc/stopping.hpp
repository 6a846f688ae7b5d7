#pragma once

#include <optional>
#include <variant>

#include "hypomc/linalg.hpp"

namespace hypomc {

struct Box {
    Vec center;
    Vec radii;  // all positive
    bool contains(const Vec& x) const {
        for (int i = 0; i < center.size(); ++i)
            if (std::abs(x[i] - center[i]) >= radii[i]) return false;
        return true;
    }
};

struct Ball {
    Vec center;
    double radius = 1.0;
    bool contains(const Vec& x) const { return (x - center).norm() < radius; }
};

using Domain = std::variant<Box, Ball>;

inline bool domain_contains(const Domain& d, const Vec& x) {
    return std::visit([&](const auto& g) { return g.contains(x); }, d);
}

enum class StopMode { cap_only, exit_only, exit_and_cap };

// The time cap is the grid horizon; the domain, when present, stops at the
// first grid node outside it (no boundary interpolation in the integrator).
struct StoppingRule {
    std::optional<Domain> domain;
    StopMode mode = StopMode::cap_only;

    void validate(int n) const;
    static StoppingRule cap() { return {std::nullopt, StopMode::cap_only}; }
    static StoppingRule exit_or_cap(Domain d) { return {std::move(d), StopMode::exit_and_cap}; }
};

}  // namespace hypomc
