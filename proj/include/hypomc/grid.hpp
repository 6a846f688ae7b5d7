#pragma once

#include <stdexcept>

namespace hypomc {

// Uniform grid on [0, t] with m steps (m+1 nodes).
struct TimeGrid {
    double t = 1.0;
    int m = 1;

    TimeGrid() = default;
    TimeGrid(double horizon, int steps) : t(horizon), m(steps) {
        if (!(t > 0.0)) throw std::invalid_argument("grid horizon must be positive");
        if (m < 1) throw std::invalid_argument("grid must have at least one step");
    }

    double dt() const { return t / m; }
    double node_time(int i) const { return i * dt(); }
    int nodes() const { return m + 1; }
};

}  // namespace hypomc
