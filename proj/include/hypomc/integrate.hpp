#pragma once

#include <optional>

#include "hypomc/brownian.hpp"
#include "hypomc/model.hpp"
#include "hypomc/stopping.hpp"

namespace hypomc {

inline constexpr double kDefaultExplosionCap = 1e8;

struct Trajectory {
    Mat states;                    // n x (m+1), columns valid up to last_node
    int last_node = 0;             // index of the last computed node
    std::optional<int> stop_index; // first node where the rule fired
    bool exploded = false;
    int explosion_node = -1;       // node at which the cap was exceeded

    Vec state_at(int node) const { return states.col(node); }
};

// Stochastic Heun (predictor-corrector) for the Stratonovich equation.
// When `shift` is non-null every increment dZ_step is replaced by
// dZ_step + shift.col(step) * dt (Girsanov drift perturbation).
Trajectory integrate_state(const SdeModel& model, const Vec& x0, const BrownianPath& driver,
                           const StoppingRule& rule, const Mat* shift = nullptr,
                           double explosion_cap = kDefaultExplosionCap);

// Left-point Riemann sum of <k, dZ> over steps [0, upto).
// k is r x nodes; the value at node i applies on [s_i, s_{i+1}).
double ito_integral(const Mat& integrand, const BrownianPath& driver, int upto);

// Trapezoid on the uniform grid over nodes [0, upto]. Exact for integrands
// linear in time.
double time_integral(const Vec& values, double dt, int upto);
Vec time_integral(const Mat& values, double dt, int upto);  // per row

// Smallest grid node with state outside the rule's domain; `m` (the cap) when
// the mode includes a cap and the path never exits; nullopt for exit_only
// paths that never left.
std::optional<int> first_exit(const Mat& states, int last_node, const StoppingRule& rule);

}  // namespace hypomc
