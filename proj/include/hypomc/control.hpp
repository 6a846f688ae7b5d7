#pragma once

#include <optional>

#include "hypomc/covariance.hpp"
#include "hypomc/flow.hpp"

namespace hypomc {

enum class ControlStrategy { elliptic, bangbang, barrier };

const char* to_string(ControlStrategy s);

// Solution of the steering problem h' = Y(s) k_s, h_0 = v, driven to h = 0.
// h always satisfies the recurrence h_{i+1} = h_i + Y_i k_i dt exactly, except
// at the single clamp node where ||h|| <= eps_h is snapped to zero.
struct ControlPath {
    Mat k;  // r x steps, value at node i applies on [s_i, s_{i+1})
    Mat h;  // n x (steps+1)
    std::optional<int> sigma_prime;  // first node with h = 0
    ControlStrategy strategy = ControlStrategy::bangbang;
    double energy = 0.0;  // sum ||k_i||^2 dt
    bool terminated = false;
    double clamp_residue = 0.0;  // ||h|| absorbed by the terminal clamp
    std::vector<unsigned char> active;  // switching clock, one flag per step
    int last_node = 0;

    int weight_upto() const { return sigma_prime.value_or(last_node); }
};

class EllipticInapplicableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EllipticSpec {
    enum class Profile { linear, smooth };
    Profile profile = Profile::smooth;
    // When set, the ramp is driven by the barrier clock T(s) = int phi^{-2},
    // lagged one node to stay predictable; the control then finishes before
    // the exit from clock_domain. Without it the ramp is deterministic over
    // [0, sigma_node] (which must then be a deterministic horizon).
    std::optional<Domain> clock_domain;
    double clock_budget = 0.0;  // <= 0: the caller picks a default
};

// k_s from the pointwise right inverse of the pulled-back field, so that the
// discrete dynamics reproduce the profile h_s = v (1 - rho) exactly.
// Requires A(X_s) surjective along the path.
ControlPath elliptic_control(const FlowBundle& bundle, const Vec& v, const EllipticSpec& spec,
                             int sigma_node);

struct BangBangConfig {
    double alpha = 0.25;       // activation threshold on cos(c h, h)
    double hysteresis = 0.5;   // phase exits at alpha * hysteresis
    double eps_h_rel = 1e-8;   // zero clamp at eps_h_rel * ||v||
    int max_horizon_node = -1; // defaults to the bundle's last node
};

// Inductive wait/descend construction. During descent the step magnitude is
// chosen so the per-step energy ||k||^2 dt equals the realised drop of ||h||;
// the energy bound int ||k||^2 ds <= ||h_0|| then holds exactly in discrete
// time, as it does in the continuous construction.
ControlPath bangbang_control(const FlowBundle& bundle, const Vec& v, const BangBangConfig& cfg);

struct BarrierSpec {
    std::optional<Domain> state_domain;  // phi_1, vanishing on its boundary
    std::optional<Ball> driver_ball;     // phi_2 over the Brownian point
    double phi_clamp = 1e-12;
    double eps_h_rel = 1e-8;
};

// Always-active descent h' = -phi^{-2}(X,Z) c_s h/||h||; with the product
// quadratic barriers the clock diverges at the boundary, so the control
// terminates before the exit on almost every resolved path.
ControlPath barrier_control(const FlowBundle& bundle, const BrownianPath& driver, const Vec& v,
                            const BarrierSpec& spec);

// Barrier value; product of quadratic bump functions, 1 where no domain given.
double barrier_value(const std::optional<Domain>& state_domain,
                     const std::optional<Ball>& driver_ball, const Vec& x, const Vec& z,
                     double clamp);

struct ControlVerification {
    double residual = 0.0;  // || v + sum Y k dt ||
    double energy = 0.0;
    double total_variation = 0.0;
    double max_dynamics_violation = 0.0;  // recurrence defect off the clamp node
    double clamp_residue = 0.0;
    bool terminated = false;
    bool energy_bound_ok = false;  // energy <= ||v|| (1 + 1e-6)
    bool tv_bound_ok = false;      // TV <= 2||v||/alpha (1 + 1e-6)
};

ControlVerification verify_control(const ControlPath& ctrl, const FlowBundle& bundle,
                                   const Vec& v, double alpha = 0.25);

struct PicardIdentity {
    double lhs = 0.0;       // int (Z^2 k^1 - Z^1 k^2) ds
    double rhs = 0.0;       // -int h^1 dZ^2 + int h^2 dZ^1
    double residual = 0.0;  // lhs - rhs
    double transfer = 0.0;  // int (Z^1 k^2 - Z^2 k^1) ds, equals -v^3 when terminated
};

class WrongModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Pathwise integration-by-parts identity specific to the picard model.
PicardIdentity picard_identity_check(const SdeModel& model, const ControlPath& ctrl,
                                     const BrownianPath& driver);

}  // namespace hypomc
