#pragma once

#include <functional>
#include <optional>

#include "hypomc/control.hpp"
#include "hypomc/estimate.hpp"
#include "hypomc/ramp.hpp"

namespace hypomc {

// f : R^n -> R given as a closed-form expression over the state.
struct Payoff {
    dsl::Expr f;
    bool assume_bounded = false;
};

Payoff make_payoff(const std::string& source, int n);

struct ControlSpec {
    ControlStrategy strategy = ControlStrategy::elliptic;
    EllipticSpec elliptic;
    BangBangConfig bangbang;
    BarrierSpec barrier;
};

struct PerturbSpec {
    double delta = 1e-3;         // Girsanov perturbation step
    bool skip_correction = false;  // valid when the pulled-back fields are deterministic
};

// Barrier clock T(s) = int phi^{-2}(X) ds (+ optional tan(pi s / 2t) term so
// the clock also diverges at the time cap). sigma is the first node with
// T >= t0; the ramp ell_s = rho(T(s)) v / t0 reaches v there.
struct ClockSpec {
    std::optional<Domain> domain;  // absent: phi == 1, identity clock
    double t0 = 1.0;
    bool tan_cap = false;
    double phi_clamp = 1e-12;
    double ramp_start_frac = 0.05;
};

struct ClockPath {
    std::vector<double> T;   // per node
    int sigma_node = -1;     // first node with T >= t0
    std::vector<double> Tprime;  // phi^{-2}(X_s) (+ tan derivative)
};

ClockPath compute_clock(const ClockSpec& spec, const Mat& states, int last_node, double dt,
                        double cap_t);

// ---------------------------------------------------------------------------
// Control-based formulas

// d(P_t f)_x v = E[ f(X_t) 1_{no explosion} * (-int <k, dZ>) ] with k a
// Problem-5.3 control on [0, sigma], sigma = tau_D ^ t when the rule has a
// domain. Exploded-after-sigma paths contribute payoff 0 (minimal semigroup);
// unterminated controls are excluded and counted.
Estimate semigroup_derivative_control(const SdeModel& model, const Vec& x0, const Vec& v,
                                      const Payoff& f, const TimeGrid& grid,
                                      const StoppingRule& rule, const ControlSpec& cs,
                                      std::int64_t n_paths, std::uint64_t seed,
                                      int workers = 1, PathTally* capture = nullptr);

// (du)_x v = E[ u(X_tau) * (-int <k, dZ>) ] for L-harmonic u given on the
// boundary of the rule's domain; u evaluated at the linear interpolation of
// the boundary crossing.
Estimate harmonic_derivative_control(const SdeModel& model, const Vec& x0, const Vec& v,
                                     const Payoff& u, const TimeGrid& grid,
                                     const StoppingRule& rule, const ControlSpec& cs,
                                     std::int64_t n_paths, std::uint64_t seed,
                                     int workers = 1, PathTally* capture = nullptr);

// ---------------------------------------------------------------------------
// Covariance-based weights

struct WeightBreakdown {
    PathStatus status = PathStatus::ok;
    double weight = 0.0;
    double main_term = 0.0;
    double correction = 0.0;
    int sigma_node = -1;
};

// Weight of the localized covariance formula on one realised path:
//   main term (int_0^sigma Y dZ)^T C_sigma^{-1} ell_sigma, minus the
//   lambda-derivative correction contracted over the perturbation directions.
// The Girsanov directions use a_s = Y_s^* of the unperturbed path, truncated
// at sigma; all lambda-derivatives are central differences of re-simulated
// bundles on the same Brownian increments.
WeightBreakdown hypoelliptic_weight(const SdeModel& model, const Vec& x0,
                                    const BrownianPath& driver, const FlowBundle& bundle,
                                    const ClockSpec& clock, const Vec& v,
                                    const PerturbSpec& perturb);

// Fixed-horizon covariance weight (identity clock): (int_0^t Y dZ)^T C_t^{-1} v
// plus the contraction of C^{-1} (d_lambda C^lambda) C^{-1} with v. Throws
// SingularCovarianceError when C_t is rejected.
double bismut_covariance_weight(const SdeModel& model, const Vec& x0, const FlowBundle& bundle,
                                const BrownianPath& driver, const Vec& v, int upto_node,
                                const PerturbSpec& perturb);

Estimate semigroup_derivative_covariance(const SdeModel& model, const Vec& x0, const Vec& v,
                                         const Payoff& f, const TimeGrid& grid,
                                         const PerturbSpec& perturb, std::int64_t n_paths,
                                         std::uint64_t seed, int workers = 1,
                                         PathTally* capture = nullptr);

// General localized estimator for d(P_t f)_x v (semigroup mode, payoff at the
// fixed horizon) or (du)_x v (harmonic mode, payoff at the exit of the rule's
// domain), without differentiating f or u.
enum class DerivativeTarget { semigroup, harmonic };

Estimate general_hypoelliptic_derivative(const SdeModel& model, const Vec& x0, const Vec& v,
                                         const Payoff& payoff, DerivativeTarget target,
                                         const TimeGrid& grid, const StoppingRule& rule,
                                         const ClockSpec& clock, const PerturbSpec& perturb,
                                         std::int64_t n_paths, std::uint64_t seed,
                                         int workers = 1, PathTally* capture = nullptr);

// ---------------------------------------------------------------------------
// Lambda-perturbation engine (central differences with common increments)

struct PerturbedRun {
    const FlowBundle& bundle;
    Vec lambda;        // perturbation vector applied to this run
    const Mat* shift;  // r x steps drift shift actually used (null for base)
    const BrownianPath& driver;
    double dt;
};

using PathFunctional = std::function<Mat(const PerturbedRun&)>;

struct LambdaDerivative {
    std::vector<Mat> d;          // n entries: d/d lambda_k of the functional
    std::vector<Mat> d_halved;   // filled when richardson = true
};

// a_steps: per-step n x r matrices (row k = contribution of lambda_k to the
// driver shift). 2n re-simulations, 4n with the Richardson half-step check.
LambdaDerivative lambda_perturbation_derivative(
    const SdeModel& model, const Vec& x0, const BrownianPath& driver,
    const std::vector<Mat>& a_steps, double delta, const PathFunctional& functional,
    bool richardson = false, int upto_node = -1);

// ---------------------------------------------------------------------------
// Diagnostics and oracles

struct SpaceTimeFn {
    std::function<double(double s, const Vec& x)> value;
    std::function<Vec(double s, const Vec& x)> differential;
};

struct MartingaleDiagnostic {
    std::vector<double> checkpoint_times;
    std::vector<double> mean;
    std::vector<double> se;
    double reference = 0.0;  // dF(0, x0) . v
    double max_abs_deviation = 0.0;
    double max_deviation_sigmas = 0.0;
    bool pass = false;  // every checkpoint within 3 SE of the reference
    std::int64_t n_effective = 0;
    Exclusions excluded;
};

// Checks E[ dF(s) J_s h_s - F(s) int_0^s <k, dZ> ] = dF(0) v at checkpoints,
// with h_s = v + int_0^s Y k dr. k comes from the control strategy; without
// one the pure derivative part dF J v is checked.
MartingaleDiagnostic martingale_diagnostic(const SdeModel& model, const Vec& x0, const Vec& v,
                                           const SpaceTimeFn& fn, const TimeGrid& grid,
                                           const std::optional<ControlSpec>& cs,
                                           const std::vector<double>& checkpoints,
                                           std::int64_t n_paths, std::uint64_t seed,
                                           int workers = 1);

// Nested Monte Carlo stand-in for P_{t-s} f when no closed form is available.
SpaceTimeFn inner_mc_space_time(const SdeModel& model, const Payoff& f, double t,
                                int base_steps, std::int64_t inner_paths, std::uint64_t seed,
                                double eps);

// Central difference with common random numbers: the same driver integrates
// from x0 + eps v and x0 - eps v.
Estimate finite_difference_oracle(const SdeModel& model, const Vec& x0, const Vec& v,
                                  const Payoff& f, const TimeGrid& grid, double eps,
                                  std::int64_t n_paths, std::uint64_t seed, int workers = 1,
                                  PathTally* capture = nullptr);

// ---------------------------------------------------------------------------
// Asian option Deltas

enum class AsianMethod { closed_weight, general };

struct AsianSpec {
    std::string sigma_src = "0.3";  // sigma(x1), Ito form
    std::string mu_src = "0";       // mu(x1), Ito form
    double s0 = 1.0;
    std::string payoff_src = "x2";  // f(s, a) with x1 = S, x2 = A
    AsianMethod method = AsianMethod::closed_weight;
};

// d/dS0 E[f(S_T, A_T)] with v = (1, 0). closed_weight requires constant sigma
// and mu == 0; general delegates to the localized covariance estimator.
Estimate asian_delta(const AsianSpec& spec, double T, int steps, std::int64_t n_paths,
                     std::uint64_t seed, int workers = 1,
                     const PerturbSpec& perturb = PerturbSpec{},
                     PathTally* capture = nullptr);

// Boundary crossing between the last inside and first outside node.
Vec boundary_crossing_point(const Domain& d, const Vec& inside, const Vec& outside);

}  // namespace hypomc
