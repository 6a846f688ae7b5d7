#include "hypomc/estimators.hpp"

#include <cmath>
#include <memory>

#include "hypomc/sweep.hpp"
#include "hypomc/zoo.hpp"

namespace hypomc {

Payoff make_payoff(const std::string& source, int n) {
    return Payoff{dsl::parse_field_expr(source, n), false};
}

Estimate reduce_tally(const PathTally& tally) {
    Estimate e;
    e.n_requested = static_cast<std::int64_t>(tally.value.size());
    std::vector<unsigned char> include(tally.value.size(), 0);
    for (std::size_t i = 0; i < tally.value.size(); ++i) {
        e.excluded.count(tally.status[i]);
        include[i] = tally.status[i] == PathStatus::ok ? 1 : 0;
    }
    const OrderedMoments mv = ordered_moments(tally.value, include);
    e.mean = mv.mean;
    e.se = mv.se;
    e.n_effective = mv.count;
    const OrderedMoments mw = ordered_moments(tally.weight, include);
    e.diagnostics["weight_mean"] = mw.mean;
    e.diagnostics["weight_second_moment"] = mw.second_moment;
    const OrderedMoments me = ordered_moments(tally.energy, include);
    e.diagnostics["energy_l2"] = std::sqrt(std::max(0.0, me.mean));
    return e;
}

// ---------------------------------------------------------------------------
// Clock

ClockPath compute_clock(const ClockSpec& spec, const Mat& states, int last_node, double dt,
                        double cap_t) {
    ClockPath cp;
    cp.T.assign(static_cast<std::size_t>(last_node) + 1, 0.0);
    cp.Tprime.assign(static_cast<std::size_t>(last_node) + 1, 0.0);

    auto rate = [&](int node) {
        if (!spec.domain) return 1.0;
        const double phi = barrier_value(spec.domain, std::nullopt, states.col(node), Vec(),
                                         spec.phi_clamp);
        return 1.0 / (phi * phi);
    };
    auto tan_term = [&](double s) {
        if (!spec.tan_cap) return 0.0;
        return std::tan(0.5 * M_PI * std::min(s / cap_t, 1.0 - 1e-12));
    };
    auto tan_deriv = [&](double s) {
        if (!spec.tan_cap) return 0.0;
        const double c = std::cos(0.5 * M_PI * std::min(s / cap_t, 1.0 - 1e-12));
        return 0.5 * M_PI / (cap_t * c * c);
    };

    double quad = 0.0;
    double prev = rate(0);
    cp.T[0] = tan_term(0.0);
    cp.Tprime[0] = prev + tan_deriv(0.0);
    cp.sigma_node = cp.T[0] >= spec.t0 ? 0 : -1;
    for (int i = 1; i <= last_node; ++i) {
        const double w = rate(i);
        quad += 0.5 * dt * (prev + w);
        prev = w;
        const double s = i * dt;
        cp.T[static_cast<std::size_t>(i)] = quad + tan_term(s);
        cp.Tprime[static_cast<std::size_t>(i)] = w + tan_deriv(s);
        if (cp.sigma_node < 0 &&
            cp.T[static_cast<std::size_t>(i)] >= spec.t0 * (1.0 - 1e-12))
            cp.sigma_node = i;
    }
    return cp;
}

// ---------------------------------------------------------------------------
// Covariance weights

namespace {

Vec stochastic_pullback_integral(const FlowBundle& bundle, const BrownianPath& driver,
                                 int upto) {
    Vec acc = Vec::Zero(bundle.n);
    for (int j = 0; j < bundle.r; ++j) {
        const Mat& Yj = bundle.pullback[static_cast<std::size_t>(j)];
        for (int i = 0; i < upto; ++i) acc += Yj.col(i) * driver.dz(j, i);
    }
    return acc;
}

// r x steps drift-shift matrix for the direction lambda_k with magnitude
// delta: column i is delta times the k-th row of Y(s_i), zero beyond sigma.
Mat perturbation_shift(const FlowBundle& bundle, int k, double delta, int upto) {
    Mat shift = Mat::Zero(bundle.r, std::max(1, upto));
    for (int j = 0; j < bundle.r; ++j)
        for (int i = 0; i < upto; ++i)
            shift(j, i) = delta * bundle.pullback[static_cast<std::size_t>(j)](k, i);
    return shift;
}

struct Resim {
    bool ok = false;
    FlowBundle bundle;
};

Resim resimulate(const SdeModel& model, const Vec& x0, const BrownianPath& driver,
                 const Mat& shift, int upto) {
    Resim out;
    out.bundle = integrate_flow_bundle(model, x0, driver, StoppingRule::cap(), &shift,
                                       kDefaultExplosionCap, upto);
    out.ok = !out.bundle.traj.exploded && out.bundle.last_node() >= upto;
    return out;
}

}  // namespace

WeightBreakdown hypoelliptic_weight(const SdeModel& model, const Vec& x0,
                                    const BrownianPath& driver, const FlowBundle& bundle,
                                    const ClockSpec& clock, const Vec& v,
                                    const PerturbSpec& perturb) {
    WeightBreakdown out;
    const int n = model.n;
    const double dt = driver.grid.dt();
    const ClockPath cp = compute_clock(clock, bundle.traj.states, bundle.last_node(), dt,
                                       driver.grid.t);
    if (cp.sigma_node < 0) {
        out.status = bundle.traj.exploded ? PathStatus::explosion : PathStatus::clock_expired;
        return out;
    }
    const int is = cp.sigma_node;
    out.sigma_node = is;

    const CovariancePath cov = accumulate_covariance(bundle, is);
    const SpdInverse inv = try_invert_spd(cov.final_value());
    if (!inv.ok) {
        out.status = PathStatus::singular_covariance;
        return out;
    }

    const ClockRamp ramp{clock.t0, clock.ramp_start_frac};
    const Vec ell = (ramp.value(cp.T[static_cast<std::size_t>(is)]) / clock.t0) * v;
    const Vec ydz = stochastic_pullback_integral(bundle, driver, is);
    out.main_term = ydz.dot(inv.inverse * ell);

    double corr = 0.0;
    if (!perturb.skip_correction) {
        const Vec ell_dot = (ramp.deriv(cp.T[static_cast<std::size_t>(is)]) *
                             cp.Tprime[static_cast<std::size_t>(is)] / clock.t0) *
                            v;
        const Vec dds = -inv.inverse * (cov.rate_at(is) * (inv.inverse * ell)) +
                        inv.inverse * ell_dot;
        const double Tprime = cp.Tprime[static_cast<std::size_t>(is)];

        for (int k = 0; k < n; ++k) {
            const Mat shift_plus = perturbation_shift(bundle, k, perturb.delta, is);
            const Mat shift_minus = -shift_plus;
            const Resim up = resimulate(model, x0, driver, shift_plus, is);
            const Resim dn = resimulate(model, x0, driver, shift_minus, is);
            if (!up.ok || !dn.ok) {
                out.status = PathStatus::explosion;
                return out;
            }
            auto side = [&](const Resim& run, double& T_at_sigma, Vec& w) -> bool {
                const ClockPath cpl = compute_clock(clock, run.bundle.traj.states, is, dt,
                                                    driver.grid.t);
                T_at_sigma = cpl.T[static_cast<std::size_t>(is)];
                const CovariancePath cl = accumulate_covariance(run.bundle, is);
                const SpdInverse il = try_invert_spd(cl.final_value());
                if (!il.ok) return false;
                const Vec elll = (ramp.value(T_at_sigma) / clock.t0) * v;
                w = il.inverse * elll;
                return true;
            };
            double Tp = 0.0, Tm = 0.0;
            Vec wp(n), wm(n);
            if (!side(up, Tp, wp) || !side(dn, Tm, wm)) {
                out.status = PathStatus::singular_covariance;
                return out;
            }
            const double dcl_k = (wp[k] - wm[k]) / (2.0 * perturb.delta);
            const double dT_k = (Tp - Tm) / (2.0 * perturb.delta);
            const double dsigma_k = -dT_k / Tprime;
            corr += dcl_k + dds[k] * dsigma_k;
        }
    }
    out.correction = corr;
    out.weight = out.main_term - corr;
    out.status = PathStatus::ok;
    return out;
}

double bismut_covariance_weight(const SdeModel& model, const Vec& x0, const FlowBundle& bundle,
                                const BrownianPath& driver, const Vec& v, int upto_node,
                                const PerturbSpec& perturb) {
    const int n = model.n;
    if (bundle.last_node() < upto_node)
        throw SingularCovarianceError("bundle ends before the requested horizon");
    const CovariancePath cov = accumulate_covariance(bundle, upto_node);
    const SpdInverse inv = invert_spd(cov.final_value());

    const Vec ydz = stochastic_pullback_integral(bundle, driver, upto_node);
    double weight = ydz.dot(inv.inverse * v);

    if (!perturb.skip_correction) {
        for (int k = 0; k < n; ++k) {
            const Mat shift_plus = perturbation_shift(bundle, k, perturb.delta, upto_node);
            const Mat shift_minus = -shift_plus;
            const Resim up = resimulate(model, x0, driver, shift_plus, upto_node);
            const Resim dn = resimulate(model, x0, driver, shift_minus, upto_node);
            if (!up.ok || !dn.ok)
                throw SingularCovarianceError("perturbed re-simulation exploded");
            const Mat Cp = accumulate_covariance(up.bundle, upto_node).final_value();
            const Mat Cm = accumulate_covariance(dn.bundle, upto_node).final_value();
            const SpdInverse ip = invert_spd(Cp);
            const SpdInverse im = invert_spd(Cm);
            const Vec diff = (ip.inverse * v - im.inverse * v) / (2.0 * perturb.delta);
            weight -= diff[k];
        }
    }
    return weight;
}

// ---------------------------------------------------------------------------
// Control-based estimators

namespace {

ControlPath run_strategy(const ControlSpec& cs, const FlowBundle& bundle,
                         const BrownianPath& driver, const Vec& v, int sigma_node) {
    switch (cs.strategy) {
        case ControlStrategy::elliptic:
            return elliptic_control(bundle, v, cs.elliptic, sigma_node);
        case ControlStrategy::bangbang: {
            BangBangConfig cfg = cs.bangbang;
            if (cfg.max_horizon_node < 0 || cfg.max_horizon_node > sigma_node)
                cfg.max_horizon_node = sigma_node;
            return bangbang_control(bundle, v, cfg);
        }
        case ControlStrategy::barrier:
            return barrier_control(bundle, driver, v, cs.barrier);
    }
    throw std::logic_error("unknown control strategy");
}

// Default wiring for problems with a random stopping time: the elliptic ramp
// must be predictable, so it is driven by the barrier clock over the rule
// domain; the barrier strategy needs the rule domain too. The budget controls
// how early the ramp finishes; exits racing past it leave the control
// unterminated (excluded and counted by the caller).
ControlSpec adapt_control_spec(ControlSpec cs, const StoppingRule& rule,
                               double default_budget) {
    if (rule.domain) {
        if (cs.strategy == ControlStrategy::elliptic && !cs.elliptic.clock_domain) {
            cs.elliptic.clock_domain = rule.domain;
            if (cs.elliptic.clock_budget <= 0.0) cs.elliptic.clock_budget = default_budget;
        }
        if (cs.strategy == ControlStrategy::barrier && !cs.barrier.state_domain)
            cs.barrier.state_domain = rule.domain;
    }
    return cs;
}

}  // namespace

Estimate semigroup_derivative_control(const SdeModel& model, const Vec& x0, const Vec& v,
                                      const Payoff& f, const TimeGrid& grid,
                                      const StoppingRule& rule, const ControlSpec& cs_in,
                                      std::int64_t n_paths, std::uint64_t seed, int workers,
                                      PathTally* capture) {
    rule.validate(model.n);
    if (rule.domain && !domain_contains(*rule.domain, x0))
        throw std::invalid_argument("x0 must lie inside the stopping domain");
    const ControlSpec cs = adapt_control_spec(cs_in, rule, grid.t);
    PathTally tally(n_paths);
    const bool zero_direction = v.norm() == 0.0;

    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        if (zero_direction) return;  // weight is linear in v; exactly zero
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        const FlowBundle bundle =
            integrate_flow_bundle(model, x0, driver, StoppingRule::cap());

        // sigma = tau_D ^ t localizes the weight; the state runs on to t.
        int sigma_node = grid.m;
        if (rule.domain) {
            const auto exit =
                first_exit(bundle.traj.states, bundle.last_node(),
                           StoppingRule{rule.domain, StopMode::exit_and_cap});
            sigma_node = exit.value_or(bundle.last_node());
        }
        if (bundle.traj.exploded && bundle.last_node() < sigma_node) {
            tally.status[slot] = PathStatus::explosion;  // weight data incomplete
            return;
        }
        ControlPath ctrl;
        try {
            ctrl = run_strategy(cs, bundle, driver, v, sigma_node);
        } catch (const EllipticInapplicableError&) {
            tally.status[slot] = PathStatus::singular_covariance;
            return;
        }
        if (!ctrl.terminated) {
            tally.status[slot] = PathStatus::unterminated_control;
            return;
        }
        const double weight = -ito_integral(ctrl.k, driver, ctrl.weight_upto());
        double payoff = 0.0;  // exploded-after-sigma paths keep payoff 0
        if (!bundle.traj.exploded) {
            dsl::EvalScratch scratch;
            const Vec xt = bundle.traj.states.col(grid.m);
            payoff = f.f.eval(std::span<const double>(xt.data(),
                                                      static_cast<std::size_t>(model.n)),
                              scratch);
        }
        tally.value[slot] = payoff * weight;
        tally.weight[slot] = weight;
        tally.energy[slot] = ctrl.energy;
    });
    Estimate e = reduce_tally(tally);
    if (capture) *capture = tally;
    return e;
}

Estimate harmonic_derivative_control(const SdeModel& model, const Vec& x0, const Vec& v,
                                     const Payoff& u, const TimeGrid& grid,
                                     const StoppingRule& rule, const ControlSpec& cs_in,
                                     std::int64_t n_paths, std::uint64_t seed, int workers,
                                     PathTally* capture) {
    if (!rule.domain) throw std::invalid_argument("harmonic derivative needs a domain");
    rule.validate(model.n);
    if (!domain_contains(*rule.domain, x0))
        throw std::invalid_argument("x0 must lie inside the domain");
    // Exit times are usually much shorter than the grid cap; a small budget
    // keeps the ramp ahead of the boundary race.
    const ControlSpec cs = adapt_control_spec(cs_in, rule, grid.t / 50.0);
    PathTally tally(n_paths);

    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        const FlowBundle bundle = integrate_flow_bundle(
            model, x0, driver, StoppingRule{rule.domain, StopMode::exit_only});
        if (bundle.traj.exploded) {
            tally.status[slot] = PathStatus::explosion;
            return;
        }
        if (!bundle.traj.stop_index) {
            tally.status[slot] = PathStatus::no_exit;
            return;
        }
        const int exit_node = *bundle.traj.stop_index;
        ControlPath ctrl;
        try {
            ctrl = run_strategy(cs, bundle, driver, v, exit_node);
        } catch (const EllipticInapplicableError&) {
            tally.status[slot] = PathStatus::singular_covariance;
            return;
        }
        if (!ctrl.terminated && v.norm() > 0.0) {
            tally.status[slot] = PathStatus::unterminated_control;
            return;
        }
        const double weight = -ito_integral(ctrl.k, driver, ctrl.weight_upto());
        const Vec xb = boundary_crossing_point(*rule.domain,
                                               bundle.traj.states.col(exit_node - 1),
                                               bundle.traj.states.col(exit_node));
        dsl::EvalScratch scratch;
        const double payoff = u.f.eval(
            std::span<const double>(xb.data(), static_cast<std::size_t>(model.n)), scratch);
        tally.value[slot] = payoff * weight;
        tally.weight[slot] = weight;
        tally.energy[slot] = ctrl.energy;
    });
    if (capture) *capture = tally;
    return reduce_tally(tally);
}

// ---------------------------------------------------------------------------
// Covariance-based estimators

Estimate semigroup_derivative_covariance(const SdeModel& model, const Vec& x0, const Vec& v,
                                         const Payoff& f, const TimeGrid& grid,
                                         const PerturbSpec& perturb, std::int64_t n_paths,
                                         std::uint64_t seed, int workers, PathTally* capture) {
    PathTally tally(n_paths);
    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        const FlowBundle bundle =
            integrate_flow_bundle(model, x0, driver, StoppingRule::cap());
        if (bundle.traj.exploded) {
            tally.status[slot] = PathStatus::explosion;
            return;
        }
        double weight = 0.0;
        try {
            weight = bismut_covariance_weight(model, x0, bundle, driver, v, grid.m, perturb);
        } catch (const SingularCovarianceError&) {
            tally.status[slot] = PathStatus::singular_covariance;
            return;
        }
        dsl::EvalScratch scratch;
        const Vec xt = bundle.traj.states.col(grid.m);
        const double payoff = f.f.eval(
            std::span<const double>(xt.data(), static_cast<std::size_t>(model.n)), scratch);
        tally.value[slot] = payoff * weight;
        tally.weight[slot] = weight;
    });
    if (capture) *capture = tally;
    return reduce_tally(tally);
}

Estimate general_hypoelliptic_derivative(const SdeModel& model, const Vec& x0, const Vec& v,
                                         const Payoff& payoff, DerivativeTarget target,
                                         const TimeGrid& grid, const StoppingRule& rule,
                                         const ClockSpec& clock, const PerturbSpec& perturb,
                                         std::int64_t n_paths, std::uint64_t seed,
                                         int workers, PathTally* capture) {
    if (target == DerivativeTarget::harmonic && !rule.domain)
        throw std::invalid_argument("harmonic target needs a domain in the stopping rule");
    if (clock.domain && !domain_contains(*clock.domain, x0))
        throw std::invalid_argument("x0 must lie inside the clock domain");
    PathTally tally(n_paths);

    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        const StoppingRule bundle_rule =
            target == DerivativeTarget::semigroup
                ? StoppingRule::cap()
                : StoppingRule{rule.domain, StopMode::exit_only};
        const FlowBundle bundle = integrate_flow_bundle(model, x0, driver, bundle_rule);

        if (target == DerivativeTarget::harmonic) {
            if (bundle.traj.exploded) {
                tally.status[slot] = PathStatus::explosion;
                return;
            }
            if (!bundle.traj.stop_index) {
                tally.status[slot] = PathStatus::no_exit;
                return;
            }
        }
        const WeightBreakdown wb =
            hypoelliptic_weight(model, x0, driver, bundle, clock, v, perturb);
        if (wb.status != PathStatus::ok) {
            tally.status[slot] = wb.status;
            return;
        }
        dsl::EvalScratch scratch;
        double value = 0.0;
        if (target == DerivativeTarget::semigroup) {
            if (!bundle.traj.exploded) {
                const Vec xt = bundle.traj.states.col(grid.m);
                value = payoff.f.eval(
                    std::span<const double>(xt.data(), static_cast<std::size_t>(model.n)),
                    scratch);
            }
        } else {
            const int exit_node = *bundle.traj.stop_index;
            const Vec xb = boundary_crossing_point(*rule.domain,
                                                   bundle.traj.states.col(exit_node - 1),
                                                   bundle.traj.states.col(exit_node));
            value = payoff.f.eval(
                std::span<const double>(xb.data(), static_cast<std::size_t>(model.n)),
                scratch);
        }
        tally.value[slot] = value * wb.weight;
        tally.weight[slot] = wb.weight;
    });
    if (capture) *capture = tally;
    return reduce_tally(tally);
}

// ---------------------------------------------------------------------------
// Lambda-perturbation engine

LambdaDerivative lambda_perturbation_derivative(
    const SdeModel& model, const Vec& x0, const BrownianPath& driver,
    const std::vector<Mat>& a_steps, double delta, const PathFunctional& functional,
    bool richardson, int upto_node) {
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    const int n = model.n;
    const int steps = upto_node >= 0 ? std::min(upto_node, driver.grid.m) : driver.grid.m;
    if (static_cast<int>(a_steps.size()) < steps)
        throw std::invalid_argument("a process shorter than the grid");

    auto run_one = [&](int k, double eps) {
        Mat shift(model.r, std::max(1, steps));
        for (int i = 0; i < steps; ++i)
            shift.col(i) = eps * a_steps[static_cast<std::size_t>(i)].row(k).transpose();
        FlowBundle b = integrate_flow_bundle(model, x0, driver, StoppingRule::cap(), &shift,
                                             kDefaultExplosionCap, steps);
        if (b.traj.exploded)
            throw std::runtime_error("perturbed re-simulation exploded");
        Vec lambda = Vec::Zero(n);
        lambda[k] = eps;
        return functional(PerturbedRun{b, lambda, &shift, driver, driver.grid.dt()});
    };

    LambdaDerivative out;
    for (int k = 0; k < n; ++k) {
        const Mat up = run_one(k, delta);
        const Mat dn = run_one(k, -delta);
        out.d.push_back((up - dn) / (2.0 * delta));
        if (richardson) {
            const Mat up2 = run_one(k, 0.5 * delta);
            const Mat dn2 = run_one(k, -0.5 * delta);
            out.d_halved.push_back((up2 - dn2) / delta);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Martingale diagnostic

MartingaleDiagnostic martingale_diagnostic(const SdeModel& model, const Vec& x0, const Vec& v,
                                           const SpaceTimeFn& fn, const TimeGrid& grid,
                                           const std::optional<ControlSpec>& cs,
                                           const std::vector<double>& checkpoints,
                                           std::int64_t n_paths, std::uint64_t seed,
                                           int workers) {
    MartingaleDiagnostic out;
    out.checkpoint_times = checkpoints;
    const std::size_t nc = checkpoints.size();
    std::vector<int> nodes;
    for (double c : checkpoints)
        nodes.push_back(std::min<int>(grid.m, static_cast<int>(std::lround(c / grid.dt()))));

    std::vector<double> samples(static_cast<std::size_t>(n_paths) * nc, 0.0);
    std::vector<PathStatus> status(static_cast<std::size_t>(n_paths), PathStatus::ok);

    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        const FlowBundle bundle =
            integrate_flow_bundle(model, x0, driver, StoppingRule::cap());
        if (bundle.traj.exploded) {
            status[slot] = PathStatus::explosion;
            return;
        }
        ControlPath ctrl;
        bool with_control = false;
        if (cs) {
            try {
                ctrl = run_strategy(*cs, bundle, driver, v, grid.m);
                with_control = true;
            } catch (const EllipticInapplicableError&) {
                status[slot] = PathStatus::singular_covariance;
                return;
            }
        }
        for (std::size_t c = 0; c < nc; ++c) {
            const int node = nodes[c];
            const double s = grid.node_time(node);
            const Vec x = bundle.traj.states.col(node);
            Vec h = v;
            double stoch = 0.0;
            if (with_control) {
                h = ctrl.h.col(std::min(node, ctrl.last_node));
                stoch = ito_integral(ctrl.k, driver, std::min(node, ctrl.weight_upto()));
            }
            const double m_val =
                fn.differential(s, x).dot(bundle.jacobian_at(node) * h) -
                fn.value(s, x) * stoch;
            samples[slot * nc + c] = m_val;
        }
    });

    std::vector<unsigned char> include(static_cast<std::size_t>(n_paths), 0);
    for (std::size_t i = 0; i < include.size(); ++i) {
        out.excluded.count(status[i]);
        include[i] = status[i] == PathStatus::ok ? 1 : 0;
    }
    out.reference = fn.differential(0.0, x0).dot(v);
    out.pass = true;
    for (std::size_t c = 0; c < nc; ++c) {
        std::vector<double> col(static_cast<std::size_t>(n_paths), 0.0);
        for (std::int64_t i = 0; i < n_paths; ++i)
            col[static_cast<std::size_t>(i)] = samples[static_cast<std::size_t>(i) * nc + c];
        const OrderedMoments m = ordered_moments(col, include);
        out.mean.push_back(m.mean);
        out.se.push_back(m.se);
        out.n_effective = m.count;
        const double dev = std::abs(m.mean - out.reference);
        out.max_abs_deviation = std::max(out.max_abs_deviation, dev);
        const double sigmas = m.se > 0.0 ? dev / m.se : (dev > 1e-12 ? 1e99 : 0.0);
        out.max_deviation_sigmas = std::max(out.max_deviation_sigmas, sigmas);
        if (sigmas > 3.0) out.pass = false;
    }
    return out;
}

SpaceTimeFn inner_mc_space_time(const SdeModel& model, const Payoff& f, double t,
                                int base_steps, std::int64_t inner_paths, std::uint64_t seed,
                                double eps) {
    auto model_ptr = std::make_shared<SdeModel>(model);
    auto payoff_ptr = std::make_shared<Payoff>(f);
    auto estimate_value = [model_ptr, payoff_ptr, t, base_steps, inner_paths,
                           seed](double s, const Vec& x) {
        const double remaining = t - s;
        if (remaining <= 0.0) {
            dsl::EvalScratch scratch;
            return payoff_ptr->f.eval(
                std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                scratch);
        }
        const int m_sub = std::max(8, static_cast<int>(base_steps * remaining / t));
        const TimeGrid sub(remaining, m_sub);
        double acc = 0.0;
        std::int64_t used = 0;
        dsl::EvalScratch scratch;
        for (std::int64_t i = 0; i < inner_paths; ++i) {
            const BrownianPath d = sample_brownian(model_ptr->r, sub, seed ^ 0x7e0full, i);
            const Trajectory tr = integrate_state(*model_ptr, x, d, StoppingRule::cap());
            if (tr.exploded) continue;  // minimal semigroup: killed paths score 0
            const Vec xe = tr.states.col(sub.m);
            acc += payoff_ptr->f.eval(
                std::span<const double>(xe.data(), static_cast<std::size_t>(xe.size())),
                scratch);
            ++used;
        }
        return used > 0 ? acc / static_cast<double>(inner_paths) : 0.0;
    };
    SpaceTimeFn out;
    out.value = estimate_value;
    out.differential = [estimate_value, eps](double s, const Vec& x) {
        Vec g(x.size());
        for (int c = 0; c < x.size(); ++c) {
            Vec xp = x, xm = x;
            xp[c] += eps;
            xm[c] -= eps;
            g[c] = (estimate_value(s, xp) - estimate_value(s, xm)) / (2.0 * eps);
        }
        return g;
    };
    return out;
}

// ---------------------------------------------------------------------------
// Finite differences with common random numbers

Estimate finite_difference_oracle(const SdeModel& model, const Vec& x0, const Vec& v,
                                  const Payoff& f, const TimeGrid& grid, double eps,
                                  std::int64_t n_paths, std::uint64_t seed, int workers,
                                  PathTally* capture) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    PathTally tally(n_paths);
    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(model.r, grid, seed, idx);
        dsl::EvalScratch scratch;
        auto endpoint_payoff = [&](const Vec& start) {
            const Trajectory tr = integrate_state(model, start, driver, StoppingRule::cap());
            if (tr.exploded) return 0.0;  // killed by the minimal-semigroup convention
            const Vec xe = tr.states.col(grid.m);
            return f.f.eval(
                std::span<const double>(xe.data(), static_cast<std::size_t>(model.n)),
                scratch);
        };
        const double up = endpoint_payoff(x0 + eps * v);
        const double dn = endpoint_payoff(x0 - eps * v);
        tally.value[slot] = (up - dn) / (2.0 * eps);
    });
    if (capture) *capture = tally;
    return reduce_tally(tally);
}

// ---------------------------------------------------------------------------
// Asian Deltas

Estimate asian_delta(const AsianSpec& spec, double T, int steps, std::int64_t n_paths,
                     std::uint64_t seed, int workers, const PerturbSpec& perturb,
                     PathTally* capture) {
    const SdeModel model = zoo::make_asian_model(spec.sigma_src, spec.mu_src);
    Vec x0 = Vec::Zero(2);
    x0[0] = spec.s0;
    const TimeGrid grid(T, steps);
    const Payoff payoff = make_payoff(spec.payoff_src, 2);
    Vec v = Vec::Zero(2);
    v[0] = 1.0;

    if (spec.method == AsianMethod::general) {
        ClockSpec clock;
        clock.t0 = T;  // identity clock: fixed-horizon weight
        PerturbSpec p = perturb;
        return general_hypoelliptic_derivative(model, x0, v, payoff,
                                               DerivativeTarget::semigroup, grid,
                                               StoppingRule::cap(), clock, p, n_paths, seed,
                                               workers, capture);
    }

    // closed_weight: only valid for constant sigma and vanishing mu.
    const dsl::Expr sigma_expr = dsl::parse_field_expr(spec.sigma_src, 2);
    const dsl::Expr mu_expr = dsl::parse_field_expr(spec.mu_src, 2);
    const dsl::Expr dsigma = dsl::derivative(sigma_expr, 0);
    dsl::EvalScratch scratch;
    for (double sprobe : {0.25, 0.8, 1.0, 1.7, 3.1}) {
        const double probe[2] = {sprobe, 0.0};
        std::span<const double> xs(probe, 2);
        if (std::abs(dsigma.eval(xs, scratch)) > 1e-12 ||
            std::abs(mu_expr.eval(xs, scratch)) > 1e-12)
            throw std::invalid_argument(
                "closed_weight needs constant sigma and zero mu; use method=general");
    }
    const double probe0[2] = {spec.s0, 0.0};
    const double sigma = sigma_expr.eval(std::span<const double>(probe0, 2), scratch);
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");

    PathTally tally(n_paths);
    sweep_paths(n_paths, workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(1, grid, seed, idx);
        const Trajectory tr = integrate_state(model, x0, driver, StoppingRule::cap());
        if (tr.exploded) {
            tally.status[slot] = PathStatus::explosion;
            return;
        }
        const double wT = driver.z(0, grid.m);
        const Vec wpath = driver.z.row(0).transpose();
        const double int_w = time_integral(wpath, grid.dt(), grid.m);
        const double weight = 6.0 / (sigma * T) * (int_w / T - wT / 3.0);
        const Vec xe = tr.states.col(grid.m);
        dsl::EvalScratch sc;
        const double pay = payoff.f.eval(
            std::span<const double>(xe.data(), 2), sc);
        tally.value[slot] = pay * weight;
        tally.weight[slot] = weight;
    });
    if (capture) *capture = tally;
    return reduce_tally(tally);
}

// ---------------------------------------------------------------------------

Vec boundary_crossing_point(const Domain& d, const Vec& inside, const Vec& outside) {
    double theta = 1.0;
    if (std::holds_alternative<Box>(d)) {
        const Box& b = std::get<Box>(d);
        for (int c = 0; c < b.center.size(); ++c) {
            const double lo = b.center[c] - b.radii[c];
            const double hi = b.center[c] + b.radii[c];
            const double a = inside[c], z = outside[c];
            if (z > hi && z != a) theta = std::min(theta, (hi - a) / (z - a));
            if (z < lo && z != a) theta = std::min(theta, (lo - a) / (z - a));
        }
    } else {
        const Ball& b = std::get<Ball>(d);
        const Vec p = inside - b.center;
        const Vec q = outside - inside;
        const double qq = q.squaredNorm();
        if (qq > 0.0) {
            const double pq = p.dot(q);
            const double disc = pq * pq - qq * (p.squaredNorm() - b.radius * b.radius);
            if (disc >= 0.0) theta = std::min(theta, (-pq + std::sqrt(disc)) / qq);
        }
    }
    theta = std::clamp(theta, 0.0, 1.0);
    return inside + theta * (outside - inside);
}

}  // namespace hypomc
