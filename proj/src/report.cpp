#include "hypomc/report.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>

#include "hypomc/brackets.hpp"
#include "hypomc/sweep.hpp"
#include "hypomc/zoo.hpp"

namespace hypomc::io {

namespace {

Estimate dispatch(const ExperimentConfig& cfg, PathTally* capture) {
    const Payoff payoff = make_payoff(cfg.payoff_src, cfg.model.n);
    switch (cfg.kind) {
        case EstimatorKind::semigroup_control:
            return semigroup_derivative_control(cfg.model, cfg.x0, cfg.v, payoff, cfg.grid,
                                                cfg.rule, cfg.control, cfg.paths, cfg.seed,
                                                cfg.workers, capture);
        case EstimatorKind::harmonic_control:
            return harmonic_derivative_control(cfg.model, cfg.x0, cfg.v, payoff, cfg.grid,
                                               cfg.rule, cfg.control, cfg.paths, cfg.seed,
                                               cfg.workers, capture);
        case EstimatorKind::semigroup_covariance:
            return semigroup_derivative_covariance(cfg.model, cfg.x0, cfg.v, payoff, cfg.grid,
                                                   cfg.perturb, cfg.paths, cfg.seed,
                                                   cfg.workers, capture);
        case EstimatorKind::general_semigroup:
            return general_hypoelliptic_derivative(cfg.model, cfg.x0, cfg.v, payoff,
                                                   DerivativeTarget::semigroup, cfg.grid,
                                                   cfg.rule, cfg.clock, cfg.perturb, cfg.paths,
                                                   cfg.seed, cfg.workers, capture);
        case EstimatorKind::general_harmonic:
            return general_hypoelliptic_derivative(cfg.model, cfg.x0, cfg.v, payoff,
                                                   DerivativeTarget::harmonic, cfg.grid,
                                                   cfg.rule, cfg.clock, cfg.perturb, cfg.paths,
                                                   cfg.seed, cfg.workers, capture);
        case EstimatorKind::fd_oracle:
            return finite_difference_oracle(cfg.model, cfg.x0, cfg.v, payoff, cfg.grid,
                                            cfg.fd_eps, cfg.paths, cfg.seed, cfg.workers,
                                            capture);
        case EstimatorKind::asian_closed:
        case EstimatorKind::asian_general:
            return asian_delta(cfg.asian, cfg.grid.t, cfg.grid.m, cfg.paths, cfg.seed,
                               cfg.workers, cfg.perturb, capture);
    }
    throw std::logic_error("unhandled estimator kind");
}

const char* status_name(PathStatus s) {
    switch (s) {
        case PathStatus::ok: return "ok";
        case PathStatus::explosion: return "explosion";
        case PathStatus::singular_covariance: return "singular_covariance";
        case PathStatus::unterminated_control: return "unterminated_control";
        case PathStatus::clock_expired: return "clock_expired";
        case PathStatus::no_exit: return "no_exit";
    }
    return "?";
}

}  // namespace

RunReport run_config(const ExperimentConfig& cfg, std::ostream* per_path_out) {
    RunReport report;
    report.config_hash = cfg.config_hash;
    report.estimator_kind = to_string(cfg.kind);
    report.canonical_config = cfg.canonical;

    PathTally tally(0);
    const bool want_paths = per_path_out && cfg.per_path_csv;
    const auto t0 = std::chrono::steady_clock::now();
    report.estimate = dispatch(cfg, want_paths ? &tally : nullptr);
    const auto t1 = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    report.paths_per_second =
        report.wall_seconds > 0.0 ? static_cast<double>(cfg.paths) / report.wall_seconds : 0.0;

    if (want_paths) {
        *per_path_out << "path_index,status,value,weight,energy\n";
        for (std::size_t i = 0; i < tally.value.size(); ++i)
            *per_path_out << i << ',' << status_name(tally.status[i]) << ',' << tally.value[i]
                          << ',' << tally.weight[i] << ',' << tally.energy[i] << "\n";
    }
    return report;
}

json report_to_json(const RunReport& report, bool include_config_echo) {
    json out;
    out["config_hash"] = report.config_hash;
    out["estimator"] = report.estimator_kind;
    out["estimate"]["mean"] = report.estimate.mean;
    out["estimate"]["se"] = report.estimate.se;
    out["estimate"]["n_requested"] = report.estimate.n_requested;
    out["estimate"]["n_effective"] = report.estimate.n_effective;
    out["exclusions"]["explosion"] = report.estimate.excluded.explosion;
    out["exclusions"]["singular_covariance"] = report.estimate.excluded.singular_covariance;
    out["exclusions"]["unterminated_control"] = report.estimate.excluded.unterminated_control;
    out["exclusions"]["clock_expired"] = report.estimate.excluded.clock_expired;
    out["exclusions"]["no_exit"] = report.estimate.excluded.no_exit;
    for (const auto& [key, val] : report.estimate.diagnostics)
        out["diagnostics"][key] = val;
    if (include_config_echo) out["config"] = json::parse(report.canonical_config);
    out["timing"]["wall_seconds"] = report.wall_seconds;
    out["timing"]["paths_per_second"] = report.paths_per_second;
    return out;
}

void write_bundle_csv(std::ostream& os, const FlowBundle& bundle, const TimeGrid& grid) {
    const int n = bundle.n;
    os << "t";
    for (int c = 0; c < n; ++c) os << ",X" << c + 1;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) os << ",J" << i + 1 << j + 1;
    for (int f = 0; f < bundle.r; ++f)
        for (int c = 0; c < n; ++c) os << ",Y" << f + 1 << "_" << c + 1;
    os << "\n";
    for (int node = 0; node <= bundle.last_node(); ++node) {
        os << grid.node_time(node);
        for (int c = 0; c < n; ++c) os << "," << bundle.traj.states(c, node);
        const Mat J = bundle.jacobian_at(node);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) os << "," << J(i, j);
        for (int f = 0; f < bundle.r; ++f)
            for (int c = 0; c < n; ++c)
                os << "," << bundle.pullback[static_cast<std::size_t>(f)](c, node);
        os << "\n";
    }
}

ControlStats control_statistics(const ExperimentConfig& cfg) {
    ControlStats stats;
    stats.n_paths = cfg.paths;
    const ControlSpec& cs = cfg.control;
    const double vn = cfg.v.norm();

    std::vector<double> sigma_times(static_cast<std::size_t>(cfg.paths), 0.0);
    std::vector<double> energies(static_cast<std::size_t>(cfg.paths), 0.0);
    std::vector<double> tvs(static_cast<std::size_t>(cfg.paths), 0.0);
    std::vector<unsigned char> term(static_cast<std::size_t>(cfg.paths), 0);
    std::vector<PathStatus> status(static_cast<std::size_t>(cfg.paths), PathStatus::ok);

    sweep_paths(cfg.paths, cfg.workers, [&](std::int64_t idx) {
        const std::size_t slot = static_cast<std::size_t>(idx);
        const BrownianPath driver = sample_brownian(cfg.model.r, cfg.grid, cfg.seed, idx);
        const StoppingRule bundle_rule =
            cfg.rule.domain ? StoppingRule{cfg.rule.domain, StopMode::exit_and_cap}
                            : StoppingRule::cap();
        const FlowBundle bundle = integrate_flow_bundle(cfg.model, cfg.x0, driver, bundle_rule);
        if (bundle.traj.exploded) {
            status[slot] = PathStatus::explosion;
            return;
        }
        ControlPath ctrl;
        try {
            switch (cs.strategy) {
                case ControlStrategy::elliptic: {
                    EllipticSpec spec = cs.elliptic;
                    if (cfg.rule.domain && !spec.clock_domain) {
                        spec.clock_domain = cfg.rule.domain;
                        spec.clock_budget = cfg.grid.t;
                    }
                    ctrl = elliptic_control(bundle, cfg.v, spec, bundle.last_node());
                    break;
                }
                case ControlStrategy::bangbang:
                    ctrl = bangbang_control(bundle, cfg.v, cs.bangbang);
                    break;
                case ControlStrategy::barrier: {
                    BarrierSpec spec = cs.barrier;
                    if (cfg.rule.domain && !spec.state_domain)
                        spec.state_domain = cfg.rule.domain;
                    ctrl = barrier_control(bundle, driver, cfg.v, spec);
                    break;
                }
            }
        } catch (const EllipticInapplicableError&) {
            status[slot] = PathStatus::singular_covariance;
            return;
        }
        const ControlVerification ver =
            verify_control(ctrl, bundle, cfg.v, cs.bangbang.alpha);
        term[slot] = ctrl.terminated ? 1 : 0;
        energies[slot] = ctrl.energy;
        tvs[slot] = ver.total_variation;
        sigma_times[slot] =
            ctrl.sigma_prime ? *ctrl.sigma_prime * cfg.grid.dt() : cfg.grid.t;
    });

    double sigma_sum = 0.0, energy_sum = 0.0;
    std::int64_t included = 0;
    for (std::size_t i = 0; i < term.size(); ++i) {
        stats.excluded.count(status[i]);
        if (status[i] != PathStatus::ok) continue;
        ++included;
        energy_sum += energies[i];
        if (term[i]) {
            ++stats.terminated;
            sigma_sum += sigma_times[i];
        }
        if (vn > 0.0) {
            stats.max_energy_ratio = std::max(stats.max_energy_ratio, energies[i] / vn);
            stats.max_tv_ratio = std::max(
                stats.max_tv_ratio, tvs[i] / (2.0 * vn / cs.bangbang.alpha));
        }
    }
    stats.termination_rate =
        included > 0 ? static_cast<double>(stats.terminated) / static_cast<double>(included)
                     : 0.0;
    stats.mean_sigma_prime =
        stats.terminated > 0 ? sigma_sum / static_cast<double>(stats.terminated) : 0.0;
    stats.mean_energy = included > 0 ? energy_sum / static_cast<double>(included) : 0.0;
    return stats;
}

// ---------------------------------------------------------------------------
// Validation suite

namespace {

bool check_flow_consistency(std::ostream& log) {
    bool ok = true;
    for (const char* name : {"grushin", "picard"}) {
        const zoo::ZooEntry entry = zoo::get_model(name);
        const TimeGrid grid(1.0, 2048);
        double worst = 0.0;
        for (std::int64_t p = 0; p < 4; ++p) {
            const BrownianPath driver = sample_brownian(entry.model.r, grid, 77, p);
            const FlowBundle bundle =
                integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
            const Mat direct =
                pullback_direct(entry.model, bundle, driver, entry.model.field(1), entry.x0);
            for (int node = 0; node <= bundle.last_node(); ++node) {
                const double d =
                    (direct.col(node) - bundle.pullback[0].col(node)).cwiseAbs().maxCoeff();
                worst = std::max(worst, d);
            }
        }
        log << "    pullback cross-check " << name << ": sup distance " << worst << "\n";
        ok = ok && worst <= 2e-2;
    }
    return ok;
}

bool check_lambda_min_bound(std::ostream& log, std::int64_t n_paths) {
    const zoo::ZooEntry entry = zoo::get_model("grushin");
    const TimeGrid grid(1.0, 512);
    double worst_violation = 0.0;
    for (std::int64_t p = 0; p < n_paths; ++p) {
        const BrownianPath driver = sample_brownian(2, grid, 101, p);
        const FlowBundle bundle =
            integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
        for (int node = 0; node <= bundle.last_node(); ++node) {
            const Mat c = bundle.covariance_rate(node);
            const double tr = c(0, 0) + c(1, 1);
            const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
            const double lam_min = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
            const Vec z = driver.z.col(node);
            const double bound = z[0] * z[0] / (1.0 + z.squaredNorm());
            worst_violation = std::max(worst_violation, bound - 1e-6 - lam_min);
        }
    }
    log << "    smallest-eigenvalue bound: worst violation " << worst_violation << "\n";
    return worst_violation <= 0.0;
}

bool check_weight_identity(std::ostream& log, std::int64_t n_paths) {
    const double sigma = 0.3, T = 1.0;
    const zoo::ZooEntry entry = zoo::get_model("asian_trivial", {{"sigma", sigma}});
    const TimeGrid grid(T, 1024);
    Vec v = Vec::Zero(2);
    v[0] = 1.0;
    PerturbSpec perturb;
    perturb.skip_correction = true;  // deterministic pullbacks
    double worst = 0.0;
    for (std::int64_t p = 0; p < n_paths; ++p) {
        const BrownianPath driver = sample_brownian(1, grid, 2024, p);
        const FlowBundle bundle =
            integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
        const double w =
            bismut_covariance_weight(entry.model, entry.x0, bundle, driver, v, grid.m, perturb);
        // Right-point quadrature is the exact discrete partner of the
        // left-point stochastic integral in the weight.
        double int_w = 0.0;
        for (int i = 0; i < grid.m; ++i) int_w += driver.z(0, i + 1) * grid.dt();
        const double wT = driver.z(0, grid.m);
        const double oracle = 6.0 / (sigma * T) * (int_w / T - wT / 3.0);
        const double rel = std::abs(w - oracle) / std::max(1.0, std::abs(oracle));
        worst = std::max(worst, rel);
    }
    log << "    pathwise weight identity: worst relative error " << worst << "\n";
    return worst <= 1e-2;
}

bool check_martingale(std::ostream& log, std::int64_t n_paths, int workers) {
    bool ok = true;
    {
        const double t = 1.0;
        const zoo::ZooEntry entry = zoo::get_model("asian_trivial", {{"sigma", 0.3}});
        SpaceTimeFn fn;
        fn.value = [t](double s, const Vec& x) { return x[1] + x[0] * (t - s); };
        fn.differential = [t](double s, const Vec& x) {
            (void)x;
            Vec g(2);
            g << t - s, 1.0;
            return g;
        };
        Vec v = Vec::Zero(2);
        v[0] = 1.0;
        ControlSpec cs;
        cs.strategy = ControlStrategy::bangbang;
        const MartingaleDiagnostic diag =
            martingale_diagnostic(entry.model, entry.x0, v, fn, TimeGrid(t, 256), cs,
                                  {0.25, 0.5, 0.75}, n_paths, 404, workers);
        log << "    martingale (running-average pair): max deviation "
            << diag.max_deviation_sigmas << " SE\n";
        ok = ok && diag.pass;
    }
    {
        const double t = 1.0, sigma = 1.0;
        const zoo::ZooEntry entry = zoo::get_model("elliptic1d", {{"sigma", sigma}});
        SpaceTimeFn fn;
        fn.value = [t, sigma](double s, const Vec& x) {
            return x[0] * x[0] + sigma * sigma * (t - s);
        };
        fn.differential = [](double, const Vec& x) {
            return Vec::Constant(1, 2.0 * x[0]);
        };
        const Vec v = Vec::Constant(1, 1.0);
        ControlSpec cs;
        cs.strategy = ControlStrategy::elliptic;
        const MartingaleDiagnostic diag =
            martingale_diagnostic(entry.model, entry.x0, v, fn, TimeGrid(t, 256), cs,
                                  {0.25, 0.5, 0.75}, n_paths, 405, workers);
        log << "    martingale (scalar quadratic): max deviation "
            << diag.max_deviation_sigmas << " SE\n";
        ok = ok && diag.pass;
    }
    return ok;
}

bool check_worker_determinism(std::ostream& log, std::int64_t n_paths) {
    const zoo::ZooEntry entry = zoo::get_model("elliptic1d");
    const Payoff f = make_payoff("x1^2", 1);
    const Vec v = Vec::Constant(1, 1.0);
    PerturbSpec perturb;
    perturb.skip_correction = true;
    const TimeGrid grid(1.0, 128);
    const Estimate a = semigroup_derivative_covariance(entry.model, entry.x0, v, f, grid,
                                                       perturb, n_paths, 7, 1);
    const Estimate b = semigroup_derivative_covariance(entry.model, entry.x0, v, f, grid,
                                                       perturb, n_paths, 7, 4);
    const bool same = a.mean == b.mean && a.se == b.se;
    log << "    worker invariance: " << (same ? "bit-identical" : "MISMATCH") << "\n";
    return same;
}

bool check_energy_bounds(std::ostream& log, std::int64_t n_paths) {
    bool ok = true;
    for (const char* name : {"elliptic1d", "grushin", "picard"}) {
        const zoo::ZooEntry entry = zoo::get_model(name);
        const TimeGrid grid(4.0, 2048);
        Vec v = Vec::Zero(entry.model.n);
        v[entry.model.n - 1] = 1.0;
        BangBangConfig cfg;
        double worst_energy = 0.0, worst_tv = 0.0;
        std::int64_t terminated = 0;
        for (std::int64_t p = 0; p < n_paths; ++p) {
            const BrownianPath driver = sample_brownian(entry.model.r, grid, 55, p);
            const FlowBundle bundle =
                integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
            const ControlPath ctrl = bangbang_control(bundle, v, cfg);
            if (!ctrl.terminated) continue;
            ++terminated;
            const ControlVerification ver = verify_control(ctrl, bundle, v, cfg.alpha);
            worst_energy = std::max(worst_energy, ctrl.energy / v.norm());
            worst_tv = std::max(worst_tv, ver.total_variation / (2.0 * v.norm() / cfg.alpha));
        }
        log << "    energy bound " << name << ": " << terminated << "/" << n_paths
            << " terminated, max energy ratio " << worst_energy << ", max TV ratio "
            << worst_tv << "\n";
        ok = ok && worst_energy <= 1.0 + 1e-6 && worst_tv <= 1.0 + 1e-6;
    }
    return ok;
}

}  // namespace

ValidationOutcome run_validation_suite(std::int64_t n_paths, int workers, std::ostream& log) {
    ValidationOutcome out;
    auto run = [&](const std::string& name, bool result) {
        out.checks.emplace_back(name, result);
        out.all_ok = out.all_ok && result;
        log << (result ? "[ok]   " : "[FAIL] ") << name << "\n";
    };
    log << "flow consistency\n";
    run("flow consistency (pullback cross-check)", check_flow_consistency(log));
    log << "covariance rate bound\n";
    run("smallest-eigenvalue bound", check_lambda_min_bound(log, std::max<std::int64_t>(20, n_paths / 10)));
    log << "pathwise weight identity\n";
    run("pathwise weight identity", check_weight_identity(log, std::max<std::int64_t>(50, n_paths / 4)));
    log << "martingale diagnostics\n";
    run("martingale diagnostics", check_martingale(log, n_paths, workers));
    log << "reproducibility\n";
    run("worker invariance", check_worker_determinism(log, std::max<std::int64_t>(100, n_paths / 4)));
    log << "control energy bounds\n";
    run("control energy bounds", check_energy_bounds(log, std::max<std::int64_t>(50, n_paths / 5)));
    return out;
}

}  // namespace hypomc::io
