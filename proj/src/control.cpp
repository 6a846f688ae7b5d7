#include "hypomc/control.hpp"

#include <cmath>

#include "hypomc/ramp.hpp"

namespace hypomc {

const char* to_string(ControlStrategy s) {
    switch (s) {
        case ControlStrategy::elliptic: return "elliptic";
        case ControlStrategy::bangbang: return "bangbang";
        case ControlStrategy::barrier: return "barrier";
    }
    return "?";
}

namespace {

ControlPath make_empty(const FlowBundle& bundle, ControlStrategy strategy, int steps) {
    ControlPath c;
    c.strategy = strategy;
    c.last_node = steps;
    c.k = Mat::Zero(bundle.r, std::max(1, steps));
    c.h = Mat::Zero(bundle.n, steps + 1);
    c.active.assign(static_cast<std::size_t>(std::max(1, steps)), 0);
    return c;
}

double quadratic_bump(const Domain& d, const Vec& x) {
    if (std::holds_alternative<Box>(d)) {
        const Box& b = std::get<Box>(d);
        double phi = 1.0;
        for (int i = 0; i < b.center.size(); ++i) {
            const double u = (x[i] - b.center[i]) / b.radii[i];
            phi *= std::max(0.0, 1.0 - u * u);
        }
        return phi;
    }
    const Ball& b = std::get<Ball>(d);
    const double u2 = (x - b.center).squaredNorm() / (b.radius * b.radius);
    return std::max(0.0, 1.0 - u2);
}

}  // namespace

double barrier_value(const std::optional<Domain>& state_domain,
                     const std::optional<Ball>& driver_ball, const Vec& x, const Vec& z,
                     double clamp) {
    double phi = 1.0;
    if (state_domain) phi *= quadratic_bump(*state_domain, x);
    if (driver_ball) phi *= quadratic_bump(Domain(*driver_ball), z);
    return std::max(phi, clamp);
}

// ---------------------------------------------------------------------------
// Elliptic strategy

ControlPath elliptic_control(const FlowBundle& bundle, const Vec& v, const EllipticSpec& spec,
                             int sigma_node) {
    const int steps = std::min(sigma_node, bundle.last_node());
    ControlPath ctrl = make_empty(bundle, ControlStrategy::elliptic, steps);
    ctrl.h.col(0) = v;
    if (v.norm() == 0.0) {
        ctrl.terminated = true;
        ctrl.sigma_prime = 0;
        return ctrl;
    }
    const double dt = bundle.dt;

    auto profile = [&](double u) {
        return spec.profile == EllipticSpec::Profile::linear ? std::clamp(u, 0.0, 1.0)
                                                             : plateau_ramp(u);
    };

    // Ramp progress assigned to node i+1. The clock variant accumulates
    // left-point legs phi^{-2}(X_i) dt, so T_{i+1} and hence k_i are known at
    // node i (predictable). The price: a path can exit before the clock
    // reaches its budget; such controls stay unterminated and the caller
    // counts them, which is the contract for exit problems.
    if (spec.clock_domain && !(spec.clock_budget > 0.0))
        throw std::invalid_argument("elliptic clock budget must be positive");
    ClockRamp clock{spec.clock_budget > 0.0 ? spec.clock_budget : 1.0};
    double T = 0.0;  // running barrier clock

    Vec h = v;
    for (int i = 0; i < steps && !ctrl.terminated; ++i) {
        double rho_end;  // ramp value assigned to node i+1
        bool ramp_done;
        if (spec.clock_domain) {
            const double phi_here = barrier_value(spec.clock_domain, std::nullopt,
                                                  bundle.traj.states.col(i), Vec(), 1e-12);
            T += dt / (phi_here * phi_here);
            rho_end = clock.value(T) / clock.t0;
            ramp_done = clock.finished(T);
        } else {
            rho_end = profile(static_cast<double>(i + 1) / static_cast<double>(sigma_node));
            ramp_done = i + 1 >= sigma_node;
        }
        const Vec target_next = v * (1.0 - rho_end);
        const Vec w = (target_next - h) / dt;

        const Mat Y = bundle.pullback_matrix(i);
        {
            // Surjectivity gate on A(X_s) = J_s Y_s, scale-free threshold.
            const Mat A = bundle.jacobian_at(i) * Y;
            Eigen::JacobiSVD<Mat> svd(A);
            const auto& sv = svd.singularValues();
            if (sv.size() < bundle.n || sv[bundle.n - 1] <= 1e-9 * sv[0])
                throw EllipticInapplicableError(
                    "diffusion matrix not surjective along the path (node " +
                    std::to_string(i) + ")");
        }
        // Minimum-norm right inverse through the pulled-back field keeps the
        // discrete dynamics exactly on the profile.
        Vec k = Y.completeOrthogonalDecomposition().solve(w);
        ctrl.k.col(i) = k;
        ctrl.active[static_cast<std::size_t>(i)] = w.norm() > 0.0 ? 1 : 0;
        ctrl.energy += k.squaredNorm() * dt;
        h += Y * k * dt;

        if (ramp_done) {
            // Profile has reached zero; absorb solver roundoff into the clamp.
            ctrl.clamp_residue = h.norm();
            h.setZero();
            ctrl.sigma_prime = i + 1;
            ctrl.terminated = true;
        }
        ctrl.h.col(i + 1) = h;
    }
    return ctrl;
}

// ---------------------------------------------------------------------------
// Bang-bang strategy

namespace {

// The continuous descent reaches h = 0 in finite time, but a rotating step
// direction makes the plain per-cell update approach zero only geometrically.
// When the frozen-coefficient flow provably dies inside the current cell
// (sum_j |a_j| / lambda_j <= dt in the eigenbasis of c), land on zero exactly
// with the minimum-norm control for Y k dt = -h. Its energy <c^{-1}h, h>/dt
// is bounded by the remaining drop ||h||, so the energy identity survives.
bool try_exact_kill(const Mat& Y, const Vec& h, double dt, double rate_scale, Vec& k_out,
                    double hn) {
    Eigen::SelfAdjointEigenSolver<Mat> es(rate_scale * (Y * Y.transpose()));
    if (es.info() != Eigen::Success) return false;
    const Vec a = es.eigenvectors().transpose() * h;
    const Vec& lam = es.eigenvalues();
    double time_to_zero = 0.0;
    Vec quotients(a.size());
    for (int j = 0; j < a.size(); ++j) {
        if (std::abs(a[j]) <= 1e-14 * hn) {
            quotients[j] = 0.0;
            continue;
        }
        if (lam[j] <= 0.0) return false;
        quotients[j] = a[j] / lam[j];
        time_to_zero += std::abs(quotients[j]);
    }
    if (time_to_zero > dt) return false;
    const Vec cinv_h = es.eigenvectors() * quotients;
    k_out = -(rate_scale / dt) * (Y.transpose() * cinv_h);
    return true;
}

// Step magnitude for the descent h -> h - theta * (c h / ||h||) dt chosen so
// the recorded energy theta^2 lambda dt equals the realised drop of ||h||.
double solve_energy_matching_theta(const Vec& h, const Vec& ghat, double lamhat, double dt) {
    auto excess = [&](double theta) {
        const double drop = h.norm() - (h - theta * dt * ghat).norm();
        return theta * theta * lamhat * dt - drop;
    };
    if (excess(1.0) <= 0.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (excess(mid) <= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return lo > 0.0 ? lo : 0.5 * hi;
}

}  // namespace

ControlPath bangbang_control(const FlowBundle& bundle, const Vec& v, const BangBangConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw std::invalid_argument("bang-bang alpha must lie in (0,1)");
    const int horizon =
        cfg.max_horizon_node >= 0 ? std::min(cfg.max_horizon_node, bundle.last_node())
                                  : bundle.last_node();
    ControlPath ctrl = make_empty(bundle, ControlStrategy::bangbang, horizon);
    ctrl.h.col(0) = v;
    const double vn = v.norm();
    if (vn == 0.0) {
        ctrl.terminated = true;
        ctrl.sigma_prime = 0;
        return ctrl;
    }
    const double dt = bundle.dt;
    const double eps_h = cfg.eps_h_rel * vn;
    const double exit_level = cfg.alpha * cfg.hysteresis;

    Vec h = v;
    bool in_active = false;
    for (int i = 0; i < horizon; ++i) {
        if (ctrl.terminated) break;
        const Mat Y = bundle.pullback_matrix(i);
        const Vec g = Y * (Y.transpose() * h);  // c_s h without forming c_s
        const double gh = g.dot(h);
        const double hn = h.norm();
        const double gn = g.norm();
        const double cosv = (gn > 0.0 && hn > 0.0) ? gh / (gn * hn) : 0.0;

        if (in_active && cosv < exit_level) in_active = false;
        else if (!in_active && cosv > cfg.alpha) in_active = true;

        if (!in_active) {
            ctrl.h.col(i + 1) = h;
            continue;
        }
        ctrl.active[static_cast<std::size_t>(i)] = 1;
        const double lamhat = gh / (hn * hn);
        if (lamhat * dt >= hn) {
            Vec k_kill;
            if (try_exact_kill(Y, h, dt, 1.0, k_kill, hn)) {
                ctrl.k.col(i) = k_kill;
                ctrl.energy += k_kill.squaredNorm() * dt;
                h.setZero();
                ctrl.sigma_prime = i + 1;
                ctrl.terminated = true;
                ctrl.h.col(i + 1) = h;
                continue;
            }
        }
        const Vec ghat = g / hn;
        const double theta = solve_energy_matching_theta(h, ghat, lamhat, dt);
        const Vec k = -(theta / hn) * (Y.transpose() * h);
        ctrl.k.col(i) = k;
        ctrl.energy += k.squaredNorm() * dt;
        h += Y * k * dt;
        if (h.norm() <= eps_h) {
            ctrl.clamp_residue = h.norm();
            h.setZero();
            ctrl.sigma_prime = i + 1;
            ctrl.terminated = true;
        }
        ctrl.h.col(i + 1) = h;
    }
    return ctrl;
}

// ---------------------------------------------------------------------------
// Barrier strategy

ControlPath barrier_control(const FlowBundle& bundle, const BrownianPath& driver, const Vec& v,
                            const BarrierSpec& spec) {
    const int horizon = bundle.last_node();
    ControlPath ctrl = make_empty(bundle, ControlStrategy::barrier, horizon);
    ctrl.h.col(0) = v;
    const double vn = v.norm();
    if (vn == 0.0) {
        ctrl.terminated = true;
        ctrl.sigma_prime = 0;
        return ctrl;
    }
    const double dt = bundle.dt;
    const double eps_h = spec.eps_h_rel * vn;

    Vec h = v;
    for (int i = 0; i < horizon; ++i) {
        if (ctrl.terminated) break;
        const double phi = barrier_value(spec.state_domain, spec.driver_ball,
                                         bundle.traj.states.col(i), driver.z.col(i),
                                         spec.phi_clamp);
        const double w = 1.0 / (phi * phi);
        const Mat Y = bundle.pullback_matrix(i);
        const Vec g = Y * (Y.transpose() * h);
        const double gh = g.dot(h);
        const double hn = h.norm();
        if (gh <= 0.0) {  // descent direction unavailable at this node
            ctrl.h.col(i + 1) = h;
            continue;
        }
        ctrl.active[static_cast<std::size_t>(i)] = 1;
        const double lamhat = gh / (hn * hn);
        if (w * lamhat * dt >= hn) {
            Vec k_kill;
            if (try_exact_kill(Y, h, dt, w, k_kill, hn)) {
                ctrl.k.col(i) = k_kill;
                ctrl.energy += k_kill.squaredNorm() * dt;
                h.setZero();
                ctrl.sigma_prime = i + 1;
                ctrl.terminated = true;
                ctrl.h.col(i + 1) = h;
                continue;
            }
        }
        // Cap the step at the linear time-to-zero estimate, then enforce a
        // non-increasing norm under the rotation of the descent direction.
        double theta = std::min(1.0, hn / (w * lamhat * dt));
        Vec h_next = h - (theta * w * dt / hn) * g;
        for (int halvings = 0; halvings < 60 && h_next.norm() > hn; ++halvings) {
            theta *= 0.5;
            h_next = h - (theta * w * dt / hn) * g;
        }
        const Vec k = -(theta * w / hn) * (Y.transpose() * h);
        ctrl.k.col(i) = k;
        ctrl.energy += k.squaredNorm() * dt;
        h += Y * k * dt;
        if (h.norm() <= eps_h) {
            ctrl.clamp_residue = h.norm();
            h.setZero();
            ctrl.sigma_prime = i + 1;
            ctrl.terminated = true;
        }
        ctrl.h.col(i + 1) = h;
    }
    return ctrl;
}

// ---------------------------------------------------------------------------
// Verification

ControlVerification verify_control(const ControlPath& ctrl, const FlowBundle& bundle,
                                   const Vec& v, double alpha) {
    ControlVerification out;
    const double dt = bundle.dt;
    const int steps = ctrl.last_node;
    Vec acc = v;
    for (int i = 0; i < steps; ++i) {
        const Mat Y = bundle.pullback_matrix(i);
        const Vec inc = Y * ctrl.k.col(i) * dt;
        acc += inc;
        const bool clamp_node = ctrl.sigma_prime && *ctrl.sigma_prime == i + 1;
        const double defect = (ctrl.h.col(i + 1) - ctrl.h.col(i) - inc).norm();
        if (!clamp_node)
            out.max_dynamics_violation = std::max(out.max_dynamics_violation, defect);
        out.total_variation += (ctrl.h.col(i + 1) - ctrl.h.col(i)).norm();
    }
    out.residual = acc.norm();
    out.energy = ctrl.energy;
    out.terminated = ctrl.terminated;
    out.clamp_residue = ctrl.clamp_residue;
    const double vn = v.norm();
    out.energy_bound_ok = ctrl.energy <= vn * (1.0 + 1e-6) + 1e-300;
    out.tv_bound_ok = out.total_variation <= 2.0 * vn / alpha * (1.0 + 1e-6) + 1e-300;
    return out;
}

PicardIdentity picard_identity_check(const SdeModel& model, const ControlPath& ctrl,
                                     const BrownianPath& driver) {
    // Structural gate: R^3, two driving fields A_1 = e_1, A_2 = (0,1,x^1),
    // vanishing drift.
    bool shape_ok = model.n == 3 && model.r == 2 && model.drift_is_zero();
    if (shape_ok) {
        Vec probe(3);
        probe << 0.7, -0.3, 1.9;
        const Vec a1 = model.eval_field(1, probe);
        const Vec a2 = model.eval_field(2, probe);
        shape_ok = std::abs(a1[0] - 1.0) < 1e-14 && std::abs(a1[1]) < 1e-14 &&
                   std::abs(a1[2]) < 1e-14 && std::abs(a2[0]) < 1e-14 &&
                   std::abs(a2[1] - 1.0) < 1e-14 && std::abs(a2[2] - probe[0]) < 1e-14;
    }
    if (!shape_ok)
        throw WrongModelError("picard_identity_check requires the picard model");

    PicardIdentity out;
    const double dt = driver.grid.dt();
    const int steps = std::min<int>(ctrl.last_node, driver.grid.m);
    for (int i = 0; i < steps; ++i) {
        const double z1 = driver.z(0, i), z2 = driver.z(1, i);
        const double k1 = ctrl.k(0, i), k2 = ctrl.k(1, i);
        out.transfer += (z1 * k2 - z2 * k1) * dt;
        out.rhs += -ctrl.h(0, i) * driver.dz(1, i) + ctrl.h(1, i) * driver.dz(0, i);
    }
    out.lhs = -out.transfer;
    out.residual = out.lhs - out.rhs;
    return out;
}

}  // namespace hypomc
