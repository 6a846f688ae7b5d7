#include "hypomc/flow.hpp"

#include "hypomc/brackets.hpp"

namespace hypomc {

FlowBundle integrate_flow_bundle(const SdeModel& model, const Vec& x0,
                                 const BrownianPath& driver, const StoppingRule& rule,
                                 const Mat* shift, double explosion_cap, int upto_node) {
    const int n = model.n;
    const int r = model.r;
    const int m = upto_node >= 0 ? std::min(upto_node, driver.grid.m) : driver.grid.m;
    const double dt = driver.grid.dt();
    rule.validate(n);

    FlowBundle out;
    out.n = n;
    out.r = r;
    out.dt = dt;
    out.traj.states.resize(n, m + 1);
    out.traj.states.col(0) = x0;
    out.jacobian.resize(n * n, m + 1);
    out.inverse_jacobian.resize(n * n, m + 1);
    out.pullback.assign(static_cast<std::size_t>(r), Mat(n, m + 1));

    dsl::EvalScratch scratch;
    Vec x(n), xp(n), a0(n), a0p(n), dzeff(r);
    Mat A(n, r), Ap(n, r), J(n, n), K(n, n), Jp(n, n), Kp(n, n);
    std::vector<Mat> D(static_cast<std::size_t>(r) + 1, Mat(n, n));
    std::vector<Mat> Dp(static_cast<std::size_t>(r) + 1, Mat(n, n));
    Mat dJ(n, n), dK(n, n), dJp(n, n), dKp(n, n);

    x = x0;
    J.setIdentity();
    K.setIdentity();

    auto record = [&](int node) {
        out.traj.states.col(node) = x;
        Eigen::Map<Mat>(out.jacobian.col(node).data(), n, n) = J;
        Eigen::Map<Mat>(out.inverse_jacobian.col(node).data(), n, n) = K;
        model.diffusion_matrix(x, A, scratch);
        for (int i = 0; i < r; ++i)
            out.pullback[static_cast<std::size_t>(i)].col(node) = K * A.col(i);
        const double res = (J * K - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
        if (res > out.jk_residual_max) out.jk_residual_max = res;
    };

    record(0);
    const bool exit_mode = rule.mode != StopMode::cap_only;
    int i = 0;
    for (; i < m; ++i) {
        dzeff = driver.dz.col(i);
        if (shift) dzeff += shift->col(i) * dt;
        try {
            model.eval_field(0, x, a0, scratch);
            model.diffusion_matrix(x, A, scratch);
            for (int j = 0; j <= r; ++j)
                model.jacobian_field(j, x, D[static_cast<std::size_t>(j)], scratch);

            // Predictor for the coupled system (X, J, K).
            xp = x + A * dzeff + a0 * dt;
            dJ = D[0] * J * dt;
            dK = -K * D[0] * dt;
            for (int j = 1; j <= r; ++j) {
                dJ += D[static_cast<std::size_t>(j)] * J * dzeff[j - 1];
                dK -= K * D[static_cast<std::size_t>(j)] * dzeff[j - 1];
            }
            Jp = J + dJ;
            Kp = K + dK;
            if (!xp.allFinite() || xp.norm() > explosion_cap || !Jp.allFinite()) {
                out.traj.exploded = true;
                out.traj.explosion_node = i + 1;
                break;
            }

            model.eval_field(0, xp, a0p, scratch);
            model.diffusion_matrix(xp, Ap, scratch);
            for (int j = 0; j <= r; ++j)
                model.jacobian_field(j, xp, Dp[static_cast<std::size_t>(j)], scratch);

            dJp = Dp[0] * Jp * dt;
            dKp = -Kp * Dp[0] * dt;
            for (int j = 1; j <= r; ++j) {
                dJp += Dp[static_cast<std::size_t>(j)] * Jp * dzeff[j - 1];
                dKp -= Kp * Dp[static_cast<std::size_t>(j)] * dzeff[j - 1];
            }
            x += 0.5 * ((A + Ap) * dzeff + (a0 + a0p) * dt);
            J += 0.5 * (dJ + dJp);
            K += 0.5 * (dK + dKp);
        } catch (const FieldDomainError&) {
            out.traj.exploded = true;
            out.traj.explosion_node = i + 1;
            break;
        }
        if (!x.allFinite() || x.norm() > explosion_cap || !J.allFinite() || !K.allFinite()) {
            out.traj.exploded = true;
            out.traj.explosion_node = i + 1;
            break;
        }
        record(i + 1);
        if (exit_mode && !domain_contains(*rule.domain, x)) {
            out.traj.stop_index = i + 1;
            out.traj.last_node = i + 1;
            out.valid = out.jk_residual_max <= kJkInvalidThreshold;
            return out;
        }
    }
    out.traj.last_node = out.traj.exploded ? i : m;
    if (!out.traj.exploded &&
        (rule.mode == StopMode::cap_only || rule.mode == StopMode::exit_and_cap))
        out.traj.stop_index = m;
    out.valid = out.jk_residual_max <= kJkInvalidThreshold;
    return out;
}

Mat pullback_direct(const SdeModel& model, const FlowBundle& bundle,
                    const BrownianPath& driver, const std::vector<dsl::Expr>& B,
                    const Vec& x0) {
    const int n = model.n;
    const int r = model.r;
    const int last = bundle.last_node();
    const double dt = bundle.dt;

    // Brackets with every driving field, built once symbolically.
    std::vector<std::vector<dsl::Expr>> br;
    br.reserve(static_cast<std::size_t>(r) + 1);
    for (int j = 0; j <= r; ++j) br.push_back(symbolic_bracket(model.field(j), B, n));

    dsl::EvalScratch scratch;
    auto eval_vec = [&](const std::vector<dsl::Expr>& f, const Vec& x) {
        Vec v(n);
        std::span<const double> xs(x.data(), static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) v[c] = f[static_cast<std::size_t>(c)].eval(xs, scratch);
        return v;
    };

    // G_j(node) = K_node [A_j, B](X_node)
    auto integrand_at = [&](int node, std::vector<Vec>& G) {
        const Mat K = bundle.inverse_jacobian_at(node);
        const Vec x = bundle.traj.states.col(node);
        for (int j = 0; j <= r; ++j)
            G[static_cast<std::size_t>(j)] = K * eval_vec(br[static_cast<std::size_t>(j)], x);
    };

    Mat W(n, last + 1);
    W.col(0) = eval_vec(B, x0);
    std::vector<Vec> Gcur(static_cast<std::size_t>(r) + 1), Gnext(static_cast<std::size_t>(r) + 1);
    integrand_at(0, Gcur);
    for (int i = 0; i < last; ++i) {
        integrand_at(i + 1, Gnext);
        Vec inc = 0.5 * dt * (Gcur[0] + Gnext[0]);
        for (int j = 1; j <= r; ++j)
            inc += 0.5 * driver.dz(j - 1, i) *
                   (Gcur[static_cast<std::size_t>(j)] + Gnext[static_cast<std::size_t>(j)]);
        W.col(i + 1) = W.col(i) + inc;
        std::swap(Gcur, Gnext);
    }
    return W;
}

}  // namespace hypomc
