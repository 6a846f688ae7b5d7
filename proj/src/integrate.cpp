#include "hypomc/integrate.hpp"

namespace hypomc {

void StoppingRule::validate(int n) const {
    if (mode != StopMode::cap_only && !domain)
        throw std::invalid_argument("stopping rule with exit mode needs a domain");
    if (domain) {
        const int dn = std::holds_alternative<Box>(*domain)
                           ? static_cast<int>(std::get<Box>(*domain).center.size())
                           : static_cast<int>(std::get<Ball>(*domain).center.size());
        if (dn != n) throw std::invalid_argument("stopping domain dimension mismatch");
        if (std::holds_alternative<Box>(*domain)) {
            if ((std::get<Box>(*domain).radii.array() <= 0.0).any())
                throw std::invalid_argument("stopping box needs positive radii");
        } else if (!(std::get<Ball>(*domain).radius > 0.0)) {
            throw std::invalid_argument("stopping ball needs positive radius");
        }
    }
}

Trajectory integrate_state(const SdeModel& model, const Vec& x0, const BrownianPath& driver,
                           const StoppingRule& rule, const Mat* shift, double explosion_cap) {
    const int n = model.n;
    const int m = driver.grid.m;
    const double dt = driver.grid.dt();
    rule.validate(n);

    Trajectory out;
    out.states.resize(n, m + 1);
    out.states.col(0) = x0;

    dsl::EvalScratch scratch;
    Vec a0(n), a0p(n), x(n), xp(n), dzeff(model.r);
    Mat A(n, model.r), Ap(n, model.r);

    const bool exit_mode = rule.mode != StopMode::cap_only;
    x = x0;
    int i = 0;
    for (; i < m; ++i) {
        dzeff = driver.dz.col(i);
        if (shift) dzeff += shift->col(i) * dt;
        try {
            model.eval_field(0, x, a0, scratch);
            model.diffusion_matrix(x, A, scratch);
            xp = x + A * dzeff + a0 * dt;
            if (!xp.allFinite() || xp.norm() > explosion_cap) {
                out.exploded = true;
                out.explosion_node = i + 1;
                break;
            }
            model.eval_field(0, xp, a0p, scratch);
            model.diffusion_matrix(xp, Ap, scratch);
            x += 0.5 * (A + Ap) * dzeff + 0.5 * (a0 + a0p) * dt;
        } catch (const FieldDomainError&) {
            // Partially defined coefficients (log, sqrt, /) make the path fail
            // here; accounted for like an explosion.
            out.exploded = true;
            out.explosion_node = i + 1;
            break;
        }
        if (!x.allFinite() || x.norm() > explosion_cap) {
            out.exploded = true;
            out.explosion_node = i + 1;
            break;
        }
        out.states.col(i + 1) = x;
        if (exit_mode && !domain_contains(*rule.domain, x)) {
            out.stop_index = i + 1;
            out.last_node = i + 1;
            return out;
        }
    }
    out.last_node = i;
    if (!out.exploded) {
        if (rule.mode == StopMode::cap_only || rule.mode == StopMode::exit_and_cap)
            out.stop_index = m;  // the cap fired
    }
    return out;
}

double ito_integral(const Mat& integrand, const BrownianPath& driver, int upto) {
    double acc = 0.0;
    const int steps = std::min<int>(upto, driver.grid.m);
    for (int i = 0; i < steps; ++i) acc += integrand.col(i).dot(driver.dz.col(i));
    return acc;
}

double time_integral(const Vec& values, double dt, int upto) {
    double acc = 0.0;
    for (int i = 0; i < upto; ++i) acc += 0.5 * (values[i] + values[i + 1]) * dt;
    return acc;
}

Vec time_integral(const Mat& values, double dt, int upto) {
    Vec acc = Vec::Zero(values.rows());
    for (int i = 0; i < upto; ++i) acc += 0.5 * dt * (values.col(i) + values.col(i + 1));
    return acc;
}

std::optional<int> first_exit(const Mat& states, int last_node, const StoppingRule& rule) {
    if (!rule.domain) throw std::invalid_argument("first_exit needs a rule with a domain");
    for (int i = 0; i <= last_node; ++i)
        if (!domain_contains(*rule.domain, states.col(i))) return i;
    if (rule.mode == StopMode::exit_and_cap || rule.mode == StopMode::cap_only)
        return last_node;  // cap index
    return std::nullopt;
}

}  // namespace hypomc
