#pragma once

#include <vector>

#include "hypomc/integrate.hpp"

namespace hypomc {

// One simulated path together with the derivative flow J_s = T_x X_s, its
// inverse K_s, and the pulled-back diffusion fields Y_i(s) = K_s A_i(X_s).
// K is integrated by its own equation rather than inverting J per step; the
// J*K - I residual doubles as an accuracy monitor.
struct FlowBundle {
    Trajectory traj;
    int n = 0;
    int r = 0;
    double dt = 0.0;
    Mat jacobian;          // n*n x nodes, column i = vec(J_i), column-major
    Mat inverse_jacobian;  // n*n x nodes
    std::vector<Mat> pullback;  // r entries, each n x nodes: Y_i
    double jk_residual_max = 0.0;
    bool valid = true;  // false when the J*K drift exceeded the tolerance

    Mat jacobian_at(int node) const {
        return Eigen::Map<const Mat>(jacobian.col(node).data(), n, n);
    }
    Mat inverse_jacobian_at(int node) const {
        return Eigen::Map<const Mat>(inverse_jacobian.col(node).data(), n, n);
    }
    // n x r matrix with columns Y_1(node)..Y_r(node)
    Mat pullback_matrix(int node) const {
        Mat y(n, r);
        for (int i = 0; i < r; ++i) y.col(i) = pullback[static_cast<std::size_t>(i)].col(node);
        return y;
    }
    // c_s = sum_i Y_i Y_i^T at a node
    Mat covariance_rate(int node) const {
        Mat y = pullback_matrix(node);
        return y * y.transpose();
    }
    int last_node() const { return traj.last_node; }
};

inline constexpr double kJkInvalidThreshold = 1e-3;

// `upto_node` truncates the integration (-1 = the full grid).
FlowBundle integrate_flow_bundle(const SdeModel& model, const Vec& x0,
                                 const BrownianPath& driver, const StoppingRule& rule,
                                 const Mat* shift = nullptr,
                                 double explosion_cap = kDefaultExplosionCap,
                                 int upto_node = -1);

// Cross-check integrator: evolves (X^{-1}_{s*} B)_x by the bracket equation
// dW = sum_i K_s [A_i, B](X_s) o dZ^i + K_s [A_0, B](X_s) dt (midpoint rule)
// along the frozen flow carried by `bundle`. Independent discretisation of
// the pullback; agrees with K_s B(X_s) up to the scheme error.
Mat pullback_direct(const SdeModel& model, const FlowBundle& bundle,
                    const BrownianPath& driver, const std::vector<dsl::Expr>& B,
                    const Vec& x0);

}  // namespace hypomc
