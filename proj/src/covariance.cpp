#include "hypomc/covariance.hpp"

#include <algorithm>
#include <cmath>

#include "hypomc/sweep.hpp"

namespace hypomc {

CovariancePath accumulate_covariance(const FlowBundle& bundle, int upto) {
    const int n = bundle.n;
    const int last = std::min(upto, bundle.last_node());
    CovariancePath out;
    out.n = n;
    out.dt = bundle.dt;
    out.last_node = last;
    out.C.resize(n * n, last + 1);
    out.rate.resize(n * n, last + 1);

    Mat C = Mat::Zero(n, n);
    Mat rate_prev = bundle.covariance_rate(0);
    out.rate.col(0) = Eigen::Map<const Vec>(rate_prev.data(), n * n);
    out.C.col(0).setZero();
    for (int i = 1; i <= last; ++i) {
        Mat rate_i = bundle.covariance_rate(i);
        C += 0.5 * bundle.dt * (rate_prev + rate_i);
        // Symmetrise against accumulated roundoff.
        C = 0.5 * (C + C.transpose()).eval();
        out.C.col(i) = Eigen::Map<const Vec>(C.data(), n * n);
        out.rate.col(i) = Eigen::Map<const Vec>(rate_i.data(), n * n);
        rate_prev.swap(rate_i);
    }
    return out;
}

SpdInverse try_invert_spd(const Mat& C, double cond_limit) {
    SpdInverse out;
    const int n = static_cast<int>(C.rows());
    if (C.cols() != n) {
        out.why = "matrix is not square";
        return out;
    }
    const double asym = (C - C.transpose()).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, C.cwiseAbs().maxCoeff());
    if (asym > 1e-9 * scale) {
        out.why = "matrix is not symmetric";
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (C + C.transpose()));
    if (es.info() != Eigen::Success) {
        out.why = "eigendecomposition failed";
        return out;
    }
    const Vec& ev = es.eigenvalues();
    out.eig_min = ev.minCoeff();
    out.eig_max = ev.maxCoeff();
    out.det = ev.prod();
    if (out.eig_min <= 0.0) {
        out.cond = std::numeric_limits<double>::infinity();
        out.why = "matrix is not positive definite";
        return out;
    }
    out.cond = out.eig_max / out.eig_min;
    if (out.cond > cond_limit) {
        out.why = "condition number above limit";
        return out;
    }
    out.inverse = es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                  es.eigenvectors().transpose();
    out.ok = true;
    return out;
}

SpdInverse invert_spd(const Mat& C, double cond_limit) {
    SpdInverse out = try_invert_spd(C, cond_limit);
    if (!out.ok) throw SingularCovarianceError("singular covariance: " + out.why);
    return out;
}

DetInverseMoments det_inverse_moments(const SdeModel& model, const Vec& x0,
                                      const StoppingRule& rule, const TimeGrid& grid,
                                      const std::vector<double>& p_list, std::int64_t n_paths,
                                      std::uint64_t seed, int workers) {
    if (n_paths < 100) throw std::invalid_argument("det_inverse_moments needs N >= 100");
    std::vector<double> dets(static_cast<std::size_t>(n_paths), 0.0);
    std::vector<unsigned char> ok(static_cast<std::size_t>(n_paths), 0);

    sweep_paths(n_paths, workers, [&](std::int64_t i) {
        BrownianPath driver = sample_brownian(model.r, grid, seed, i);
        FlowBundle bundle = integrate_flow_bundle(model, x0, driver, rule);
        if (bundle.traj.exploded || !bundle.valid) return;
        const int sigma = bundle.traj.stop_index.value_or(bundle.last_node());
        CovariancePath cov = accumulate_covariance(bundle, sigma);
        SpdInverse inv = try_invert_spd(cov.final_value());
        if (!inv.ok) return;
        dets[static_cast<std::size_t>(i)] = inv.det;
        ok[static_cast<std::size_t>(i)] = 1;
    });

    DetInverseMoments out;
    out.p = p_list;
    out.n_paths = n_paths;
    std::int64_t accepted = 0;
    for (auto f : ok) accepted += f;
    out.rejected_fraction =
        1.0 - static_cast<double>(accepted) / static_cast<double>(n_paths);

    for (double p : p_list) {
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(accepted));
        double sum = 0.0;
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (ok[i]) {
                const double v = std::pow(dets[i], -p);
                vals.push_back(v);
                sum += v;
            }
        std::sort(vals.begin(), vals.end());
        auto quantile = [&](double q) {
            if (vals.empty()) return 0.0;
            const std::size_t idx = std::min(
                vals.size() - 1, static_cast<std::size_t>(q * static_cast<double>(vals.size())));
            return vals[idx];
        };
        out.mean.push_back(vals.empty() ? 0.0 : sum / static_cast<double>(vals.size()));
        out.q90.push_back(quantile(0.90));
        out.q99.push_back(quantile(0.99));
        out.max.push_back(vals.empty() ? 0.0 : vals.back());
    }
    return out;
}

}  // namespace hypomc
