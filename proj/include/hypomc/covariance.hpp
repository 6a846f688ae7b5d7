#pragma once

#include <vector>

#include "hypomc/flow.hpp"

namespace hypomc {

class SingularCovarianceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Running Malliavin covariance C_s and its rate c_s = sum_i Y_i Y_i^T,
// accumulated by the trapezoid rule. Increments are PSD by construction, so
// C_s is nondecreasing in the PSD order.
struct CovariancePath {
    int n = 0;
    double dt = 0.0;
    int last_node = 0;
    Mat C;     // n*n x nodes, vec(C_node) per column
    Mat rate;  // n*n x nodes

    Mat at(int node) const { return Eigen::Map<const Mat>(C.col(node).data(), n, n); }
    Mat rate_at(int node) const { return Eigen::Map<const Mat>(rate.col(node).data(), n, n); }
    Mat final_value() const { return at(last_node); }
};

CovariancePath accumulate_covariance(const FlowBundle& bundle, int upto);

struct SpdInverse {
    Mat inverse;
    double eig_min = 0.0;
    double eig_max = 0.0;
    double det = 0.0;
    double cond = 0.0;
    bool ok = false;
    std::string why;
};

inline constexpr double kSpdConditionLimit = 1e12;

// Inverse through the symmetric eigendecomposition, with spectral diagnostics.
// `try_` reports failure in the struct; the plain call throws, matching the
// reject-the-path contract for weight formation.
SpdInverse try_invert_spd(const Mat& C, double cond_limit = kSpdConditionLimit);
SpdInverse invert_spd(const Mat& C, double cond_limit = kSpdConditionLimit);

struct DetInverseMoments {
    std::vector<double> p;
    std::vector<double> mean;
    std::vector<double> q90;
    std::vector<double> q99;
    std::vector<double> max;
    double rejected_fraction = 0.0;
    std::int64_t n_paths = 0;
};

// Empirical moments of (det C_sigma)^{-p} over N paths; diagnostic for the
// integrability of the inverse covariance at the stopping time of `rule`.
DetInverseMoments det_inverse_moments(const SdeModel& model, const Vec& x0,
                                      const StoppingRule& rule, const TimeGrid& grid,
                                      const std::vector<double>& p_list, std::int64_t n_paths,
                                      std::uint64_t seed = 0, int workers = 1);

}  // namespace hypomc
