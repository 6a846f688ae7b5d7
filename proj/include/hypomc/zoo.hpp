#pragma once

#include <functional>
#include <map>
#include <optional>

#include "hypomc/model.hpp"
#include "hypomc/stopping.hpp"

namespace hypomc::zoo {

// Closed-form companions where the model admits them; all are verified
// against simulation by the test suite.
struct ZooReference {
    bool deterministic_pullbacks = false;
    std::function<Mat(double t)> jacobian;                    // J_t path-independent
    std::function<Mat(double s, const Vec& z)> jacobian_z;    // J(s, Z_s)
    std::function<Mat(double s, const Vec& z)> pullback_z;    // n x r, Y(s, Z_s)
    std::function<Mat(double T)> covariance;                  // C_T deterministic
};

struct ZooEntry {
    SdeModel model;
    Vec x0;
    double t = 1.0;
    std::optional<Domain> domain;
    std::map<std::string, double> params;
    std::string description;
    ZooReference ref;
};

ZooEntry get_model(const std::string& name,
                   const std::map<std::string, double>& params = {});

std::vector<std::string> zoo_names();

// Stratonovich drift m = mu - (1/2) sigma sigma' for scalar Ito coefficients,
// built symbolically.
dsl::Expr stratonovich_drift_1d(const dsl::Expr& sigma, const dsl::Expr& mu, int n_vars);

// The running-average pair (S, A): dS = sigma(S) dW + mu(S) dt (Ito),
// dA = S dt, converted to Stratonovich form.
SdeModel make_asian_model(const std::string& sigma_src, const std::string& mu_src);

}  // namespace hypomc::zoo
