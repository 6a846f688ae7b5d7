#include "hypomc/zoo.hpp"

#include <cmath>

namespace hypomc::zoo {

namespace {

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument("zoo: " + what);
}

}  // namespace

dsl::Expr stratonovich_drift_1d(const dsl::Expr& sigma, const dsl::Expr& mu, int n_vars) {
    dsl::Expr dsigma = dsl::derivative(sigma, 0);
    dsl::ExprBuilder b(n_vars);
    const int mu_id = b.append(mu);
    const int corr = b.mul(b.literal(0.5), b.mul(b.append(sigma), b.append(dsigma)));
    return b.take(b.sub(mu_id, corr));
}

SdeModel make_asian_model(const std::string& sigma_src, const std::string& mu_src) {
    dsl::Expr sigma = dsl::parse_field_expr(sigma_src, 2);
    dsl::Expr mu = dsl::parse_field_expr(mu_src, 2);
    dsl::Expr m = stratonovich_drift_1d(sigma, mu, 2);

    SdeModel model;
    model.name = "asian";
    model.n = 2;
    model.r = 1;
    model.drift.push_back(std::move(m));
    model.drift.push_back(dsl::parse_field_expr("x1", 2));
    model.diffusion.push_back({std::move(sigma), dsl::parse_field_expr("0", 2)});
    model.validate();
    return model;
}

std::vector<std::string> zoo_names() {
    return {"elliptic1d", "elliptic2d", "gbm", "grushin", "picard", "asian", "asian_trivial"};
}

ZooEntry get_model(const std::string& name, const std::map<std::string, double>& params) {
    ZooEntry e;
    e.params = params;

    if (name == "elliptic1d") {
        const double sigma = param(params, "sigma", 1.0);
        require(sigma > 0.0, "elliptic1d needs sigma > 0");
        e.model = make_model("elliptic1d", 1, 1, {"0"}, {{num(sigma)}});
        e.x0 = Vec::Constant(1, 0.5);
        e.t = 1.0;
        e.description = "constant-coefficient scalar baseline";
        e.ref.deterministic_pullbacks = true;
        e.ref.jacobian = [](double) -> Mat { return Mat::Identity(1, 1); };
        e.ref.pullback_z = [sigma](double, const Vec&) -> Mat {
            return Mat::Constant(1, 1, sigma);
        };
        e.ref.covariance = [sigma](double T) -> Mat {
            return Mat::Constant(1, 1, sigma * sigma * T);
        };
        return e;
    }

    if (name == "elliptic2d") {
        const double s1 = param(params, "sigma1", 1.0);
        const double s2 = param(params, "sigma2", 1.0);
        require(s1 > 0.0 && s2 > 0.0, "elliptic2d needs positive sigmas");
        e.model = make_model("elliptic2d", 2, 2, {"0", "0"},
                             {{num(s1), "0"}, {"0", num(s2)}});
        e.x0 = Vec::Zero(2);
        e.t = 1.0;
        e.description = "constant-coefficient planar baseline";
        e.ref.deterministic_pullbacks = true;
        e.ref.jacobian = [](double) -> Mat { return Mat::Identity(2, 2); };
        e.ref.covariance = [s1, s2](double T) -> Mat {
            Mat C = Mat::Zero(2, 2);
            C(0, 0) = s1 * s1 * T;
            C(1, 1) = s2 * s2 * T;
            return C;
        };
        return e;
    }

    if (name == "gbm") {
        const double mu = param(params, "mu", 0.05);
        const double sigma = param(params, "sigma", 0.2);
        const double s0 = param(params, "s0", 1.0);
        require(sigma > 0.0, "gbm needs sigma > 0");
        require(s0 > 0.0, "gbm needs s0 > 0");
        dsl::Expr sig = dsl::parse_field_expr(num(sigma) + "*x1", 1);
        dsl::Expr drift_ito = dsl::parse_field_expr(num(mu) + "*x1", 1);
        SdeModel m;
        m.name = "gbm";
        m.n = 1;
        m.r = 1;
        m.drift.push_back(stratonovich_drift_1d(sig, drift_ito, 1));
        m.diffusion.push_back({std::move(sig)});
        m.validate();
        e.model = std::move(m);
        e.x0 = Vec::Constant(1, s0);
        e.t = 1.0;
        e.description = "geometric brownian motion, multiplicative noise";
        // Y(s) = J_s^{-1} sigma X_s = sigma * s0: constant along the path.
        e.ref.deterministic_pullbacks = true;
        e.ref.pullback_z = [sigma, s0](double, const Vec&) -> Mat {
            return Mat::Constant(1, 1, sigma * s0);
        };
        e.ref.covariance = [sigma, s0](double T) -> Mat {
            return Mat::Constant(1, 1, sigma * sigma * s0 * s0 * T);
        };
        return e;
    }

    if (name == "grushin") {
        e.model = make_model("grushin", 2, 2, {"0", "0"}, {{"1", "0"}, {"0", "x1"}});
        e.x0 = Vec::Zero(2);
        e.t = 1.0;
        {
            Box box;
            box.center = Vec::Zero(2);
            box.radii = Vec::Constant(2, 1.0);
            e.domain = box;
        }
        e.description = "planar model, degenerate on a line, rank restored by one bracket";
        e.ref.jacobian_z = [](double, const Vec& z) -> Mat {
            Mat J = Mat::Identity(2, 2);
            J(1, 0) = z[1];
            return J;
        };
        // At x0 = 0: Y_1 = (1, -Z^2), Y_2 = (0, Z^1).
        e.ref.pullback_z = [](double, const Vec& z) -> Mat {
            Mat Y(2, 2);
            Y << 1.0, 0.0, -z[1], z[0];
            return Y;
        };
        return e;
    }

    if (name == "picard") {
        e.model = make_model("picard", 3, 2, {"0", "0", "0"},
                             {{"1", "0", "0"}, {"0", "1", "x1"}});
        e.x0 = Vec::Zero(3);
        e.t = 1.0;
        e.description = "three-dimensional model whose third direction is bracket-generated";
        e.ref.jacobian_z = [](double, const Vec& z) -> Mat {
            Mat J = Mat::Identity(3, 3);
            J(2, 0) = z[1];
            return J;
        };
        // At x0 = 0: Y_1 = (1, 0, -Z^2), Y_2 = (0, 1, Z^1).
        e.ref.pullback_z = [](double, const Vec& z) -> Mat {
            Mat Y(3, 2);
            Y << 1.0, 0.0, 0.0, 1.0, -z[1], z[0];
            return Y;
        };
        return e;
    }

    if (name == "asian") {
        const double base = param(params, "sigma_base", 0.2);
        const double amp = param(params, "sigma_tanh", 0.1);
        const double mu = param(params, "mu", 0.0);
        const double s0 = param(params, "s0", 1.0);
        require(base - std::abs(amp) > 0.0, "asian needs sigma(.) > 0");
        e.model = make_asian_model(num(base) + " + " + num(amp) + "*tanh(x1)", num(mu));
        e.x0 = Vec::Zero(2);
        e.x0[0] = s0;
        e.t = 1.0;
        e.description = "price and running integral, state-dependent volatility";
        return e;
    }

    if (name == "asian_trivial") {
        const double sigma = param(params, "sigma", 0.3);
        const double s0 = param(params, "s0", 1.0);
        require(sigma > 0.0, "asian_trivial needs sigma > 0");
        e.model = make_model("asian_trivial", 2, 1, {"0", "x1"}, {{num(sigma), "0"}});
        e.x0 = Vec::Zero(2);
        e.x0[0] = s0;
        e.t = 1.0;
        e.description = "price and running integral, constant volatility, zero drift";
        e.ref.deterministic_pullbacks = true;
        e.ref.jacobian = [](double t) -> Mat {
            Mat J = Mat::Identity(2, 2);
            J(1, 0) = t;
            return J;
        };
        e.ref.pullback_z = [sigma](double s, const Vec&) -> Mat {
            Mat Y(2, 1);
            Y << sigma, -sigma * s;
            return Y;
        };
        e.ref.covariance = [sigma](double T) -> Mat {
            Mat C(2, 2);
            C << T, -T * T / 2.0, -T * T / 2.0, T * T * T / 3.0;
            return sigma * sigma * C;
        };
        return e;
    }

    throw std::invalid_argument("zoo: unknown model '" + name + "'");
}

}  // namespace hypomc::zoo
