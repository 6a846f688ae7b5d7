#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hypomc/covariance.hpp"
#include "hypomc/zoo.hpp"

using namespace hypomc;

TEST_CASE("running-average pair: exact flow structure") {
    const double sigma = 0.3;
    auto entry = zoo::get_model("asian_trivial", {{"sigma", sigma}});
    const TimeGrid grid(1.0, 1024);
    const auto driver = sample_brownian(1, grid, 4, 0);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    for (int node : {0, 256, 512, 1024}) {
        const double t = grid.node_time(node);
        const Mat J = bundle.jacobian_at(node);
        const Mat ref = entry.ref.jacobian(t);
        CHECK((J - ref).cwiseAbs().maxCoeff() <= 1e-3 * std::max(1.0, ref.norm()));
        const Mat Y = bundle.pullback_matrix(node);
        CHECK(std::abs(Y(0, 0) - sigma) <= 1e-10);
        CHECK(std::abs(Y(1, 0) + sigma * t) <= 1e-9);
    }
    CHECK(bundle.jk_residual_max <= 1e-4);
}

TEST_CASE("picard pullbacks match the displayed closed form") {
    auto entry = zoo::get_model("picard");
    const TimeGrid grid(1.0, 2048);
    int used = 0;
    for (std::int64_t p = 0; p < 12; ++p) {
        const auto driver = sample_brownian(2, grid, 6, p);
        if (driver.z.cwiseAbs().maxCoeff() > 3.0) continue;
        ++used;
        const auto bundle =
            integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
        double worst = 0.0;
        for (int node = 0; node <= grid.m; node += 64) {
            const Mat ref = entry.ref.pullback_z(grid.node_time(node), driver.z.col(node));
            const Mat got = bundle.pullback_matrix(node);
            worst = std::max(worst, (got - ref).cwiseAbs().maxCoeff());
        }
        CHECK(worst <= 1e-2);
        CHECK(bundle.jk_residual_max <= 1e-4);
    }
    CHECK(used >= 6);
}

TEST_CASE("J K stays near the identity on the zoo") {
    const TimeGrid grid(1.0, 512);
    for (const auto& name : zoo::zoo_names()) {
        auto entry = zoo::get_model(name);
        for (std::int64_t p = 0; p < 4; ++p) {
            const auto driver = sample_brownian(entry.model.r, grid, 14, p);
            const auto bundle =
                integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
            CHECK(bundle.valid);
            CHECK(bundle.jk_residual_max <= 1e-4);
        }
    }
}

TEST_CASE("bracket-equation pullback agrees with the flow bundle") {
    for (const char* name : {"picard", "grushin"}) {
        auto entry = zoo::get_model(name);
        const TimeGrid grid(1.0, 2048);
        for (std::int64_t p = 0; p < 4; ++p) {
            const auto driver = sample_brownian(entry.model.r, grid, 44, p);
            const auto bundle =
                integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
            const Mat direct =
                pullback_direct(entry.model, bundle, driver, entry.model.field(1), entry.x0);
            double worst = 0.0;
            for (int node = 0; node <= bundle.last_node(); ++node)
                worst = std::max(
                    worst, (direct.col(node) - bundle.pullback[0].col(node)).cwiseAbs().maxCoeff());
            CHECK(worst <= 2e-2);
        }
    }
}

TEST_CASE("pullback of the zero field vanishes") {
    auto entry = zoo::get_model("picard");
    const TimeGrid grid(1.0, 256);
    const auto driver = sample_brownian(2, grid, 2, 0);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    std::vector<dsl::Expr> zero;
    for (int c = 0; c < 3; ++c) zero.push_back(dsl::parse_field_expr("0", 3));
    const Mat W = pullback_direct(entry.model, bundle, driver, zero, entry.x0);
    CHECK(W.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("commuting constant fields pull back to themselves") {
    auto entry = zoo::get_model("elliptic2d");
    const TimeGrid grid(1.0, 256);
    const auto driver = sample_brownian(2, grid, 3, 1);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    const Mat W = pullback_direct(entry.model, bundle, driver, entry.model.field(1), entry.x0);
    for (int node = 0; node <= grid.m; ++node) {
        CHECK(W(0, node) == doctest::Approx(1.0));
        CHECK(W(1, node) == doctest::Approx(0.0));
    }
}

TEST_CASE("covariance of the running-average pair") {
    const double sigma = 1.0, T = 1.0;
    auto entry = zoo::get_model("asian_trivial", {{"sigma", sigma}});
    const TimeGrid grid(T, 1024);
    const auto driver = sample_brownian(1, grid, 10, 0);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    const auto cov = accumulate_covariance(bundle, grid.m);
    const Mat want = entry.ref.covariance(T);
    CHECK((cov.final_value() - want).cwiseAbs().maxCoeff() <= 1e-3);

    const auto inv = invert_spd(cov.final_value());
    Mat want_inv(2, 2);
    want_inv << 4.0, 6.0, 6.0, 12.0;
    CHECK((inv.inverse - want_inv).cwiseAbs().maxCoeff() <= 1e-2);
    CHECK(inv.det == doctest::Approx(1.0 / 12.0).epsilon(1e-3));
}

TEST_CASE("picard covariance quadratic form vs direct quadrature") {
    auto entry = zoo::get_model("picard");
    const TimeGrid grid(1.0, 1024);
    const auto driver = sample_brownian(2, grid, 11, 0);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    const auto cov = accumulate_covariance(bundle, grid.m);
    Vec u(3);
    u << 0.3, -1.1, 0.7;
    // <C_t u, u> = int [(u1 - u3 Z^2)^2 + (u2 + u3 Z^1)^2] ds
    Vec integrand(grid.m + 1);
    for (int i = 0; i <= grid.m; ++i) {
        const double z1 = driver.z(0, i), z2 = driver.z(1, i);
        integrand[i] = std::pow(u[0] - u[2] * z2, 2) + std::pow(u[1] + u[2] * z1, 2);
    }
    const double direct = time_integral(integrand, grid.dt(), grid.m);
    const double through_cov = u.dot(cov.final_value() * u);
    CHECK(std::abs(through_cov - direct) / std::max(1.0, std::abs(direct)) <= 1e-3);
}

TEST_CASE("vanishing fields give a vanishing covariance") {
    SdeModel m = make_model("null", 2, 1, {"0", "0"}, {{"0", "0"}});
    const TimeGrid grid(1.0, 64);
    const auto driver = sample_brownian(1, grid, 21, 0);
    const auto bundle = integrate_flow_bundle(m, Vec::Zero(2), driver, StoppingRule::cap());
    const auto cov = accumulate_covariance(bundle, grid.m);
    CHECK(cov.final_value().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("covariance is symmetric PSD and nondecreasing") {
    auto entry = zoo::get_model("grushin");
    const TimeGrid grid(1.0, 512);
    const auto driver = sample_brownian(2, grid, 31, 2);
    const auto bundle = integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
    const auto cov = accumulate_covariance(bundle, grid.m);
    Vec prev_eigs = Vec::Zero(2);
    for (int node : {64, 128, 256, 384, 512}) {
        const Mat C = cov.at(node);
        CHECK((C - C.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat> es(C);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        // PSD increments push every eigenvalue up.
        CHECK(es.eigenvalues()[0] >= prev_eigs[0] - 1e-12);
        CHECK(es.eigenvalues()[1] >= prev_eigs[1] - 1e-12);
        prev_eigs = es.eigenvalues();
    }
}

TEST_CASE("spd inversion diagnostics and rejection") {
    const auto id = invert_spd(Mat::Identity(3, 3));
    CHECK((id.inverse - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(id.cond == doctest::Approx(1.0));

    Mat deficient(2, 2);
    deficient << 1.0, 0.0, 0.0, 0.0;
    CHECK_THROWS_AS(invert_spd(deficient), SingularCovarianceError);
    const auto attempt = try_invert_spd(deficient);
    CHECK(!attempt.ok);

    Mat asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK(!try_invert_spd(asym).ok);

    Mat bad_cond = Mat::Identity(2, 2);
    bad_cond(1, 1) = 1e-14;
    CHECK(!try_invert_spd(bad_cond).ok);
}

TEST_CASE("inverse-determinant moments") {
    // Scalar constant model on an interval: det C = sigma^2 tau, all moments finite.
    {
        SdeModel m = make_model("bm", 1, 1, {"0"}, {{"1"}});
        Box box{Vec::Constant(1, 0.5), Vec::Constant(1, 0.5)};
        StoppingRule rule{Domain(box), StopMode::exit_and_cap};
        const auto mom = det_inverse_moments(m, Vec::Constant(1, 0.5), rule,
                                             TimeGrid(2.0, 1024), {1.0, 2.0}, 2000, 13, 4);
        CHECK(mom.rejected_fraction <= 0.01);
        for (double v : mom.mean) CHECK(std::isfinite(v));
        // Stability in N: doubling the sample moves the mean by a few percent.
        const auto mom2 = det_inverse_moments(m, Vec::Constant(1, 0.5), rule,
                                              TimeGrid(2.0, 1024), {1.0}, 4000, 13, 4);
        CHECK(std::abs(mom.mean[0] - mom2.mean[0]) / mom2.mean[0] <= 0.30);
    }
    // Degenerate noise: every covariance is singular and gets rejected.
    {
        SdeModel m = make_model("flat", 2, 2, {"0", "0"}, {{"1", "0"}, {"0", "0"}});
        const auto mom = det_inverse_moments(m, Vec::Zero(2), StoppingRule::cap(),
                                             TimeGrid(1.0, 128), {1.0}, 200, 14, 1);
        CHECK(mom.rejected_fraction == 1.0);
    }
    // Degenerate-at-a-point model: hypoellipticity keeps the moments finite.
    {
        auto entry = zoo::get_model("grushin");
        const auto mom = det_inverse_moments(entry.model, entry.x0, StoppingRule::cap(),
                                             TimeGrid(1.0, 512), {1.0, 2.0}, 10000, 15, 4);
        CHECK(mom.rejected_fraction <= 0.01);
        CHECK(std::isfinite(mom.mean[0]));
        CHECK(std::isfinite(mom.mean[1]));
        CHECK(mom.max[1] < 1e24);
    }
}

TEST_CASE("smallest covariance-rate eigenvalue obeys the degenerate-model bound") {
    auto entry = zoo::get_model("grushin");
    const TimeGrid grid(1.0, 512);
    for (std::int64_t p = 0; p < 50; ++p) {
        const auto driver = sample_brownian(2, grid, 101, p);
        const auto bundle =
            integrate_flow_bundle(entry.model, entry.x0, driver, StoppingRule::cap());
        for (int node = 0; node <= grid.m; node += 16) {
            const Mat c = bundle.covariance_rate(node);
            Eigen::SelfAdjointEigenSolver<Mat> es(c);
            const Vec z = driver.z.col(node);
            const double bound = z[0] * z[0] / (1.0 + z.squaredNorm());
            CHECK(es.eigenvalues().minCoeff() >= bound - 1e-6);
        }
    }
}
