#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hypomc/integrate.hpp"
#include "hypomc/sweep.hpp"
#include "hypomc/zoo.hpp"

using namespace hypomc;

TEST_CASE("driver streams are deterministic and independent") {
    const TimeGrid grid(1.0, 128);
    auto a = sample_brownian(2, grid, 42, 7);
    auto b = sample_brownian(2, grid, 42, 7);
    CHECK(a.dz == b.dz);  // bit-identical regeneration
    auto c = sample_brownian(2, grid, 42, 8);
    CHECK(a.dz != c.dz);
    auto d = sample_brownian(2, grid, 43, 7);
    CHECK(a.dz != d.dz);
}

TEST_CASE("terminal variance matches t and distinct paths decorrelate") {
    const TimeGrid grid(0.7, 32);
    const std::int64_t n = 100000;
    double sum = 0.0, sum2 = 0.0, cross = 0.0;
    double prev = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto p = sample_brownian(1, grid, 9, i);
        const double zt = p.z(0, grid.m);
        sum += zt;
        sum2 += zt * zt;
        if (i > 0) cross += zt * prev;
        prev = zt;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    // Var of the sample variance of N(0,t) is 2 t^2 / n.
    const double se_var = grid.t * std::sqrt(2.0 / n);
    CHECK(std::abs(var - grid.t) <= 3 * se_var);
    // Lag-one products have mean 0 and variance t^2.
    const double se_cross = grid.t / std::sqrt(static_cast<double>(n - 1));
    CHECK(std::abs(cross / (n - 1)) <= 3 * se_cross);
}

TEST_CASE("zero fields leave the state in place") {
    SdeModel m = make_model("still", 2, 1, {"0", "0"}, {{"0", "0"}});
    const TimeGrid grid(1.0, 16);
    const auto driver = sample_brownian(1, grid, 1, 0);
    Vec x0(2);
    x0 << 0.4, -0.7;
    const auto traj = integrate_state(m, x0, driver, StoppingRule::cap());
    for (int i = 0; i <= grid.m; ++i) CHECK((traj.states.col(i) - x0).norm() == 0.0);
    CHECK(traj.stop_index == grid.m);
}

TEST_CASE("running-average pair integrates to the closed form") {
    const double sigma = 0.3;
    auto entry = zoo::get_model("asian_trivial", {{"sigma", sigma}});
    const TimeGrid grid(1.0, 1024);
    for (std::int64_t p = 0; p < 16; ++p) {
        const auto driver = sample_brownian(1, grid, 12, p);
        const auto traj = integrate_state(entry.model, entry.x0, driver, StoppingRule::cap());
        const double s_t = entry.x0[0] + sigma * driver.z(0, grid.m);
        CHECK(traj.states(0, grid.m) == doctest::Approx(s_t).epsilon(1e-12));
        const Vec w = driver.z.row(0).transpose();
        const double int_s = entry.x0[0] * grid.t + sigma * time_integral(w, grid.dt(), grid.m);
        const double rel = std::abs(traj.states(1, grid.m) - int_s) /
                           std::max(1.0, std::abs(int_s));
        CHECK(rel <= 1e-3);
    }
}

TEST_CASE("grushin area coordinate has the expected strong error") {
    // Reference from the same underlying noise at 16x resolution, aggregated.
    auto entry = zoo::get_model("grushin");
    const int m_coarse = 2048, refine = 16;
    const TimeGrid fine(1.0, m_coarse * refine);
    const TimeGrid coarse(1.0, m_coarse);
    int used = 0;
    for (std::int64_t p = 0; p < 24; ++p) {
        const auto fine_driver = sample_brownian(2, fine, 77, p);
        if (fine_driver.z.cwiseAbs().maxCoeff() > 3.0) continue;  // |Z| <= 3 band
        ++used;
        // Midpoint area integral on the fine grid as reference.
        double ref = 0.0;
        for (int i = 0; i < fine.m; ++i)
            ref += 0.5 * (fine_driver.z(0, i) + fine_driver.z(0, i + 1)) * fine_driver.dz(1, i);
        // Aggregate increments to the coarse grid and Heun-integrate.
        BrownianPath agg;
        agg.r = 2;
        agg.grid = coarse;
        agg.dz = Mat::Zero(2, coarse.m);
        for (int i = 0; i < coarse.m; ++i)
            for (int j = 0; j < refine; ++j) agg.dz.col(i) += fine_driver.dz.col(i * refine + j);
        agg.z.resize(2, coarse.m + 1);
        agg.z.col(0).setZero();
        for (int i = 0; i < coarse.m; ++i) agg.z.col(i + 1) = agg.z.col(i) + agg.dz.col(i);
        const auto traj = integrate_state(entry.model, entry.x0, agg, StoppingRule::cap());
        CHECK(std::abs(traj.states(1, coarse.m) - ref) <= 5e-2);
    }
    CHECK(used >= 10);
}

TEST_CASE("strong error halves with the step on the running-average pair") {
    auto entry = zoo::get_model("asian_trivial", {{"sigma", 1.0}});
    const int m_fine = 8192;
    const TimeGrid fine(1.0, m_fine);
    double err_1024 = 0.0, err_2048 = 0.0;
    const std::int64_t n_paths = 1000;
    for (std::int64_t p = 0; p < n_paths; ++p) {
        const auto fd = sample_brownian(1, fine, 31, p);
        const auto ref = integrate_state(entry.model, entry.x0, fd, StoppingRule::cap());
        auto coarse_run = [&](int m_coarse) {
            const int refine = m_fine / m_coarse;
            BrownianPath agg;
            agg.r = 1;
            agg.grid = TimeGrid(1.0, m_coarse);
            agg.dz = Mat::Zero(1, m_coarse);
            for (int i = 0; i < m_coarse; ++i)
                for (int j = 0; j < refine; ++j) agg.dz(0, i) += fd.dz(0, i * refine + j);
            agg.z.resize(1, m_coarse + 1);
            agg.z.col(0).setZero();
            for (int i = 0; i < m_coarse; ++i) agg.z(0, i + 1) = agg.z(0, i) + agg.dz(0, i);
            const auto tr = integrate_state(entry.model, entry.x0, agg, StoppingRule::cap());
            return (tr.states.col(m_coarse) - ref.states.col(m_fine)).squaredNorm();
        };
        err_1024 += coarse_run(1024);
        err_2048 += coarse_run(2048);
    }
    const double ratio = std::sqrt(err_1024 / err_2048);
    CHECK(ratio >= 1.5);
    CHECK(ratio <= 3.0);
}

TEST_CASE("left-point stochastic integral") {
    const TimeGrid grid(1.0, 256);
    const auto driver = sample_brownian(2, grid, 5, 0);
    const Mat zero = Mat::Zero(2, grid.m + 1);
    CHECK(ito_integral(zero, driver, grid.m) == 0.0);

    Mat e1 = Mat::Zero(2, grid.m + 1);
    e1.row(0).setOnes();
    CHECK(ito_integral(e1, driver, grid.m) == doctest::Approx(driver.z(0, grid.m)).epsilon(1e-14));
    // Telescoping holds at any stop index.
    CHECK(ito_integral(e1, driver, 100) == doctest::Approx(driver.z(0, 100)).epsilon(1e-14));
}

TEST_CASE("ito isometry for k_s = Z_s") {
    const TimeGrid grid(1.0, 64);
    const std::int64_t n = 10000;
    std::vector<double> sq(n), qv(n);
    std::vector<unsigned char> inc(n, 1);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto driver = sample_brownian(2, grid, 17, i);
        const double s = ito_integral(driver.z, driver, grid.m);
        sq[static_cast<std::size_t>(i)] = s * s;
        double v = 0.0;
        for (int j = 0; j < grid.m; ++j) v += driver.z.col(j).squaredNorm() * grid.dt();
        qv[static_cast<std::size_t>(i)] = v;
    }
    const auto ms = ordered_moments(sq, inc);
    const auto mv = ordered_moments(qv, inc);
    const double se = std::hypot(ms.se, mv.se);
    CHECK(std::abs(ms.mean - mv.mean) <= 3 * se);
}

TEST_CASE("trapezoid time integral") {
    const Vec ones = Vec::Ones(11);
    CHECK(time_integral(ones, 0.1, 10) == doctest::Approx(1.0).epsilon(1e-15));

    Vec lin(3);
    lin << 0.0, 0.5, 1.0;  // integrand s on [0,1], m = 2
    CHECK(time_integral(lin, 0.5, 2) == doctest::Approx(0.5).epsilon(1e-15));

    const int m = 1024;
    Vec sq(m + 1);
    for (int i = 0; i <= m; ++i) sq[i] = std::pow(i / static_cast<double>(m), 2);
    CHECK(std::abs(time_integral(sq, 1.0 / m, m) - 1.0 / 3.0) <= 1e-6);
}

TEST_CASE("first exit") {
    // Path that never leaves returns the cap index.
    Mat states = Mat::Zero(1, 11);
    Ball ball{Vec::Zero(1), 1.0};
    StoppingRule rule{Domain(ball), StopMode::exit_and_cap};
    auto idx = first_exit(states, 10, rule);
    REQUIRE(idx.has_value());
    CHECK(*idx == 10);

    StoppingRule exit_only{Domain(ball), StopMode::exit_only};
    CHECK(!first_exit(states, 10, exit_only).has_value());

    // Deterministic drift crosses a unit ball at time ~1.
    SdeModel m = make_model("push", 1, 1, {"1"}, {{"0"}});
    const TimeGrid grid(2.0, 256);
    const auto driver = sample_brownian(1, grid, 3, 0);
    const auto traj = integrate_state(m, Vec::Zero(1), driver, rule);
    REQUIRE(traj.stop_index.has_value());
    CHECK(std::abs(*traj.stop_index * grid.dt() - 1.0) <= 2 * grid.dt());
}

TEST_CASE("scalar exit-time mean matches x(1-x)") {
    // Discrete monitoring biases the mean by O(sqrt(dt)); dt is chosen so the
    // bias sits below the 3 SE band of 2500 paths.
    SdeModel m = make_model("bm", 1, 1, {"0"}, {{"1"}});
    Box box{Vec::Constant(1, 0.5), Vec::Constant(1, 0.5)};  // the interval (0,1)
    StoppingRule rule{Domain(box), StopMode::exit_and_cap};
    const TimeGrid grid(3.0, 49152);
    const std::int64_t n = 2500;
    std::vector<double> taus(n);
    std::vector<unsigned char> inc(n, 1);
    sweep_paths(n, 4, [&](std::int64_t i) {
        const auto driver = sample_brownian(1, grid, 23, i);
        const auto traj = integrate_state(m, Vec::Constant(1, 0.5), driver, rule);
        taus[static_cast<std::size_t>(i)] = traj.stop_index.value_or(grid.m) * grid.dt();
    });
    const auto mom = ordered_moments(taus, inc);
    CHECK(std::abs(mom.mean - 0.25) <= 3 * mom.se + 0.005);
}

TEST_CASE("exit-time mean approaches the target monotonically as dt shrinks") {
    SdeModel m = make_model("bm", 1, 1, {"0"}, {{"1"}});
    Box box{Vec::Constant(1, 0.5), Vec::Constant(1, 0.5)};
    StoppingRule rule{Domain(box), StopMode::exit_and_cap};
    const std::int64_t n = 1500;
    auto mean_at = [&](int mm) {
        std::vector<double> taus(n);
        std::vector<unsigned char> inc(n, 1);
        const TimeGrid grid(3.0, mm);
        sweep_paths(n, 4, [&](std::int64_t i) {
            const auto driver = sample_brownian(1, grid, 29, i);
            const auto traj = integrate_state(m, Vec::Constant(1, 0.5), driver, rule);
            taus[static_cast<std::size_t>(i)] = traj.stop_index.value_or(grid.m) * grid.dt();
        });
        return ordered_moments(taus, inc);
    };
    const auto coarse = mean_at(1536);    // dt = 1/512
    const auto mid = mean_at(6144);       // dt = 1/2048
    const auto fine = mean_at(24576);     // dt = 1/8192
    // Bias is positive (exits seen late) and decays with sqrt(dt).
    const double slack = 3 * std::hypot(coarse.se, mid.se);
    CHECK(coarse.mean + slack >= mid.mean);
    CHECK(mid.mean + 3 * std::hypot(mid.se, fine.se) >= fine.mean);
    CHECK(fine.mean + 3 * fine.se + 0.01 >= 0.25);
}

TEST_CASE("explosion flag and minimal-semigroup accounting") {
    // Super-linear drift blows up quickly from x0 = 2.
    SdeModel m = make_model("blow", 1, 1, {"x1^3"}, {{"0"}});
    const TimeGrid grid(4.0, 4096);
    const auto driver = sample_brownian(1, grid, 1, 0);
    const auto traj = integrate_state(m, Vec::Constant(1, 2.0), driver, StoppingRule::cap());
    CHECK(traj.exploded);
    CHECK(traj.explosion_node > 0);
    CHECK(traj.last_node < grid.m);
}

TEST_CASE("the girsanov shift adds a drift to the driver") {
    SdeModel m = make_model("bm", 1, 1, {"0"}, {{"1"}});
    const TimeGrid grid(1.0, 128);
    const auto driver = sample_brownian(1, grid, 8, 0);
    Mat shift = Mat::Constant(1, grid.m, 0.75);
    const auto traj = integrate_state(m, Vec::Zero(1), driver, StoppingRule::cap(), &shift);
    CHECK(traj.states(0, grid.m) ==
          doctest::Approx(driver.z(0, grid.m) + 0.75).epsilon(1e-12));
}

TEST_CASE("trajectories are pure functions of their inputs") {
    auto entry = zoo::get_model("grushin");
    const TimeGrid grid(1.0, 512);
    const auto d1 = sample_brownian(2, grid, 99, 3);
    const auto d2 = sample_brownian(2, grid, 99, 3);
    const auto t1 = integrate_state(entry.model, entry.x0, d1, StoppingRule::cap());
    const auto t2 = integrate_state(entry.model, entry.x0, d2, StoppingRule::cap());
    CHECK(t1.states == t2.states);
}
