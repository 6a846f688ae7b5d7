// Times the serial reference sweep against the OpenMP sweep on a
// representative estimator workload and checks the results agree bitwise.

#include <chrono>
#include <cstdio>

#include "hypomc/estimators.hpp"
#include "hypomc/sweep.hpp"
#include "hypomc/zoo.hpp"

using namespace hypomc;

namespace {

double time_run(int workers, std::int64_t n_paths, Estimate& out) {
    const zoo::ZooEntry entry = zoo::get_model("grushin");
    Vec x0(2);
    x0 << 0.3, 0.0;
    const Vec v = Vec::Unit(2, 0);
    const Payoff f = make_payoff("x1^2", 2);
    const TimeGrid grid(1.0, 512);
    ClockSpec clock;
    clock.t0 = grid.t;
    const PerturbSpec perturb;

    const auto t0 = std::chrono::steady_clock::now();
    out = general_hypoelliptic_derivative(entry.model, x0, v, f,
                                          DerivativeTarget::semigroup, grid,
                                          StoppingRule::cap(), clock, perturb, n_paths, 99,
                                          workers);
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    std::int64_t n_paths = argc > 1 ? std::atoll(argv[1]) : 2000;
    Estimate serial, parallel;
    const double t_serial = time_run(1, n_paths, serial);
#ifdef _OPENMP
    const int workers = omp_get_max_threads();
#else
    const int workers = 1;
#endif
    const double t_parallel = time_run(workers, n_paths, parallel);

    std::printf("paths                %lld\n", static_cast<long long>(n_paths));
    std::printf("serial               %.3f s  (%.0f paths/s)\n", t_serial,
                n_paths / t_serial);
    std::printf("parallel (%2d)        %.3f s  (%.0f paths/s)\n", workers, t_parallel,
                n_paths / t_parallel);
    std::printf("speedup              %.2fx\n", t_serial / t_parallel);
    const bool identical = serial.mean == parallel.mean && serial.se == parallel.se;
    std::printf("results identical    %s\n", identical ? "yes" : "NO");
    return identical ? 0 : 1;
}
