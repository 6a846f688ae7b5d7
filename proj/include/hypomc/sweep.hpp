#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hypomc {

// Path sweeps are the data-parallel kernel of every estimator: path i writes
// only slot i, and reductions happen afterwards in ascending index order.
// Results are therefore bit-identical for any worker count and schedule.
//
// `sweep_paths_serial` is the reference implementation; the OpenMP variant
// must agree with it exactly (asserted in the test suite, timed by the
// bench_paths tool).

template <class Fn>
void sweep_paths_serial(std::int64_t n_paths, Fn&& fn) {
    for (std::int64_t i = 0; i < n_paths; ++i) fn(i);
}

template <class Fn>
void sweep_paths(std::int64_t n_paths, int workers, Fn&& fn) {
#ifdef _OPENMP
    if (workers != 1) {
        const int threads = workers > 0 ? workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 16) num_threads(threads)
        for (std::int64_t i = 0; i < n_paths; ++i) fn(i);
        return;
    }
#else
    (void)workers;
#endif
    sweep_paths_serial(n_paths, fn);
}

// Fixed-order mean / standard error over per-path values with a mask.
struct OrderedMoments {
    double mean = 0.0;
    double se = 0.0;
    double second_moment = 0.0;
    std::int64_t count = 0;
};

inline OrderedMoments ordered_moments(const std::vector<double>& values,
                                      const std::vector<unsigned char>& include) {
    OrderedMoments m;
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (include[i]) {
            sum += values[i];
            ++m.count;
        }
    if (m.count == 0) return m;
    m.mean = sum / static_cast<double>(m.count);
    double ss = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (include[i]) {
            const double d = values[i] - m.mean;
            ss += d * d;
            s2 += values[i] * values[i];
        }
    m.second_moment = s2 / static_cast<double>(m.count);
    if (m.count > 1) {
        const double var = ss / static_cast<double>(m.count - 1);
        m.se = std::sqrt(var / static_cast<double>(m.count));
    }
    return m;
}

}  // namespace hypomc
