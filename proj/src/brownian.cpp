#include "hypomc/brownian.hpp"

#include <cmath>

namespace hypomc {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

NormalStream::NormalStream(std::uint64_t seed, std::int64_t path_index) {
    const std::uint64_t mixed =
        splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(path_index) +
                                                 0x51f2cd3c6e7a9241ull));
    gen_.seed(mixed);
}

double NormalStream::uniform01() {
    // 53-bit mantissa, shifted into (0, 1] so log() below is always defined.
    const std::uint64_t bits = gen_() >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double NormalStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    spare_ = rad * std::sin(ang);
    has_spare_ = true;
    return rad * std::cos(ang);
}

BrownianPath sample_brownian(int r, const TimeGrid& grid, std::uint64_t seed,
                             std::int64_t path_index) {
    if (r < 1) throw std::invalid_argument("driver dimension must be >= 1");
    BrownianPath p;
    p.r = r;
    p.grid = grid;
    p.seed = seed;
    p.path_index = path_index;
    p.dz.resize(r, grid.m);
    p.z.resize(r, grid.m + 1);
    p.z.col(0).setZero();

    NormalStream stream(seed, path_index);
    const double sdt = std::sqrt(grid.dt());
    for (int step = 0; step < grid.m; ++step) {
        for (int c = 0; c < r; ++c) p.dz(c, step) = sdt * stream.normal();
        p.z.col(step + 1) = p.z.col(step) + p.dz.col(step);
    }
    return p;
}

}  // namespace hypomc
