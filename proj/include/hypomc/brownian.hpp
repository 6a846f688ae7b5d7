#pragma once

#include <cstdint>
#include <random>

#include "hypomc/grid.hpp"
#include "hypomc/linalg.hpp"

namespace hypomc {

// Bit-mixing used to derive independent per-path stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

// mt19937_64 plus a hand-rolled Box-Muller transform. std::normal_distribution
// is not pinned by the standard; this keeps streams bit-identical across
// toolchains and re-runs.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::int64_t path_index);
    double normal();
    double uniform01();  // in (0, 1]

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// One realisation of the r-dimensional driver on a uniform grid.
// Regenerating with the same (seed, path_index) is bit-identical.
struct BrownianPath {
    int r = 0;
    TimeGrid grid;
    Mat dz;  // r x m increments, variance dt per component
    Mat z;   // r x (m+1) cumulative values, z.col(0) = 0
    std::uint64_t seed = 0;
    std::int64_t path_index = 0;

    Vec z_at(int node) const { return z.col(node); }
};

BrownianPath sample_brownian(int r, const TimeGrid& grid, std::uint64_t seed,
                             std::int64_t path_index);

}  // namespace hypomc
