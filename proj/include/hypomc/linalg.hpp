#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace hypomc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// FNV-1a over a byte string; used for config hashes in reports.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace hypomc
