#pragma once

#include <algorithm>

namespace hypomc {

// C1 cubic step on [0,1].
inline double smoothstep01(double w) {
    w = std::clamp(w, 0.0, 1.0);
    return w * w * (3.0 - 2.0 * w);
}

inline double smoothstep01_deriv(double w) {
    if (w <= 0.0 || w >= 1.0) return 0.0;
    return 6.0 * w * (1.0 - w);
}

// Ramp for timed profiles: 0 on [0, 1/4], C1 rise, 1 on [3/4, 1].
inline double plateau_ramp(double u) { return smoothstep01((u - 0.25) / 0.5); }
inline double plateau_ramp_deriv(double u) { return smoothstep01_deriv((u - 0.25) / 0.5) / 0.5; }

// Clock ramp rho: vanishes near 0, equals t0 from t0 onwards, C1 throughout.
struct ClockRamp {
    double t0 = 1.0;
    double start_frac = 0.05;

    double value(double T) const {
        return t0 * smoothstep01((T / t0 - start_frac) / (1.0 - start_frac));
    }
    double deriv(double T) const {
        return smoothstep01_deriv((T / t0 - start_frac) / (1.0 - start_frac)) /
               (1.0 - start_frac);
    }
    bool finished(double T) const { return T >= t0; }
};

}  // namespace hypomc
