#ifndef QUENCHWATCH_LSTM_GATE_HPP
#define QUENCHWATCH_LSTM_GATE_HPP

#include <cmath>
#include <string>

#include "quenchwatch/error.hpp"

namespace quenchwatch::lstm {

/// Piecewise-linear gate activation: exactly 0 at or below `t_low`, exactly 1
/// at or above `t_high`, `slope * x + intercept` in between.
struct GateConfig {
    double t_low = -2.5;
    double t_high = 2.5;
    double slope = 0.2;
    double intercept = 0.5;

    /// Derives slope and intercept so the ramp meets 0 and 1 at the thresholds.
    static GateConfig from_thresholds(double t_low, double t_high) {
        if (!(t_low < t_high))
            throw Error(ErrorCode::InvalidArgument, "gate thresholds need t_low < t_high");
        const double slope = 1.0 / (t_high - t_low);
        return {t_low, t_high, slope, -slope * t_low};
    }

    void validate() const {
        if (!(t_low < t_high))
            throw Error(ErrorCode::InvalidArgument, "gate thresholds need t_low < t_high");
        if (std::abs(slope * t_low + intercept) > 1e-12 || std::abs(slope * t_high + intercept - 1.0) > 1e-12)
            throw Error(ErrorCode::InvalidArgument, "gate ramp must reach 0 at t_low and 1 at t_high");
    }

    friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

inline double hard_sigmoid(double x, const GateConfig& cfg) noexcept {
    if (x <= cfg.t_low)
        return 0.0;
    if (x >= cfg.t_high)
        return 1.0;
    return cfg.slope * x + cfg.intercept;
}

/// Zero on the saturated branches and at both kinks.
inline double hard_sigmoid_derivative(double x, const GateConfig& cfg) noexcept {
    return (x > cfg.t_low && x < cfg.t_high) ? cfg.slope : 0.0;
}

/// 0 below/at t_low, 1 on the ramp, 2 at/above t_high.
inline int gate_branch(double x, const GateConfig& cfg) noexcept {
    if (x <= cfg.t_low)
        return 0;
    if (x >= cfg.t_high)
        return 2;
    return 1;
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_GATE_HPP
