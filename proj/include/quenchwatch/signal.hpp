#ifndef QUENCHWATCH_SIGNAL_HPP
#define QUENCHWATCH_SIGNAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quenchwatch/error.hpp"

namespace quenchwatch {

/// A uniformly sampled voltage signal. Sample k sits at t0_ns + k * dt seconds.
struct VoltageSeries {
    std::string magnet_id;
    std::string circuit_class = "600A";
    std::int64_t t0_ns = 0;
    double dt = 1.0;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }

    /// (n - 1) * dt in seconds; zero for an empty or single-sample series.
    double duration() const noexcept {
        return values.empty() ? 0.0 : static_cast<double>(values.size() - 1) * dt;
    }

    /// Offset of sample k from t0 in seconds.
    double time_at(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }
};

struct Violation {
    enum class Kind { EmptyValues, NonPositiveDt, NonFiniteSample };

    Kind kind;
    std::optional<std::size_t> index;

    std::string describe() const {
        switch (kind) {
        case Kind::EmptyValues: return "EmptyValues";
        case Kind::NonPositiveDt: return "NonPositiveDt";
        case Kind::NonFiniteSample: return "NonFiniteSample(" + std::to_string(index.value_or(0)) + ")";
        }
        return "Unknown";
    }

    friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::vector<Violation> validate_series(const VoltageSeries& series) {
    std::vector<Violation> out;
    if (series.values.empty())
        out.push_back({Violation::Kind::EmptyValues, std::nullopt});
    // !(dt > 0) also catches NaN
    if (!(series.dt > 0.0) || !std::isfinite(series.dt))
        out.push_back({Violation::Kind::NonPositiveDt, std::nullopt});
    for (std::size_t k = 0; k < series.values.size(); ++k) {
        if (!std::isfinite(series.values[k]))
            out.push_back({Violation::Kind::NonFiniteSample, k});
    }
    return out;
}

inline void require_valid(const VoltageSeries& series) {
    auto violations = validate_series(series);
    if (violations.empty())
        return;
    if (violations.front().kind == Violation::Kind::EmptyValues)
        throw Error(ErrorCode::EmptySeries, "series '" + series.magnet_id + "' has no samples");
    std::string msg = "series '" + series.magnet_id + "' violates:";
    for (const auto& v : violations)
        msg += " " + v.describe();
    throw Error(ErrorCode::InvalidArgument, msg);
}

/// Preprocessor statistics for one signal. Skewness and kurtosis use the
/// population central moments m2, m3, m4; kurtosis is excess (normal -> 0).
/// Slope and its standard error come from an ordinary least-squares fit of
/// value against the sample index 0..n-1, so slope is in volts per sample.
struct FeatureVector {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
    double slope = 0.0;
    double stderr_slope = 0.0;

    /// Set when the variance fell under the degeneracy threshold and the
    /// shape statistics were pinned to zero.
    bool degenerate_variance = false;

    static constexpr std::size_t dimension = 7;

    std::vector<double> as_vector() const {
        return {mean, min, max, skewness, kurtosis, slope, stderr_slope};
    }
};

inline FeatureVector extract_features(std::span<const double> values) {
    if (values.empty())
        throw Error(ErrorCode::EmptySeries, "cannot extract features from an empty signal");

    const auto n = static_cast<double>(values.size());
    FeatureVector fv;
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    fv.min = *lo;
    fv.max = *hi;

    double sum = 0.0;
    for (double v : values)
        sum += v;
    const double mean = sum / n;
    fv.mean = std::clamp(mean, fv.min, fv.max);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    const double eps = 1e-12 * std::max(1.0, mean * mean);
    if (m2 < eps) {
        fv.degenerate_variance = true;
    } else {
        fv.skewness = m3 / std::pow(m2, 1.5);
        fv.kurtosis = m4 / (m2 * m2) - 3.0;
    }

    if (values.size() >= 2) {
        const double x_mean = (n - 1.0) / 2.0;
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double dx = static_cast<double>(k) - x_mean;
            sxx += dx * dx;
            sxy += dx * (values[k] - mean);
        }
        fv.slope = sxy / sxx;
        if (values.size() >= 3) {
            const double intercept = mean - fv.slope * x_mean;
            double ssr = 0.0;
            for (std::size_t k = 0; k < values.size(); ++k) {
                const double r = values[k] - (intercept + fv.slope * static_cast<double>(k));
                ssr += r * r;
            }
            fv.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
        }
    }
    if (fv.min == fv.max) {
        // Flat series: the fit is exact whatever rounding left in sxy.
        fv.slope = 0.0;
        fv.stderr_slope = 0.0;
    }
    return fv;
}

inline FeatureVector extract_features(const VoltageSeries& series) {
    require_valid(series);
    return extract_features(std::span<const double>(series.values));
}

} // namespace quenchwatch

#endif // QUENCHWATCH_SIGNAL_HPP
