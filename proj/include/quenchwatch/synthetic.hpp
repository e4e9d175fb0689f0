#ifndef QUENCHWATCH_SYNTHETIC_HPP
#define QUENCHWATCH_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "quenchwatch/error.hpp"
#include "quenchwatch/ingest.hpp"
#include "quenchwatch/signal.hpp"

namespace quenchwatch {

enum class Tier { small, medium, large };

inline std::string_view to_string(Tier tier) {
    switch (tier) {
    case Tier::small: return "small";
    case Tier::medium: return "medium";
    case Tier::large: return "large";
    }
    return "small";
}

inline Tier parse_tier(std::string_view name) {
    if (name == "small") return Tier::small;
    if (name == "medium") return Tier::medium;
    if (name == "large") return Tier::large;
    throw Error(ErrorCode::InvalidArgument, "unknown tier '" + std::string(name) + "'");
}

/// Full-scale tier sizes in megabytes (1 MB = 1e6 bytes).
inline double tier_megabytes(Tier tier) {
    switch (tier) {
    case Tier::small: return 22.0;
    case Tier::medium: return 111.0;
    case Tier::large: return 5000.0;
    }
    return 22.0;
}

inline constexpr double default_scale = 1000.0;

/// Quench transient bounds. Rise is exponential-shaped growth to the peak,
/// followed by an exponential decay cut after five time constants.
struct TransientShape {
    double rise_min_s = 0.05;
    double rise_max_s = 0.5;
    double amplitude_min_v = 0.05;
    double amplitude_max_v = 0.5;
    double decay_min_s = 0.05;
    double decay_max_s = 0.2;

    double max_span_s() const { return rise_max_s + 5.0 * decay_max_s; }
};

struct DatasetSpec {
    Tier tier = Tier::small;
    std::uint64_t target_bytes = 22'000;
    std::size_t series_count = 1;
    /// Expected quench events per series.
    double quench_rate = 1.0;
    double dt = 0.01;
    TransientShape transient;

    /// Tier defaults with sizes divided by `scale` (1000 gives desk scale).
    static DatasetSpec for_tier(Tier tier, double scale = default_scale) {
        if (!(scale > 0.0))
            throw Error(ErrorCode::InvalidArgument, "scale must be positive");
        DatasetSpec spec;
        spec.tier = tier;
        spec.target_bytes = static_cast<std::uint64_t>(std::llround(tier_megabytes(tier) * 1e6 / scale));
        switch (tier) {
        case Tier::small: spec.series_count = 1; break;
        case Tier::medium: spec.series_count = 4; break;
        case Tier::large: spec.series_count = 40; break;
        }
        return spec;
    }
};

struct SyntheticDataset {
    std::vector<VoltageSeries> series;
    std::vector<QuenchEvent> events;
};

inline constexpr std::int64_t synthetic_epoch_ns = 1'500'000'000'000'000'000;

namespace detail {

// Mean CSV row width: 19-digit timestamp, comma, 22-23 char value, newline.
inline constexpr double mean_row_bytes = 43.5;
inline constexpr std::size_t min_series_samples = 16;

inline std::size_t events_for_series(double rate, std::mt19937_64& rng) {
    const double whole = std::floor(rate);
    const double frac = rate - whole;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return static_cast<std::size_t>(whole) + (u(rng) < frac ? 1u : 0u);
}

} // namespace detail

/// Seeded synthetic U_res-style data: slow drift plus AR(1) band-limited
/// noise, with resistive transients injected at the requested rate.
/// Serialized size (series CSVs plus the events CSV) tracks target_bytes.
inline SyntheticDataset generate_synthetic(const DatasetSpec& spec, std::uint64_t seed) {
    if (spec.series_count == 0)
        throw Error(ErrorCode::SpecInfeasible, "series_count must be at least 1");
    if (!(spec.quench_rate >= 0.0) || !std::isfinite(spec.quench_rate))
        throw Error(ErrorCode::SpecInfeasible, "quench_rate must be finite and non-negative");
    if (!(spec.dt > 0.0))
        throw Error(ErrorCode::SpecInfeasible, "dt must be positive");

    const double header_bytes = static_cast<double>(series_csv_header.size() + 1);
    const double events_estimate =
        static_cast<double>(events_csv_header.size() + 1)
        + std::ceil(spec.quench_rate) * static_cast<double>(spec.series_count) * 40.0;
    const double per_series = (static_cast<double>(spec.target_bytes) - events_estimate)
                              / static_cast<double>(spec.series_count) - header_bytes;
    const auto samples = per_series > 0.0 ? static_cast<std::size_t>(per_series / detail::mean_row_bytes) : 0;
    if (samples < detail::min_series_samples)
        throw Error(ErrorCode::SpecInfeasible, "target_bytes too small for " + std::to_string(spec.series_count)
                                                   + " series");

    const auto span = static_cast<std::size_t>(std::ceil(spec.transient.max_span_s() / spec.dt));
    const auto max_events = static_cast<std::size_t>(std::ceil(spec.quench_rate));
    if (max_events > 0 && samples / max_events < 2 * span)
        throw Error(ErrorCode::SpecInfeasible,
                    "quench_rate " + std::to_string(spec.quench_rate) + " too high for "
                        + std::to_string(samples) + "-sample series");

    SyntheticDataset out;
    for (std::size_t k = 0; k < spec.series_count; ++k) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(k)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> gauss(0.0, 1.0);
        auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

        VoltageSeries s;
        char id[32];
        std::snprintf(id, sizeof(id), "MQ600A-%03zu", k);
        s.magnet_id = id;
        s.circuit_class = "600A";
        s.t0_ns = synthetic_epoch_ns + static_cast<std::int64_t>(k) * 86'400'000'000'000;
        s.dt = spec.dt;
        s.values.resize(samples);

        const double offset = between(-1e-3, 1e-3);
        const double drift_amp = between(2e-4, 1e-3);
        const double drift_period = between(2.0, 20.0);
        const double drift_phase = between(0.0, 2.0 * std::numbers::pi);
        const double trend = between(-5e-5, 5e-5);
        const double noise_sigma = between(2e-5, 1e-4);
        constexpr double rho = 0.9;
        const double innovation = noise_sigma * std::sqrt(1.0 - rho * rho);

        double noise = 0.0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double t = s.time_at(i);
            noise = rho * noise + innovation * gauss(rng);
            s.values[i] = offset + drift_amp * std::sin(2.0 * std::numbers::pi * t / drift_period + drift_phase)
                          + trend * t + noise;
        }

        const std::size_t count = std::min(detail::events_for_series(spec.quench_rate, rng), max_events);
        if (count > 0) {
            const std::size_t slot = samples / count;
            for (std::size_t e = 0; e < count; ++e) {
                const std::size_t lo = e * slot + span / 2;
                const std::size_t hi = (e + 1) * slot - span;
                const auto onset = lo + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo));
                const double rise = between(spec.transient.rise_min_s, spec.transient.rise_max_s);
                const double amp = between(spec.transient.amplitude_min_v, spec.transient.amplitude_max_v);
                const double decay = between(spec.transient.decay_min_s, spec.transient.decay_max_s);
                const double e3 = std::exp(3.0) - 1.0;
                for (std::size_t i = onset; i < samples; ++i) {
                    const double t = s.time_at(i - onset);
                    if (t <= rise) {
                        s.values[i] += amp * (std::exp(3.0 * t / rise) - 1.0) / e3;
                    } else if (t <= rise + 5.0 * decay) {
                        s.values[i] += amp * std::exp(-(t - rise) / decay);
                    } else {
                        break;
                    }
                }
                out.events.push_back({s.magnet_id, s.t0_ns + detail::offset_ns(s.time_at(onset)), "quench"});
            }
        }
        out.series.push_back(std::move(s));
    }
    return out;
}

} // namespace quenchwatch

#endif // QUENCHWATCH_SYNTHETIC_HPP
