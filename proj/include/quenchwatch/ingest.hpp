#ifndef QUENCHWATCH_INGEST_HPP
#define QUENCHWATCH_INGEST_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "quenchwatch/error.hpp"
#include "quenchwatch/signal.hpp"

namespace quenchwatch {

struct QuenchEvent {
    std::string magnet_id;
    std::int64_t t_event_ns = 0;
    std::string label = "quench";

    friend bool operator==(const QuenchEvent&, const QuenchEvent&) = default;
};

struct LabeledWindow {
    VoltageSeries series_slice;
    bool contains_quench = false;
    /// Seconds from the window's first sample to the event; set iff contains_quench.
    std::optional<double> t_event_offset;
    /// Index of the window's first sample in the source series.
    std::size_t start_index = 0;
    /// The requested span was cut at a series boundary.
    bool clamped = false;
};

inline constexpr std::string_view series_csv_header = "timestamp_ns,value_volts";
inline constexpr std::string_view events_csv_header = "magnet_id,t_event_ns,label";

namespace detail {

inline std::string_view trim_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    return line;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 16);
    return std::string(buf, ptr);
}

inline std::int64_t offset_ns(double seconds) { return std::llround(seconds * 1e9); }

} // namespace detail

/// Serializes a series as `timestamp_ns,value_volts` rows with 17 significant digits.
inline std::string series_to_csv(const VoltageSeries& series) {
    std::string out;
    out.reserve(32 + series.size() * 44);
    out += series_csv_header;
    out += '\n';
    for (std::size_t k = 0; k < series.size(); ++k) {
        out += std::to_string(series.t0_ns + detail::offset_ns(series.time_at(k)));
        out += ',';
        out += detail::format_double(series.values[k]);
        out += '\n';
    }
    return out;
}

inline VoltageSeries series_from_csv(std::string_view text, std::string magnet_id = {}) {
    if (text.empty())
        throw Error(ErrorCode::EmptyFile, "no content");

    std::vector<std::int64_t> stamps;
    VoltageSeries series;
    series.magnet_id = std::move(magnet_id);

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = detail::trim_cr(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;

        if (line_no == 1) {
            if (line != series_csv_header)
                throw Error(ErrorCode::ParseError, "row 1: expected header '" + std::string(series_csv_header) + "'");
            continue;
        }
        if (line.empty())
            continue;

        auto comma = line.find(',');
        std::int64_t ts = 0;
        double v = 0.0;
        if (comma == std::string_view::npos || !detail::parse_number(line.substr(0, comma), ts)
            || !detail::parse_number(line.substr(comma + 1), v) || !std::isfinite(v))
            throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": malformed sample");

        if (stamps.size() >= 2) {
            const auto step = static_cast<double>(stamps[1] - stamps[0]);
            const auto got = static_cast<double>(ts - stamps.back());
            if (std::abs(got - step) > 1e-6 * step)
                throw Error(ErrorCode::NonUniformSampling, "row " + std::to_string(line_no));
        } else if (stamps.size() == 1 && ts <= stamps[0]) {
            throw Error(ErrorCode::NonUniformSampling, "row " + std::to_string(line_no));
        }
        stamps.push_back(ts);
        series.values.push_back(v);
    }

    if (stamps.empty())
        throw Error(ErrorCode::EmptyFile, "header only, no samples");
    if (stamps.size() < 2)
        throw Error(ErrorCode::ParseError, "at least two rows are needed to infer the sampling interval");

    series.t0_ns = stamps[0];
    series.dt = static_cast<double>(stamps[1] - stamps[0]) / 1e9;
    require_valid(series);
    return series;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline VoltageSeries load_series(const std::filesystem::path& path, std::string magnet_id = {}) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::NotFound, path.string());
    if (magnet_id.empty())
        magnet_id = path.stem().string();
    return series_from_csv(read_file(path), std::move(magnet_id));
}

inline void save_series(const std::filesystem::path& path, const VoltageSeries& series) {
    write_file(path, series_to_csv(series));
}

inline std::string events_to_csv(std::span<const QuenchEvent> events) {
    std::string out(events_csv_header);
    out += '\n';
    for (const auto& e : events)
        out += e.magnet_id + ',' + std::to_string(e.t_event_ns) + ',' + e.label + '\n';
    return out;
}

inline std::vector<QuenchEvent> events_from_csv(std::string_view text) {
    std::vector<QuenchEvent> events;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = detail::trim_cr(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line_no == 1) {
            if (line != events_csv_header)
                throw Error(ErrorCode::ParseError, "row 1: expected header '" + std::string(events_csv_header) + "'");
            continue;
        }
        if (line.empty())
            continue;
        auto c1 = line.find(',');
        auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        QuenchEvent e;
        if (c2 == std::string_view::npos || !detail::parse_number(line.substr(c1 + 1, c2 - c1 - 1), e.t_event_ns))
            throw Error(ErrorCode::ParseError, "row " + std::to_string(line_no) + ": malformed event");
        e.magnet_id = std::string(line.substr(0, c1));
        e.label = std::string(line.substr(c2 + 1));
        events.push_back(std::move(e));
    }
    return events;
}

/// Contiguous copy of samples [start, start + count).
inline VoltageSeries slice(const VoltageSeries& series, std::size_t start, std::size_t count) {
    if (start + count > series.size())
        throw Error(ErrorCode::InvalidArgument, "slice exceeds series bounds");
    VoltageSeries out;
    out.magnet_id = series.magnet_id;
    out.circuit_class = series.circuit_class;
    out.dt = series.dt;
    out.t0_ns = series.t0_ns + detail::offset_ns(series.time_at(start));
    out.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(start),
                      series.values.begin() + static_cast<std::ptrdiff_t>(start + count));
    return out;
}

struct QuenchWindowExtraction {
    std::vector<LabeledWindow> windows;
    /// Events that fell outside the series span; they produce no window.
    std::vector<QuenchEvent> skipped;
};

inline constexpr double default_pre_s = 60.0;
inline constexpr double default_post_s = 10.0;

/// Cuts [t_event - pre_s, t_event + post_s] around every in-span event,
/// clamping at the series edges. Events are matched on time only.
inline QuenchWindowExtraction extract_quench_windows(const VoltageSeries& series,
                                                     std::span<const QuenchEvent> events,
                                                     double pre_s = default_pre_s,
                                                     double post_s = default_post_s) {
    require_valid(series);
    if (!(pre_s >= 0.0) || !(post_s >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "pre_s and post_s must be non-negative");
    if (!std::is_sorted(events.begin(), events.end(),
                        [](const auto& a, const auto& b) { return a.t_event_ns < b.t_event_ns; }))
        throw Error(ErrorCode::InvalidArgument, "events must be sorted by time");

    constexpr double tol = 1e-9;
    const double duration = series.duration();
    const auto last_index = static_cast<double>(series.size() - 1);

    QuenchWindowExtraction out;
    for (const auto& e : events) {
        const double rel = static_cast<double>(e.t_event_ns - series.t0_ns) / 1e9;
        if (rel < -tol * series.dt || rel > duration + tol * series.dt) {
            out.skipped.push_back(e);
            continue;
        }
        const double lo = (rel - pre_s) / series.dt;
        const double hi = (rel + post_s) / series.dt;
        const bool clamped = lo < -tol || hi > last_index + tol;
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(lo - tol)));
        const auto last = static_cast<std::size_t>(std::min(last_index, std::floor(hi + tol)));

        LabeledWindow w;
        w.series_slice = slice(series, first, last - first + 1);
        w.contains_quench = true;
        w.t_event_offset = std::max(0.0, static_cast<double>(e.t_event_ns - w.series_slice.t0_ns) / 1e9);
        w.start_index = first;
        w.clamped = clamped;
        out.windows.push_back(std::move(w));
    }
    return out;
}

/// Sliding windows of round(window_s / dt) samples advanced by round(stride_s / dt),
/// dropping every window whose time span meets [t_event - guard_s, t_event + guard_s].
inline std::vector<LabeledWindow> extract_normal_windows(const VoltageSeries& series,
                                                         std::span<const QuenchEvent> events,
                                                         double window_s, double guard_s, double stride_s) {
    require_valid(series);
    if (!(window_s > 0.0) || !(stride_s > 0.0))
        throw Error(ErrorCode::InvalidArgument, "window_s and stride_s must be positive");
    const auto width = static_cast<std::size_t>(std::max<long long>(1, std::llround(window_s / series.dt)));
    const auto stride = static_cast<std::size_t>(std::max<long long>(1, std::llround(stride_s / series.dt)));
    const double guard = std::max(0.0, guard_s);

    std::vector<double> event_times;
    event_times.reserve(events.size());
    for (const auto& e : events)
        event_times.push_back(static_cast<double>(e.t_event_ns - series.t0_ns) / 1e9);

    std::vector<LabeledWindow> out;
    for (std::size_t start = 0; start + width <= series.size(); start += stride) {
        const double a = series.time_at(start);
        const double b = series.time_at(start + width - 1);
        const bool guarded = std::any_of(event_times.begin(), event_times.end(),
                                         [&](double t) { return a <= t + guard && t - guard <= b; });
        if (guarded)
            continue;
        LabeledWindow w;
        w.series_slice = slice(series, start, width);
        w.start_index = start;
        out.push_back(std::move(w));
    }
    return out;
}

struct NormalizationStats {
    double mean = 0.0;
    double std = 1.0;

    friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Population mean and standard deviation.
inline NormalizationStats compute_stats(std::span<const double> values) {
    if (values.empty())
        throw Error(ErrorCode::EmptySeries, "cannot compute statistics of no samples");
    double sum = 0.0;
    for (double v : values)
        sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size()))};
}

inline bool is_degenerate(const NormalizationStats& stats) {
    return stats.std < 1e-12 * std::max(1.0, std::abs(stats.mean));
}

struct NormalizedWindow {
    LabeledWindow window;
    NormalizationStats stats;
    /// std was below threshold and the samples were passed through unchanged.
    bool degenerate = false;
};

/// z-score normalization. Without stats they are computed from the window
/// itself and returned for reuse on other windows.
inline NormalizedWindow normalize(const LabeledWindow& window, std::optional<NormalizationStats> stats = std::nullopt) {
    NormalizedWindow out{window, stats ? *stats : compute_stats(window.series_slice.values), false};
    if (is_degenerate(out.stats)) {
        out.degenerate = true;
        return out;
    }
    for (double& v : out.window.series_slice.values)
        v = (v - out.stats.mean) / out.stats.std;
    return out;
}

} // namespace quenchwatch

#endif // QUENCHWATCH_INGEST_HPP
