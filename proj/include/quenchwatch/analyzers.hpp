#ifndef QUENCHWATCH_ANALYZERS_HPP
#define QUENCHWATCH_ANALYZERS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quenchwatch/error.hpp"
#include "quenchwatch/ingest.hpp"
#include "quenchwatch/lstm.hpp"
#include "quenchwatch/signal.hpp"

namespace quenchwatch {

using Point = std::vector<double>;

/// What every analyzer consumes: feature points for the miners, raw windows
/// for the sequence model. Analyzers ignore the half they do not use.
struct AnalyzerInput {
    std::vector<Point> points;
    std::vector<LabeledWindow> windows;

    /// One FeatureVector point per window.
    static AnalyzerInput from_windows(std::vector<LabeledWindow> windows) {
        AnalyzerInput in;
        for (const auto& w : windows)
            in.points.push_back(extract_features(w.series_slice).as_vector());
        in.windows = std::move(windows);
        return in;
    }
};

struct AnalyzerResult {
    enum class Kind { clustering, prediction };

    Kind kind = Kind::clustering;
    /// Cluster id per input point, -1 for noise.
    std::vector<int> assignments;
    /// Per-timestep prediction error in volts, windows concatenated in order.
    std::vector<double> scores;
    /// Analyzer name, parameters and analyzer-specific extras.
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<Point> centers;
    std::optional<double> inertia;
};

struct QuenchRiskReport {
    std::string window_id;
    std::vector<double> residual_series;
    double peak_residual = 0.0;
    double threshold = 0.0;
    bool flagged = false;
};

inline void to_json(nlohmann::json& j, const AnalyzerResult& r) {
    j = {{"kind", r.kind == AnalyzerResult::Kind::clustering ? "clustering" : "prediction"},
         {"assignments", r.assignments},
         {"scores", r.scores},
         {"metadata", r.metadata},
         {"centers", r.centers},
         {"inertia", r.inertia ? nlohmann::json(*r.inertia) : nlohmann::json()}};
}

inline void to_json(nlohmann::json& j, const QuenchRiskReport& r) {
    j = {{"window_id", r.window_id},
         {"residual_series", r.residual_series},
         {"peak_residual", r.peak_residual},
         {"threshold", r.threshold},
         {"flagged", r.flagged}};
}

namespace detail {

inline double squared_distance(const Point& a, const Point& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        d += (a[k] - b[k]) * (a[k] - b[k]);
    return d;
}

inline void check_points(std::span<const Point> points) {
    if (points.empty())
        return;
    const auto dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim)
            throw Error(ErrorCode::ShapeMismatch, "points differ in dimension");
        for (double v : p)
            if (!std::isfinite(v))
                throw Error(ErrorCode::InvalidArgument, "points must be finite");
    }
}

struct LloydRun {
    std::vector<int> assignments;
    std::vector<Point> centers;
    std::vector<double> inertia_history;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

inline double assign_nearest(std::span<const Point> points, const std::vector<Point>& centers, std::vector<int>& out) {
    out.assign(points.size(), 0);
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.size(); ++c) {
            const double d = squared_distance(points[i], centers[c]);
            if (d < best) {
                best = d;
                out[i] = static_cast<int>(c);
            }
        }
        inertia += best;
    }
    return inertia;
}

/// Single-point transfers (Hartigan): move a point whenever that strictly
/// lowers the total inertia, updating the two affected centers in place.
inline bool transfer_pass(std::span<const Point> points, std::vector<Point>& centers, std::vector<int>& assignments) {
    const std::size_t k = centers.size();
    const std::size_t dim = points.front().size();
    std::vector<std::size_t> counts(k, 0);
    for (int a : assignments)
        ++counts[static_cast<std::size_t>(a)];
    bool moved = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto from = static_cast<std::size_t>(assignments[i]);
        if (counts[from] <= 1)
            continue;
        const double n_from = static_cast<double>(counts[from]);
        const double removal = n_from / (n_from - 1.0) * squared_distance(points[i], centers[from]);
        std::size_t to = from;
        double best = removal;
        for (std::size_t c = 0; c < k; ++c) {
            if (c == from)
                continue;
            const double n_to = static_cast<double>(counts[c]);
            const double addition = n_to / (n_to + 1.0) * squared_distance(points[i], centers[c]);
            if (addition < best * (1.0 - 1e-12)) {
                best = addition;
                to = c;
            }
        }
        if (to == from)
            continue;
        const double n_to = static_cast<double>(counts[to]);
        for (std::size_t d = 0; d < dim; ++d) {
            centers[from][d] = (centers[from][d] * n_from - points[i][d]) / (n_from - 1.0);
            centers[to][d] = (centers[to][d] * n_to + points[i][d]) / (n_to + 1.0);
        }
        --counts[from];
        ++counts[to];
        assignments[i] = static_cast<int>(to);
        moved = true;
    }
    return moved;
}

inline double inertia_of(std::span<const Point> points, const std::vector<Point>& centers,
                         const std::vector<int>& assignments) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        total += squared_distance(points[i], centers[static_cast<std::size_t>(assignments[i])]);
    return total;
}

/// Lloyd iterations to a fixed point, then transfer passes; repeats while
/// transfers still move points. Each history entry is the inertia after one
/// assignment or transfer step.
inline LloydRun lloyd(std::span<const Point> points, std::vector<Point> centers, std::size_t max_iter) {
    LloydRun run;
    const std::size_t k = centers.size();
    const std::size_t dim = points.front().size();
    std::vector<int> current;

    while (run.iterations < max_iter) {
        std::vector<int> next;
        run.inertia_history.push_back(assign_nearest(points, centers, next));
        ++run.iterations;
        if (next == current) {
            if (!transfer_pass(points, centers, current))
                break;
            run.inertia_history.push_back(inertia_of(points, centers, current));
            continue;
        }
        current = std::move(next);

        std::vector<Point> sums(k, Point(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<std::size_t>(current[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d)
                sums[c][d] += points[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0)
                continue; // empty cluster keeps its center
            for (std::size_t d = 0; d < dim; ++d)
                centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
    }
    if (current.empty())
        assign_nearest(points, centers, current);

    run.inertia = inertia_of(points, centers, current);
    run.assignments = std::move(current);
    run.centers = std::move(centers);
    return run;
}

} // namespace detail

/// Lloyd's algorithm with transfer refinement from `restarts` seeded draws of k distinct points; keeps
/// the run with the lowest inertia (first on ties).
inline AnalyzerResult kmeans(std::span<const Point> points, std::size_t k, std::uint64_t seed = 1,
                             std::size_t max_iter = 300, std::size_t restarts = 10) {
    detail::check_points(points);
    if (k == 0)
        throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (k > points.size())
        throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(points.size())
                                              + " points");
    if (max_iter == 0 || restarts == 0)
        throw Error(ErrorCode::InvalidArgument, "max_iter and restarts must be positive");

    std::mt19937_64 rng(seed);
    std::optional<detail::LloydRun> best;
    for (std::size_t r = 0; r < restarts; ++r) {
        std::vector<std::size_t> idx(points.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t c = 0; c < k; ++c) {
            std::uniform_int_distribution<std::size_t> pick(c, idx.size() - 1);
            std::swap(idx[c], idx[pick(rng)]);
        }
        std::vector<Point> centers;
        for (std::size_t c = 0; c < k; ++c)
            centers.push_back(points[idx[c]]);
        auto run = detail::lloyd(points, std::move(centers), max_iter);
        if (!best || run.inertia < best->inertia)
            best = std::move(run);
    }

    AnalyzerResult out;
    out.kind = AnalyzerResult::Kind::clustering;
    out.assignments = best->assignments;
    out.centers = best->centers;
    out.inertia = best->inertia;
    out.metadata = {{"analyzer", "kmeans"},
                    {"parameters", {{"k", k}, {"seed", seed}, {"max_iter", max_iter}, {"restarts", restarts}}},
                    {"iterations", best->iterations},
                    {"inertia_history", best->inertia_history}};
    return out;
}

/// Density clustering with Euclidean distance. A point is core when at least
/// min_pts points (itself included) lie within eps. Border points go to the
/// first cluster that reaches them in index order; the rest is noise (-1).
inline AnalyzerResult dbscan(std::span<const Point> points, double eps, std::size_t min_pts) {
    detail::check_points(points);
    if (!(eps > 0.0))
        throw Error(ErrorCode::InvalidArgument, "eps must be positive");
    if (min_pts == 0)
        throw Error(ErrorCode::InvalidArgument, "min_pts must be at least 1");

    const std::size_t n = points.size();
    const double eps2 = eps * eps;
    auto neighbours = [&](std::size_t i) {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < n; ++j)
            if (detail::squared_distance(points[i], points[j]) <= eps2)
                out.push_back(j);
        return out;
    };

    constexpr int unvisited = -2;
    std::vector<int> labels(n, unvisited);
    std::vector<bool> core(n, false);
    int next_cluster = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != unvisited)
            continue;
        auto seeds = neighbours(i);
        if (seeds.size() < min_pts) {
            labels[i] = -1;
            continue;
        }
        const int cluster = next_cluster++;
        labels[i] = cluster;
        core[i] = true;
        std::deque<std::size_t> queue(seeds.begin(), seeds.end());
        while (!queue.empty()) {
            const auto j = queue.front();
            queue.pop_front();
            if (labels[j] == -1)
                labels[j] = cluster;
            if (labels[j] != unvisited)
                continue;
            labels[j] = cluster;
            auto nj = neighbours(j);
            if (nj.size() >= min_pts) {
                core[j] = true;
                queue.insert(queue.end(), nj.begin(), nj.end());
            }
        }
    }

    AnalyzerResult out;
    out.kind = AnalyzerResult::Kind::clustering;
    out.assignments = std::move(labels);
    out.metadata = {{"analyzer", "dbscan"},
                    {"parameters", {{"eps", eps}, {"min_pts", min_pts}}},
                    {"clusters", next_cluster},
                    {"core", core}};
    return out;
}

namespace detail {

inline void check_compatible(const lstm::ModelSnapshot& model) {
    if (model.network.input_size() != 1 || model.network.output_size() != 1)
        throw Error(ErrorCode::IncompatibleModel, "model maps " + std::to_string(model.network.input_size())
                                                      + " inputs to " + std::to_string(model.network.output_size())
                                                      + " outputs; next-step analysis needs 1 -> 1");
}

/// |prediction(t) - actual(t+1)| in volts for one raw (un-normalized) window.
inline std::vector<double> residuals(const LabeledWindow& window, const lstm::ModelSnapshot& model) {
    const auto& values = window.series_slice.values;
    if (values.size() < 2)
        throw Error(ErrorCode::IncompatibleModel, "window of " + std::to_string(values.size())
                                                      + " samples is too short for next-step prediction (needs 2)");
    const auto normalized = normalize(window, model.training_stats.value_or(NormalizationStats{0.0, 1.0}));
    const double unit = normalized.degenerate ? 1.0 : normalized.stats.std;
    const auto& z = normalized.window.series_slice.values;

    lstm::Sequence xs;
    for (std::size_t t = 0; t + 1 < z.size(); ++t)
        xs.push_back(lstm::Vector::Constant(1, z[t]));
    const auto fwd = lstm::forward_sequence(xs, model.network, model.gate_config);
    std::vector<double> out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t)
        out[t] = std::abs(fwd.predictions[t][0] - z[t + 1]) * unit;
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty())
        throw Error(ErrorCode::InvalidArgument, "median of nothing");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    if (v.size() % 2 == 1)
        return v[mid];
    const double hi = v[mid];
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Median one-step residual (volts) of `model` over `windows`.
inline double median_residual(std::span<const LabeledWindow> windows, const lstm::ModelSnapshot& model) {
    detail::check_compatible(model);
    std::vector<double> all;
    for (const auto& w : windows) {
        auto r = detail::residuals(w, model);
        all.insert(all.end(), r.begin(), r.end());
    }
    return detail::median(std::move(all));
}

inline constexpr double default_threshold_factor = 5.0;

/// 5x the model's median training residual.
inline double default_threshold(const lstm::ModelSnapshot& model) {
    if (!model.median_training_residual)
        throw Error(ErrorCode::IncompatibleModel, "model carries no training residual; pass a threshold");
    return default_threshold_factor * *model.median_training_residual;
}

/// Next-step prediction over each raw window. Windows are normalized with the
/// model's training statistics; residuals are reported back in volts.
inline std::vector<QuenchRiskReport> lstm_analyze(std::span<const LabeledWindow> windows,
                                                  const lstm::ModelSnapshot& model, double threshold,
                                                  std::span<const std::string> window_ids = {}) {
    detail::check_compatible(model);
    if (!window_ids.empty() && window_ids.size() != windows.size())
        throw Error(ErrorCode::LengthMismatch, "one id per window required");
    std::vector<QuenchRiskReport> out;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        QuenchRiskReport r;
        r.window_id = window_ids.empty() ? std::to_string(k) : window_ids[k];
        r.residual_series = detail::residuals(windows[k], model);
        r.peak_residual = *std::max_element(r.residual_series.begin(), r.residual_series.end());
        r.threshold = threshold;
        r.flagged = r.peak_residual > threshold;
        out.push_back(std::move(r));
    }
    return out;
}

class Analyzer {
public:
    virtual ~Analyzer() = default;
    virtual std::string name() const = 0;
    virtual AnalyzerResult analyze(const AnalyzerInput& input) const = 0;
};

class KMeansAnalyzer final : public Analyzer {
public:
    KMeansAnalyzer(std::size_t k, std::uint64_t seed = 1, std::size_t max_iter = 300, std::size_t restarts = 10)
        : k_(k), seed_(seed), max_iter_(max_iter), restarts_(restarts) {}

    std::string name() const override { return "kmeans"; }
    AnalyzerResult analyze(const AnalyzerInput& input) const override {
        return kmeans(input.points, k_, seed_, max_iter_, restarts_);
    }

private:
    std::size_t k_;
    std::uint64_t seed_;
    std::size_t max_iter_;
    std::size_t restarts_;
};

class DbscanAnalyzer final : public Analyzer {
public:
    DbscanAnalyzer(double eps, std::size_t min_pts) : eps_(eps), min_pts_(min_pts) {}

    std::string name() const override { return "dbscan"; }
    AnalyzerResult analyze(const AnalyzerInput& input) const override { return dbscan(input.points, eps_, min_pts_); }

private:
    double eps_;
    std::size_t min_pts_;
};

/// The sequence model as a data-miner: scores are concatenated per-step residuals.
class LstmAnalyzer final : public Analyzer {
public:
    explicit LstmAnalyzer(std::shared_ptr<const lstm::ModelSnapshot> model, std::optional<double> threshold = {})
        : model_(std::move(model)), threshold_(threshold) {}

    std::string name() const override { return "lstm"; }

    AnalyzerResult analyze(const AnalyzerInput& input) const override {
        const double threshold = threshold_ ? *threshold_ : default_threshold(*model_);
        const auto reports = lstm_analyze(input.windows, *model_, threshold);
        AnalyzerResult out;
        out.kind = AnalyzerResult::Kind::prediction;
        nlohmann::json lengths = nlohmann::json::array();
        nlohmann::json flagged = nlohmann::json::array();
        for (const auto& r : reports) {
            out.scores.insert(out.scores.end(), r.residual_series.begin(), r.residual_series.end());
            lengths.push_back(r.residual_series.size());
            flagged.push_back(r.flagged);
        }
        out.metadata = {{"analyzer", "lstm"},
                        {"parameters", {{"threshold", threshold}}},
                        {"window_lengths", std::move(lengths)},
                        {"flagged", std::move(flagged)}};
        return out;
    }

private:
    std::shared_ptr<const lstm::ModelSnapshot> model_;
    std::optional<double> threshold_;
};

/// Name -> factory map. New analyzers register here without touching existing ones.
class AnalyzerRegistry {
public:
    using Factory = std::function<std::unique_ptr<Analyzer>(const nlohmann::json& params)>;

    void add(const std::string& name, Factory factory) {
        if (!factories_.emplace(name, std::move(factory)).second)
            throw Error(ErrorCode::Conflict, "analyzer '" + name + "' already registered");
    }

    std::unique_ptr<Analyzer> create(const std::string& name, const nlohmann::json& params = {}) const {
        auto it = factories_.find(name);
        if (it == factories_.end())
            throw Error(ErrorCode::NotFound, "no analyzer named '" + name + "'");
        try {
            return it->second(params);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, "analyzer '" + name + "' parameters: " + e.what());
        }
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [name, _] : factories_)
            out.push_back(name);
        return out;
    }

    /// kmeans {k, seed?, max_iter?, restarts?} and dbscan {eps, min_pts}.
    static AnalyzerRegistry with_builtins() {
        AnalyzerRegistry reg;
        reg.add("kmeans", [](const nlohmann::json& p) {
            return std::make_unique<KMeansAnalyzer>(p.at("k").get<std::size_t>(), p.value("seed", std::uint64_t{1}),
                                                    p.value("max_iter", std::size_t{300}),
                                                    p.value("restarts", std::size_t{10}));
        });
        reg.add("dbscan", [](const nlohmann::json& p) {
            return std::make_unique<DbscanAnalyzer>(p.at("eps").get<double>(), p.at("min_pts").get<std::size_t>());
        });
        return reg;
    }

private:
    std::map<std::string, Factory> factories_;
};

} // namespace quenchwatch

#endif // QUENCHWATCH_ANALYZERS_HPP
