#ifndef QUENCHWATCH_PIPELINE_HPP
#define QUENCHWATCH_PIPELINE_HPP

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "quenchwatch/analyzers.hpp"
#include "quenchwatch/dataset.hpp"
#include "quenchwatch/ingest.hpp"
#include "quenchwatch/lstm.hpp"

namespace quenchwatch {

/// How normal training windows are cut from a dataset. Each window holds
/// input_window + 1 samples so it yields input_window next-step pairs.
struct TrainingPlan {
    /// Half-width of the exclusion zone around every quench event.
    double guard_s = 2.0;
    /// Window advance in samples; 0 means half the input window.
    std::size_t stride = 0;

    friend bool operator==(const TrainingPlan&, const TrainingPlan&) = default;
};

inline void to_json(nlohmann::json& j, const TrainingPlan& p) { j = {{"guard_s", p.guard_s}, {"stride", p.stride}}; }

inline void from_json(const nlohmann::json& j, TrainingPlan& p) {
    p.guard_s = j.value("guard_s", p.guard_s);
    p.stride = j.value("stride", p.stride);
    if (!(p.guard_s >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "guard_s must be non-negative");
}

struct PreparedTraining {
    std::vector<LabeledWindow> windows;
    NormalizationStats stats;
    std::vector<lstm::TrainingExample> examples;
};

inline std::vector<LabeledWindow> training_windows(const Dataset& data, const lstm::Hyperparameters& hp,
                                                   const TrainingPlan& plan) {
    const std::size_t width = hp.input_window + 1;
    const std::size_t stride = plan.stride > 0 ? plan.stride : std::max<std::size_t>(1, hp.input_window / 2);
    std::vector<LabeledWindow> out;
    for (const auto& s : data.series) {
        const auto events = data.events_for(s.magnet_id);
        auto w = extract_normal_windows(s, events, static_cast<double>(width) * s.dt, plan.guard_s,
                                        static_cast<double>(stride) * s.dt);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

/// Normal windows, pooled z-score statistics and normalized next-step examples.
inline PreparedTraining prepare_training(const Dataset& data, const lstm::Hyperparameters& hp,
                                         const TrainingPlan& plan = {}) {
    hp.validate();
    PreparedTraining out;
    out.windows = training_windows(data, hp, plan);
    if (out.windows.empty())
        throw Error(ErrorCode::InvalidArgument, "no normal windows of " + std::to_string(hp.input_window + 1)
                                                    + " samples outside the quench guard zones");
    std::vector<double> pooled;
    for (const auto& w : out.windows)
        pooled.insert(pooled.end(), w.series_slice.values.begin(), w.series_slice.values.end());
    out.stats = compute_stats(pooled);
    for (const auto& w : out.windows) {
        const auto z = normalize(w, out.stats);
        out.examples.push_back(lstm::next_step_example(z.window.series_slice.values));
    }
    return out;
}

/// Trains on a dataset's normal windows and stamps the snapshot with the
/// normalization statistics and median training residual the analyzer needs.
inline lstm::TrainingOutcome train_on_dataset(const Dataset& data, const lstm::Hyperparameters& hp,
                                              const TrainingPlan& plan = {}, const lstm::GateConfig& cfg = {},
                                              const lstm::EpochCallback& on_epoch = {}) {
    auto prepared = prepare_training(data, hp, plan);
    auto outcome = lstm::train(prepared.examples, hp, cfg, on_epoch);
    outcome.snapshot.training_stats = prepared.stats;
    outcome.snapshot.median_training_residual = median_residual(prepared.windows, outcome.snapshot);
    return outcome;
}

} // namespace quenchwatch

#endif // QUENCHWATCH_PIPELINE_HPP
