#ifndef QUENCHWATCH_LSTM_GRADCHECK_HPP
#define QUENCHWATCH_LSTM_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quenchwatch/lstm/backward.hpp"

namespace quenchwatch::lstm {

struct TensorCheck {
    std::string name;
    double worst_relative_error = 0.0;
    std::size_t checked = 0;
    /// Entries whose +/-delta probe moved a gate across a hard-sigmoid kink.
    std::size_t skipped_near_kink = 0;
    bool passed = true;
};

struct GradientCheckReport {
    std::vector<TensorCheck> tensors;
    double tolerance = 0.0;
    std::size_t trials = 0;
    bool passed = true;

    std::vector<std::string> failing() const {
        std::vector<std::string> names;
        for (const auto& t : tensors)
            if (!t.passed)
                names.push_back(t.name);
        return names;
    }

    double worst() const {
        double w = 0.0;
        for (const auto& t : tensors)
            w = std::max(w, t.worst_relative_error);
        return w;
    }
};

struct GradientCheckOptions {
    std::size_t inputs = 2;
    std::size_t cells = 3;
    std::size_t layers = 1;
    std::size_t outputs = 1;
    std::size_t steps = 4;
    std::size_t trials = 20;
    double delta = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 2024;
    /// Half-width of the uniform draw for parameters and inputs.
    double scale = 1.0;
    GateConfig gate;
    /// Fault-injection hook applied to the analytic gradients before comparison.
    std::function<void(Gradients&)> tamper;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// gradients that are zero up to rounding from reading as large relative errors.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace detail {

inline std::vector<std::int8_t> branch_signature(const ForwardResult& fwd, const GateConfig& cfg) {
    std::vector<std::int8_t> sig;
    for (const auto& layer : fwd.traces)
        for (const auto& tr : layer)
            for (const Vector* pre : {&tr.pre_i, &tr.pre_f, &tr.pre_o})
                for (Eigen::Index k = 0; k < pre->size(); ++k)
                    sig.push_back(static_cast<std::int8_t>(gate_branch((*pre)[k], cfg)));
    return sig;
}

} // namespace detail

/// Compares backward_bptt against central differences on one instance and
/// folds the outcome into `report` (keyed by tensor name).
inline void gradient_check_instance(const LstmNetwork& net, std::span<const Vector> xs,
                                    std::span<const Vector> targets, const GradientCheckOptions& opt,
                                    std::map<std::string, TensorCheck>& report) {
    auto analytic = backward_bptt(xs, targets, net, opt.gate);
    if (opt.tamper)
        opt.tamper(analytic);
    const auto base_sig = detail::branch_signature(forward_sequence(xs, net, opt.gate), opt.gate);
    // Smallest gradient magnitude the central difference resolves to within the tolerance.
    const double roundoff = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, analytic.loss) / opt.delta;
    const double floor = std::max(1e-6, roundoff / opt.tolerance);

    std::vector<std::pair<std::string, std::vector<double>>> flat;
    analytic.params.for_each_tensor([&](const std::string& name, const auto& t) {
        flat.emplace_back(name, std::vector<double>(t.data(), t.data() + t.size()));
    });

    LstmNetwork probe = net;
    std::size_t tensor_idx = 0;
    probe.for_each_tensor([&](const std::string& name, auto& t) {
        auto& entry = report[name];
        entry.name = name;
        const auto& grad = flat[tensor_idx++].second;
        for (Eigen::Index k = 0; k < t.size(); ++k) {
            const double original = t.data()[k];
            t.data()[k] = original + opt.delta;
            auto plus = forward_sequence(xs, probe, opt.gate);
            t.data()[k] = original - opt.delta;
            auto minus = forward_sequence(xs, probe, opt.gate);
            t.data()[k] = original;

            if (detail::branch_signature(plus, opt.gate) != base_sig
                || detail::branch_signature(minus, opt.gate) != base_sig) {
                ++entry.skipped_near_kink;
                continue;
            }
            const double numeric =
                (loss(plus.predictions, targets) - loss(minus.predictions, targets)) / (2.0 * opt.delta);
            const double err = relative_error(grad[static_cast<std::size_t>(k)], numeric, floor);
            entry.worst_relative_error = std::max(entry.worst_relative_error, err);
            ++entry.checked;
            if (!(err < opt.tolerance))
                entry.passed = false;
        }
    });
}

/// Runs `opt.trials` seeded random instances and reports the worst relative
/// error per tensor.
inline GradientCheckReport gradient_check(const GradientCheckOptions& opt = {}) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> dist(-opt.scale, opt.scale);
    std::map<std::string, TensorCheck> by_name;
    std::vector<std::string> order;

    for (std::size_t trial = 0; trial < std::max<std::size_t>(1, opt.trials); ++trial) {
        auto net = LstmNetwork::zeros(opt.inputs, opt.cells, opt.layers, opt.outputs);
        net.for_each_tensor([&](const std::string& name, auto& t) {
            if (trial == 0)
                order.push_back(name);
            for (Eigen::Index k = 0; k < t.size(); ++k)
                t.data()[k] = dist(rng);
        });
        Sequence xs, ys;
        for (std::size_t t = 0; t < opt.steps; ++t) {
            xs.push_back(Vector::NullaryExpr(static_cast<Eigen::Index>(opt.inputs), [&] { return dist(rng); }));
            ys.push_back(Vector::NullaryExpr(static_cast<Eigen::Index>(opt.outputs), [&] { return dist(rng); }));
        }
        gradient_check_instance(net, xs, ys, opt, by_name);
    }

    GradientCheckReport report;
    report.tolerance = opt.tolerance;
    report.trials = std::max<std::size_t>(1, opt.trials);
    for (const auto& name : order) {
        report.tensors.push_back(by_name[name]);
        report.passed = report.passed && by_name[name].passed && by_name[name].checked > 0;
    }
    return report;
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_GRADCHECK_HPP
