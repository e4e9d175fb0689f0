#ifndef QUENCHWATCH_LSTM_FORWARD_HPP
#define QUENCHWATCH_LSTM_FORWARD_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quenchwatch/error.hpp"
#include "quenchwatch/lstm/gate.hpp"
#include "quenchwatch/lstm/params.hpp"

namespace quenchwatch::lstm {

/// Everything one step of one block produced, kept for the backward pass and
/// for inspecting gate behaviour. The cell activation is tanh throughout.
struct GateTrace {
    Vector x;
    Vector h_prev;
    Vector s_prev;
    Vector pre_g, pre_i, pre_f, pre_o;
    Vector g, i, f, o;
    Vector s;
    Vector tanh_s;
    Vector h;
};

struct StepResult {
    LstmState state;
    GateTrace trace;
};

inline Vector gate_activation(const Vector& pre, const GateConfig& cfg) {
    return pre.unaryExpr([&cfg](double v) { return hard_sigmoid(v, cfg); });
}

/// One time step of a memory block:
///   g = tanh(Wgx x + Wgh h + bg),  i/f/o = hard_sigmoid(W*x x + W*h h + b*)
///   s' = g*i + s*f,  h' = tanh(s')*o
inline StepResult cell_forward(const Vector& x, const LstmState& prev, const LstmBlockParams& params,
                               const GateConfig& cfg) {
    const auto cells = static_cast<Eigen::Index>(params.cell_count());
    if (x.size() != static_cast<Eigen::Index>(params.input_size()) || prev.h.size() != cells || prev.s.size() != cells)
        throw Error(ErrorCode::ShapeMismatch, "cell_forward: input or state length disagrees with parameters");

    GateTrace t;
    t.x = x;
    t.h_prev = prev.h;
    t.s_prev = prev.s;
    auto affine = [&](const GateWeights& w) -> Vector { return w.w_x * x + w.w_h * prev.h + w.bias; };
    t.pre_g = affine(params.input_node);
    t.pre_i = affine(params.input_gate);
    t.pre_f = affine(params.forget_gate);
    t.pre_o = affine(params.output_gate);
    t.g = t.pre_g.array().tanh();
    t.i = gate_activation(t.pre_i, cfg);
    t.f = gate_activation(t.pre_f, cfg);
    t.o = gate_activation(t.pre_o, cfg);
    t.s = t.g.cwiseProduct(t.i) + prev.s.cwiseProduct(t.f);
    t.tanh_s = t.s.array().tanh();
    t.h = t.tanh_s.cwiseProduct(t.o);
    LstmState next{t.h, t.s};
    return {std::move(next), std::move(t)};
}

struct ForwardResult {
    Sequence predictions;
    /// traces[layer][t]
    std::vector<std::vector<GateTrace>> traces;
    std::vector<LstmState> final_states;
};

/// Runs the stack over xs one element at a time from the given (default zero)
/// initial states and maps each top-layer h through the output head.
inline ForwardResult forward_sequence(std::span<const Vector> xs, const LstmNetwork& net, const GateConfig& cfg,
                                      std::optional<std::vector<LstmState>> initial = std::nullopt) {
    if (xs.empty())
        throw Error(ErrorCode::InvalidArgument, "forward_sequence needs a non-empty sequence");
    net.check_shapes();
    const std::size_t layers = net.layers.size();
    std::vector<LstmState> states;
    if (initial) {
        if (initial->size() != layers)
            throw Error(ErrorCode::ShapeMismatch, "one initial state per layer required");
        states = std::move(*initial);
    } else {
        states.assign(layers, LstmState::zeros(net.cell_count()));
    }

    ForwardResult out;
    out.traces.resize(layers);
    for (auto& tr : out.traces)
        tr.reserve(xs.size());
    out.predictions.reserve(xs.size());
    for (const auto& x : xs) {
        const Vector* input = &x;
        for (std::size_t l = 0; l < layers; ++l) {
            auto step = cell_forward(*input, states[l], net.layers[l], cfg);
            states[l] = std::move(step.state);
            out.traces[l].push_back(std::move(step.trace));
            input = &out.traces[l].back().h;
        }
        out.predictions.push_back(net.head.w_y * *input + net.head.b_y);
    }
    out.final_states = std::move(states);
    return out;
}

inline ForwardResult forward_sequence(std::span<const Vector> xs, const LstmBlockParams& params,
                                      const OutputHead& head, const GateConfig& cfg,
                                      std::optional<LstmState> initial = std::nullopt) {
    LstmNetwork net{{params}, head};
    std::optional<std::vector<LstmState>> init;
    if (initial)
        init = std::vector<LstmState>{*initial};
    return forward_sequence(xs, net, cfg, std::move(init));
}

/// Mean squared error over every time step and output component.
inline double loss(std::span<const Vector> predictions, std::span<const Vector> targets) {
    if (predictions.size() != targets.size())
        throw Error(ErrorCode::LengthMismatch, "loss: " + std::to_string(predictions.size()) + " predictions vs "
                                                   + std::to_string(targets.size()) + " targets");
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < predictions.size(); ++t) {
        if (predictions[t].size() != targets[t].size())
            throw Error(ErrorCode::LengthMismatch, "loss: output width differs at step " + std::to_string(t));
        sum += (predictions[t] - targets[t]).squaredNorm();
        count += static_cast<std::size_t>(targets[t].size());
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_FORWARD_HPP
