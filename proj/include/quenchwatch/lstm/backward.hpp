#ifndef QUENCHWATCH_LSTM_BACKWARD_HPP
#define QUENCHWATCH_LSTM_BACKWARD_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "quenchwatch/error.hpp"
#include "quenchwatch/lstm/forward.hpp"

namespace quenchwatch::lstm {

struct Gradients {
    /// Same shapes as the network, holding d loss / d parameter.
    LstmNetwork params;
    /// d loss / d (h, s) of each layer's initial state.
    std::vector<LstmState> initial_state;
    double loss = 0.0;
};

namespace detail {

inline Vector gate_slope(const Vector& pre, const GateConfig& cfg) {
    return pre.unaryExpr([&cfg](double v) { return hard_sigmoid_derivative(v, cfg); });
}

inline void accumulate(GateWeights& grad, const Vector& d_pre, const GateTrace& t) {
    grad.w_x.noalias() += d_pre * t.x.transpose();
    grad.w_h.noalias() += d_pre * t.h_prev.transpose();
    grad.bias += d_pre;
}

} // namespace detail

/// Full-sequence backpropagation through time for the MSE loss of
/// forward_sequence(xs) against targets. The gate derivative is the ramp slope
/// strictly inside (t_low, t_high) and 0 elsewhere, kinks included.
inline Gradients backward_bptt(std::span<const Vector> xs, std::span<const Vector> targets, const LstmNetwork& net,
                               const GateConfig& cfg,
                               std::optional<std::vector<LstmState>> initial = std::nullopt) {
    if (xs.size() != targets.size())
        throw Error(ErrorCode::LengthMismatch, "backward_bptt: inputs and targets differ in length");
    auto fwd = forward_sequence(xs, net, cfg, std::move(initial));
    const std::size_t steps = xs.size();
    const std::size_t layers = net.layers.size();
    const auto cells = net.cell_count();
    const auto outputs = static_cast<Eigen::Index>(net.output_size());
    for (const auto& y : targets)
        if (y.size() != outputs)
            throw Error(ErrorCode::ShapeMismatch, "backward_bptt: target width disagrees with output head");

    Gradients grads;
    grads.params = LstmNetwork::zeros(net.input_size(), cells, layers, net.output_size());
    grads.loss = loss(fwd.predictions, targets);

    // Gradient arriving at each top-layer h from the head.
    const double scale = 2.0 / (static_cast<double>(steps) * static_cast<double>(outputs));
    std::vector<Vector> d_h_external(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        const Vector d_y = scale * (fwd.predictions[t] - targets[t]);
        const auto& h_top = fwd.traces[layers - 1][t].h;
        grads.params.head.w_y.noalias() += d_y * h_top.transpose();
        grads.params.head.b_y += d_y;
        d_h_external[t] = net.head.w_y.transpose() * d_y;
    }

    grads.initial_state.resize(layers);
    for (std::size_t l = layers; l-- > 0;) {
        const auto& p = net.layers[l];
        auto& g = grads.params.layers[l];
        const auto& traces = fwd.traces[l];
        std::vector<Vector> d_x(steps);
        Vector d_h_next = Vector::Zero(static_cast<Eigen::Index>(cells));
        Vector d_s_next = Vector::Zero(static_cast<Eigen::Index>(cells));

        for (std::size_t t = steps; t-- > 0;) {
            const auto& tr = traces[t];
            const Vector d_h = d_h_external[t] + d_h_next;
            const Vector d_o = d_h.cwiseProduct(tr.tanh_s);
            const Vector d_s = d_h.cwiseProduct(tr.o).cwiseProduct((1.0 - tr.tanh_s.array().square()).matrix())
                               + d_s_next;
            const Vector d_g = d_s.cwiseProduct(tr.i);
            const Vector d_i = d_s.cwiseProduct(tr.g);
            const Vector d_f = d_s.cwiseProduct(tr.s_prev);

            const Vector d_pre_g = d_g.cwiseProduct((1.0 - tr.g.array().square()).matrix());
            const Vector d_pre_i = d_i.cwiseProduct(detail::gate_slope(tr.pre_i, cfg));
            const Vector d_pre_f = d_f.cwiseProduct(detail::gate_slope(tr.pre_f, cfg));
            const Vector d_pre_o = d_o.cwiseProduct(detail::gate_slope(tr.pre_o, cfg));

            detail::accumulate(g.input_node, d_pre_g, tr);
            detail::accumulate(g.input_gate, d_pre_i, tr);
            detail::accumulate(g.forget_gate, d_pre_f, tr);
            detail::accumulate(g.output_gate, d_pre_o, tr);

            d_x[t] = p.input_node.w_x.transpose() * d_pre_g + p.input_gate.w_x.transpose() * d_pre_i
                     + p.forget_gate.w_x.transpose() * d_pre_f + p.output_gate.w_x.transpose() * d_pre_o;
            d_h_next = p.input_node.w_h.transpose() * d_pre_g + p.input_gate.w_h.transpose() * d_pre_i
                       + p.forget_gate.w_h.transpose() * d_pre_f + p.output_gate.w_h.transpose() * d_pre_o;
            // Constant error carousel: with f == 1 this passes d_s back unchanged.
            d_s_next = d_s.cwiseProduct(tr.f);
        }
        grads.initial_state[l] = {d_h_next, d_s_next};
        d_h_external = std::move(d_x);
    }
    return grads;
}

inline Gradients backward_bptt(std::span<const Vector> xs, std::span<const Vector> targets,
                               const LstmBlockParams& params, const OutputHead& head, const GateConfig& cfg,
                               std::optional<LstmState> initial = std::nullopt) {
    LstmNetwork net{{params}, head};
    std::optional<std::vector<LstmState>> init;
    if (initial)
        init = std::vector<LstmState>{*initial};
    return backward_bptt(xs, targets, net, cfg, std::move(init));
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_BACKWARD_HPP
