#ifndef QUENCHWATCH_LSTM_PARAMS_HPP
#define QUENCHWATCH_LSTM_PARAMS_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "quenchwatch/error.hpp"

namespace quenchwatch::lstm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Sequence = std::vector<Vector>;

/// Shape-checked exact equality (Eigen's operator== asserts on mismatched shapes).
template <class A, class B>
bool same_tensor(const A& a, const B& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// One affine pre-activation: w_x * x + w_h * h_prev + bias.
struct GateWeights {
    Matrix w_x;
    Matrix w_h;
    Vector bias;

    static GateWeights zeros(std::size_t inputs, std::size_t cells) {
        const auto n = static_cast<Eigen::Index>(inputs);
        const auto c = static_cast<Eigen::Index>(cells);
        return {Matrix::Zero(c, n), Matrix::Zero(c, c), Vector::Zero(c)};
    }

    friend bool operator==(const GateWeights& a, const GateWeights& b) {
        return same_tensor(a.w_x, b.w_x) && same_tensor(a.w_h, b.w_h) && same_tensor(a.bias, b.bias);
    }
};

/// Weights of one memory block. `input_node` produces the candidate g through
/// tanh; the three gates go through the hard sigmoid.
struct LstmBlockParams {
    GateWeights input_node;
    GateWeights input_gate;
    GateWeights forget_gate;
    GateWeights output_gate;

    static LstmBlockParams zeros(std::size_t inputs, std::size_t cells) {
        auto w = GateWeights::zeros(inputs, cells);
        return {w, w, w, w};
    }

    std::size_t input_size() const { return static_cast<std::size_t>(input_node.w_x.cols()); }
    std::size_t cell_count() const { return static_cast<std::size_t>(input_node.w_x.rows()); }

    /// Visits every tensor with its serialized name, in a fixed order.
    template <class F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }

    void check_shapes() const {
        const auto n = input_node.w_x.cols();
        const auto c = input_node.w_x.rows();
        bool ok = c > 0 && n > 0;
        for_each_tensor([&](const std::string&, const auto& t) {
            const bool is_x = t.cols() == n && t.rows() == c;
            const bool is_h = t.cols() == c && t.rows() == c;
            const bool is_b = t.cols() == 1 && t.rows() == c;
            ok = ok && (is_x || is_h || is_b) && t.allFinite();
        });
        for (const auto* g : {&input_node, &input_gate, &forget_gate, &output_gate})
            ok = ok && g->w_x.rows() == c && g->w_x.cols() == n && g->w_h.rows() == c && g->w_h.cols() == c
                 && g->bias.size() == c;
        if (!ok)
            throw Error(ErrorCode::ShapeMismatch, "block parameters inconsistent with (inputs="
                                                      + std::to_string(n) + ", cells=" + std::to_string(c) + ")");
    }

    friend bool operator==(const LstmBlockParams&, const LstmBlockParams&) = default;

private:
    template <class Self, class F>
    static void visit(Self& self, F& f) {
        f("W_gx", self.input_node.w_x);
        f("W_gh", self.input_node.w_h);
        f("b_g", self.input_node.bias);
        f("W_ix", self.input_gate.w_x);
        f("W_ih", self.input_gate.w_h);
        f("b_i", self.input_gate.bias);
        f("W_fx", self.forget_gate.w_x);
        f("W_fh", self.forget_gate.w_h);
        f("b_f", self.forget_gate.bias);
        f("W_ox", self.output_gate.w_x);
        f("W_oh", self.output_gate.w_h);
        f("b_o", self.output_gate.bias);
    }
};

struct LstmState {
    Vector h;
    Vector s;

    static LstmState zeros(std::size_t cells) {
        const auto c = static_cast<Eigen::Index>(cells);
        return {Vector::Zero(c), Vector::Zero(c)};
    }
};

/// Feed-forward map from the top layer's hidden vector to the outputs.
struct OutputHead {
    Matrix w_y;
    Vector b_y;

    static OutputHead zeros(std::size_t cells, std::size_t outputs) {
        const auto c = static_cast<Eigen::Index>(cells);
        const auto m = static_cast<Eigen::Index>(outputs);
        return {Matrix::Zero(m, c), Vector::Zero(m)};
    }

    std::size_t output_size() const { return static_cast<std::size_t>(w_y.rows()); }

    template <class F>
    void for_each_tensor(F&& f) {
        f("W_y", w_y);
        f("b_y", b_y);
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        f("W_y", w_y);
        f("b_y", b_y);
    }

    friend bool operator==(const OutputHead& a, const OutputHead& b) { return same_tensor(a.w_y, b.w_y) && same_tensor(a.b_y, b.b_y); }
};

/// Stacked memory blocks (layer k's h feeds layer k+1) topped by an output head.
struct LstmNetwork {
    std::vector<LstmBlockParams> layers;
    OutputHead head;

    static LstmNetwork zeros(std::size_t inputs, std::size_t cells, std::size_t layer_count, std::size_t outputs) {
        LstmNetwork net;
        for (std::size_t l = 0; l < layer_count; ++l)
            net.layers.push_back(LstmBlockParams::zeros(l == 0 ? inputs : cells, cells));
        net.head = OutputHead::zeros(cells, outputs);
        return net;
    }

    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().input_size(); }
    std::size_t cell_count() const { return layers.empty() ? 0 : layers.front().cell_count(); }
    std::size_t output_size() const { return head.output_size(); }

    /// Tensor names are prefixed with the layer index ("L0.W_fx"), the head's are bare.
    template <class F>
    void for_each_tensor(F&& f) {
        visit(*this, f);
    }
    template <class F>
    void for_each_tensor(F&& f) const {
        visit(*this, f);
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_tensor([&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
        return n;
    }

    void check_shapes() const {
        if (layers.empty())
            throw Error(ErrorCode::ShapeMismatch, "network has no layers");
        const auto cells = cell_count();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].check_shapes();
            if (layers[l].cell_count() != cells || (l > 0 && layers[l].input_size() != cells))
                throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " does not stack");
        }
        if (head.w_y.cols() != static_cast<Eigen::Index>(cells) || head.b_y.size() != head.w_y.rows()
            || head.w_y.rows() == 0 || !head.w_y.allFinite() || !head.b_y.allFinite())
            throw Error(ErrorCode::ShapeMismatch, "output head inconsistent with cell count");
    }

    friend bool operator==(const LstmNetwork&, const LstmNetwork&) = default;

private:
    template <class Self, class F>
    static void visit(Self& self, F& f) {
        for (std::size_t l = 0; l < self.layers.size(); ++l) {
            const std::string prefix = "L" + std::to_string(l) + ".";
            self.layers[l].for_each_tensor([&](const std::string& name, auto& t) { f(prefix + name, t); });
        }
        self.head.for_each_tensor([&](const std::string& name, auto& t) { f(name, t); });
    }
};

/// dst += alpha * src, tensor by tensor. Shapes must match.
inline void add_scaled(LstmNetwork& dst, const LstmNetwork& src, double alpha) {
    if (dst.layers.size() != src.layers.size())
        throw Error(ErrorCode::ShapeMismatch, "add_scaled: layer counts differ");
    auto gate = [alpha](GateWeights& d, const GateWeights& s) {
        d.w_x += alpha * s.w_x;
        d.w_h += alpha * s.w_h;
        d.bias += alpha * s.bias;
    };
    for (std::size_t l = 0; l < dst.layers.size(); ++l) {
        gate(dst.layers[l].input_node, src.layers[l].input_node);
        gate(dst.layers[l].input_gate, src.layers[l].input_gate);
        gate(dst.layers[l].forget_gate, src.layers[l].forget_gate);
        gate(dst.layers[l].output_gate, src.layers[l].output_gate);
    }
    dst.head.w_y += alpha * src.head.w_y;
    dst.head.b_y += alpha * src.head.b_y;
}

/// Knobs an engineer turns between trials.
struct Hyperparameters {
    std::size_t cell_count = 16;
    std::size_t layer_count = 1;
    /// Samples fed per training sequence.
    std::size_t input_window = 32;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t batch_size = 8;
    std::uint64_t seed = 1;

    /// Checks positivity. Epochs may be zero (returns the initialization).
    void validate() const {
        if (cell_count == 0 || layer_count == 0 || input_window == 0 || batch_size == 0 || seed == 0)
            throw Error(ErrorCode::InvalidArgument, "hyperparameters must be positive");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw Error(ErrorCode::InvalidArgument, "learning_rate must be a positive finite number");
    }

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

/// Uniform in [-1/sqrt(cells), 1/sqrt(cells)] for every tensor in visiting
/// order, then forget-gate biases set to +1.
inline LstmNetwork initialize_network(std::size_t inputs, std::size_t outputs, const Hyperparameters& hp,
                                      std::mt19937_64& rng) {
    auto net = LstmNetwork::zeros(inputs, hp.cell_count, hp.layer_count, outputs);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hp.cell_count));
    std::uniform_real_distribution<double> dist(-bound, bound);
    net.for_each_tensor([&](const std::string&, auto& t) {
        for (Eigen::Index k = 0; k < t.size(); ++k)
            t.data()[k] = dist(rng);
    });
    for (auto& layer : net.layers)
        layer.forget_gate.bias.setConstant(1.0);
    return net;
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_PARAMS_HPP
