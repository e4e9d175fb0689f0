#ifndef QUENCHWATCH_LSTM_TRAIN_HPP
#define QUENCHWATCH_LSTM_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quenchwatch/error.hpp"
#include "quenchwatch/lstm/backward.hpp"
#include "quenchwatch/lstm/snapshot.hpp"

namespace quenchwatch::lstm {

struct TrainingExample {
    Sequence inputs;
    Sequence targets;
};

struct TrainingTrace {
    /// Mean per-sequence loss seen during each epoch, before that batch's update.
    std::vector<double> epoch_loss;
};

class DivergenceDetected : public Error {
public:
    DivergenceDetected(std::size_t epoch, TrainingTrace trace)
        : Error(ErrorCode::DivergenceDetected, "loss became non-finite in epoch " + std::to_string(epoch)),
          epoch_(epoch), trace_(std::move(trace)) {}

    std::size_t epoch() const noexcept { return epoch_; }
    const TrainingTrace& trace() const noexcept { return trace_; }

private:
    std::size_t epoch_;
    TrainingTrace trace_;
};

struct TrainingOutcome {
    ModelSnapshot snapshot;
    TrainingTrace trace;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

/// Plain mini-batch gradient descent on the MSE loss. The example order is
/// reshuffled every epoch from the seeded generator, so the result is a pure
/// function of (dataset, hp, cfg).
inline TrainingOutcome train(std::span<const TrainingExample> dataset, const Hyperparameters& hp,
                             const GateConfig& cfg = {}, const EpochCallback& on_epoch = {}) {
    hp.validate();
    cfg.validate();
    if (dataset.empty())
        throw Error(ErrorCode::InvalidArgument, "training dataset is empty");
    const auto& first = dataset.front();
    if (first.inputs.empty() || first.targets.empty())
        throw Error(ErrorCode::InvalidArgument, "training examples need non-empty sequences");
    const auto inputs = static_cast<std::size_t>(first.inputs.front().size());
    const auto outputs = static_cast<std::size_t>(first.targets.front().size());

    std::mt19937_64 rng(hp.seed);
    TrainingOutcome out;
    out.snapshot.hyperparameters = hp;
    out.snapshot.gate_config = cfg;
    out.snapshot.network = initialize_network(inputs, outputs, hp, rng);
    auto& net = out.snapshot.network;

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_sum = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += hp.batch_size) {
            const std::size_t end = std::min(order.size(), begin + hp.batch_size);
            auto batch = LstmNetwork::zeros(inputs, hp.cell_count, hp.layer_count, outputs);
            for (std::size_t k = begin; k < end; ++k) {
                const auto& ex = dataset[order[k]];
                auto g = backward_bptt(ex.inputs, ex.targets, net, cfg);
                if (!std::isfinite(g.loss))
                    throw DivergenceDetected(epoch, out.trace);
                epoch_sum += g.loss;
                add_scaled(batch, g.params, 1.0);
            }
            add_scaled(net, batch, -hp.learning_rate / static_cast<double>(end - begin));
        }
        const double epoch_loss = epoch_sum / static_cast<double>(dataset.size());
        bool finite = std::isfinite(epoch_loss);
        net.for_each_tensor([&](const std::string&, const auto& t) { finite = finite && t.allFinite(); });
        if (!finite)
            throw DivergenceDetected(epoch, out.trace);
        out.trace.epoch_loss.push_back(epoch_loss);
        if (on_epoch)
            on_epoch(epoch, epoch_loss);
    }
    return out;
}

/// Next-step regression pairs from a scalar signal: inputs v[0..n-2], targets v[1..n-1].
inline TrainingExample next_step_example(std::span<const double> values) {
    if (values.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "next-step example needs at least two samples");
    TrainingExample ex;
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
        ex.inputs.push_back(Vector::Constant(1, values[k]));
        ex.targets.push_back(Vector::Constant(1, values[k + 1]));
    }
    return ex;
}

} // namespace quenchwatch::lstm

#endif // QUENCHWATCH_LSTM_TRAIN_HPP
