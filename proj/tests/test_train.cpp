#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "quenchwatch/lstm.hpp"
#include "quenchwatch/pipeline.hpp"
#include "quenchwatch/synthetic.hpp"

using namespace quenchwatch;
using namespace quenchwatch::lstm;

namespace {

std::vector<TrainingExample> sine_examples(std::size_t count, std::size_t length) {
    std::vector<TrainingExample> out;
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> v;
        for (std::size_t t = 0; t <= length; ++t)
            v.push_back(std::sin(2.0 * std::numbers::pi * (static_cast<double>(t + 3 * k)) / 16.0));
        out.push_back(next_step_example(v));
    }
    return out;
}

Hyperparameters small_hp() {
    Hyperparameters hp;
    hp.cell_count = 8;
    hp.epochs = 40;
    hp.batch_size = 4;
    hp.learning_rate = 0.1;
    hp.seed = 5;
    return hp;
}

} // namespace

TEST(Train, ZeroEpochsReturnsInitialization) {
    auto hp = small_hp();
    hp.epochs = 0;
    auto data = sine_examples(4, 16);
    auto out = train(data, hp);
    EXPECT_TRUE(out.trace.epoch_loss.empty());
    std::mt19937_64 rng(hp.seed);
    EXPECT_EQ(out.snapshot.network, initialize_network(1, 1, hp, rng));
}

TEST(Train, InitializationOpensForgetGate) {
    auto hp = small_hp();
    std::mt19937_64 rng(1);
    auto net = initialize_network(3, 2, hp, rng);
    EXPECT_TRUE((net.layers[0].forget_gate.bias.array() == 1.0).all());
    const double bound = 1.0 / std::sqrt(static_cast<double>(hp.cell_count));
    EXPECT_LE(net.layers[0].input_gate.w_x.cwiseAbs().maxCoeff(), bound);
}

TEST(Train, SameSeedIsBitIdentical) {
    auto data = sine_examples(6, 20);
    auto a = train(data, small_hp());
    auto b = train(data, small_hp());
    EXPECT_EQ(a.snapshot, b.snapshot);
    EXPECT_EQ(a.trace.epoch_loss, b.trace.epoch_loss);
    auto hp = small_hp();
    hp.seed = 6;
    EXPECT_NE(train(data, hp).snapshot, a.snapshot);
}

TEST(Train, LearnsSine) {
    auto hp = small_hp();
    hp.cell_count = 16;
    hp.epochs = 200;
    auto out = train(sine_examples(8, 32), hp);
    const auto& l = out.trace.epoch_loss;
    ASSERT_EQ(l.size(), 200u);
    EXPECT_LT(l.back(), 0.1 * l.front());
}

TEST(Train, CallbackSeesEveryEpoch) {
    std::vector<std::size_t> seen;
    auto out = train(sine_examples(4, 8), small_hp(), {}, [&](std::size_t e, double) { seen.push_back(e); });
    ASSERT_EQ(seen.size(), small_hp().epochs);
    EXPECT_EQ(seen.back(), small_hp().epochs - 1);
}

TEST(Train, HugeLearningRateDiverges) {
    auto hp = small_hp();
    hp.learning_rate = 1e200;
    auto data = sine_examples(4, 16);
    try {
        train(data, hp);
        FAIL();
    } catch (const DivergenceDetected& e) {
        EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
        EXPECT_EQ(e.trace().epoch_loss.size(), e.epoch());
    }
}

TEST(Train, RejectsBadInput) {
    EXPECT_THROW(train(std::vector<TrainingExample>{}, small_hp()), Error);
    auto hp = small_hp();
    hp.batch_size = 0;
    EXPECT_THROW(train(sine_examples(2, 4), hp), Error);
}

TEST(Pipeline, TrainingStampsStatsAndResidual) {
    auto spec = DatasetSpec::for_tier(Tier::small);
    auto data = to_dataset(generate_synthetic(spec, 3));
    Hyperparameters hp;
    hp.cell_count = 4;
    hp.input_window = 16;
    hp.epochs = 2;
    hp.batch_size = 32;
    auto prepared = prepare_training(data, hp);
    EXPECT_FALSE(prepared.windows.empty());
    for (const auto& w : prepared.windows)
        EXPECT_EQ(w.series_slice.size(), 17u);

    auto out = train_on_dataset(data, hp);
    ASSERT_TRUE(out.snapshot.training_stats.has_value());
    EXPECT_EQ(*out.snapshot.training_stats, prepared.stats);
    ASSERT_TRUE(out.snapshot.median_training_residual.has_value());
    EXPECT_GT(*out.snapshot.median_training_residual, 0.0);
}
