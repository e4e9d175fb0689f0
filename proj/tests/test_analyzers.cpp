#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "quenchwatch/analyzers.hpp"

using namespace quenchwatch;

namespace {

std::vector<Point> line(std::initializer_list<double> xs) {
    std::vector<Point> out;
    for (double x : xs)
        out.push_back({x});
    return out;
}

std::vector<Point> random_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<Point> out(n, Point(dim));
    for (auto& p : out)
        for (auto& v : p)
            v = u(rng);
    return out;
}

/// Constant next-step predictor: y = c in normalized units, stats (0, 1).
lstm::ModelSnapshot constant_model(double c) {
    lstm::ModelSnapshot m;
    m.hyperparameters.cell_count = 2;
    m.network = lstm::LstmNetwork::zeros(1, 2, 1, 1);
    m.network.head.b_y[0] = c;
    m.training_stats = NormalizationStats{0.0, 1.0};
    m.median_training_residual = 0.01;
    return m;
}

LabeledWindow window_of(std::vector<double> values) {
    LabeledWindow w;
    w.series_slice.magnet_id = "M";
    w.series_slice.dt = 0.01;
    w.series_slice.values = std::move(values);
    return w;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::IoError;
}

} // namespace

TEST(KMeans, TwoObviousGroups) {
    auto pts = line({0, 1, 10, 11});
    auto r = kmeans(pts, 2);
    EXPECT_EQ(r.assignments[0], r.assignments[1]);
    EXPECT_EQ(r.assignments[2], r.assignments[3]);
    EXPECT_NE(r.assignments[0], r.assignments[2]);
    EXPECT_DOUBLE_EQ(*r.inertia, 1.0);
    auto centers = r.centers;
    std::sort(centers.begin(), centers.end());
    EXPECT_EQ(centers, (std::vector<Point>{{0.5}, {10.5}}));
}

TEST(KMeans, KEqualsNHasZeroInertia) {
    auto pts = line({3, -1, 7, 2.5});
    auto r = kmeans(pts, 4);
    EXPECT_EQ(*r.inertia, 0.0);
    std::vector<int> a = r.assignments;
    std::sort(a.begin(), a.end());
    EXPECT_EQ(a, (std::vector<int>{0, 1, 2, 3}));
}

TEST(KMeans, IdenticalPoints) {
    std::vector<Point> pts(6, Point{1.0, 2.0});
    auto r = kmeans(pts, 1);
    EXPECT_EQ(*r.inertia, 0.0);
    EXPECT_EQ(r.centers[0], (Point{1.0, 2.0}));
    EXPECT_NO_THROW(kmeans(pts, 3));
}

TEST(KMeans, Errors) {
    auto pts = line({1, 2});
    EXPECT_EQ(code_of([&] { kmeans(pts, 3); }), ErrorCode::KTooLarge);
    EXPECT_EQ(code_of([&] { kmeans(pts, 0); }), ErrorCode::InvalidArgument);
    std::vector<Point> ragged{{1.0}, {1.0, 2.0}};
    EXPECT_EQ(code_of([&] { kmeans(ragged, 1); }), ErrorCode::ShapeMismatch);
}

TEST(KMeans, InertiaNeverIncreasesAcrossIterations) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        auto pts = random_points(rng, 30, 3);
        auto r = kmeans(pts, 4, static_cast<std::uint64_t>(trial));
        auto hist = r.metadata["inertia_history"].get<std::vector<double>>();
        for (std::size_t k = 1; k < hist.size(); ++k)
            ASSERT_LE(hist[k], hist[k - 1] * (1.0 + 1e-12));
        EXPECT_LE(*r.inertia, hist.back() * (1.0 + 1e-12));
    }
}

TEST(KMeans, AssignmentsPickNearestCenter) {
    std::mt19937_64 rng(23);
    auto pts = random_points(rng, 50, 2);
    auto r = kmeans(pts, 5);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double own = oracle::sq_dist(pts[i], r.centers[static_cast<std::size_t>(r.assignments[i])]);
        for (const auto& c : r.centers)
            EXPECT_LE(own, oracle::sq_dist(pts[i], c) + 1e-12);
    }
}

TEST(KMeans, FindsExhaustiveTwoMeansOptimum) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        auto pts = random_points(rng, 8, 2);
        auto r = kmeans(pts, 2, 7);
        EXPECT_NEAR(*r.inertia, oracle::exhaustive_two_means(pts), 1e-9 * (1.0 + *r.inertia)) << trial;
    }
}

TEST(KMeans, SeedDeterminism) {
    std::mt19937_64 rng(2);
    auto pts = random_points(rng, 40, 3);
    auto a = kmeans(pts, 3, 99), b = kmeans(pts, 3, 99);
    EXPECT_EQ(a.assignments, b.assignments);
    EXPECT_EQ(a.centers, b.centers);
}

TEST(Dbscan, LineWithOutlier) {
    auto r = dbscan(line({0, 1, 2, 10}), 1.5, 2);
    EXPECT_EQ(r.assignments, (std::vector<int>{0, 0, 0, -1}));
    EXPECT_EQ(r.metadata["clusters"], 1);
}

TEST(Dbscan, IdenticalPointsFormOneCluster) {
    std::vector<Point> pts(5, Point{3.0});
    auto r = dbscan(pts, 0.1, 5);
    EXPECT_EQ(r.assignments, std::vector<int>(5, 0));
}

TEST(Dbscan, EverythingNoiseWhenSparse) {
    auto r = dbscan(line({0, 10, 20, 30}), 1.0, 2);
    EXPECT_EQ(r.assignments, std::vector<int>(4, -1));
}

TEST(Dbscan, NeighbourhoodIsClosed) {
    auto r = dbscan(line({0, 1}), 1.0, 2);
    EXPECT_EQ(r.assignments, (std::vector<int>{0, 0}));
}

TEST(Dbscan, MatchesReachabilityOracle) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> eps_d(0.5, 2.5);
    std::uniform_int_distribution<std::size_t> mp(1, 5);
    for (int trial = 0; trial < 200; ++trial) {
        auto pts = random_points(rng, 20, 2);
        const double eps = eps_d(rng);
        const auto min_pts = mp(rng);
        auto r = dbscan(pts, eps, min_pts);
        auto o = oracle::exhaustive_reachability(pts, eps, min_pts);
        auto core = r.metadata["core"].get<std::vector<bool>>();
        ASSERT_EQ(core, o.core);

        std::map<int, int> to_oracle;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (o.noise.count(i)) {
                ASSERT_EQ(r.assignments[i], -1);
                continue;
            }
            ASSERT_GE(r.assignments[i], 0);
            if (o.core[i]) {
                auto [it, fresh] = to_oracle.emplace(r.assignments[i], o.component[i]);
                ASSERT_EQ(it->second, o.component[i]) << "cluster mixes components";
            } else {
                // border: assigned cluster must contain an adjacent core point
                bool ok = false;
                for (std::size_t j = 0; j < pts.size(); ++j)
                    ok = ok || (o.core[j] && o.adjacent[i][j] && r.assignments[j] == r.assignments[i]);
                ASSERT_TRUE(ok);
            }
        }
        std::set<int> components;
        for (auto [_, c] : to_oracle)
            components.insert(c);
        ASSERT_EQ(components.size(), to_oracle.size()) << "component split across clusters";
    }
}

TEST(Dbscan, CorePartitionIsPermutationInvariant) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        auto pts = random_points(rng, 30, 2);
        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<Point> shuffled;
        for (auto k : perm)
            shuffled.push_back(pts[k]);
        auto a = dbscan(pts, 1.5, 3), b = dbscan(shuffled, 1.5, 3);
        auto core = a.metadata["core"].get<std::vector<bool>>();
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t j = 0; j < perm.size(); ++j) {
                const auto pi = perm[i], pj = perm[j];
                if (!core[pi] || !core[pj])
                    continue;
                ASSERT_EQ(a.assignments[pi] == a.assignments[pj], b.assignments[i] == b.assignments[j]);
            }
        for (std::size_t i = 0; i < perm.size(); ++i)
            ASSERT_EQ(a.assignments[perm[i]] == -1, b.assignments[i] == -1);
    }
}

TEST(Dbscan, Errors) {
    auto pts = line({1, 2});
    EXPECT_EQ(code_of([&] { dbscan(pts, 0.0, 2); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { dbscan(pts, 1.0, 0); }), ErrorCode::InvalidArgument);
    EXPECT_TRUE(dbscan(std::vector<Point>{}, 1.0, 1).assignments.empty());
}

TEST(LstmAnalyze, PerfectlyPredictedWindowIsNotFlagged) {
    auto model = constant_model(0.25);
    auto w = window_of(std::vector<double>(10, 0.25));
    auto reports = lstm_analyze(std::vector{w}, model, default_threshold(model));
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_EQ(reports[0].residual_series.size(), 9u);
    EXPECT_EQ(reports[0].peak_residual, 0.0);
    EXPECT_FALSE(reports[0].flagged);
    EXPECT_DOUBLE_EQ(reports[0].threshold, 0.05);
}

TEST(LstmAnalyze, ResidualsAreInVolts) {
    auto model = constant_model(0.0);
    model.training_stats = NormalizationStats{1.0, 0.5};
    // normalized prediction 0 maps back to 1.0 V; residual = |1.0 - v|
    auto w = window_of({1.0, 1.0, 1.3, 0.4});
    auto r = lstm_analyze(std::vector{w}, model, 0.5);
    EXPECT_NEAR(r[0].residual_series[0], 0.0, 1e-15);
    EXPECT_NEAR(r[0].residual_series[1], 0.3, 1e-12);
    EXPECT_NEAR(r[0].residual_series[2], 0.6, 1e-12);
    EXPECT_TRUE(r[0].flagged);
}

TEST(LstmAnalyze, ZeroThresholdFlagsAnyError) {
    auto model = constant_model(0.0);
    auto reports = lstm_analyze(std::vector{window_of({0.0, 0.0, 1e-9}), window_of({0.0, 0.0})}, model, 0.0);
    EXPECT_TRUE(reports[0].flagged);
    EXPECT_FALSE(reports[1].flagged);
}

TEST(LstmAnalyze, EmptyInputGivesEmptyOutput) {
    EXPECT_TRUE(lstm_analyze(std::vector<LabeledWindow>{}, constant_model(0.0), 1.0).empty());
}

TEST(LstmAnalyze, Errors) {
    auto model = constant_model(0.0);
    EXPECT_EQ(code_of([&] { lstm_analyze(std::vector{window_of({1.0})}, model, 1.0); }),
              ErrorCode::IncompatibleModel);
    auto wide = model;
    wide.network = lstm::LstmNetwork::zeros(2, 2, 1, 1);
    EXPECT_EQ(code_of([&] { lstm_analyze(std::vector{window_of({1.0, 2.0})}, wide, 1.0); }),
              ErrorCode::IncompatibleModel);
    model.median_training_residual.reset();
    EXPECT_EQ(code_of([&] { default_threshold(model); }), ErrorCode::IncompatibleModel);
}

TEST(LstmAnalyze, MedianResidual) {
    auto model = constant_model(0.0);
    EXPECT_DOUBLE_EQ(median_residual(std::vector{window_of({0, 1, 2, 3})}, model), 2.0);
    EXPECT_DOUBLE_EQ(median_residual(std::vector{window_of({0, 1, 2, 3, 4})}, model), 2.5);
}

namespace {

class CountingAnalyzer final : public Analyzer {
public:
    std::string name() const override { return "count"; }
    AnalyzerResult analyze(const AnalyzerInput& in) const override {
        AnalyzerResult r;
        r.assignments.assign(in.points.size(), 0);
        r.metadata = {{"analyzer", "count"}, {"n", in.points.size()}};
        return r;
    }
};

} // namespace

TEST(Registry, BuiltinsAndExtension) {
    auto reg = AnalyzerRegistry::with_builtins();
    EXPECT_EQ(reg.names(), (std::vector<std::string>{"dbscan", "kmeans"}));
    reg.add("count", [](const nlohmann::json&) { return std::make_unique<CountingAnalyzer>(); });
    EXPECT_EQ(code_of([&] { reg.add("kmeans", {}); }), ErrorCode::Conflict);
    EXPECT_EQ(code_of([&] { reg.create("nope"); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { reg.create("kmeans", nlohmann::json::object()); }), ErrorCode::InvalidArgument);

    AnalyzerInput in;
    in.points = line({0, 1, 10, 11});
    EXPECT_EQ(reg.create("count")->analyze(in).metadata["n"], 4);
    auto km = reg.create("kmeans", {{"k", 2}})->analyze(in);
    EXPECT_DOUBLE_EQ(*km.inertia, 1.0);
    auto db = reg.create("dbscan", {{"eps", 1.5}, {"min_pts", 2}})->analyze(in);
    EXPECT_EQ(db.metadata["clusters"], 2);
}

TEST(Registry, LstmAnalyzerScoresConcatenate) {
    auto model = std::make_shared<const lstm::ModelSnapshot>(constant_model(0.0));
    LstmAnalyzer a(model);
    auto in = AnalyzerInput::from_windows({window_of({0, 0, 1}), window_of({0, 2})});
    EXPECT_EQ(in.points.size(), 2u);
    auto r = a.analyze(in);
    EXPECT_EQ(r.kind, AnalyzerResult::Kind::prediction);
    EXPECT_EQ(r.scores, (std::vector<double>{0.0, 1.0, 2.0}));
    EXPECT_EQ(r.metadata["flagged"], (nlohmann::json{true, true}));
}
