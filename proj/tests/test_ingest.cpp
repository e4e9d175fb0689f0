#include <cmath>
#include <filesystem>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>

#include "quenchwatch/dataset.hpp"
#include "quenchwatch/ingest.hpp"

using namespace quenchwatch;
namespace fs = std::filesystem;

namespace {

VoltageSeries ramp(std::size_t n, double dt, std::int64_t t0 = 0) {
    VoltageSeries s;
    s.magnet_id = "M1";
    s.t0_ns = t0;
    s.dt = dt;
    for (std::size_t k = 0; k < n; ++k)
        s.values.push_back(static_cast<double>(k));
    return s;
}

QuenchEvent at(double seconds, std::int64_t t0 = 0) {
    return {"M1", t0 + std::llround(seconds * 1e9), "quench"};
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

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("qw_ingest_" + std::to_string(::getpid()) + "_"
                                           + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    fs::path dir;
};

} // namespace

TEST(LoadSeries, ThreeRowFile) {
    auto s = series_from_csv("timestamp_ns,value_volts\n0,1.0\n1000000000,2.0\n2000000000,3.0\n");
    EXPECT_EQ(s.dt, 1.0);
    EXPECT_EQ(s.t0_ns, 0);
    EXPECT_EQ(s.values, (std::vector<double>{1, 2, 3}));
}

TEST(LoadSeries, ShuffledTimestampsAreNonUniform) {
    EXPECT_EQ(code_of([] {
                  series_from_csv("timestamp_ns,value_volts\n0,1\n2000000000,2\n1000000000,3\n");
              }),
              ErrorCode::NonUniformSampling);
    EXPECT_EQ(code_of([] { series_from_csv("timestamp_ns,value_volts\n5,1\n3,2\n"); }),
              ErrorCode::NonUniformSampling);
}

TEST(LoadSeries, JitterWithinToleranceIsAccepted) {
    auto s = series_from_csv("timestamp_ns,value_volts\n0,1\n1000000000,2\n2000000001,3\n");
    EXPECT_EQ(s.size(), 3u);
}

TEST(LoadSeries, Errors) {
    EXPECT_EQ(code_of([] { series_from_csv(""); }), ErrorCode::EmptyFile);
    EXPECT_EQ(code_of([] { series_from_csv("timestamp_ns,value_volts\n"); }), ErrorCode::EmptyFile);
    EXPECT_EQ(code_of([] { series_from_csv("time,value\n0,1\n"); }), ErrorCode::ParseError);
    try {
        series_from_csv("timestamp_ns,value_volts\n0,1\n10,abc\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    }
    EXPECT_EQ(code_of([] { series_from_csv("timestamp_ns,value_volts\n0,nan\n10,1\n"); }), ErrorCode::ParseError);
}

TEST_F(TempDir, DayLongOneHertzFile) {
    auto s = ramp(86400, 1.0, 1'600'000'000'000'000'000);
    save_series(dir / "day.csv", s);
    auto back = load_series(dir / "day.csv");
    EXPECT_EQ(back.duration(), 86399.0);
    EXPECT_EQ(back.size(), 86400u);
}

TEST_F(TempDir, RoundTripIsExact) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 1e-3);
    for (double dt : {0.01, 1e-3, 0.123456789, 2.0}) {
        VoltageSeries s;
        s.magnet_id = "M";
        s.t0_ns = 1'500'000'000'123'456'789;
        s.dt = dt;
        for (int k = 0; k < 500; ++k)
            s.values.push_back(g(rng) * std::pow(10.0, k % 7 - 3));
        save_series(dir / "rt.csv", s);
        auto back = load_series(dir / "rt.csv");
        EXPECT_EQ(back.values, s.values);
        EXPECT_EQ(back.t0_ns, s.t0_ns);
        EXPECT_LE(std::abs(back.dt - s.dt), 1e-12 * s.dt) << dt;
    }
}

TEST_F(TempDir, LoadMissingFile) {
    EXPECT_EQ(code_of([&] { load_series(dir / "nope.csv"); }), ErrorCode::NotFound);
}

TEST(Events, CsvRoundTrip) {
    std::vector<QuenchEvent> events{{"A", 10, "quench"}, {"B", 20, "training"}};
    EXPECT_EQ(events_from_csv(events_to_csv(events)), events);
    EXPECT_EQ(code_of([] { events_from_csv("wrong\n"); }), ErrorCode::ParseError);
}

TEST(QuenchWindows, CentredEvent) {
    auto s = ramp(1001, 1.0);
    auto out = extract_quench_windows(s, std::vector{at(500)}, 10, 5);
    ASSERT_EQ(out.windows.size(), 1u);
    const auto& w = out.windows[0];
    EXPECT_EQ(w.series_slice.size(), 16u);
    EXPECT_EQ(w.start_index, 490u);
    EXPECT_EQ(w.series_slice.values.front(), 490.0);
    EXPECT_EQ(w.series_slice.values.back(), 505.0);
    EXPECT_TRUE(w.contains_quench);
    EXPECT_DOUBLE_EQ(*w.t_event_offset, 10.0);
    EXPECT_FALSE(w.clamped);
    EXPECT_EQ(w.series_slice.t0_ns, 490'000'000'000);
}

TEST(QuenchWindows, ClampedAtStart) {
    auto s = ramp(1001, 1.0);
    auto out = extract_quench_windows(s, std::vector{at(2)}, 10, 5);
    ASSERT_EQ(out.windows.size(), 1u);
    const auto& w = out.windows[0];
    EXPECT_TRUE(w.clamped);
    EXPECT_EQ(w.start_index, 0u);
    EXPECT_EQ(w.series_slice.size(), 8u); // [0, 7]
    EXPECT_DOUBLE_EQ(*w.t_event_offset, 2.0);
    EXPECT_LE(*w.t_event_offset, w.series_slice.duration());
}

TEST(QuenchWindows, NoEventsAndOutOfSpan) {
    auto s = ramp(100, 1.0);
    EXPECT_TRUE(extract_quench_windows(s, std::vector<QuenchEvent>{}).windows.empty());
    auto out = extract_quench_windows(s, std::vector{at(-5), at(50), at(500)}, 1, 1);
    EXPECT_EQ(out.windows.size(), 1u);
    EXPECT_EQ(out.skipped.size(), 2u);
}

TEST(QuenchWindows, UnsortedEventsRejected) {
    auto s = ramp(100, 1.0);
    EXPECT_EQ(code_of([&] { extract_quench_windows(s, std::vector{at(50), at(10)}, 1, 1); }),
              ErrorCode::InvalidArgument);
}

TEST(NormalWindows, DisjointTiling) {
    auto s = ramp(100, 1.0);
    auto w = extract_normal_windows(s, std::vector<QuenchEvent>{}, 10, 0, 10);
    ASSERT_EQ(w.size(), 10u);
    for (std::size_t k = 0; k < w.size(); ++k) {
        EXPECT_EQ(w[k].start_index, 10 * k);
        EXPECT_FALSE(w[k].contains_quench);
        EXPECT_FALSE(w[k].t_event_offset.has_value());
    }
}

TEST(NormalWindows, GuardCoveringSpanLeavesNothing) {
    auto s = ramp(100, 1.0);
    EXPECT_TRUE(extract_normal_windows(s, std::vector{at(50)}, 10, 100, 1).empty());
}

TEST(NormalWindows, OverlapWhenStrideShorterThanWindow) {
    auto s = ramp(100, 1.0);
    auto w = extract_normal_windows(s, std::vector<QuenchEvent>{}, 10, 0, 5);
    EXPECT_EQ(w.size(), 19u);
    EXPECT_EQ(w[1].start_index, 5u);
}

TEST(NormalWindows, NeverTouchGuardAndAreExactSlices) {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> g;
    VoltageSeries s;
    s.magnet_id = "M1";
    s.dt = 0.1;
    for (int k = 0; k < 2000; ++k)
        s.values.push_back(g(rng));
    std::vector<QuenchEvent> events{at(17.3), at(80.05), at(150.0)};
    for (double guard : {0.0, 0.5, 3.0, 12.0}) {
        for (auto& w : extract_normal_windows(s, events, 2.5, guard, 0.7)) {
            const double a = s.time_at(w.start_index);
            const double b = s.time_at(w.start_index + w.series_slice.size() - 1);
            for (const auto& e : events) {
                const double t = static_cast<double>(e.t_event_ns) * 1e-9;
                EXPECT_TRUE(b < t - guard || a > t + guard);
            }
            for (std::size_t k = 0; k < w.series_slice.size(); ++k)
                ASSERT_EQ(w.series_slice.values[k], s.values[w.start_index + k]);
        }
    }
}

TEST(Normalize, ComputesPopulationStats) {
    LabeledWindow w;
    w.series_slice.values = {0.0, 2.0};
    auto out = normalize(w);
    EXPECT_EQ(out.window.series_slice.values, (std::vector<double>{-1.0, 1.0}));
    EXPECT_EQ(out.stats, (NormalizationStats{1.0, 1.0}));
    EXPECT_FALSE(out.degenerate);
}

TEST(Normalize, ConstantWindowIsIdentity) {
    LabeledWindow w;
    w.series_slice.values = {4.0, 4.0, 4.0};
    auto out = normalize(w);
    EXPECT_TRUE(out.degenerate);
    EXPECT_EQ(out.window.series_slice.values, w.series_slice.values);
}

TEST(Normalize, ReusesSuppliedStats) {
    LabeledWindow w;
    w.series_slice.values = {1.0, 3.0, 7.0};
    auto out = normalize(w, NormalizationStats{3.0, 2.0});
    EXPECT_EQ(out.stats, (NormalizationStats{3.0, 2.0}));
    EXPECT_EQ(out.window.series_slice.values, (std::vector<double>{-1.0, 0.0, 2.0}));
}

TEST_F(TempDir, ManifestRoundTripAndMissingFile) {
    Dataset d;
    d.series.push_back(ramp(10, 0.5, 1000));
    d.events.push_back({"M1", 2000, "quench"});
    auto manifest = write_dataset(dir, d, {Tier::small, 7, 1000.0});
    EXPECT_EQ(manifest["tier"], "small");
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_EQ(manifest["total_bytes"].get<std::uint64_t>(), serialized_size(d));

    auto back = load_dataset(dir / "manifest.json");
    ASSERT_EQ(back.series.size(), 1u);
    EXPECT_EQ(back.series[0].values, d.series[0].values);
    EXPECT_EQ(back.series[0].magnet_id, "M1");
    EXPECT_EQ(back.events, d.events);

    fs::remove(dir / "series_000.csv");
    try {
        load_dataset(dir / "manifest.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NotFound);
        EXPECT_NE(std::string(e.what()).find("series_000.csv"), std::string::npos);
    }
}
