#include "sgcp/data.hpp"

#include "../support/errors.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

using namespace sgcp;
using testutil::code_of;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sgcp_data_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

SyntheticSpec default_spec(std::size_t T = 2000, std::uint64_t seed = 0) {
    SyntheticSpec s;
    s.graph = random_connected_graph(20, 0.15, 0);
    s.T = T;
    s.noise_scale.assign(20, 1.0);
    s.seed = seed;
    return s;
}

GraphSignalSeries from_matrix(const Eigen::MatrixXd& values, std::size_t slots = 24) {
    GraphSignalSeries s;
    s.values = values;
    s.slots_per_day = slots;
    for (Eigen::Index t = 0; t < values.rows(); ++t) s.timestamps.push_back(t);
    return s;
}

}  // namespace

TEST(TemporalSplit, Examples) {
    auto s = temporal_split(10);
    EXPECT_EQ(s.train.begin, 0u);
    EXPECT_EQ(s.train.end, 4u);
    EXPECT_EQ(s.calibration.begin, 4u);
    EXPECT_EQ(s.calibration.end, 8u);
    EXPECT_EQ(s.test.begin, 8u);
    EXPECT_EQ(s.test.end, 10u);

    s = temporal_split(5);
    EXPECT_EQ(s.train.end, 2u);
    EXPECT_EQ(s.calibration.end, 4u);
    EXPECT_EQ(s.test.size(), 1u);

    s = temporal_split(3);
    EXPECT_EQ(s.train.size(), 1u);
    EXPECT_EQ(s.calibration.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
}

TEST(TemporalSplit, ContiguousCoverForAnyLength) {
    for (std::size_t T = 3; T < 400; ++T) {
        const auto s = temporal_split(T);
        EXPECT_EQ(s.train.begin, 0u);
        EXPECT_EQ(s.train.end, s.calibration.begin);
        EXPECT_EQ(s.calibration.end, s.test.begin);
        EXPECT_EQ(s.test.end, T);
        EXPECT_GE(s.test.size(), 1u);
    }
}

TEST(TemporalSplit, Errors) {
    EXPECT_EQ(code_of([] { temporal_split(2); }), Errc::TooFewSamples);
    EXPECT_EQ(code_of([] { temporal_split(10, 0.6, 0.4); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { temporal_split(10, 0.0, 0.4); }), Errc::InvalidConfig);
}

TEST(RandomConnectedGraph, ConnectedAndDeterministic) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Graph g = random_connected_graph(15, 0.2, seed);
        EXPECT_EQ(g.n_nodes(), 15u);
        const auto basis = eigendecompose(normalized_laplacian(g));
        EXPECT_GT(basis.eigenvalues(1), 1e-8);  // a single zero eigenvalue
        EXPECT_EQ(g.adjacency(), random_connected_graph(15, 0.2, seed).adjacency());
    }
    EXPECT_EQ(code_of([] { random_connected_graph(1, 0.2, 0); }), Errc::TooFewNodes);
}

TEST(GenerateSynthetic, ShapeTimestampsAndDeterminism) {
    const auto spec = default_spec(300, 7);
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_EQ(a.length(), 300u);
    EXPECT_EQ(a.n_nodes(), 20u);
    EXPECT_EQ(a.timestamps.front(), 0);
    EXPECT_EQ(a.timestamps.back(), 299);
    EXPECT_EQ(a.values, b.values);
    auto other = spec;
    other.seed = 8;
    EXPECT_NE(a.values, generate_synthetic(other).values);
    EXPECT_TRUE(a.values.allFinite());
}

TEST(GenerateSynthetic, NoTrendGivesIndependentColumns) {
    auto spec = default_spec(10000);
    spec.trend_scale = 0.0;
    const auto c = correlation_intensity(generate_synthetic(spec).values);
    EXPECT_LT(c.cwiseAbs().maxCoeff(), 0.05);
}

TEST(GenerateSynthetic, TrendIsSmoothOnTheGraph) {
    const auto spec = default_spec(3000);
    const auto x = generate_synthetic(spec);
    const auto frame = make_wavelet_frame(eigendecompose(normalized_laplacian(spec.graph)), 4);
    const auto d = decompose_series(frame, x.values, 3);
    EXPECT_LT(oracle::mean_abs_offdiag(d.high), oracle::mean_abs_offdiag(d.low));
}

TEST(GenerateSynthetic, HeteroscedasticNoiseFollowsThePeriod) {
    auto spec = default_spec(24 * 400);
    spec.trend_scale = 0.0;
    spec.hetero_period = 24;
    const auto x = generate_synthetic(spec);
    // slot 6 peaks at 1 + 0.8, slot 18 bottoms at 1 - 0.8
    double peak = 0.0, trough = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < x.length(); t += 24) {
        peak += x.values.row(static_cast<Eigen::Index>(t + 6)).squaredNorm();
        trough += x.values.row(static_cast<Eigen::Index>(t + 18)).squaredNorm();
        ++count;
    }
    const double cells = static_cast<double>(count * 20);
    EXPECT_NEAR(std::sqrt(peak / cells), 1.8, 0.1);
    EXPECT_NEAR(std::sqrt(trough / cells), 0.2, 0.02);
}

TEST(GenerateSynthetic, Errors) {
    auto spec = default_spec(100);
    spec.trend_rank = 20;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), Errc::TrendRankTooLarge);
    spec = default_spec(100);
    spec.trend_ar = 1.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), Errc::InvalidConfig);
    spec = default_spec(100);
    spec.noise_scale.pop_back();
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), Errc::InvalidConfig);
}

TEST(SeriesCsv, RoundTrip) {
    TempDir dir;
    const auto x = generate_synthetic(default_spec(50));
    save_series_csv(x, dir.file("s.csv"));
    const auto y = load_series_csv(dir.file("s.csv"), 24);
    EXPECT_EQ(y.timestamps, x.timestamps);
    EXPECT_EQ(y.values, x.values);
}

TEST(SeriesCsv, TimeFeaturesFromTimestamps) {
    TempDir dir;
    write(dir.file("s.csv"), "timestamp,node_0\n0,1\n25,2\n170,3\n");
    const auto s = load_series_csv(dir.file("s.csv"), 24);
    EXPECT_EQ(s.time_of_day(1), 1u);
    EXPECT_EQ(s.day_of_week(1), 1u);
    EXPECT_EQ(s.time_of_day(2), 2u);
    EXPECT_EQ(s.day_of_week(2), 0u);  // 170 / 24 = 7 days
}

TEST(SeriesCsv, Errors) {
    TempDir dir;
    const auto p = dir.file("bad.csv");
    auto load = [&](const std::string& text) {
        write(p, text);
        return code_of([&] { load_series_csv(p, 24); });
    };
    EXPECT_EQ(load("time,node_0\n0,1\n"), Errc::ParseError);
    EXPECT_EQ(load("timestamp,node_1\n0,1\n"), Errc::ParseError);
    EXPECT_EQ(load("timestamp,node_0,node_1\n0,1\n"), Errc::ParseError);
    EXPECT_EQ(load("timestamp,node_0\n0,abc\n"), Errc::ParseError);
    EXPECT_EQ(load("timestamp,node_0\n0,\n"), Errc::MissingValue);
    EXPECT_EQ(load("timestamp,node_0\n0,nan\n"), Errc::MissingValue);
    EXPECT_EQ(load("timestamp,node_0\n0,1\n0,2\n"), Errc::NonMonotoneTimestamps);
    EXPECT_EQ(load("timestamp,node_0\n1.5,1\n"), Errc::ParseError);
    EXPECT_EQ(code_of([&] { load_series_csv(dir.file("missing.csv"), 24); }), Errc::IoError);
}

TEST(Backbone, SeasonalNaiveOnPeriodicSeriesHasZeroResiduals) {
    Eigen::MatrixXd v(240, 3);
    for (Eigen::Index t = 0; t < 240; ++t) {
        for (Eigen::Index i = 0; i < 3; ++i) v(t, i) = std::sin(2.0 * M_PI * static_cast<double>(t % 24) / 24.0 + i);
    }
    const auto series = from_matrix(v);
    BackboneOptions opts;
    opts.method = BackboneMethod::SeasonalNaive;
    opts.horizon = 3;
    const auto out = backbone_forecast(series, temporal_split(240), opts);
    // every target from slot 24 on has a known seasonal value
    for (std::size_t r = 0; r < out.forecasts.rows(); ++r) {
        if (out.origin(r) + 1 < 24) continue;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t h = 0; h < 3; ++h) EXPECT_NEAR(out.residuals.values(r, i, h), 0.0, 1e-12);
        }
    }
}

TEST(Backbone, SeasonalNaiveOnWhiteNoiseDoublesVariance) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    Eigen::MatrixXd v(6000, 2);
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = z(rng);
    BackboneOptions opts;
    opts.method = BackboneMethod::SeasonalNaive;
    const auto out = backbone_forecast(from_matrix(v), temporal_split(6000), opts);
    double ss = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 30; r < out.forecasts.rows(); ++r) {
        for (std::size_t i = 0; i < 2; ++i) {
            ss += out.residuals.values(r, i, 0) * out.residuals.values(r, i, 0);
            ++count;
        }
    }
    EXPECT_NEAR(ss / static_cast<double>(count), 2.0, 0.2);
}

TEST(Backbone, RidgeArRecoversAr1Coefficient) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    const double phi = 0.7;
    Eigen::MatrixXd v(5000, 1);
    v(0, 0) = 0.0;
    for (Eigen::Index t = 1; t < 5000; ++t) v(t, 0) = phi * v(t - 1, 0) + z(rng);
    BackboneOptions opts;
    opts.lookback = 1;
    const auto out = backbone_forecast(from_matrix(v), temporal_split(5000), opts);
    EXPECT_EQ(out.first_origin, 0u);
    // forecast = b0 + b1 x_o, so two origins recover b1
    const double x1 = v(100, 0), x2 = v(200, 0);
    const double b1 = (out.forecasts(100, 0, 0) - out.forecasts(200, 0, 0)) / (x1 - x2);
    EXPECT_NEAR(b1, phi, 0.05);
}

TEST(Backbone, IndexingAndResidualIdentity) {
    const auto x = generate_synthetic(default_spec(400));
    BackboneOptions opts;
    opts.horizon = 2;
    const auto out = backbone_forecast(x, temporal_split(400), opts);
    EXPECT_EQ(out.first_origin, 11u);
    EXPECT_EQ(out.forecasts.rows(), 400u - 2u - 11u);
    for (std::size_t r = 0; r < out.forecasts.rows(); r += 13) {
        for (std::size_t h = 0; h < 2; ++h) {
            const auto target = static_cast<Eigen::Index>(out.origin(r) + h + 1);
            EXPECT_EQ(out.truth(r, 3, h), x.values(target, 3));
            EXPECT_EQ(out.residuals.values(r, 3, h), out.truth(r, 3, h) - out.forecasts(r, 3, h));
        }
        EXPECT_EQ(out.residuals.timestamps[r], x.timestamps[out.origin(r)]);
    }
}

TEST(Backbone, Errors) {
    const auto x = generate_synthetic(default_spec(40));
    BackboneOptions opts;
    opts.lookback = 12;
    EXPECT_EQ(code_of([&] { backbone_forecast(x, temporal_split(40), opts); }), Errc::InsufficientHistory);
    opts.lookback = 0;
    EXPECT_EQ(code_of([&] { backbone_forecast(x, temporal_split(40), opts); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_backbone("GNN"); }), Errc::InvalidConfig);
    EXPECT_EQ(parse_backbone(to_string(BackboneMethod::SeasonalNaive)), BackboneMethod::SeasonalNaive);
}

TEST(LowFrequencyForecast, PersistenceOfTheLastSnapshot) {
    Eigen::MatrixXd low(6, 2);
    for (Eigen::Index t = 0; t < 6; ++t) {
        low(t, 0) = static_cast<double>(t);
        low(t, 1) = -static_cast<double>(t);
    }
    // rows are targets 3..8
    const auto f = low_frequency_forecast(low, 3, IndexRange{4, 7}, 2);
    EXPECT_EQ(f.rows(), 3u);
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t h = 0; h < 2; ++h) {
            EXPECT_EQ(f(r, 0, h), static_cast<double>(r + 1));
            EXPECT_EQ(f(r, 1, h), -static_cast<double>(r + 1));
        }
    }
    EXPECT_EQ(code_of([&] { low_frequency_forecast(low, 3, IndexRange{2, 4}, 1); }), Errc::InsufficientHistory);
    EXPECT_EQ(code_of([&] { low_frequency_forecast(low, 3, IndexRange{4, 10}, 1); }), Errc::InsufficientHistory);
}
