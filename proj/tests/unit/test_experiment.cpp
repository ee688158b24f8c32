#include "sgcp/experiment.hpp"

#include "../support/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace sgcp;
using nlohmann::json;
using testutil::code_of;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sgcp_exp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

json small_synthetic(const std::filesystem::path& out) {
    return json{{"data", {{"T", 400}, {"n_nodes", 6}}},
                {"methods", json::array({"SCP", "SeqCP", "NexCP", "SpectralSCP"})},
                {"alphas", {0.1}},
                {"seeds", {0, 1}},
                {"output_dir", out.string()}};
}

// Three nodes repeating one daily profile: seasonal-naive residuals are exactly zero.
json periodic_csv_config(const std::filesystem::path& dir, const std::vector<double>& scale = {1.0, 1.0, 1.0}) {
    std::ofstream s(dir / "series.csv");
    s << "timestamp,node_0,node_1,node_2\n";
    for (int t = 0; t < 480; ++t) {
        s << t;
        for (int i = 0; i < 3; ++i) s << ',' << scale[static_cast<std::size_t>(i)] * std::sin(0.3 * (t % 24) + i);
        s << '\n';
    }
    std::ofstream g(dir / "graph.csv");
    g << "i,j,w\n0,1,1\n1,2,1\n";
    return json{{"data", {{"source", "csv"}, {"series_csv", (dir / "series.csv").string()},
                          {"graph_csv", (dir / "graph.csv").string()}}},
                {"backbone", {{"method", "SeasonalNaive"}, {"lookback", 2}}},
                {"sgwt", {{"cutoff", 2}}},
                {"methods", json::array({"SCP"})},
                {"alphas", {0.1}},
                {"seeds", {0, 1}},
                {"output_dir", (dir / "out").string()}};
}

}  // namespace

// ---- configuration ------------------------------------------------------------------

TEST(ParseConfig, DefaultsForAnEmptyDocument) {
    const auto c = parse_config(json::object());
    EXPECT_EQ(c.data.source, "synthetic");
    EXPECT_EQ(c.data.n_nodes, 20u);
    EXPECT_EQ(c.data.T, 5000u);
    EXPECT_EQ(c.sgwt.n_scales, 4u);
    EXPECT_FALSE(c.sgwt.cutoff.has_value());
    EXPECT_EQ(c.alphas, (std::vector<double>{0.05, 0.1, 0.2}));
    EXPECT_EQ(c.methods.size(), 5u);
    EXPECT_EQ(c.train.epochs, 30u);
    EXPECT_EQ(c.train.batch_size, 128u);
    EXPECT_EQ(c.train.crossing_penalty_weight, 15.0);
}

TEST(ParseConfig, ShippedDefaultConfigParses) {
    const auto c = parse_config(load_config_document(std::filesystem::path(SGCP_SOURCE_DIR) / "configs/default.json"));
    ASSERT_EQ(c.methods.size(), 6u);
    EXPECT_EQ(c.methods[4].label(), "SCALE");
    EXPECT_EQ(c.methods[5].label(), "SCALE+CP");
    EXPECT_EQ(c.methods[1].window_K, 100u);
    EXPECT_EQ(c.methods[2].rho, 0.99);
}

TEST(ParseConfig, CutoffForms) {
    EXPECT_FALSE(parse_config(json{{"sgwt", {{"cutoff", "auto"}}}}).sgwt.cutoff.has_value());
    EXPECT_EQ(*parse_config(json{{"sgwt", {{"cutoff", 3}}}}).sgwt.cutoff, 3u);
    EXPECT_EQ(code_of([] { parse_config(json{{"sgwt", {{"cutoff", 6}}}}); }), Errc::CutoffOutOfRange);
    EXPECT_EQ(code_of([] { parse_config(json{{"sgwt", {{"cutoff", "low"}}}}); }), Errc::InvalidConfig);
}

TEST(ParseConfig, Errors) {
    EXPECT_EQ(code_of([] { parse_config(json{{"dta", json::object()}}); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_config(json{{"data", {{"nodes", 3}}}}); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_config(json{{"data", {{"trend_rank", 20}}}}); }), Errc::TrendRankTooLarge);
    EXPECT_EQ(code_of([] { parse_config(json{{"alphas", {1.2}}}); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_config(json{{"seeds", json::array()}}); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_config(json{{"methods", {"HopCPT"}}}); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([] { parse_config(json{{"data", {{"T", "many"}}}}); }), Errc::InvalidConfig);
}

TEST(ApplyOverride, TypedAndNestedValues) {
    json doc = json::object();
    apply_override(doc, "data.T=1000");
    apply_override(doc, "data.source=synthetic");
    apply_override(doc, "sgwt.cutoff=\"auto\"");
    apply_override(doc, "alphas=[0.1]");
    EXPECT_EQ(doc["data"]["T"], 1000);
    EXPECT_EQ(doc["data"]["source"], "synthetic");
    EXPECT_EQ(doc["sgwt"]["cutoff"], "auto");
    EXPECT_EQ(parse_config(doc).alphas, std::vector<double>{0.1});
    EXPECT_EQ(code_of([&] { apply_override(doc, "no_equals"); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([&] { apply_override(doc, "data..T=1"); }), Errc::InvalidConfig);
    EXPECT_EQ(code_of([&] { apply_override(doc, "alphas.x=1"); }), Errc::InvalidConfig);
}

TEST(ConfigHash, StableUnderRoundTripAndSensitiveToChanges) {
    const auto a = parse_config(json::object());
    const auto h = config_hash(a);
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(config_hash(parse_config(json::parse(to_json(a).dump()))), h);
    EXPECT_NE(config_hash(parse_config(json{{"data", {{"T", 4999}}}})), h);
    EXPECT_EQ(config_hash(parse_config(json{{"output_dir", "elsewhere"}})), h);
}

TEST(ExitCodes, CategoryMapping) {
    EXPECT_EQ(exit_code_for(ErrorCategory::Config), 2);
    EXPECT_EQ(exit_code_for(ErrorCategory::Data), 3);
    EXPECT_EQ(exit_code_for(ErrorCategory::Numeric), 4);
    EXPECT_EQ(category_of(Errc::TrendRankTooLarge), ErrorCategory::Config);
    EXPECT_EQ(category_of(Errc::ParseError), ErrorCategory::Data);
    EXPECT_EQ(category_of(Errc::ConvergenceFailure), ErrorCategory::Numeric);
}

TEST(Summarize, PopulationStdInFirstSeenOrder) {
    std::vector<MetricRow> rows;
    rows.push_back({"SCP", 0.1, 0, {0.8, 1.0, 2.0, 0, 10}});
    rows.push_back({"NexCP", 0.1, 0, {0.9, 1.0, 2.0, 1, 10}});
    rows.push_back({"SCP", 0.1, 1, {0.9, 3.0, 4.0, 2, 10}});
    const auto s = summarize(rows);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].method, "SCP");
    EXPECT_NEAR(s[0].coverage_mean, 0.85, 1e-15);
    EXPECT_NEAR(s[0].coverage_std, 0.05, 1e-15);
    EXPECT_EQ(s[0].width_mean, 2.0);
    EXPECT_EQ(s[0].width_std, 1.0);
    EXPECT_EQ(s[0].infinite_cells, 2u);
    EXPECT_FALSE(s[0].coverage_ok);  // 0.85 is 0.05 below target
    EXPECT_TRUE(s[1].coverage_ok);
}

// ---- subcommands -----------------------------------------------------------------------

TEST(CmdSynth, FilesReloadIdenticallyAndRepeat) {
    TempDir dir;
    auto doc = small_synthetic(dir.path() / "a");
    const auto config = parse_config(doc);
    const auto files = cmd_synth(config);
    ASSERT_EQ(files.size(), 4u);  // graph, two series, manifest
    for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f));

    const auto generated = load_or_generate(config.data, 1);
    const auto reloaded = load_series_csv(dir.path() / "a" / "series_seed1.csv", 24);
    EXPECT_EQ(reloaded.values, generated.values);
    const auto graph = load_edge_list_csv(dir.path() / "a" / "graph.csv", 6);
    EXPECT_EQ(graph.adjacency(), generated.graph.adjacency());

    const auto manifest = json::parse(slurp(dir.path() / "a" / "manifest.json"));
    EXPECT_EQ(manifest["config_hash"], config_hash(config));
    EXPECT_EQ(manifest["seeds"], json({0, 1}));
    EXPECT_EQ(slurp(files[1]).rfind("# config_hash=" + config_hash(config), 0), 0u);

    doc["output_dir"] = (dir.path() / "b").string();
    const auto again = cmd_synth(parse_config(doc));
    for (std::size_t k = 0; k + 1 < files.size(); ++k) EXPECT_EQ(slurp(files[k]), slurp(again[k]));
}

TEST(CmdSynth, InvalidTrendRankFailsBeforeWriting) {
    TempDir dir;
    auto doc = small_synthetic(dir.path() / "never");
    doc["data"]["trend_rank"] = 6;
    EXPECT_EQ(code_of([&] { cmd_synth(parse_config(doc)); }), Errc::TrendRankTooLarge);
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "never"));
}

TEST(CmdDecompose, HighBandLessCorrelatedOnSyntheticData) {
    TempDir dir;
    auto doc = small_synthetic(dir.path());
    doc["data"]["T"] = 2000;
    doc["data"]["n_nodes"] = 20;
    doc["sgwt"] = {{"cutoff", 3}};
    doc["decompose"] = {{"target", "series"}};
    const auto out = cmd_decompose(parse_config(doc));
    ASSERT_EQ(out["results"].size(), 2u);
    for (const auto& r : out["results"]) {
        EXPECT_EQ(r["cutoff"], 3);
        EXPECT_LT(r["high"]["mean_abs_offdiag_correlation"].get<double>(),
                  r["low"]["mean_abs_offdiag_correlation"].get<double>());
        EXPECT_EQ(r["raw"]["correlation_intensity"].size(), 20u);
        EXPECT_EQ(r["per_scale"]["per_scale_energy"].size(), 4u);
    }
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "decompose.json"));
}

TEST(CmdDecompose, ZeroSeriesReportsZeroIntensity) {
    TempDir dir;
    {
        std::ofstream s(dir.path() / "series.csv");
        s << "timestamp,node_0,node_1,node_2\n";
        for (int t = 0; t < 50; ++t) s << t << ",0,0,0\n";
        std::ofstream g(dir.path() / "graph.csv");
        g << "i,j,w\n0,1,1\n1,2,1\n";
    }
    json doc{{"data", {{"source", "csv"}, {"series_csv", (dir.path() / "series.csv").string()},
                       {"graph_csv", (dir.path() / "graph.csv").string()}}},
             {"sgwt", {{"cutoff", 2}}},
             {"decompose", {{"target", "series"}}},
             {"seeds", {0}},
             {"output_dir", dir.path().string()}};
    const auto out = cmd_decompose(parse_config(doc));
    for (const char* band : {"raw", "low", "high"}) {
        for (const auto& c : out["results"][0][band]["correlation_intensity"]) EXPECT_EQ(c.get<double>(), 0.0);
    }
}

TEST(CmdAutocut, DeterministicAndDefaultScaleCount) {
    TempDir dir;
    const auto config = parse_config(small_synthetic(dir.path()));
    const auto a = cmd_autocut(config);
    const auto b = cmd_autocut(config);
    EXPECT_EQ(a.dump(), b.dump());
    for (const auto& r : a["results"]) {
        EXPECT_EQ(r["per_scale_energy"].size(), 4u);
        EXPECT_LE(r["chosen_k"].get<std::size_t>(), 4u);
    }
}

TEST(CmdEvaluate, ZeroResidualsGiveFullCoverageAndZeroWidth) {
    TempDir dir;
    const auto result = cmd_evaluate(parse_config(periodic_csv_config(dir.path())));
    ASSERT_EQ(result.summary.size(), 1u);
    EXPECT_EQ(result.summary[0].coverage_mean, 1.0);
    EXPECT_EQ(result.summary[0].width_mean, 0.0);
    // both seeds read the same file
    EXPECT_EQ(result.summary[0].coverage_std, 0.0);
    EXPECT_EQ(result.summary[0].width_std, 0.0);
}

TEST(CmdEvaluate, TableShapeAndEmbeddedHeader) {
    TempDir dir;
    const auto config = parse_config(small_synthetic(dir.path()));
    const auto result = cmd_evaluate(config);
    EXPECT_EQ(result.rows.size(), 4u * 1u * 2u);
    EXPECT_EQ(result.summary.size(), 4u);
    const auto csv = slurp(dir.path() / "metrics.csv");
    std::istringstream lines(csv);
    std::string l1, l2, l3;
    std::getline(lines, l1);
    std::getline(lines, l2);
    std::getline(lines, l3);
    EXPECT_EQ(l1, "# config_hash=" + config_hash(config));
    EXPECT_EQ(l2, "# seeds=0 1");
    EXPECT_EQ(l3, "method,alpha,coverage_mean,coverage_std,width_mean,width_std,winkler_mean,winkler_std,infinite_cells");
    const auto doc = json::parse(slurp(dir.path() / "metrics.json"));
    EXPECT_EQ(doc["config_hash"], config_hash(config));
    EXPECT_EQ(doc["rows"].size(), 8u);
}

TEST(CmdEvaluate, ErrorsCarryMethodContext) {
    TempDir dir;
    auto doc = periodic_csv_config(dir.path());
    doc["methods"] = json::array({json{{"name", "SCALE"}, {"conformalize", true}}});
    doc["data"]["calibration_ratio"] = 0.0065;  // three rows leave a single calibration origin
    doc["data"]["train_ratio"] = 0.9;
    try {
        cmd_evaluate(parse_config(doc));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyCalibration);
        EXPECT_NE(std::string(e.what()).find("method=SCALE+CP alpha=0.1 seed=0"), std::string::npos) << e.what();
    }
}
