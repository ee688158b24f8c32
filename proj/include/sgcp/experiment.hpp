#pragma once

#include "sgcp/conformal.hpp"
#include "sgcp/data.hpp"
#include "sgcp/error.hpp"
#include "sgcp/scale_model.hpp"
#include "sgcp/sgwt.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sgcp {

struct DataConfig {
    std::string source = "synthetic";  // "synthetic" or "csv"
    // synthetic
    std::size_t n_nodes = 20;
    double chord_prob = 0.15;
    std::uint64_t graph_seed = 0;
    std::size_t T = 5000;
    std::size_t trend_rank = 2;
    double trend_ar = 0.95;
    double trend_scale = 2.0;
    std::vector<double> noise_scale{1.0};  // one value broadcasts to every node
    std::optional<std::size_t> hetero_period;
    double hetero_amplitude = 0.8;
    std::uint64_t seed = 0;  // the experiment seed is added to this
    // csv
    std::string series_csv;
    std::string graph_csv;
    std::string graph_format = "edges";  // "edges" or "dense"
    // shared
    std::size_t slots_per_day = 24;
    double train_ratio = 0.4;
    double calibration_ratio = 0.4;
};

struct SgwtConfig {
    std::size_t n_scales = 4;
    KernelFamily family = KernelFamily::MexicanHat;
    std::optional<std::size_t> cutoff;  // 1-based split cutoff; empty = auto
    std::optional<double> tau;
    std::size_t t_max = 2000;
};

struct MethodSpec {
    Method method = Method::SCP;
    std::size_t window_K = 100;
    double rho = 0.99;
    bool conformalize = false;  // SCALE only

    /// Row label in metric tables, e.g. "SCALE+CP" for the wrapped model.
    std::string label() const;
};

struct ExperimentConfig {
    DataConfig data;
    BackboneOptions backbone;
    SgwtConfig sgwt;
    std::vector<MethodSpec> methods;
    std::vector<double> alphas{0.05, 0.1, 0.2};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    TrainConfig train;
    std::string decompose_target = "residuals";  // or "series"
    std::filesystem::path output_dir = "out";

    void validate() const;
};

/// Parses a config document; missing keys take the defaults above.
/// Throws InvalidConfig (or TrendRankTooLarge) for bad values.
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Canonical document with every field spelled out.
nlohmann::ordered_json to_json(const ExperimentConfig& config);

/// Applies `dotted.key=value`; the value is read as JSON when it parses and
/// as a plain string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json load_config_document(const std::filesystem::path& path);

/// FNV-1a 64 of the canonical JSON without output_dir, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

nlohmann::ordered_json to_json(const CutoffDiagnostics& diag);

/// Everything derived from one seed's data that the calibration methods
/// share. Origins index forecast rows (see BackboneOutput); residual
/// snapshots (lead 0, target o + 1) are decomposed once and indexed by
/// target time starting at `first_target`.
struct PreparedRun {
    GraphSignalSeries series;
    SplitIndices split;
    BackboneOutput backbone;
    WaveletFrame frame;
    std::size_t cutoff = 1;
    std::optional<CutoffDiagnostics> cutoff_diagnostics;
    Eigen::MatrixXd low_by_target;
    Eigen::MatrixXd high_by_target;
    std::size_t first_target = 0;
    std::size_t lookback = 12;
    IndexRange calibration_origins;
    IndexRange test_origins;

    Tensor3 rows(const Tensor3& by_origin, const IndexRange& origins) const;
    ResidualSeries residual_rows(const IndexRange& origins) const;
    Tensor3 test_forecasts() const;
    Tensor3 test_truth() const;
    ScaleDataset scale_dataset() const;
};

GraphSignalSeries load_or_generate(const DataConfig& data, std::uint64_t seed);

PreparedRun prepare_run(const ExperimentConfig& config, std::uint64_t seed);

/// Intervals on the test origins for one method.
IntervalSeries run_method(const PreparedRun& run, const MethodSpec& spec, double alpha, const TrainConfig& train,
                          std::uint64_t seed);

struct MetricRow {
    std::string method;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    IntervalMetrics metrics;
};

struct SummaryRow {
    std::string method;
    double alpha = 0.0;
    double coverage_mean = 0.0;
    double coverage_std = 0.0;
    double width_mean = 0.0;
    double width_std = 0.0;
    double winkler_mean = 0.0;
    double winkler_std = 0.0;
    std::size_t infinite_cells = 0;
    bool coverage_ok = false;  // |coverage - (1 - alpha)| <= 0.02
};

/// Mean and population std over seeds per (method, alpha), in first-seen order.
std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows);

struct EvaluateResult {
    std::vector<MetricRow> rows;
    std::vector<SummaryRow> summary;
    std::vector<std::filesystem::path> files;
};

// Subcommands. Each writes into config.output_dir and returns what it wrote.
std::vector<std::filesystem::path> cmd_synth(const ExperimentConfig& config);
nlohmann::ordered_json cmd_decompose(const ExperimentConfig& config);
nlohmann::ordered_json cmd_autocut(const ExperimentConfig& config);
EvaluateResult cmd_evaluate(const ExperimentConfig& config);

/// 0 success, 2 config, 3 data, 4 numeric.
int exit_code_for(ErrorCategory category) noexcept;

}  // namespace sgcp
