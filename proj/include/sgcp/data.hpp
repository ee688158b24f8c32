#pragma once

#include "sgcp/conformal.hpp"
#include "sgcp/graph.hpp"
#include "sgcp/sgwt.hpp"
#include "sgcp/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sgcp {

/// T x n observations (rows are time), stored transposed relative to the
/// usual N x T notation.
struct GraphSignalSeries {
    Eigen::MatrixXd values;
    std::vector<std::int64_t> timestamps;  // strictly increasing
    std::size_t slots_per_day = 24;
    Graph graph;

    std::size_t length() const noexcept { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_nodes() const noexcept { return static_cast<std::size_t>(values.cols()); }

    std::size_t time_of_day(std::size_t t) const { return static_cast<std::size_t>(timestamps[t]) % slots_per_day; }
    std::size_t day_of_week(std::size_t t) const {
        return static_cast<std::size_t>(timestamps[t]) / slots_per_day % 7;
    }
};

struct SyntheticSpec {
    Graph graph;
    std::size_t T = 5000;
    std::size_t trend_rank = 2;
    double trend_ar = 0.95;
    double trend_scale = 2.0;
    std::vector<double> noise_scale;  // one per node
    std::optional<std::size_t> hetero_period;
    double hetero_amplitude = 0.8;
    std::size_t slots_per_day = 24;
    std::uint64_t seed = 0;
};

/// Connected random graph: a ring plus Erdos-Renyi chords with probability
/// `chord_prob`, weights uniform on [0.5, 1.5].
Graph random_connected_graph(std::size_t n, double chord_prob, std::uint64_t seed);

/// X_t = trend_scale * sum_m a_m(t) u_m + eps_t, with u_m the trend_rank
/// lowest-frequency Laplacian eigenvectors, a_m unit-variance AR(1) with
/// coefficient trend_ar and eps_{t,i} ~ N(0, (noise_scale_i * mod(t))^2) where
/// mod(t) = 1 + hetero_amplitude * sin(2 pi t / hetero_period) when a period
/// is set and 1 otherwise. Timestamps are slot indices 0..T-1.
GraphSignalSeries generate_synthetic(const SyntheticSpec& spec);

/// Header `timestamp,node_0,...,node_{n-1}`; every cell numeric and finite.
GraphSignalSeries load_series_csv(const std::filesystem::path& path, std::size_t slots_per_day);
void save_series_csv(const GraphSignalSeries& series, const std::filesystem::path& path);

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive

    std::size_t size() const noexcept { return end - begin; }
    bool contains(std::size_t t) const noexcept { return t >= begin && t < end; }
};

struct SplitIndices {
    IndexRange train;
    IndexRange calibration;
    IndexRange test;
};

/// Contiguous floor-based split in time order, remainder to test.
SplitIndices temporal_split(std::size_t T, double train_ratio = 0.4, double calibration_ratio = 0.4);

enum class BackboneMethod { SeasonalNaive, RidgeAR };

BackboneMethod parse_backbone(const std::string& name);
std::string to_string(BackboneMethod m);

/// Point forecasts for every origin o in [first_origin, T - K), lead h
/// targeting time o + h + 1.
struct BackboneOutput {
    std::size_t first_origin = 0;
    Tensor3 forecasts;  // rows = origins
    Tensor3 truth;
    ResidualSeries residuals;

    std::size_t origin(std::size_t row) const noexcept { return first_origin + row; }
    std::size_t row_of(std::size_t origin) const noexcept { return origin - first_origin; }
};

struct BackboneOptions {
    BackboneMethod method = BackboneMethod::RidgeAR;
    std::size_t lookback = 12;
    std::size_t horizon = 1;
    double ridge_penalty = 1e-3;
};

/// SeasonalNaive predicts the value slots_per_day steps before the target
/// (last observed value when that lies in the future or before the series).
/// RidgeAR fits, per node and lead, an intercept plus `lookback` lags by
/// penalised least squares on origins whose targets all fall in the train
/// range. Forecasts are produced for origins from `lookback - 1` on.
/// Throws InsufficientHistory when the train range cannot fit the model.
BackboneOutput backbone_forecast(const GraphSignalSeries& series, const SplitIndices& split,
                                 const BackboneOptions& opts);

/// Persistence forecast of the low band: every lead at origin o reuses the
/// low component of the residual snapshot whose target is o. `low_by_target`
/// is indexed by target time; rows are origins `origins`.
Tensor3 low_frequency_forecast(const Eigen::MatrixXd& low_by_target, std::size_t first_target,
                               const IndexRange& origins, std::size_t horizon);

}  // namespace sgcp
