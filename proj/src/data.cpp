#include "sgcp/data.hpp"

#include "csv.hpp"
#include "sgcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace sgcp {

Graph random_connected_graph(std::size_t n, double chord_prob, std::uint64_t seed) {
    if (n < 2) {
        throw Error(Errc::TooFewNodes, "random graph needs at least 2 nodes");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Edge> edges;
    auto weight = [&] { return 0.5 + unit(rng); };
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, weight()});
    if (n > 2) edges.push_back({0, n - 1, weight()});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            if (unit(rng) < chord_prob) edges.push_back({i, j, weight()});
        }
    }
    return build_graph(n, edges);
}

GraphSignalSeries generate_synthetic(const SyntheticSpec& spec) {
    const std::size_t n = spec.graph.n_nodes();
    if (spec.trend_rank >= n) {
        throw Error(Errc::TrendRankTooLarge,
                    "trend_rank " + std::to_string(spec.trend_rank) + " must be < n = " + std::to_string(n));
    }
    if (!(spec.trend_ar > -1.0 && spec.trend_ar < 1.0)) {
        throw Error(Errc::InvalidConfig, "trend_ar must lie in (-1, 1)");
    }
    if (spec.trend_scale < 0.0) {
        throw Error(Errc::InvalidConfig, "trend_scale must be >= 0");
    }
    if (!spec.noise_scale.empty() && spec.noise_scale.size() != n) {
        throw Error(Errc::InvalidConfig, "noise_scale needs one entry per node");
    }
    if (spec.hetero_period && *spec.hetero_period == 0) {
        throw Error(Errc::InvalidConfig, "hetero_period must be positive");
    }
    if (spec.T < 1 || spec.slots_per_day < 1) {
        throw Error(Errc::InvalidConfig, "T and slots_per_day must be positive");
    }
    std::vector<double> noise = spec.noise_scale.empty() ? std::vector<double>(n, 1.0) : spec.noise_scale;
    for (double s : noise) {
        if (!(s >= 0.0)) throw Error(Errc::InvalidConfig, "noise scales must be >= 0");
    }

    const SpectralBasis basis = eigendecompose(normalized_laplacian(spec.graph));
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    GraphSignalSeries out;
    out.graph = spec.graph;
    out.slots_per_day = spec.slots_per_day;
    out.values.resize(static_cast<Eigen::Index>(spec.T), static_cast<Eigen::Index>(n));
    out.timestamps.resize(spec.T);

    std::vector<double> trend(spec.trend_rank);
    for (double& a : trend) a = gauss(rng);
    const double innovation_sd = std::sqrt(1.0 - spec.trend_ar * spec.trend_ar);

    for (std::size_t t = 0; t < spec.T; ++t) {
        if (t > 0) {
            for (double& a : trend) a = spec.trend_ar * a + innovation_sd * gauss(rng);
        }
        double modulation = 1.0;
        if (spec.hetero_period) {
            modulation += spec.hetero_amplitude *
                          std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                   static_cast<double>(*spec.hetero_period));
        }
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t m = 0; m < spec.trend_rank; ++m) {
            x += spec.trend_scale * trend[m] * basis.eigenvectors.col(static_cast<Eigen::Index>(m));
        }
        for (std::size_t i = 0; i < n; ++i) {
            x(static_cast<Eigen::Index>(i)) += noise[i] * modulation * gauss(rng);
        }
        out.values.row(static_cast<Eigen::Index>(t)) = x.transpose();
        out.timestamps[t] = static_cast<std::int64_t>(t);
    }
    return out;
}

GraphSignalSeries load_series_csv(const std::filesystem::path& path, std::size_t slots_per_day) {
    const auto rows = detail::read_csv(path);
    if (rows.empty() || rows.front().cells.empty() || rows.front().cells.front() != "timestamp") {
        throw Error(Errc::ParseError, path.string() + ": expected header starting with 'timestamp'");
    }
    const auto& header = rows.front().cells;
    const std::size_t n = header.size() - 1;
    if (n == 0) {
        throw Error(Errc::ParseError, path.string() + ": no node columns");
    }
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] != "node_" + std::to_string(c - 1)) {
            throw Error(Errc::ParseError, path.string() + ": header column " + std::to_string(c + 1) +
                                              " should be node_" + std::to_string(c - 1));
        }
    }
    GraphSignalSeries out;
    out.slots_per_day = slots_per_day;
    out.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(n));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.cells.size() != n + 1) {
            throw Error(Errc::ParseError, path.string() + ": line " + std::to_string(row.line) + " has " +
                                              std::to_string(row.cells.size()) + " cells, expected " +
                                              std::to_string(n + 1));
        }
        const double ts = detail::parse_number(row.cells[0], row.line, 1);
        if (ts != std::floor(ts) || ts < 0) {
            throw Error(Errc::ParseError, "timestamp must be a nonnegative integer at line " + std::to_string(row.line));
        }
        const auto stamp = static_cast<std::int64_t>(ts);
        if (!out.timestamps.empty() && stamp <= out.timestamps.back()) {
            throw Error(Errc::NonMonotoneTimestamps, "timestamp at line " + std::to_string(row.line) +
                                                         " does not increase");
        }
        out.timestamps.push_back(stamp);
        for (std::size_t c = 0; c < n; ++c) {
            out.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) =
                detail::parse_number(row.cells[c + 1], row.line, c + 2);
        }
    }
    return out;
}

void save_series_csv(const GraphSignalSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::IoError, "cannot write " + path.string());
    }
    out << "timestamp";
    for (std::size_t i = 0; i < series.n_nodes(); ++i) out << ",node_" << i;
    out << '\n';
    for (std::size_t t = 0; t < series.length(); ++t) {
        out << series.timestamps[t];
        for (std::size_t i = 0; i < series.n_nodes(); ++i) {
            out << ',' << detail::format_double(series.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
        }
        out << '\n';
    }
    if (!out) {
        throw Error(Errc::IoError, "write failed for " + path.string());
    }
}

SplitIndices temporal_split(std::size_t T, double train_ratio, double calibration_ratio) {
    if (T < 3) {
        throw Error(Errc::TooFewSamples, "temporal split needs T >= 3");
    }
    if (!(train_ratio > 0.0) || !(calibration_ratio > 0.0) || train_ratio + calibration_ratio >= 1.0) {
        throw Error(Errc::InvalidConfig, "split ratios must be positive and leave room for a test range");
    }
    auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(T) * train_ratio));
    auto n_cal = static_cast<std::size_t>(std::floor(static_cast<double>(T) * calibration_ratio));
    n_train = std::max<std::size_t>(n_train, 1);
    n_cal = std::max<std::size_t>(n_cal, 1);
    if (n_train + n_cal >= T) {
        throw Error(Errc::TooFewSamples, "split leaves no test rows");
    }
    return {{0, n_train}, {n_train, n_train + n_cal}, {n_train + n_cal, T}};
}

BackboneMethod parse_backbone(const std::string& name) {
    if (name == "SeasonalNaive") return BackboneMethod::SeasonalNaive;
    if (name == "RidgeAR") return BackboneMethod::RidgeAR;
    throw Error(Errc::InvalidConfig, "unknown backbone '" + name + "'");
}

std::string to_string(BackboneMethod m) {
    return m == BackboneMethod::SeasonalNaive ? "SeasonalNaive" : "RidgeAR";
}

namespace {

// Per-lead ridge coefficients [intercept, lag_{o-W+1}, ..., lag_o] for one node.
Eigen::VectorXd fit_ridge_lead(const Eigen::MatrixXd& x, std::size_t node, std::size_t lead, std::size_t lookback,
                               std::size_t train_end, double penalty) {
    const auto col = static_cast<Eigen::Index>(node);
    const std::size_t first = lookback - 1;
    if (train_end < lead + 2 + first) {
        throw Error(Errc::InsufficientHistory, "train range too short for lookback " + std::to_string(lookback));
    }
    const std::size_t last = train_end - lead - 2;  // target o + lead + 1 <= train_end - 1
    const std::size_t count = last - first + 1;
    const auto p = static_cast<Eigen::Index>(lookback + 1);
    if (count < lookback + 1) {
        throw Error(Errc::InsufficientHistory, "only " + std::to_string(count) + " training windows for " +
                                                   std::to_string(lookback + 1) + " coefficients");
    }
    Eigen::MatrixXd design(static_cast<Eigen::Index>(count), p);
    Eigen::VectorXd target(static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t o = first + k;
        const auto r = static_cast<Eigen::Index>(k);
        design(r, 0) = 1.0;
        for (std::size_t l = 0; l < lookback; ++l) {
            design(r, static_cast<Eigen::Index>(l + 1)) = x(static_cast<Eigen::Index>(o + 1 - lookback + l), col);
        }
        target(r) = x(static_cast<Eigen::Index>(o + lead + 1), col);
    }
    Eigen::MatrixXd gram = design.transpose() * design;
    for (Eigen::Index d = 1; d < p; ++d) gram(d, d) += penalty;
    return gram.ldlt().solve(design.transpose() * target);
}

}  // namespace

BackboneOutput backbone_forecast(const GraphSignalSeries& series, const SplitIndices& split,
                                 const BackboneOptions& opts) {
    const std::size_t T = series.length();
    const std::size_t n = series.n_nodes();
    const std::size_t K = opts.horizon;
    const std::size_t W = opts.lookback;
    if (W < 1 || K < 1) {
        throw Error(Errc::InvalidConfig, "lookback and horizon must be >= 1");
    }
    if (T < W + K) {
        throw Error(Errc::InsufficientHistory, "series shorter than lookback + horizon");
    }
    const auto& x = series.values;

    BackboneOutput out;
    out.first_origin = W - 1;
    const std::size_t rows = T - K - out.first_origin;
    out.forecasts = Tensor3(rows, n, K);
    out.truth = Tensor3(rows, n, K);
    out.residuals.values = Tensor3(rows, n, K);

    std::vector<Eigen::VectorXd> coef;
    if (opts.method == BackboneMethod::RidgeAR) {
        coef.reserve(n * K);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t h = 0; h < K; ++h) {
                coef.push_back(fit_ridge_lead(x, i, h, W, split.train.end, opts.ridge_penalty));
            }
        }
    }

    const std::size_t period = series.slots_per_day;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = out.first_origin + r;
        out.residuals.timestamps.push_back(series.timestamps[o]);
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            for (std::size_t h = 0; h < K; ++h) {
                const std::size_t target = o + h + 1;
                double pred;
                if (opts.method == BackboneMethod::SeasonalNaive) {
                    const bool seasonal_known = target >= period && target - period <= o;
                    pred = seasonal_known ? x(static_cast<Eigen::Index>(target - period), col)
                                          : x(static_cast<Eigen::Index>(o), col);
                } else {
                    const auto& b = coef[i * K + h];
                    pred = b(0);
                    for (std::size_t l = 0; l < W; ++l) {
                        pred += b(static_cast<Eigen::Index>(l + 1)) * x(static_cast<Eigen::Index>(o + 1 - W + l), col);
                    }
                }
                const double y = x(static_cast<Eigen::Index>(target), col);
                out.forecasts(r, i, h) = pred;
                out.truth(r, i, h) = y;
                out.residuals.values(r, i, h) = y - pred;
            }
        }
    }
    return out;
}

Tensor3 low_frequency_forecast(const Eigen::MatrixXd& low_by_target, std::size_t first_target,
                               const IndexRange& origins, std::size_t horizon) {
    if (origins.begin < first_target ||
        origins.end - first_target > static_cast<std::size_t>(low_by_target.rows())) {
        throw Error(Errc::InsufficientHistory, "low-frequency history does not cover the requested origins");
    }
    const auto n = static_cast<std::size_t>(low_by_target.cols());
    Tensor3 out(origins.size(), n, horizon);
    for (std::size_t r = 0; r < origins.size(); ++r) {
        const auto src = static_cast<Eigen::Index>(origins.begin + r - first_target);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = low_by_target(src, static_cast<Eigen::Index>(i));
            for (std::size_t h = 0; h < horizon; ++h) out(r, i, h) = v;
        }
    }
    return out;
}

}  // namespace sgcp
