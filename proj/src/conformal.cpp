#include "sgcp/conformal.hpp"

#include "sgcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sgcp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Relative slack so that e.g. (M + 1) * 0.7 = 7.000000000000001 still maps to rank 7.
constexpr double kRankSlack = 1e-9;

double weighted_quantile_sorted(std::span<const double> sorted_scores, std::span<const double> weights,
                                double level, double test_weight) {
    double total = test_weight;
    for (double w : weights) total += w;
    if (!(total > 0.0)) {
        throw Error(Errc::AllZeroWeights, "weights sum to zero");
    }
    const double threshold = level * total - kRankSlack * total;
    double cumulative = 0.0;
    for (std::size_t i = 0; i < sorted_scores.size(); ++i) {
        cumulative += weights[i];
        if (cumulative >= threshold && weights[i] > 0.0) return sorted_scores[i];
    }
    return kInf;
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(Errc::InvalidConfig, "alpha must lie in (0, 1), got " + std::to_string(alpha));
    }
}

void check_forecast_shape(const Tensor3& forecasts, std::size_t nodes, std::size_t horizon) {
    if (forecasts.nodes() != nodes || forecasts.horizon() != horizon) {
        throw Error(Errc::ShapeMismatch, "forecast tensor shape does not match residual nodes/horizon");
    }
}

// Both tails of a two-sided interval from one sample.
std::pair<double, double> two_sided_offsets(std::vector<double>& sample, double alpha) {
    const double level = 1.0 - alpha / 2.0;
    const double upper = empirical_quantile(sample, level);
    for (double& v : sample) v = -v;
    const double lower = -empirical_quantile(sample, level);
    return {lower, upper};
}

}  // namespace

Method parse_method(const std::string& name) {
    if (name == "SCP") return Method::SCP;
    if (name == "SeqCP") return Method::SeqCP;
    if (name == "NexCP") return Method::NexCP;
    if (name == "SpectralSCP") return Method::SpectralSCP;
    if (name == "SCALE") return Method::SCALE;
    throw Error(Errc::InvalidConfig, "unknown method '" + name + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::SCP: return "SCP";
        case Method::SeqCP: return "SeqCP";
        case Method::NexCP: return "NexCP";
        case Method::SpectralSCP: return "SpectralSCP";
        case Method::SCALE: return "SCALE";
    }
    return "Unknown";
}

void CalibrationConfig::validate() const {
    check_alpha(alpha);
    if (window_K < 1) throw Error(Errc::InvalidConfig, "window_K must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) throw Error(Errc::InvalidConfig, "rho must lie in (0, 1)");
    if (cutoff_k < 1) throw Error(Errc::CutoffOutOfRange, "cutoff_k must be >= 1");
}

double empirical_quantile(std::span<const double> scores, double level) {
    if (scores.empty()) {
        throw Error(Errc::EmptyScores, "empirical quantile of an empty sample");
    }
    const auto m = scores.size();
    const double x = static_cast<double>(m + 1) * level;
    const double rank = std::max(1.0, std::ceil(x - kRankSlack * static_cast<double>(m + 1)));
    if (rank > static_cast<double>(m)) return kInf;
    const auto r = static_cast<std::size_t>(rank);
    std::vector<double> sorted(scores.begin(), scores.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r - 1), sorted.end());
    return sorted[r - 1];
}

double weighted_quantile(std::span<const double> scores, std::span<const double> weights, double level,
                         std::optional<double> test_weight) {
    if (scores.empty()) {
        throw Error(Errc::EmptyScores, "weighted quantile of an empty sample");
    }
    if (scores.size() != weights.size()) {
        throw Error(Errc::ShapeMismatch, "scores and weights differ in length");
    }
    for (double w : weights) {
        if (!(w >= 0.0)) throw Error(Errc::AllZeroWeights, "negative or NaN weight");
    }
    const double w_test = test_weight.value_or(weights.back());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> s(scores.size());
    std::vector<double> w(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        s[i] = scores[order[i]];
        w[i] = weights[order[i]];
    }
    if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
        throw Error(Errc::AllZeroWeights, "calibration weights sum to zero");
    }
    return weighted_quantile_sorted(s, w, level, w_test);
}

IntervalSeries scp_intervals(const ResidualSeries& calib, const Tensor3& point_forecasts, double alpha) {
    check_alpha(alpha);
    if (calib.values.rows() == 0) {
        throw Error(Errc::EmptyCalibration, "SCP needs calibration residuals");
    }
    const auto n = calib.values.nodes();
    const auto K = calib.values.horizon();
    check_forecast_shape(point_forecasts, n, K);

    IntervalSeries out{Tensor3(point_forecasts.rows(), n, K), Tensor3(point_forecasts.rows(), n, K), alpha};
    std::vector<double> sample(calib.values.rows());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < K; ++h) {
            for (std::size_t t = 0; t < calib.values.rows(); ++t) sample[t] = calib.values(t, i, h);
            const auto [lo, hi] = two_sided_offsets(sample, alpha);
            for (std::size_t t = 0; t < point_forecasts.rows(); ++t) {
                out.lower(t, i, h) = point_forecasts(t, i, h) + lo;
                out.upper(t, i, h) = point_forecasts(t, i, h) + hi;
            }
        }
    }
    return out;
}

IntervalSeries seqcp_intervals(const ResidualSeries& stream, std::size_t first_test, const Tensor3& point_forecasts,
                               double alpha, std::size_t window) {
    check_alpha(alpha);
    if (window < 1) throw Error(Errc::InvalidConfig, "SeqCP window must be >= 1");
    const auto n = stream.values.nodes();
    const auto K = stream.values.horizon();
    check_forecast_shape(point_forecasts, n, K);
    if (first_test + point_forecasts.rows() > stream.values.rows()) {
        throw Error(Errc::ShapeMismatch, "test rows run past the residual stream");
    }
    if (first_test < K) {
        throw Error(Errc::EmptyCalibration, "no residuals revealed before the first test row");
    }

    IntervalSeries out{Tensor3(point_forecasts.rows(), n, K), Tensor3(point_forecasts.rows(), n, K), alpha};
    std::vector<double> sample;
    for (std::size_t t = 0; t < point_forecasts.rows(); ++t) {
        const std::size_t row = first_test + t;
        for (std::size_t h = 0; h < K; ++h) {
            const std::size_t end = row - h;  // rows [.., end) are revealed
            const std::size_t begin = end > window ? end - window : 0;
            for (std::size_t i = 0; i < n; ++i) {
                sample.clear();
                for (std::size_t r = begin; r < end; ++r) sample.push_back(stream.values(r, i, h));
                const auto [lo, hi] = two_sided_offsets(sample, alpha);
                out.lower(t, i, h) = point_forecasts(t, i, h) + lo;
                out.upper(t, i, h) = point_forecasts(t, i, h) + hi;
            }
        }
    }
    return out;
}

IntervalSeries nexcp_intervals(const ResidualSeries& stream, std::size_t first_test, const Tensor3& point_forecasts,
                               double alpha, double rho) {
    check_alpha(alpha);
    if (!(rho > 0.0 && rho < 1.0)) throw Error(Errc::InvalidConfig, "NexCP rho must lie in (0, 1)");
    const auto n = stream.values.nodes();
    const auto K = stream.values.horizon();
    check_forecast_shape(point_forecasts, n, K);
    if (first_test + point_forecasts.rows() > stream.values.rows()) {
        throw Error(Errc::ShapeMismatch, "test rows run past the residual stream");
    }
    if (first_test < K) {
        throw Error(Errc::EmptyCalibration, "no residuals revealed before the first test row");
    }
    const std::size_t total_rows = stream.values.rows();
    std::vector<double> decay(total_rows + 1);
    decay[0] = 1.0;
    for (std::size_t a = 1; a < decay.size(); ++a) decay[a] = decay[a - 1] * rho;

    const double level = 1.0 - alpha / 2.0;
    IntervalSeries out{Tensor3(point_forecasts.rows(), n, K), Tensor3(point_forecasts.rows(), n, K), alpha};

    struct Entry {
        double value;
        std::size_t row;
    };
    std::vector<Entry> sorted;
    std::vector<double> values;
    std::vector<double> weights;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < K; ++h) {
            // residual rows kept sorted by value; ties keep arrival order
            sorted.clear();
            std::size_t revealed = 0;
            for (std::size_t t = 0; t < point_forecasts.rows(); ++t) {
                const std::size_t end = first_test + t - h;
                for (; revealed < end; ++revealed) {
                    const Entry e{stream.values(revealed, i, h), revealed};
                    auto pos = std::upper_bound(sorted.begin(), sorted.end(), e.value,
                                                [](double v, const Entry& x) { return v < x.value; });
                    sorted.insert(pos, e);
                }
                const std::size_t newest = end - 1;
                const std::size_t m = sorted.size();
                values.resize(m);
                weights.resize(m);
                for (std::size_t k = 0; k < m; ++k) {
                    values[k] = sorted[k].value;
                    weights[k] = decay[newest - sorted[k].row];
                }
                const double hi = weighted_quantile_sorted(values, weights, level, 1.0);
                // lower tail: quantile of the negated residuals, ascending
                std::reverse(values.begin(), values.end());
                std::reverse(weights.begin(), weights.end());
                for (double& v : values) v = -v;
                const double lo = -weighted_quantile_sorted(values, weights, level, 1.0);
                out.lower(t, i, h) = point_forecasts(t, i, h) + lo;
                out.upper(t, i, h) = point_forecasts(t, i, h) + hi;
            }
        }
    }
    return out;
}

Tensor3 high_band_radius(const Tensor3& calib_high, double alpha) {
    check_alpha(alpha);
    if (calib_high.rows() == 0) {
        throw Error(Errc::EmptyCalibration, "no calibration high-band scores");
    }
    Tensor3 radius(1, calib_high.nodes(), calib_high.horizon());
    std::vector<double> scores(calib_high.rows());
    for (std::size_t i = 0; i < calib_high.nodes(); ++i) {
        for (std::size_t h = 0; h < calib_high.horizon(); ++h) {
            for (std::size_t t = 0; t < calib_high.rows(); ++t) scores[t] = std::abs(calib_high(t, i, h));
            radius(0, i, h) = empirical_quantile(scores, 1.0 - alpha);
        }
    }
    return radius;
}

IntervalSeries minkowski_intervals(const Tensor3& point_forecasts, const Tensor3& low_forecasts, const Tensor3& radius,
                                   double alpha) {
    if (!point_forecasts.same_shape(low_forecasts)) {
        throw Error(Errc::ShapeMismatch, "point and low-frequency forecasts differ in shape");
    }
    check_forecast_shape(radius, point_forecasts.nodes(), point_forecasts.horizon());
    const auto rows = point_forecasts.rows();
    const auto n = point_forecasts.nodes();
    const auto K = point_forecasts.horizon();
    IntervalSeries out{Tensor3(rows, n, K), Tensor3(rows, n, K), alpha};
    for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t h = 0; h < K; ++h) {
                const double psi = point_forecasts(t, i, h) + low_forecasts(t, i, h);
                const double q = radius(0, i, h);
                out.lower(t, i, h) = psi - q;
                out.upper(t, i, h) = psi + q;
            }
        }
    }
    return out;
}

IntervalSeries spectral_scp_intervals(const ResidualSeries& calib, const WaveletFrame& frame, std::size_t cutoff,
                                      const Tensor3& point_forecasts, const Tensor3& low_forecasts, double alpha,
                                      const Tensor3* calib_low_estimates) {
    check_alpha(alpha);
    const auto& r = calib.values;
    if (r.rows() == 0) {
        throw Error(Errc::EmptyCalibration, "spectral SCP needs calibration residuals");
    }
    if (r.nodes() != frame.n_nodes()) {
        throw Error(Errc::DimensionMismatch, "residual nodes differ from the wavelet frame");
    }
    if (cutoff < 1 || cutoff > frame.n_scales() + 1) {
        throw Error(Errc::CutoffOutOfRange, "cutoff " + std::to_string(cutoff));
    }
    Tensor3 high(r.rows(), r.nodes(), r.horizon());
    if (calib_low_estimates != nullptr) {
        if (!calib_low_estimates->same_shape(r)) {
            throw Error(Errc::ShapeMismatch, "calibration low estimates differ in shape from residuals");
        }
        for (std::size_t k = 0; k < r.size(); ++k) high.data()[k] = r.data()[k] - calib_low_estimates->data()[k];
    } else {
        const auto n = static_cast<Eigen::Index>(r.nodes());
        Eigen::MatrixXd snapshots(static_cast<Eigen::Index>(r.rows()), n);
        for (std::size_t h = 0; h < r.horizon(); ++h) {
            for (std::size_t t = 0; t < r.rows(); ++t) {
                for (std::size_t i = 0; i < r.nodes(); ++i) {
                    snapshots(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = r(t, i, h);
                }
            }
            const auto parts = decompose_series(frame, snapshots, cutoff);
            for (std::size_t t = 0; t < r.rows(); ++t) {
                for (std::size_t i = 0; i < r.nodes(); ++i) {
                    high(t, i, h) = parts.high(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
                }
            }
        }
    }
    return minkowski_intervals(point_forecasts, low_forecasts, high_band_radius(high, alpha), alpha);
}

double coverage(const IntervalSeries& intervals, const Tensor3& truth) {
    if (!intervals.lower.same_shape(truth) || !intervals.upper.same_shape(truth)) {
        throw Error(Errc::ShapeMismatch, "intervals and truth differ in shape");
    }
    if (truth.size() == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double y = truth.data()[k];
        if (intervals.lower.data()[k] <= y && y <= intervals.upper.data()[k]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

WidthSummary pi_width(const IntervalSeries& intervals) {
    WidthSummary s;
    s.n_cells = intervals.lower.size();
    double sum = 0.0;
    std::size_t finite = 0;
    for (std::size_t k = 0; k < s.n_cells; ++k) {
        const double w = intervals.upper.data()[k] - intervals.lower.data()[k];
        if (std::isfinite(w)) {
            sum += w;
            ++finite;
        } else {
            ++s.infinite_cells;
        }
    }
    s.mean = finite > 0 ? sum / static_cast<double>(finite) : kInf;
    return s;
}

double winkler_cell(double lower, double upper, double y, double alpha) {
    double score = upper - lower;
    if (y < lower) score += (2.0 / alpha) * (lower - y);
    if (y > upper) score += (2.0 / alpha) * (y - upper);
    return score;
}

double winkler(const IntervalSeries& intervals, const Tensor3& truth, double alpha) {
    if (!intervals.lower.same_shape(truth) || !intervals.upper.same_shape(truth)) {
        throw Error(Errc::ShapeMismatch, "intervals and truth differ in shape");
    }
    double sum = 0.0;
    std::size_t finite = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double l = intervals.lower.data()[k];
        const double u = intervals.upper.data()[k];
        if (!std::isfinite(u - l)) continue;
        sum += winkler_cell(l, u, truth.data()[k], alpha);
        ++finite;
    }
    return finite > 0 ? sum / static_cast<double>(finite) : kInf;
}

double pinball_loss(double y, double q, double level) {
    const double diff = y - q;
    return std::max(level * diff, (level - 1.0) * diff);
}

IntervalMetrics evaluate_intervals(const IntervalSeries& intervals, const Tensor3& truth) {
    IntervalMetrics m;
    m.coverage = coverage(intervals, truth);
    const auto w = pi_width(intervals);
    m.pi_width = w.mean;
    m.infinite_cells = w.infinite_cells;
    m.n_cells = w.n_cells;
    m.winkler = winkler(intervals, truth, intervals.alpha);
    return m;
}

}  // namespace sgcp
