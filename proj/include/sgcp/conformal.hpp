#pragma once

#include "sgcp/sgwt.hpp"
#include "sgcp/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgcp {

/// Residuals truth - forecast indexed by forecast origin, node and lead.
/// Consecutive rows are consecutive origins.
struct ResidualSeries {
    Tensor3 values;
    std::vector<std::int64_t> timestamps;  // origin timestamps, one per row

    std::size_t rows() const noexcept { return values.rows(); }
};

struct IntervalSeries {
    Tensor3 lower;
    Tensor3 upper;
    double alpha = 0.1;

    std::size_t horizon() const noexcept { return lower.horizon(); }
};

enum class Method { SCP, SeqCP, NexCP, SpectralSCP, SCALE };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct CalibrationConfig {
    Method method = Method::SCP;
    double alpha = 0.1;
    std::size_t window_K = 100;  // SeqCP
    double rho = 0.99;           // NexCP
    std::size_t cutoff_k = 1;    // SpectralSCP / SCALE, 1-based split cutoff

    void validate() const;
};

/// Order statistic of rank ceil((M + 1) * level) (1-based) of the ascending
/// scores; +infinity when that rank exceeds M. Throws EmptyScores.
double empirical_quantile(std::span<const double> scores, double level);

/// Smallest score v with sum_{score_i <= v} w_i / (sum_i w_i + w_test) >= level,
/// +infinity when no score qualifies. `test_weight` defaults to the last
/// weight, which callers use for the newest observation. Throws EmptyScores,
/// ShapeMismatch or AllZeroWeights.
double weighted_quantile(std::span<const double> scores, std::span<const double> weights, double level,
                         std::optional<double> test_weight = std::nullopt);

/// Split conformal: per node and lead, offsets
///   upper = Q(r, 1 - alpha/2),  lower = -Q(-r, 1 - alpha/2)
/// from the pooled calibration residuals, added to every forecast row.
IntervalSeries scp_intervals(const ResidualSeries& calib, const Tensor3& point_forecasts, double alpha);

/// Sliding-window recalibration. `stream` holds consecutive origins and the
/// test rows are stream rows [first_test, first_test + forecasts.rows()).
/// For lead h at stream row r, residuals of rows <= r - h - 1 have been
/// revealed; the last `window` of them are used.
IntervalSeries seqcp_intervals(const ResidualSeries& stream, std::size_t first_test, const Tensor3& point_forecasts,
                               double alpha, std::size_t window = 100);

/// Exponentially weighted recalibration over every revealed residual, with
/// weight rho^age (age 0 for the newest) and a unit test-point weight.
IntervalSeries nexcp_intervals(const ResidualSeries& stream, std::size_t first_test, const Tensor3& point_forecasts,
                               double alpha, double rho = 0.99);

/// Per node and lead: Q(|high|, 1 - alpha) over the calibration rows.
Tensor3 high_band_radius(const Tensor3& calib_high, double alpha);

/// [psi - q, psi + q] with psi = point + low, q broadcast over rows.
IntervalSeries minkowski_intervals(const Tensor3& point_forecasts, const Tensor3& low_forecasts,
                                   const Tensor3& radius, double alpha);

/// Spectral split conformal.
///
/// Calibration scores are |H| per node and lead. By default H is the high
/// part of `split_low_high` applied to each calibration residual snapshot.
/// When `calib_low_estimates` is given, H = r - L_est instead, i.e. the high
/// part relative to the same low-frequency estimate used to form psi at test
/// time.
IntervalSeries spectral_scp_intervals(const ResidualSeries& calib, const WaveletFrame& frame, std::size_t cutoff,
                                      const Tensor3& point_forecasts, const Tensor3& low_forecasts, double alpha,
                                      const Tensor3* calib_low_estimates = nullptr);

// --- metrics -------------------------------------------------------------

double coverage(const IntervalSeries& intervals, const Tensor3& truth);

struct WidthSummary {
    double mean = 0.0;                // over finite-width cells
    std::size_t infinite_cells = 0;
    std::size_t n_cells = 0;
};

WidthSummary pi_width(const IntervalSeries& intervals);

/// Mean interval score over finite-width cells:
/// (u - l) + (2/alpha)(l - y)[y < l] + (2/alpha)(y - u)[y > u].
double winkler(const IntervalSeries& intervals, const Tensor3& truth, double alpha);

double winkler_cell(double lower, double upper, double y, double alpha);

/// max{level (y - q), (level - 1)(y - q)}.
double pinball_loss(double y, double q, double level);

struct IntervalMetrics {
    double coverage = 0.0;
    double pi_width = 0.0;
    double winkler = 0.0;
    std::size_t infinite_cells = 0;
    std::size_t n_cells = 0;
};

IntervalMetrics evaluate_intervals(const IntervalSeries& intervals, const Tensor3& truth);

}  // namespace sgcp
