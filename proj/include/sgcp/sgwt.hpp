#pragma once

#include "sgcp/graph.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sgcp {

enum class KernelFamily { MexicanHat };

KernelFamily parse_kernel_family(const std::string& name);
std::string to_string(KernelFamily family);

namespace kernels {

/// Band-pass kernel g(x) = x e^{1-x}; unit peak at x = 1, g(0) = 0.
double mexican_hat_band(double x);

/// Low-pass kernel h(lambda) = exp(-(lambda / (0.5 lambda_max / kappa))^4), h(0) = 1.
double mexican_hat_lowpass(double lambda, double lambda_max, double kappa);

inline constexpr double kDefaultKappa = 20.0;

}  // namespace kernels

/// Band-pass filters at S scales plus a low-pass filter, tabulated on the
/// graph spectrum.
///
/// Band index 0 holds the smallest scale, i.e. the highest-frequency band,
/// and scales grow with the index. With the 1-based cutoff k used by
/// `split_low_high`, bands k..S (1-based) form the low side together with
/// the low-pass output and bands 1..k-1 form the high side.
struct WaveletFrame {
    SpectralBasis basis;
    std::vector<double> scales;          // ascending, size S
    Eigen::MatrixXd band_kernel_values;  // S x n, row i = g(scales[i] * lambda_j)
    Eigen::VectorXd lowpass_values;      // n, h(lambda_j)
    KernelFamily family = KernelFamily::MexicanHat;

    std::size_t n_scales() const noexcept { return scales.size(); }
    std::size_t n_nodes() const noexcept { return basis.size(); }
};

/// Scales are log-spaced so the band peaks (lambda = 1/s) run from lambda_max
/// down to lambda_max / kappa. Throws DegenerateSpectrum when lambda_max <= 1e-9.
WaveletFrame make_wavelet_frame(const SpectralBasis& basis, std::size_t n_scales,
                                KernelFamily family = KernelFamily::MexicanHat,
                                double kappa = kernels::kDefaultKappa);

struct WaveletCoefficients {
    Eigen::MatrixXd band;     // S x n, row i = W_{s_i}
    Eigen::VectorXd lowpass;  // n
};

WaveletCoefficients forward_transform(const WaveletFrame& frame, const Eigen::VectorXd& snapshot);

struct SpectralDecomposition {
    Eigen::VectorXd low;
    Eigen::VectorXd high;
    std::size_t cutoff = 1;
};

/// low = V + sum of band coefficients with 1-based index >= k, high = x - low.
/// k ranges over [1, S + 1]; k = S + 1 leaves only the low-pass output on the
/// low side. Throws CutoffOutOfRange otherwise.
SpectralDecomposition split_low_high(const WaveletFrame& frame, const Eigen::VectorXd& snapshot, std::size_t cutoff);

/// Spectral response of the low side for a cutoff: h(lambda) + sum_{i >= k} g_i(lambda).
Eigen::VectorXd low_side_response(const WaveletFrame& frame, std::size_t cutoff);

/// Row-wise decomposition of a T x n series; the low part is X U diag(r) U^T
/// with r the low-side response, the high part is X - low.
struct SeriesDecomposition {
    Eigen::MatrixXd low;
    Eigen::MatrixXd high;
    std::size_t cutoff = 1;
};
SeriesDecomposition decompose_series(const WaveletFrame& frame, const Eigen::MatrixXd& series, std::size_t cutoff);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|. Throws EmptySample.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Pearson correlation matrix of the columns; zero-variance columns get rho = 0
/// against every other column (and 1 on the diagonal).
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& series);

/// Mean |rho_ij| over i != j. Zero for a single column.
double mean_abs_offdiag_correlation(const Eigen::MatrixXd& series);

/// c_i = sum_{j != i} rho_ij / (n - 1). Throws TooFewSamples when T < 3 and
/// TooFewNodes when n < 2.
Eigen::VectorXd correlation_intensity(const Eigen::MatrixXd& series);

struct CutoffOptions {
    std::size_t n_scales = 4;
    KernelFamily family = KernelFamily::MexicanHat;
    std::size_t t_max = 2000;
    std::optional<double> tau;
    std::uint64_t rng_seed = 0;
    std::size_t max_pairs = 200;
    double energy_fraction = 0.9;
};

struct CutoffDiagnostics {
    std::vector<double> per_scale_correlation;
    std::vector<double> per_scale_ks;
    std::vector<double> per_scale_energy;
    std::vector<double> smoothed_correlation;
    std::vector<std::size_t> candidates;  // empty when tau was given
    std::size_t chosen_k = 0;             // count of high-frequency scales, in [0, S]
    std::vector<std::size_t> sampled_rows;

    /// Cutoff for `split_low_high`: the first low-side band, 1-based.
    std::size_t split_cutoff() const noexcept { return chosen_k + 1; }
};

/// Cutoff auto-selection diagnostic.
///
///  1. subsample rows to at most t_max (seeded, uniform without replacement,
///     time order kept);
///  2. per band i: W_i = ((X U) .* g(s_i lambda)) U^T, recording the mean
///     absolute off-diagonal correlation, the mean KS statistic over up to
///     `max_pairs` seeded node pairs and the mean square;
///  3. smooth the correlation curve with a width-3 centred moving average
///     (edges replicated);
///  4. with tau: k = first index whose smoothed correlation is > tau, or S if
///     none; without: k = median of {first index where the cumulative energy
///     fraction (from band 0 upward) reaches 0.9, argmax of the first
///     difference, argmax of the negated second difference};
///  5. clamp to [0, S].
///
/// Ties in argmax resolve to the smallest index.
CutoffDiagnostics auto_select_cutoff(const Graph& g, const Eigen::MatrixXd& samples, const CutoffOptions& opts);

}  // namespace sgcp
