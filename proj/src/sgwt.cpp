#include "sgcp/sgwt.hpp"

#include "sgcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgcp {

KernelFamily parse_kernel_family(const std::string& name) {
    if (name == "MexicanHat" || name == "mexican_hat" || name == "mexican-hat") {
        return KernelFamily::MexicanHat;
    }
    throw Error(Errc::InvalidConfig, "unknown kernel family '" + name + "'");
}

std::string to_string(KernelFamily family) {
    switch (family) {
        case KernelFamily::MexicanHat: return "MexicanHat";
    }
    return "Unknown";
}

namespace kernels {

double mexican_hat_band(double x) {
    x = std::max(x, 0.0);
    return x * std::exp(1.0 - x);
}

double mexican_hat_lowpass(double lambda, double lambda_max, double kappa) {
    const double width = 0.5 * lambda_max / kappa;
    const double r = std::max(lambda, 0.0) / width;
    return std::exp(-(r * r) * (r * r));
}

}  // namespace kernels

WaveletFrame make_wavelet_frame(const SpectralBasis& basis, std::size_t n_scales, KernelFamily family, double kappa) {
    if (n_scales < 2) {
        throw Error(Errc::InvalidConfig, "need at least 2 scales");
    }
    const double lmax = basis.lambda_max();
    if (!(lmax > 1e-9)) {
        throw Error(Errc::DegenerateSpectrum, "lambda_max = " + std::to_string(lmax));
    }
    WaveletFrame frame;
    frame.basis = basis;
    frame.family = family;
    const auto n = static_cast<Eigen::Index>(basis.size());
    const auto S = static_cast<Eigen::Index>(n_scales);

    // peak of g(s lambda) sits at lambda = 1/s
    for (std::size_t i = 0; i < n_scales; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n_scales - 1);
        const double peak = lmax * std::pow(kappa, -frac);
        frame.scales.push_back(1.0 / peak);
    }
    frame.band_kernel_values.resize(S, n);
    frame.lowpass_values.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double lambda = basis.eigenvalues(j);
        for (Eigen::Index i = 0; i < S; ++i) {
            frame.band_kernel_values(i, j) = kernels::mexican_hat_band(frame.scales[static_cast<std::size_t>(i)] * lambda);
        }
        frame.lowpass_values(j) = kernels::mexican_hat_lowpass(lambda, lmax, kappa);
    }
    return frame;
}

WaveletCoefficients forward_transform(const WaveletFrame& frame, const Eigen::VectorXd& snapshot) {
    const auto& u = frame.basis.eigenvectors;
    if (snapshot.size() != u.rows()) {
        throw Error(Errc::DimensionMismatch, "snapshot length " + std::to_string(snapshot.size()) +
                                                 " vs graph size " + std::to_string(u.rows()));
    }
    const Eigen::VectorXd spectral = u.transpose() * snapshot;
    WaveletCoefficients out;
    out.band.resize(frame.band_kernel_values.rows(), u.rows());
    for (Eigen::Index i = 0; i < frame.band_kernel_values.rows(); ++i) {
        out.band.row(i) = (u * frame.band_kernel_values.row(i).transpose().cwiseProduct(spectral)).transpose();
    }
    out.lowpass = u * frame.lowpass_values.cwiseProduct(spectral);
    return out;
}

namespace {

void check_cutoff(const WaveletFrame& frame, std::size_t cutoff) {
    if (cutoff < 1 || cutoff > frame.n_scales() + 1) {
        throw Error(Errc::CutoffOutOfRange,
                    "cutoff " + std::to_string(cutoff) + " outside [1, " + std::to_string(frame.n_scales() + 1) + "]");
    }
}

}  // namespace

SpectralDecomposition split_low_high(const WaveletFrame& frame, const Eigen::VectorXd& snapshot, std::size_t cutoff) {
    check_cutoff(frame, cutoff);
    const auto coeffs = forward_transform(frame, snapshot);
    SpectralDecomposition out;
    out.cutoff = cutoff;
    out.low = coeffs.lowpass;
    for (auto i = static_cast<Eigen::Index>(cutoff - 1); i < coeffs.band.rows(); ++i) {
        out.low += coeffs.band.row(i).transpose();
    }
    out.high = snapshot - out.low;
    return out;
}

Eigen::VectorXd low_side_response(const WaveletFrame& frame, std::size_t cutoff) {
    check_cutoff(frame, cutoff);
    Eigen::VectorXd r = frame.lowpass_values;
    for (auto i = static_cast<Eigen::Index>(cutoff - 1); i < frame.band_kernel_values.rows(); ++i) {
        r += frame.band_kernel_values.row(i).transpose();
    }
    return r;
}

SeriesDecomposition decompose_series(const WaveletFrame& frame, const Eigen::MatrixXd& series, std::size_t cutoff) {
    const auto& u = frame.basis.eigenvectors;
    if (series.cols() != u.rows()) {
        throw Error(Errc::DimensionMismatch, "series has " + std::to_string(series.cols()) + " columns, graph has " +
                                                 std::to_string(u.rows()) + " nodes");
    }
    const Eigen::VectorXd response = low_side_response(frame, cutoff);
    const Eigen::MatrixXd filter = u * response.asDiagonal() * u.transpose();
    SeriesDecomposition out;
    out.cutoff = cutoff;
    out.low = series * filter;  // filter is symmetric
    out.high = series - out.low;
    return out;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) {
        throw Error(Errc::EmptySample, "KS statistic needs two nonempty samples");
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t ix = 0;
    std::size_t iy = 0;
    double sup = 0.0;
    while (ix < x.size() || iy < y.size()) {
        double v;
        if (iy >= y.size() || (ix < x.size() && x[ix] <= y[iy])) {
            v = x[ix];
        } else {
            v = y[iy];
        }
        while (ix < x.size() && x[ix] == v) ++ix;
        while (iy < y.size() && y[iy] == v) ++iy;
        sup = std::max(sup, std::abs(static_cast<double>(ix) / nx - static_cast<double>(iy) / ny));
    }
    return sup;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& series) {
    const Eigen::Index t = series.rows();
    const Eigen::Index n = series.cols();
    Eigen::MatrixXd centered = series.rowwise() - series.colwise().mean();
    Eigen::VectorXd norms(n);
    for (Eigen::Index j = 0; j < n; ++j) norms(j) = centered.col(j).norm();
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
    if (t == 0) return corr;
    const Eigen::MatrixXd gram = centered.transpose() * centered;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double rho = 0.0;
            if (norms(i) > 0.0 && norms(j) > 0.0) {
                rho = std::clamp(gram(i, j) / (norms(i) * norms(j)), -1.0, 1.0);
            }
            corr(i, j) = rho;
            corr(j, i) = rho;
        }
    }
    return corr;
}

double mean_abs_offdiag_correlation(const Eigen::MatrixXd& series) {
    const Eigen::Index n = series.cols();
    if (n < 2) return 0.0;
    const Eigen::MatrixXd corr = correlation_matrix(series);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) sum += std::abs(corr(i, j));
        }
    }
    return sum / static_cast<double>(n * (n - 1));
}

Eigen::VectorXd correlation_intensity(const Eigen::MatrixXd& series) {
    if (series.rows() < 3) {
        throw Error(Errc::TooFewSamples, "correlation intensity needs at least 3 rows");
    }
    if (series.cols() < 2) {
        throw Error(Errc::TooFewNodes, "correlation intensity needs at least 2 columns");
    }
    const Eigen::MatrixXd corr = correlation_matrix(series);
    const auto n = series.cols();
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        c(i) = (corr.row(i).sum() - corr(i, i)) / static_cast<double>(n - 1);
    }
    return c;
}

}  // namespace sgcp
