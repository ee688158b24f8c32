#include "sgcp/error.hpp"
#include "sgcp/sgwt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

namespace sgcp {

namespace {

std::vector<std::size_t> subsample_rows(std::size_t total, std::size_t t_max, std::mt19937_64& rng) {
    std::vector<std::size_t> rows(total);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (total <= t_max) return rows;
    for (std::size_t i = 0; i < t_max; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(rows[i], rows[pick(rng)]);
    }
    rows.resize(t_max);
    std::sort(rows.begin(), rows.end());
    return rows;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n, std::size_t max_pairs,
                                                              std::mt19937_64& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    all.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) all.emplace_back(i, j);
    }
    const std::size_t count = std::min(max_pairs, all.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(count);
    return all;
}

std::size_t argmax_first(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace

CutoffDiagnostics auto_select_cutoff(const Graph& g, const Eigen::MatrixXd& samples, const CutoffOptions& opts) {
    if (samples.rows() < 2 || opts.t_max < 2) {
        throw Error(Errc::TooFewSamples, "cutoff selection needs at least 2 rows and t_max >= 2");
    }
    if (samples.cols() < 2 || g.n_nodes() < 2) {
        throw Error(Errc::TooFewNodes, "cutoff selection needs at least 2 nodes");
    }
    if (static_cast<std::size_t>(samples.cols()) != g.n_nodes()) {
        throw Error(Errc::DimensionMismatch, "samples have " + std::to_string(samples.cols()) +
                                                 " columns, graph has " + std::to_string(g.n_nodes()) + " nodes");
    }
    const std::size_t S = opts.n_scales;
    std::mt19937_64 rng(opts.rng_seed);

    CutoffDiagnostics d;
    d.sampled_rows = subsample_rows(static_cast<std::size_t>(samples.rows()), opts.t_max, rng);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(d.sampled_rows.size()), samples.cols());
    for (std::size_t r = 0; r < d.sampled_rows.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = samples.row(static_cast<Eigen::Index>(d.sampled_rows[r]));
    }

    const WaveletFrame frame = make_wavelet_frame(eigendecompose(normalized_laplacian(g)), S, opts.family);
    const auto& u = frame.basis.eigenvectors;
    const Eigen::MatrixXd spectral = x * u;
    const auto pairs = sample_pairs(g.n_nodes(), opts.max_pairs, rng);

    for (std::size_t i = 0; i < S; ++i) {
        const Eigen::RowVectorXd gains = frame.band_kernel_values.row(static_cast<Eigen::Index>(i));
        const Eigen::MatrixXd band = (spectral.array().rowwise() * gains.array()).matrix() * u.transpose();

        d.per_scale_correlation.push_back(mean_abs_offdiag_correlation(band));

        double ks_sum = 0.0;
        for (const auto& [a, b] : pairs) {
            const Eigen::VectorXd ca = band.col(static_cast<Eigen::Index>(a));
            const Eigen::VectorXd cb = band.col(static_cast<Eigen::Index>(b));
            ks_sum += ks_statistic(std::span<const double>(ca.data(), static_cast<std::size_t>(ca.size())),
                                   std::span<const double>(cb.data(), static_cast<std::size_t>(cb.size())));
        }
        d.per_scale_ks.push_back(pairs.empty() ? 0.0 : ks_sum / static_cast<double>(pairs.size()));
        d.per_scale_energy.push_back(band.array().square().mean());
    }

    const auto& c = d.per_scale_correlation;
    for (std::size_t i = 0; i < S; ++i) {
        const std::size_t lo = i == 0 ? 0 : i - 1;
        const std::size_t hi = std::min(i + 1, S - 1);
        d.smoothed_correlation.push_back((c[lo] + c[i] + c[hi]) / 3.0);
    }
    const auto& sm = d.smoothed_correlation;

    long k = 0;
    if (opts.tau) {
        k = static_cast<long>(S);
        for (std::size_t i = 0; i < S; ++i) {
            if (sm[i] > *opts.tau) {
                k = static_cast<long>(i);
                break;
            }
        }
    } else {
        const double total = std::accumulate(d.per_scale_energy.begin(), d.per_scale_energy.end(), 0.0);
        std::size_t energy_idx = S - 1;
        double cumulative = 0.0;
        for (std::size_t i = 0; i < S; ++i) {
            cumulative += d.per_scale_energy[i];
            const double frac = total > 0.0 ? cumulative / total : 1.0;
            if (frac >= opts.energy_fraction) {
                energy_idx = i;
                break;
            }
        }
        d.candidates.push_back(energy_idx);

        std::vector<double> diff1;
        for (std::size_t i = 0; i + 1 < S; ++i) diff1.push_back(sm[i + 1] - sm[i]);
        d.candidates.push_back(argmax_first(diff1));

        // with S = 2 there is no second difference; two candidates remain
        if (S >= 3) {
            std::vector<double> neg_diff2;
            for (std::size_t i = 0; i + 2 < S; ++i) neg_diff2.push_back(-(sm[i + 2] - 2.0 * sm[i + 1] + sm[i]));
            d.candidates.push_back(argmax_first(neg_diff2));
        }
        std::vector<std::size_t> sorted = d.candidates;
        std::sort(sorted.begin(), sorted.end());
        k = static_cast<long>(sorted[(sorted.size() - 1) / 2]);
    }
    d.chosen_k = static_cast<std::size_t>(std::clamp(k, 0L, static_cast<long>(S)));
    return d;
}

}  // namespace sgcp
