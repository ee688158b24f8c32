#pragma once

#include "sgcp/conformal.hpp"
#include "sgcp/data.hpp"
#include "sgcp/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sgcp {

// Low-frequency conditioned quantile model: an embedding/MLP encoder of the
// low band history produces C_t, which is projected to quantile channels and
// to a sigmoid gate modulating a linear read-out of high band statistics:
//
//   C   = MLP(E_x(low lags) || E_s(node) || E_tod(slot) || E_dow(day))
//   Q   = proj_L(C) + sigmoid(proj_gate(C)) .* proj_H(std || rms)
//
// Q has K * 2 channels per node, laid out as column h * 2 + c with c = 0 the
// lower (alpha/2) and c = 1 the upper (1 - alpha/2) quantile.

struct ScaleDims {
    std::size_t lookback = 12;  // W
    std::size_t horizon = 1;    // K
    std::size_t n_quantiles = 2;
    std::size_t d_x = 32;
    std::size_t d_s = 16;
    std::size_t d_p = 16;
    std::size_t d_c = 64;
    std::size_t n_nodes = 0;
    std::size_t slots_per_day = 24;

    std::size_t encoder_input() const noexcept { return d_x + d_s + 2 * d_p; }
    std::size_t channels() const noexcept { return horizon * n_quantiles; }
    bool operator==(const ScaleDims&) const = default;
};

struct ParamGroup {
    std::string name;
    std::span<double> values;
};

struct ConstParamGroup {
    std::string name;
    std::span<const double> values;
};

/// All learnable tensors. Matrices are Eigen column-major; the flat order of
/// `groups()` is the checkpoint order:
///   ex_weight (d_x x W), ex_bias (d_x), node_embedding (n x d_s),
///   tod_embedding (slots x d_p), dow_embedding (7 x d_p),
///   mlp1_weight (d_c x in), mlp1_bias, mlp2_weight (d_c x d_c), mlp2_bias,
///   proj_low_weight (KQ x d_c), proj_low_bias, gate_weight (KQ x d_c),
///   gate_bias, proj_high_weight (KQ x 2), proj_high_bias.
struct ScaleParams {
    ScaleDims dims;
    Eigen::MatrixXd ex_weight;
    Eigen::VectorXd ex_bias;
    Eigen::MatrixXd node_embedding;
    Eigen::MatrixXd tod_embedding;
    Eigen::MatrixXd dow_embedding;
    Eigen::MatrixXd mlp1_weight;
    Eigen::VectorXd mlp1_bias;
    Eigen::MatrixXd mlp2_weight;
    Eigen::VectorXd mlp2_bias;
    Eigen::MatrixXd proj_low_weight;
    Eigen::VectorXd proj_low_bias;
    Eigen::MatrixXd gate_weight;
    Eigen::VectorXd gate_bias;
    Eigen::MatrixXd proj_high_weight;
    Eigen::VectorXd proj_high_bias;

    static ScaleParams zeros(const ScaleDims& dims);
    /// Affine maps uniform in +-sqrt(1/fan_in), embeddings 0.01 * N(0, 1).
    static ScaleParams initialize(const ScaleDims& dims, std::uint64_t seed);

    std::vector<ParamGroup> groups();
    std::vector<ConstParamGroup> groups() const;
    std::size_t parameter_count() const;
    bool all_finite() const;
};

struct HighFreqStats {
    Eigen::VectorXd std;  // population standard deviation per node
    Eigen::VectorXd rms;
};

/// Per-node statistics of a W x n window of the high band. Throws EmptyWindow.
HighFreqStats hf_statistics(const Eigen::MatrixXd& window);

/// One mini-batch of (origin, node) samples, already in model units.
struct ScaleBatch {
    Eigen::MatrixXd low_lags;  // B x W, oldest lag first
    std::vector<std::size_t> node;
    std::vector<std::size_t> tod;
    std::vector<std::size_t> dow;
    Eigen::MatrixXd stats;    // B x 2, (std, rms)
    Eigen::MatrixXd targets;  // B x K, may be empty for inference

    std::size_t size() const noexcept { return node.size(); }
};

/// C_t for every row of the batch (B x d_c).
Eigen::MatrixXd encode_batch(const ScaleParams& p, const ScaleBatch& batch);

/// Quantile channels for every row of the batch (B x KQ).
Eigen::MatrixXd forward_batch(const ScaleParams& p, const ScaleBatch& batch);

/// Node-level encoder: column r of `low_window` holds the lags of node
/// `node_ids[r]`. Returns n x d_c. Throws ShapeMismatch or SlotOutOfRange.
Eigen::MatrixXd lf_encode(const ScaleParams& p, const Eigen::MatrixXd& low_window,
                          std::span<const std::size_t> node_ids, std::size_t tod_slot, std::size_t dow);

/// Z_L + sigmoid(proj_gate(C)) .* Z_H for an n x d_c embedding.
Eigen::MatrixXd gated_fusion(const ScaleParams& p, const Eigen::MatrixXd& embedding, const HighFreqStats& stats);

/// mean over cells of pinball(y, q_lo, alpha/2) + pinball(y, q_hi, 1 - alpha/2)
/// plus crossing_weight * mean(max(0, q_lo - q_hi)). `quantiles` is B x KQ,
/// `targets` B x K.
double scale_loss(const Eigen::MatrixXd& quantiles, const Eigen::MatrixXd& targets, double alpha,
                  double crossing_weight);

/// Loss of the batch and, when `grad` is non-null, its gradient with respect
/// to every parameter (written into `grad`, which must have matching dims).
double scale_loss_and_gradient(const ScaleParams& p, const ScaleBatch& batch, double alpha, double crossing_weight,
                               ScaleParams* grad);

struct TrainConfig {
    double learning_rate = 8e-4;
    double weight_decay = 1e-4;
    std::vector<std::size_t> milestones{5, 8};
    double gamma = 0.5;
    std::size_t epochs = 30;
    std::size_t batch_size = 128;
    double crossing_penalty_weight = 15.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Decomposed residual streams feeding the model.
///
/// `low` and `high` are indexed by target time starting at `first_target`;
/// `residuals` is indexed by origin starting at `first_origin`. For origin o
/// the features use the snapshots with targets o - W + 1 .. o and the time
/// features of o + 1; the targets are residuals(o, :, :).
struct ScaleDataset {
    Eigen::MatrixXd low;
    Eigen::MatrixXd high;
    std::size_t first_target = 0;
    Tensor3 residuals;
    std::size_t first_origin = 0;
    std::vector<std::size_t> tod;  // by absolute time index
    std::vector<std::size_t> dow;
    std::size_t slots_per_day = 24;
    std::size_t lookback = 12;

    std::size_t n_nodes() const noexcept { return static_cast<std::size_t>(low.cols()); }
    std::size_t horizon() const noexcept { return residuals.horizon(); }

    /// Throws InsufficientHistory when an origin lacks a full window.
    void check_origins(const IndexRange& origins) const;

    ScaleBatch make_batch(std::span<const std::pair<std::size_t, std::size_t>> samples, double scale,
                          bool with_targets) const;
};

struct ScaleModel {
    ScaleParams params;
    double alpha = 0.1;
    double residual_scale = 1.0;  // inputs and targets are divided by this
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean batch loss per epoch, model units
};

/// Adam with coupled L2 weight decay and a step schedule (learning rate times
/// gamma at each milestone epoch). Deterministic for a fixed seed. Throws
/// EmptyData or NonFiniteLoss.
ScaleModel train_scale(const ScaleDataset& data, const IndexRange& origins, double alpha, const TrainConfig& config,
                       const ScaleDims& dims, TrainReport* report = nullptr);

struct QuantileForecast {
    Tensor3 lower;  // residual units, lower <= upper
    Tensor3 upper;
};

/// Crossed outputs are swapped so lower <= upper.
QuantileForecast predict_quantiles(const ScaleModel& model, const ScaleDataset& data, const IndexRange& origins);

/// Rank-rule correction over the conformity scores max(q_lo - r, r - q_hi),
/// pooled over every cell of the held-out origins, at level 1 - alpha.
double conformal_correction(const ScaleModel& model, const ScaleDataset& data, const IndexRange& holdout);

/// [X + q_lo - c, X + q_hi + c]; a negative correction that would invert an
/// interval collapses it to its midpoint.
IntervalSeries scale_intervals(const QuantileForecast& quantiles, const Tensor3& point_forecasts, double alpha,
                               double correction = 0.0);

// Checkpoints are JSON: {"format": "sgcp-scale", "version": 1, "dims": {...},
// "alpha", "residual_scale", "seed", "params": {group: [flat values]}}.
void save_checkpoint(const ScaleModel& model, const std::filesystem::path& path);
ScaleModel load_checkpoint(const std::filesystem::path& path);

}  // namespace sgcp
