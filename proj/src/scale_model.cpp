#include "sgcp/scale_model.hpp"

#include "sgcp/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace sgcp {

namespace {

constexpr std::size_t kDaysPerWeek = 7;

std::span<double> flat(Eigen::MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> flat(Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> flat(const Eigen::MatrixXd& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> flat(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

template <class P, class F>
void for_each_group(P& p, F&& f) {
    f("ex_weight", p.ex_weight);
    f("ex_bias", p.ex_bias);
    f("node_embedding", p.node_embedding);
    f("tod_embedding", p.tod_embedding);
    f("dow_embedding", p.dow_embedding);
    f("mlp1_weight", p.mlp1_weight);
    f("mlp1_bias", p.mlp1_bias);
    f("mlp2_weight", p.mlp2_weight);
    f("mlp2_bias", p.mlp2_bias);
    f("proj_low_weight", p.proj_low_weight);
    f("proj_low_bias", p.proj_low_bias);
    f("gate_weight", p.gate_weight);
    f("gate_bias", p.gate_bias);
    f("proj_high_weight", p.proj_high_weight);
    f("proj_high_bias", p.proj_high_bias);
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_dims(const ScaleDims& d) {
    if (d.lookback < 1 || d.horizon < 1 || d.n_quantiles != 2 || d.d_x < 1 || d.d_s < 1 || d.d_p < 1 || d.d_c < 1 ||
        d.n_nodes < 1 || d.slots_per_day < 1) {
        throw Error(Errc::InvalidConfig, "invalid model dimensions");
    }
}

// Activations kept for the backward pass.
struct Forward {
    Eigen::MatrixXd z;   // B x in
    Eigen::MatrixXd a1;  // B x d_c
    Eigen::MatrixXd h1;
    Eigen::MatrixXd c;
    Eigen::MatrixXd z_low;   // B x KQ
    Eigen::MatrixXd gate;    // sigmoid output
    Eigen::MatrixXd z_high;
    Eigen::MatrixXd q;
};

void check_batch(const ScaleParams& p, const ScaleBatch& b) {
    const auto& d = p.dims;
    const auto B = b.size();
    if (static_cast<std::size_t>(b.low_lags.rows()) != B || static_cast<std::size_t>(b.low_lags.cols()) != d.lookback ||
        b.tod.size() != B || b.dow.size() != B || static_cast<std::size_t>(b.stats.rows()) != B || b.stats.cols() != 2) {
        throw Error(Errc::ShapeMismatch, "batch does not match model dimensions");
    }
    for (std::size_t r = 0; r < B; ++r) {
        if (b.node[r] >= d.n_nodes) throw Error(Errc::ShapeMismatch, "node id out of range");
        if (b.tod[r] >= d.slots_per_day) throw Error(Errc::SlotOutOfRange, "time-of-day slot out of range");
        if (b.dow[r] >= kDaysPerWeek) throw Error(Errc::SlotOutOfRange, "day-of-week out of range");
    }
}

Eigen::MatrixXd encoder_input(const ScaleParams& p, const ScaleBatch& b) {
    const auto& d = p.dims;
    const auto B = static_cast<Eigen::Index>(b.size());
    const auto dx = static_cast<Eigen::Index>(d.d_x);
    const auto ds = static_cast<Eigen::Index>(d.d_s);
    const auto dp = static_cast<Eigen::Index>(d.d_p);
    Eigen::MatrixXd z(B, static_cast<Eigen::Index>(d.encoder_input()));
    z.leftCols(dx) = (b.low_lags * p.ex_weight.transpose()).rowwise() + p.ex_bias.transpose();
    for (Eigen::Index r = 0; r < B; ++r) {
        const auto u = static_cast<std::size_t>(r);
        z.block(r, dx, 1, ds) = p.node_embedding.row(static_cast<Eigen::Index>(b.node[u]));
        z.block(r, dx + ds, 1, dp) = p.tod_embedding.row(static_cast<Eigen::Index>(b.tod[u]));
        z.block(r, dx + ds + dp, 1, dp) = p.dow_embedding.row(static_cast<Eigen::Index>(b.dow[u]));
    }
    return z;
}

Forward run_forward(const ScaleParams& p, const ScaleBatch& b) {
    check_batch(p, b);
    Forward f;
    f.z = encoder_input(p, b);
    f.a1 = (f.z * p.mlp1_weight.transpose()).rowwise() + p.mlp1_bias.transpose();
    f.h1 = f.a1.cwiseMax(0.0);
    f.c = (f.h1 * p.mlp2_weight.transpose()).rowwise() + p.mlp2_bias.transpose();
    f.z_low = (f.c * p.proj_low_weight.transpose()).rowwise() + p.proj_low_bias.transpose();
    f.gate = ((f.c * p.gate_weight.transpose()).rowwise() + p.gate_bias.transpose()).unaryExpr(&sigmoid);
    f.z_high = (b.stats * p.proj_high_weight.transpose()).rowwise() + p.proj_high_bias.transpose();
    f.q = f.z_low + f.gate.cwiseProduct(f.z_high);
    return f;
}

void check_loss_shapes(const Eigen::MatrixXd& q, const Eigen::MatrixXd& y) {
    if (q.rows() != y.rows() || q.cols() != 2 * y.cols()) {
        throw Error(Errc::ShapeMismatch, "quantile and target shapes disagree");
    }
}

// Loss and dL/dQ.
double loss_with_grad(const Eigen::MatrixXd& q, const Eigen::MatrixXd& y, double alpha, double weight,
                      Eigen::MatrixXd* dq) {
    check_loss_shapes(q, y);
    const double lo_level = alpha / 2.0;
    const double hi_level = 1.0 - alpha / 2.0;
    const auto cells = static_cast<double>(y.size());
    if (y.size() == 0) throw Error(Errc::EmptyData, "empty loss batch");
    if (dq) dq->setZero(q.rows(), q.cols());
    double pin = 0.0;
    double cross = 0.0;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        for (Eigen::Index h = 0; h < y.cols(); ++h) {
            const double target = y(r, h);
            const double lo = q(r, 2 * h);
            const double hi = q(r, 2 * h + 1);
            pin += pinball_loss(target, lo, lo_level) + pinball_loss(target, hi, hi_level);
            const double gap = lo - hi;
            if (gap > 0.0) cross += gap;
            if (dq) {
                (*dq)(r, 2 * h) = (target - lo > 0.0 ? -lo_level : 1.0 - lo_level) / cells;
                (*dq)(r, 2 * h + 1) = (target - hi > 0.0 ? -hi_level : 1.0 - hi_level) / cells;
                if (gap > 0.0) {
                    (*dq)(r, 2 * h) += weight / cells;
                    (*dq)(r, 2 * h + 1) -= weight / cells;
                }
            }
        }
    }
    return pin / cells + weight * cross / cells;
}

std::size_t scheduled_steps(const TrainConfig& c, std::size_t epoch) {
    return static_cast<std::size_t>(std::count_if(c.milestones.begin(), c.milestones.end(),
                                                  [epoch](std::size_t m) { return m <= epoch; }));
}

}  // namespace

ScaleParams ScaleParams::zeros(const ScaleDims& dims) {
    check_dims(dims);
    const auto W = static_cast<Eigen::Index>(dims.lookback);
    const auto KQ = static_cast<Eigen::Index>(dims.channels());
    const auto dx = static_cast<Eigen::Index>(dims.d_x);
    const auto ds = static_cast<Eigen::Index>(dims.d_s);
    const auto dp = static_cast<Eigen::Index>(dims.d_p);
    const auto dc = static_cast<Eigen::Index>(dims.d_c);
    const auto in = static_cast<Eigen::Index>(dims.encoder_input());
    ScaleParams p;
    p.dims = dims;
    p.ex_weight = Eigen::MatrixXd::Zero(dx, W);
    p.ex_bias = Eigen::VectorXd::Zero(dx);
    p.node_embedding = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims.n_nodes), ds);
    p.tod_embedding = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dims.slots_per_day), dp);
    p.dow_embedding = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kDaysPerWeek), dp);
    p.mlp1_weight = Eigen::MatrixXd::Zero(dc, in);
    p.mlp1_bias = Eigen::VectorXd::Zero(dc);
    p.mlp2_weight = Eigen::MatrixXd::Zero(dc, dc);
    p.mlp2_bias = Eigen::VectorXd::Zero(dc);
    p.proj_low_weight = Eigen::MatrixXd::Zero(KQ, dc);
    p.proj_low_bias = Eigen::VectorXd::Zero(KQ);
    p.gate_weight = Eigen::MatrixXd::Zero(KQ, dc);
    p.gate_bias = Eigen::VectorXd::Zero(KQ);
    p.proj_high_weight = Eigen::MatrixXd::Zero(KQ, 2);
    p.proj_high_bias = Eigen::VectorXd::Zero(KQ);
    return p;
}

ScaleParams ScaleParams::initialize(const ScaleDims& dims, std::uint64_t seed) {
    ScaleParams p = zeros(dims);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto affine = [&rng](Eigen::MatrixXd& w, Eigen::VectorXd& b) {
        const double bound = std::sqrt(1.0 / static_cast<double>(w.cols()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : flat(w)) v = u(rng);
        for (auto& v : flat(b)) v = u(rng);
    };
    auto embed = [&](Eigen::MatrixXd& e) {
        for (auto& v : flat(e)) v = 0.01 * normal(rng);
    };
    affine(p.ex_weight, p.ex_bias);
    embed(p.node_embedding);
    embed(p.tod_embedding);
    embed(p.dow_embedding);
    affine(p.mlp1_weight, p.mlp1_bias);
    affine(p.mlp2_weight, p.mlp2_bias);
    affine(p.proj_low_weight, p.proj_low_bias);
    affine(p.gate_weight, p.gate_bias);
    affine(p.proj_high_weight, p.proj_high_bias);
    return p;
}

std::vector<ParamGroup> ScaleParams::groups() {
    std::vector<ParamGroup> out;
    for_each_group(*this, [&out](const char* name, auto& m) { out.push_back({name, flat(m)}); });
    return out;
}

std::vector<ConstParamGroup> ScaleParams::groups() const {
    std::vector<ConstParamGroup> out;
    for_each_group(*this, [&out](const char* name, const auto& m) { out.push_back({name, flat(m)}); });
    return out;
}

std::size_t ScaleParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : groups()) n += g.values.size();
    return n;
}

bool ScaleParams::all_finite() const {
    for (const auto& g : groups()) {
        for (double v : g.values) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

HighFreqStats hf_statistics(const Eigen::MatrixXd& window) {
    if (window.rows() == 0) throw Error(Errc::EmptyWindow, "high-frequency window has no rows");
    const auto W = static_cast<double>(window.rows());
    HighFreqStats s;
    s.std.resize(window.cols());
    s.rms.resize(window.cols());
    for (Eigen::Index i = 0; i < window.cols(); ++i) {
        const double mean = window.col(i).sum() / W;
        s.std(i) = std::sqrt((window.col(i).array() - mean).square().sum() / W);
        s.rms(i) = std::sqrt(window.col(i).squaredNorm() / W);
    }
    return s;
}

Eigen::MatrixXd encode_batch(const ScaleParams& p, const ScaleBatch& batch) {
    check_batch(p, batch);
    const Eigen::MatrixXd z = encoder_input(p, batch);
    const Eigen::MatrixXd h1 = ((z * p.mlp1_weight.transpose()).rowwise() + p.mlp1_bias.transpose()).cwiseMax(0.0);
    return (h1 * p.mlp2_weight.transpose()).rowwise() + p.mlp2_bias.transpose();
}

Eigen::MatrixXd forward_batch(const ScaleParams& p, const ScaleBatch& batch) { return run_forward(p, batch).q; }

Eigen::MatrixXd lf_encode(const ScaleParams& p, const Eigen::MatrixXd& low_window,
                          std::span<const std::size_t> node_ids, std::size_t tod_slot, std::size_t dow) {
    if (static_cast<std::size_t>(low_window.rows()) != p.dims.lookback ||
        static_cast<std::size_t>(low_window.cols()) != node_ids.size()) {
        throw Error(Errc::ShapeMismatch, "low window must be W x n with one node id per column");
    }
    ScaleBatch b;
    const auto n = node_ids.size();
    b.low_lags = low_window.transpose();
    b.node.assign(node_ids.begin(), node_ids.end());
    b.tod.assign(n, tod_slot);
    b.dow.assign(n, dow);
    b.stats = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2);
    return encode_batch(p, b);
}

Eigen::MatrixXd gated_fusion(const ScaleParams& p, const Eigen::MatrixXd& embedding, const HighFreqStats& stats) {
    const auto n = embedding.rows();
    if (static_cast<std::size_t>(embedding.cols()) != p.dims.d_c || stats.std.size() != n || stats.rms.size() != n) {
        throw Error(Errc::ShapeMismatch, "embedding and statistics shapes disagree");
    }
    Eigen::MatrixXd m(n, 2);
    m.col(0) = stats.std;
    m.col(1) = stats.rms;
    const Eigen::MatrixXd z_low = (embedding * p.proj_low_weight.transpose()).rowwise() + p.proj_low_bias.transpose();
    const Eigen::MatrixXd gate =
        ((embedding * p.gate_weight.transpose()).rowwise() + p.gate_bias.transpose()).unaryExpr(&sigmoid);
    const Eigen::MatrixXd z_high = (m * p.proj_high_weight.transpose()).rowwise() + p.proj_high_bias.transpose();
    return z_low + gate.cwiseProduct(z_high);
}

double scale_loss(const Eigen::MatrixXd& quantiles, const Eigen::MatrixXd& targets, double alpha,
                  double crossing_weight) {
    return loss_with_grad(quantiles, targets, alpha, crossing_weight, nullptr);
}

double scale_loss_and_gradient(const ScaleParams& p, const ScaleBatch& batch, double alpha, double crossing_weight,
                               ScaleParams* grad) {
    const Forward f = run_forward(p, batch);
    if (!grad) return loss_with_grad(f.q, batch.targets, alpha, crossing_weight, nullptr);
    if (!(grad->dims == p.dims)) *grad = ScaleParams::zeros(p.dims);

    Eigen::MatrixXd dq;
    const double loss = loss_with_grad(f.q, batch.targets, alpha, crossing_weight, &dq);

    const Eigen::MatrixXd d_gate_logit =
        dq.cwiseProduct(f.z_high).cwiseProduct(f.gate.cwiseProduct((1.0 - f.gate.array()).matrix()));
    const Eigen::MatrixXd d_high = dq.cwiseProduct(f.gate);

    grad->proj_low_weight.noalias() = dq.transpose() * f.c;
    grad->proj_low_bias = dq.colwise().sum().transpose();
    grad->gate_weight.noalias() = d_gate_logit.transpose() * f.c;
    grad->gate_bias = d_gate_logit.colwise().sum().transpose();
    grad->proj_high_weight.noalias() = d_high.transpose() * batch.stats;
    grad->proj_high_bias = d_high.colwise().sum().transpose();

    Eigen::MatrixXd dc = dq * p.proj_low_weight;
    dc.noalias() += d_gate_logit * p.gate_weight;

    grad->mlp2_weight.noalias() = dc.transpose() * f.h1;
    grad->mlp2_bias = dc.colwise().sum().transpose();
    Eigen::MatrixXd da1 = dc * p.mlp2_weight;
    da1 = da1.cwiseProduct((f.a1.array() > 0.0).cast<double>().matrix());

    grad->mlp1_weight.noalias() = da1.transpose() * f.z;
    grad->mlp1_bias = da1.colwise().sum().transpose();
    const Eigen::MatrixXd dz = da1 * p.mlp1_weight;

    const auto dx = static_cast<Eigen::Index>(p.dims.d_x);
    const auto ds = static_cast<Eigen::Index>(p.dims.d_s);
    const auto dp = static_cast<Eigen::Index>(p.dims.d_p);
    grad->ex_weight.noalias() = dz.leftCols(dx).transpose() * batch.low_lags;
    grad->ex_bias = dz.leftCols(dx).colwise().sum().transpose();
    grad->node_embedding.setZero();
    grad->tod_embedding.setZero();
    grad->dow_embedding.setZero();
    for (Eigen::Index r = 0; r < dz.rows(); ++r) {
        const auto u = static_cast<std::size_t>(r);
        grad->node_embedding.row(static_cast<Eigen::Index>(batch.node[u])) += dz.block(r, dx, 1, ds);
        grad->tod_embedding.row(static_cast<Eigen::Index>(batch.tod[u])) += dz.block(r, dx + ds, 1, dp);
        grad->dow_embedding.row(static_cast<Eigen::Index>(batch.dow[u])) += dz.block(r, dx + ds + dp, 1, dp);
    }
    return loss;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || epochs < 1 || batch_size < 1 ||
        !(crossing_penalty_weight >= 0.0) || !(gamma > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw Error(Errc::InvalidConfig, "invalid training configuration");
    }
}

void ScaleDataset::check_origins(const IndexRange& origins) const {
    if (origins.size() == 0) return;
    const std::size_t first = origins.begin;
    const std::size_t last = origins.end - 1;
    if (first + 1 < lookback + first_target || last >= first_target + static_cast<std::size_t>(low.rows()) ||
        high.rows() != low.rows() || high.cols() != low.cols()) {
        throw Error(Errc::InsufficientHistory, "origins lack a full decomposed look-back window");
    }
    if (first < first_origin || last >= first_origin + residuals.rows() || residuals.nodes() != n_nodes()) {
        throw Error(Errc::InsufficientHistory, "origins fall outside the residual stream");
    }
    if (last + 1 >= tod.size() || last + 1 >= dow.size()) {
        throw Error(Errc::InsufficientHistory, "time features missing for origin");
    }
}

ScaleBatch ScaleDataset::make_batch(std::span<const std::pair<std::size_t, std::size_t>> samples, double scale,
                                    bool with_targets) const {
    const auto B = static_cast<Eigen::Index>(samples.size());
    const auto W = static_cast<Eigen::Index>(lookback);
    const double inv = 1.0 / scale;
    ScaleBatch b;
    b.low_lags.resize(B, W);
    b.stats.resize(B, 2);
    b.node.resize(samples.size());
    b.tod.resize(samples.size());
    b.dow.resize(samples.size());
    if (with_targets) b.targets.resize(B, static_cast<Eigen::Index>(horizon()));
    for (Eigen::Index r = 0; r < B; ++r) {
        const auto [o, i] = samples[static_cast<std::size_t>(r)];
        const auto start = static_cast<Eigen::Index>(o + 1 - lookback - first_target);
        const auto col = static_cast<Eigen::Index>(i);
        b.low_lags.row(r) = low.block(start, col, W, 1).transpose() * inv;
        const auto h = high.block(start, col, W, 1);
        const double mean = h.sum() / static_cast<double>(W);
        b.stats(r, 0) = std::sqrt((h.array() - mean).square().sum() / static_cast<double>(W)) * inv;
        b.stats(r, 1) = std::sqrt(h.squaredNorm() / static_cast<double>(W)) * inv;
        b.node[static_cast<std::size_t>(r)] = i;
        b.tod[static_cast<std::size_t>(r)] = tod[o + 1];
        b.dow[static_cast<std::size_t>(r)] = dow[o + 1];
        if (with_targets) {
            for (std::size_t k = 0; k < horizon(); ++k) {
                b.targets(r, static_cast<Eigen::Index>(k)) = residuals(o - first_origin, i, k) * inv;
            }
        }
    }
    return b;
}

ScaleModel train_scale(const ScaleDataset& data, const IndexRange& origins, double alpha, const TrainConfig& config,
                       const ScaleDims& dims, TrainReport* report) {
    config.validate();
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::InvalidConfig, "alpha must lie in (0, 1)");
    if (origins.size() == 0 || data.n_nodes() == 0) throw Error(Errc::EmptyData, "no training origins");
    if (dims.n_nodes != data.n_nodes() || dims.horizon != data.horizon() || dims.lookback != data.lookback ||
        dims.slots_per_day != data.slots_per_day) {
        throw Error(Errc::ShapeMismatch, "model dimensions do not match the dataset");
    }
    data.check_origins(origins);

    std::vector<std::pair<std::size_t, std::size_t>> samples;
    samples.reserve(origins.size() * data.n_nodes());
    double sum_sq = 0.0;
    for (std::size_t o = origins.begin; o < origins.end; ++o) {
        for (std::size_t i = 0; i < data.n_nodes(); ++i) {
            samples.emplace_back(o, i);
            for (std::size_t h = 0; h < data.horizon(); ++h) {
                const double r = data.residuals(o - data.first_origin, i, h);
                sum_sq += r * r;
            }
        }
    }
    double scale = std::sqrt(sum_sq / static_cast<double>(samples.size() * data.horizon()));
    if (!std::isfinite(scale)) throw Error(Errc::NonFiniteLoss, "non-finite residuals in training data");
    if (scale <= 0.0) scale = 1.0;

    ScaleModel model;
    model.alpha = alpha;
    model.seed = config.seed;
    model.residual_scale = scale;
    model.params = ScaleParams::initialize(dims, config.seed);

    ScaleParams grad = ScaleParams::zeros(dims);
    ScaleParams m1 = ScaleParams::zeros(dims);
    ScaleParams m2 = ScaleParams::zeros(dims);
    auto pg = model.params.groups();
    auto gg = grad.groups();
    auto g1 = m1.groups();
    auto g2 = m2.groups();

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t step = 0;
    if (report) report->epoch_loss.clear();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr =
            config.learning_rate * std::pow(config.gamma, static_cast<double>(scheduled_steps(config, epoch)));
        std::shuffle(samples.begin(), samples.end(), rng);
        double epoch_sum = 0.0;
        for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, samples.size() - start);
            const ScaleBatch batch =
                data.make_batch(std::span(samples).subspan(start, count), scale, /*with_targets=*/true);
            const double loss =
                scale_loss_and_gradient(model.params, batch, alpha, config.crossing_penalty_weight, &grad);
            if (!std::isfinite(loss)) {
                throw Error(Errc::NonFiniteLoss,
                            "loss became non-finite at epoch " + std::to_string(epoch + 1) + ", step " +
                                std::to_string(step + 1));
            }
            epoch_sum += loss * static_cast<double>(count);
            ++step;
            const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
            for (std::size_t g = 0; g < pg.size(); ++g) {
                auto theta = pg[g].values;
                auto gr = gg[g].values;
                auto m = g1[g].values;
                auto v = g2[g].values;
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    const double d = gr[j] + config.weight_decay * theta[j];
                    m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * d;
                    v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * d * d;
                    theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
                }
            }
        }
        const double mean_loss = epoch_sum / static_cast<double>(samples.size());
        if (report) report->epoch_loss.push_back(mean_loss);
    }
    if (!model.params.all_finite()) throw Error(Errc::NonFiniteLoss, "trained parameters are not finite");
    return model;
}

QuantileForecast predict_quantiles(const ScaleModel& model, const ScaleDataset& data, const IndexRange& origins) {
    const auto& d = model.params.dims;
    if (d.n_nodes != data.n_nodes() || d.horizon != data.horizon() || d.lookback != data.lookback) {
        throw Error(Errc::ShapeMismatch, "model dimensions do not match the dataset");
    }
    data.check_origins(origins);
    const std::size_t n = data.n_nodes();
    const std::size_t K = data.horizon();
    QuantileForecast out{Tensor3(origins.size(), n, K), Tensor3(origins.size(), n, K)};
    constexpr std::size_t kChunk = 4096;
    std::vector<std::pair<std::size_t, std::size_t>> samples;
    for (std::size_t o = origins.begin; o < origins.end; ++o) {
        for (std::size_t i = 0; i < n; ++i) samples.emplace_back(o, i);
    }
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        const std::size_t count = std::min(kChunk, samples.size() - start);
        const auto batch = data.make_batch(std::span(samples).subspan(start, count), model.residual_scale, false);
        const Eigen::MatrixXd q = forward_batch(model.params, batch);
        for (std::size_t r = 0; r < count; ++r) {
            const auto [o, i] = samples[start + r];
            for (std::size_t h = 0; h < K; ++h) {
                double lo = q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(2 * h)) * model.residual_scale;
                double hi =
                    q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(2 * h + 1)) * model.residual_scale;
                if (lo > hi) std::swap(lo, hi);
                out.lower(o - origins.begin, i, h) = lo;
                out.upper(o - origins.begin, i, h) = hi;
            }
        }
    }
    return out;
}

double conformal_correction(const ScaleModel& model, const ScaleDataset& data, const IndexRange& holdout) {
    if (holdout.size() == 0) throw Error(Errc::EmptyCalibration, "empty conformal hold-out");
    const auto q = predict_quantiles(model, data, holdout);
    std::vector<double> scores;
    scores.reserve(q.lower.size());
    for (std::size_t o = holdout.begin; o < holdout.end; ++o) {
        for (std::size_t i = 0; i < data.n_nodes(); ++i) {
            for (std::size_t h = 0; h < data.horizon(); ++h) {
                const double r = data.residuals(o - data.first_origin, i, h);
                const std::size_t row = o - holdout.begin;
                scores.push_back(std::max(q.lower(row, i, h) - r, r - q.upper(row, i, h)));
            }
        }
    }
    return empirical_quantile(scores, 1.0 - model.alpha);
}

IntervalSeries scale_intervals(const QuantileForecast& quantiles, const Tensor3& point_forecasts, double alpha,
                               double correction) {
    if (!quantiles.lower.same_shape(point_forecasts) || !quantiles.upper.same_shape(point_forecasts)) {
        throw Error(Errc::ShapeMismatch, "quantile and forecast tensors differ in shape");
    }
    IntervalSeries out{Tensor3(point_forecasts.rows(), point_forecasts.nodes(), point_forecasts.horizon()),
                       Tensor3(point_forecasts.rows(), point_forecasts.nodes(), point_forecasts.horizon()), alpha};
    for (std::size_t k = 0; k < point_forecasts.size(); ++k) {
        double qlo = quantiles.lower.data()[k];
        double qhi = quantiles.upper.data()[k];
        if (qlo > qhi) std::swap(qlo, qhi);
        double lo = point_forecasts.data()[k] + qlo - correction;
        double hi = point_forecasts.data()[k] + qhi + correction;
        if (lo > hi) lo = hi = 0.5 * (lo + hi);
        out.lower.data()[k] = lo;
        out.upper.data()[k] = hi;
    }
    return out;
}

void save_checkpoint(const ScaleModel& model, const std::filesystem::path& path) {
    const auto& d = model.params.dims;
    nlohmann::ordered_json j;
    j["format"] = "sgcp-scale";
    j["version"] = 1;
    j["dims"] = {{"lookback", d.lookback},   {"horizon", d.horizon}, {"n_quantiles", d.n_quantiles},
                 {"d_x", d.d_x},             {"d_s", d.d_s},         {"d_p", d.d_p},
                 {"d_c", d.d_c},             {"n_nodes", d.n_nodes}, {"slots_per_day", d.slots_per_day}};
    j["alpha"] = model.alpha;
    j["residual_scale"] = model.residual_scale;
    j["seed"] = model.seed;
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& g : model.params.groups()) {
        params[g.name] = std::vector<double>(g.values.begin(), g.values.end());
    }
    j["params"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw Error(Errc::IoError, "cannot write checkpoint " + path.string());
    out << j.dump(1) << '\n';
    if (!out) throw Error(Errc::IoError, "failed writing checkpoint " + path.string());
}

ScaleModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("checkpoint: ") + e.what());
    }
    try {
        if (j.at("format") != "sgcp-scale" || j.at("version") != 1) {
            throw Error(Errc::ParseError, "unsupported checkpoint format");
        }
        const auto& jd = j.at("dims");
        ScaleDims d;
        d.lookback = jd.at("lookback");
        d.horizon = jd.at("horizon");
        d.n_quantiles = jd.at("n_quantiles");
        d.d_x = jd.at("d_x");
        d.d_s = jd.at("d_s");
        d.d_p = jd.at("d_p");
        d.d_c = jd.at("d_c");
        d.n_nodes = jd.at("n_nodes");
        d.slots_per_day = jd.at("slots_per_day");
        ScaleModel model;
        model.params = ScaleParams::zeros(d);
        model.alpha = j.at("alpha");
        model.residual_scale = j.at("residual_scale");
        model.seed = j.at("seed");
        for (auto& g : model.params.groups()) {
            const auto values = j.at("params").at(g.name).get<std::vector<double>>();
            if (values.size() != g.values.size()) {
                throw Error(Errc::ShapeMismatch, "checkpoint group '" + g.name + "' has the wrong size");
            }
            std::copy(values.begin(), values.end(), g.values.begin());
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, std::string("checkpoint: ") + e.what());
    }
}

}  // namespace sgcp
