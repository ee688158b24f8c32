#include "sgcp/experiment.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <tuple>

namespace sgcp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw Error(Errc::InvalidConfig, where + " must be an object");
    for (const auto& [k, _] : obj.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw Error(Errc::InvalidConfig, "unknown key '" + k + "' in " + where);
    }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

template <class T>
void read_optional(const json& obj, const char* key, std::optional<T>& out) {
    if (!obj.contains(key)) return;
    if (obj.at(key).is_null()) {
        out.reset();
    } else {
        out = obj.at(key).get<T>();
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

// Lead-0 residual snapshots as a matrix indexed by target time.
Eigen::MatrixXd snapshot_matrix(const BackboneOutput& bb) {
    const auto& r = bb.residuals.values;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(r.rows()), static_cast<Eigen::Index>(r.nodes()));
    for (std::size_t t = 0; t < r.rows(); ++t) {
        for (std::size_t i = 0; i < r.nodes(); ++i) m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = r(t, i, 0);
    }
    return m;
}

// Snapshot rows whose targets fall in the calibration split.
Eigen::MatrixXd calibration_snapshots(const Eigen::MatrixXd& by_target, std::size_t first_target,
                                      const IndexRange& calibration) {
    const std::size_t begin = std::max(calibration.begin, first_target);
    const std::size_t end = std::min(calibration.end, first_target + static_cast<std::size_t>(by_target.rows()));
    if (end <= begin) throw Error(Errc::EmptyCalibration, "no residual snapshots in the calibration split");
    return by_target.middleRows(static_cast<Eigen::Index>(begin - first_target),
                                static_cast<Eigen::Index>(end - begin));
}

CutoffOptions cutoff_options(const ExperimentConfig& c, std::uint64_t seed) {
    CutoffOptions o;
    o.n_scales = c.sgwt.n_scales;
    o.family = c.sgwt.family;
    o.t_max = c.sgwt.t_max;
    o.tau = c.sgwt.tau;
    o.rng_seed = seed;
    return o;
}

ordered_json band_summary(const Eigen::MatrixXd& x) {
    const Eigen::VectorXd c = correlation_intensity(x);
    return {{"correlation_intensity", std::vector<double>(c.data(), c.data() + c.size())},
            {"mean_abs_offdiag_correlation", mean_abs_offdiag_correlation(x)},
            {"mean_square", x.size() ? x.squaredNorm() / static_cast<double>(x.size()) : 0.0}};
}

std::string with_context(const std::string& label, double alpha, std::uint64_t seed, const std::string& what) {
    std::ostringstream s;
    s << "method=" << label << " alpha=" << alpha << " seed=" << seed << ": " << what;
    return s.str();
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

std::string comment_header(const ExperimentConfig& config) {
    std::ostringstream s;
    s << "# config_hash=" << config_hash(config) << "\n# seeds=";
    for (std::size_t k = 0; k < config.seeds.size(); ++k) s << (k ? " " : "") << config.seeds[k];
    s << '\n';
    return s.str();
}

void prepend_comment(const std::filesystem::path& path, const std::string& comment) {
    std::ifstream in(path);
    std::ostringstream body;
    body << in.rdbuf();
    in.close();
    write_text(path, comment + body.str());
}

ordered_json header_fields(const ExperimentConfig& config) {
    return {{"config_hash", config_hash(config)}, {"seeds", config.seeds}};
}

}  // namespace

std::string MethodSpec::label() const {
    std::string s = to_string(method);
    if (method == Method::SCALE && conformalize) s += "+CP";
    return s;
}

void ExperimentConfig::validate() const {
    auto bad = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
    if (data.source != "synthetic" && data.source != "csv") bad("data.source must be 'synthetic' or 'csv'");
    if (data.source == "synthetic") {
        if (data.n_nodes < 2) bad("data.n_nodes must be >= 2");
        if (data.T < 3) bad("data.T must be >= 3");
        if (!(data.chord_prob >= 0.0 && data.chord_prob <= 1.0)) bad("data.chord_prob must lie in [0, 1]");
        if (data.noise_scale.size() != 1 && data.noise_scale.size() != data.n_nodes) {
            bad("data.noise_scale needs one value or one per node");
        }
        for (double s : data.noise_scale) {
            if (!(s >= 0.0) || !std::isfinite(s)) bad("data.noise_scale must be nonnegative");
        }
        if (data.hetero_period && *data.hetero_period == 0) bad("data.hetero_period must be positive");
        if (data.trend_rank >= data.n_nodes) {
            throw Error(Errc::TrendRankTooLarge, "data.trend_rank " + std::to_string(data.trend_rank) +
                                                     " must be below n_nodes " + std::to_string(data.n_nodes));
        }
    } else {
        if (data.series_csv.empty() || data.graph_csv.empty()) bad("csv source needs series_csv and graph_csv");
        if (data.graph_format != "edges" && data.graph_format != "dense") bad("data.graph_format must be edges or dense");
    }
    if (data.slots_per_day < 1) bad("data.slots_per_day must be >= 1");
    if (!(data.train_ratio > 0.0) || !(data.calibration_ratio > 0.0) || data.train_ratio + data.calibration_ratio >= 1.0) {
        bad("split ratios must be positive and sum below 1");
    }
    if (backbone.lookback < 1 || backbone.horizon < 1) bad("backbone lookback and horizon must be >= 1");
    if (!(backbone.ridge_penalty >= 0.0)) bad("backbone.ridge_penalty must be nonnegative");
    if (sgwt.n_scales < 2) bad("sgwt.n_scales must be >= 2");
    if (sgwt.cutoff && (*sgwt.cutoff < 1 || *sgwt.cutoff > sgwt.n_scales + 1)) {
        throw Error(Errc::CutoffOutOfRange, "sgwt.cutoff must lie in [1, n_scales + 1]");
    }
    if (sgwt.t_max < 3) bad("sgwt.t_max must be >= 3");
    if (methods.empty()) bad("methods must be nonempty");
    if (alphas.empty()) bad("alphas must be nonempty");
    if (seeds.empty()) bad("seeds must be nonempty");
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0)) bad("every alpha must lie in (0, 1)");
    }
    for (const auto& m : methods) {
        if (m.window_K < 1) bad("window_K must be >= 1");
        if (!(m.rho > 0.0 && m.rho <= 1.0)) bad("rho must lie in (0, 1]");
    }
    train.validate();
    if (decompose_target != "residuals" && decompose_target != "series") {
        bad("decompose.target must be 'residuals' or 'series'");
    }
}

ExperimentConfig parse_config(const json& doc) {
    ExperimentConfig c;
    try {
        reject_unknown(doc, {"data", "backbone", "sgwt", "methods", "alphas", "seeds", "train", "decompose", "output_dir"},
                       "config");
        if (doc.contains("data")) {
            const auto& d = doc.at("data");
            reject_unknown(d,
                           {"source", "n_nodes", "chord_prob", "graph_seed", "T", "trend_rank", "trend_ar",
                            "trend_scale", "noise_scale", "hetero_period", "hetero_amplitude", "seed", "series_csv",
                            "graph_csv", "graph_format", "slots_per_day", "train_ratio", "calibration_ratio"},
                           "data");
            auto& o = c.data;
            read(d, "source", o.source);
            read(d, "n_nodes", o.n_nodes);
            read(d, "chord_prob", o.chord_prob);
            read(d, "graph_seed", o.graph_seed);
            read(d, "T", o.T);
            read(d, "trend_rank", o.trend_rank);
            read(d, "trend_ar", o.trend_ar);
            read(d, "trend_scale", o.trend_scale);
            if (d.contains("noise_scale")) {
                const auto& ns = d.at("noise_scale");
                o.noise_scale = ns.is_array() ? ns.get<std::vector<double>>() : std::vector<double>{ns.get<double>()};
            }
            read_optional(d, "hetero_period", o.hetero_period);
            read(d, "hetero_amplitude", o.hetero_amplitude);
            read(d, "seed", o.seed);
            read(d, "series_csv", o.series_csv);
            read(d, "graph_csv", o.graph_csv);
            read(d, "graph_format", o.graph_format);
            read(d, "slots_per_day", o.slots_per_day);
            read(d, "train_ratio", o.train_ratio);
            read(d, "calibration_ratio", o.calibration_ratio);
        }
        if (doc.contains("backbone")) {
            const auto& b = doc.at("backbone");
            reject_unknown(b, {"method", "lookback", "horizon", "ridge_penalty"}, "backbone");
            if (b.contains("method")) c.backbone.method = parse_backbone(b.at("method").get<std::string>());
            read(b, "lookback", c.backbone.lookback);
            read(b, "horizon", c.backbone.horizon);
            read(b, "ridge_penalty", c.backbone.ridge_penalty);
        }
        if (doc.contains("sgwt")) {
            const auto& s = doc.at("sgwt");
            reject_unknown(s, {"n_scales", "kernel", "cutoff", "tau", "t_max"}, "sgwt");
            read(s, "n_scales", c.sgwt.n_scales);
            if (s.contains("kernel")) c.sgwt.family = parse_kernel_family(s.at("kernel").get<std::string>());
            if (s.contains("cutoff")) {
                const auto& k = s.at("cutoff");
                if (k.is_string()) {
                    if (k.get<std::string>() != "auto") throw Error(Errc::InvalidConfig, "sgwt.cutoff must be an integer or \"auto\"");
                    c.sgwt.cutoff.reset();
                } else {
                    c.sgwt.cutoff = k.get<std::size_t>();
                }
            }
            read_optional(s, "tau", c.sgwt.tau);
            read(s, "t_max", c.sgwt.t_max);
        }
        if (doc.contains("methods")) {
            for (const auto& m : doc.at("methods")) {
                MethodSpec spec;
                if (m.is_string()) {
                    spec.method = parse_method(m.get<std::string>());
                } else {
                    reject_unknown(m, {"name", "window_K", "rho", "conformalize"}, "methods entry");
                    spec.method = parse_method(m.at("name").get<std::string>());
                    read(m, "window_K", spec.window_K);
                    read(m, "rho", spec.rho);
                    read(m, "conformalize", spec.conformalize);
                }
                c.methods.push_back(spec);
            }
        } else {
            for (Method m : {Method::SCP, Method::SeqCP, Method::NexCP, Method::SpectralSCP, Method::SCALE}) {
                c.methods.push_back(MethodSpec{m});
            }
        }
        read(doc, "alphas", c.alphas);
        read(doc, "seeds", c.seeds);
        if (doc.contains("train")) {
            const auto& t = doc.at("train");
            reject_unknown(t,
                           {"learning_rate", "weight_decay", "milestones", "gamma", "epochs", "batch_size",
                            "crossing_penalty_weight", "beta1", "beta2", "epsilon", "seed"},
                           "train");
            auto& o = c.train;
            read(t, "learning_rate", o.learning_rate);
            read(t, "weight_decay", o.weight_decay);
            read(t, "milestones", o.milestones);
            read(t, "gamma", o.gamma);
            read(t, "epochs", o.epochs);
            read(t, "batch_size", o.batch_size);
            read(t, "crossing_penalty_weight", o.crossing_penalty_weight);
            read(t, "beta1", o.beta1);
            read(t, "beta2", o.beta2);
            read(t, "epsilon", o.epsilon);
            read(t, "seed", o.seed);
        }
        if (doc.contains("decompose")) {
            const auto& d = doc.at("decompose");
            reject_unknown(d, {"target"}, "decompose");
            read(d, "target", c.decompose_target);
        }
        if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, e.what());
    }
    c.validate();
    return c;
}

ordered_json to_json(const ExperimentConfig& c) {
    ordered_json j;
    const auto& d = c.data;
    j["data"] = {{"source", d.source},
                 {"n_nodes", d.n_nodes},
                 {"chord_prob", d.chord_prob},
                 {"graph_seed", d.graph_seed},
                 {"T", d.T},
                 {"trend_rank", d.trend_rank},
                 {"trend_ar", d.trend_ar},
                 {"trend_scale", d.trend_scale},
                 {"noise_scale", d.noise_scale},
                 {"hetero_period", d.hetero_period ? ordered_json(*d.hetero_period) : ordered_json(nullptr)},
                 {"hetero_amplitude", d.hetero_amplitude},
                 {"seed", d.seed},
                 {"series_csv", d.series_csv},
                 {"graph_csv", d.graph_csv},
                 {"graph_format", d.graph_format},
                 {"slots_per_day", d.slots_per_day},
                 {"train_ratio", d.train_ratio},
                 {"calibration_ratio", d.calibration_ratio}};
    j["backbone"] = {{"method", to_string(c.backbone.method)},
                     {"lookback", c.backbone.lookback},
                     {"horizon", c.backbone.horizon},
                     {"ridge_penalty", c.backbone.ridge_penalty}};
    j["sgwt"] = {{"n_scales", c.sgwt.n_scales},
                 {"kernel", to_string(c.sgwt.family)},
                 {"cutoff", c.sgwt.cutoff ? ordered_json(*c.sgwt.cutoff) : ordered_json("auto")},
                 {"tau", c.sgwt.tau ? ordered_json(*c.sgwt.tau) : ordered_json(nullptr)},
                 {"t_max", c.sgwt.t_max}};
    ordered_json methods = ordered_json::array();
    for (const auto& m : c.methods) {
        methods.push_back({{"name", to_string(m.method)},
                           {"window_K", m.window_K},
                           {"rho", m.rho},
                           {"conformalize", m.conformalize}});
    }
    j["methods"] = std::move(methods);
    j["alphas"] = c.alphas;
    j["seeds"] = c.seeds;
    const auto& t = c.train;
    j["train"] = {{"learning_rate", t.learning_rate},
                  {"weight_decay", t.weight_decay},
                  {"milestones", t.milestones},
                  {"gamma", t.gamma},
                  {"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"crossing_penalty_weight", t.crossing_penalty_weight},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"epsilon", t.epsilon},
                  {"seed", t.seed}};
    j["decompose"] = {{"target", c.decompose_target}};
    j["output_dir"] = c.output_dir.string();
    return j;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(Errc::InvalidConfig, "override must look like key=value: '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw Error(Errc::InvalidConfig, "empty path segment in override '" + key + "'");
        if (!node->is_object()) {
            if (!node->is_null()) throw Error(Errc::InvalidConfig, "override path '" + key + "' crosses a non-object");
            *node = json::object();
        }
        if (dot == std::string::npos) {
            (*node)[part] = std::move(value);
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

json load_config_document(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::InvalidConfig, "cannot open config " + path.string());
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
    }
}

std::string config_hash(const ExperimentConfig& config) {
    // where the files go is not part of the experiment
    auto doc = to_json(config);
    doc.erase("output_dir");
    const std::string text = doc.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ordered_json to_json(const CutoffDiagnostics& d) {
    return {{"per_scale_correlation", d.per_scale_correlation},
            {"per_scale_ks", d.per_scale_ks},
            {"per_scale_energy", d.per_scale_energy},
            {"smoothed_correlation", d.smoothed_correlation},
            {"candidates", d.candidates},
            {"chosen_k", d.chosen_k},
            {"split_cutoff", d.split_cutoff()},
            {"n_sampled_rows", d.sampled_rows.size()}};
}

Tensor3 PreparedRun::rows(const Tensor3& by_origin, const IndexRange& origins) const {
    return by_origin.slice_rows(backbone.row_of(origins.begin), origins.size());
}

ResidualSeries PreparedRun::residual_rows(const IndexRange& origins) const {
    ResidualSeries r{rows(backbone.residuals.values, origins), {}};
    r.timestamps.reserve(origins.size());
    for (std::size_t o = origins.begin; o < origins.end; ++o) r.timestamps.push_back(series.timestamps[o]);
    return r;
}

Tensor3 PreparedRun::test_forecasts() const { return rows(backbone.forecasts, test_origins); }

Tensor3 PreparedRun::test_truth() const { return rows(backbone.truth, test_origins); }

ScaleDataset PreparedRun::scale_dataset() const {
    ScaleDataset d;
    d.low = low_by_target;
    d.high = high_by_target;
    d.first_target = first_target;
    d.residuals = backbone.residuals.values;
    d.first_origin = backbone.first_origin;
    d.slots_per_day = series.slots_per_day;
    d.lookback = lookback;
    d.tod.resize(series.length());
    d.dow.resize(series.length());
    for (std::size_t t = 0; t < series.length(); ++t) {
        d.tod[t] = series.time_of_day(t);
        d.dow[t] = series.day_of_week(t);
    }
    return d;
}

GraphSignalSeries load_or_generate(const DataConfig& data, std::uint64_t seed) {
    if (data.source == "csv") {
        GraphSignalSeries s = load_series_csv(data.series_csv, data.slots_per_day);
        s.graph = data.graph_format == "dense" ? load_dense_adjacency_csv(data.graph_csv)
                                               : load_edge_list_csv(data.graph_csv, s.n_nodes());
        if (s.graph.n_nodes() != s.n_nodes()) {
            throw Error(Errc::DimensionMismatch, "graph has " + std::to_string(s.graph.n_nodes()) +
                                                     " nodes but the series has " + std::to_string(s.n_nodes()));
        }
        return s;
    }
    SyntheticSpec spec;
    spec.graph = random_connected_graph(data.n_nodes, data.chord_prob, data.graph_seed);
    spec.T = data.T;
    spec.trend_rank = data.trend_rank;
    spec.trend_ar = data.trend_ar;
    spec.trend_scale = data.trend_scale;
    spec.noise_scale = data.noise_scale.size() == 1 ? std::vector<double>(data.n_nodes, data.noise_scale[0])
                                                    : data.noise_scale;
    spec.hetero_period = data.hetero_period;
    spec.hetero_amplitude = data.hetero_amplitude;
    spec.slots_per_day = data.slots_per_day;
    spec.seed = data.seed + seed;
    return generate_synthetic(spec);
}

PreparedRun prepare_run(const ExperimentConfig& config, std::uint64_t seed) {
    PreparedRun run;
    run.series = load_or_generate(config.data, seed);
    const std::size_t T = run.series.length();
    run.split = temporal_split(T, config.data.train_ratio, config.data.calibration_ratio);
    run.backbone = backbone_forecast(run.series, run.split, config.backbone);
    run.frame = make_wavelet_frame(eigendecompose(normalized_laplacian(run.series.graph)), config.sgwt.n_scales,
                                   config.sgwt.family);

    const Eigen::MatrixXd snapshots = snapshot_matrix(run.backbone);
    run.first_target = run.backbone.first_origin + 1;
    if (config.sgwt.cutoff) {
        run.cutoff = *config.sgwt.cutoff;
    } else {
        const Eigen::MatrixXd samples = calibration_snapshots(snapshots, run.first_target, run.split.calibration);
        run.cutoff_diagnostics = auto_select_cutoff(run.series.graph, samples, cutoff_options(config, seed));
        run.cutoff = run.cutoff_diagnostics->split_cutoff();
    }
    auto dec = decompose_series(run.frame, snapshots, run.cutoff);
    run.low_by_target = std::move(dec.low);
    run.high_by_target = std::move(dec.high);

    const std::size_t W = config.backbone.lookback;
    run.lookback = W;
    const std::size_t K = config.backbone.horizon;
    const std::size_t a = run.split.calibration.begin;
    const std::size_t b = run.split.test.begin;
    auto window = [&](std::size_t begin, std::size_t end) {
        IndexRange r{begin + W - 1, begin + W - 1};
        if (end >= K + 1 && end - K > r.begin) r.end = end - K;
        return r;
    };
    run.calibration_origins = window(a, b);
    run.test_origins = window(b, T);
    if (run.calibration_origins.size() == 0) {
        throw Error(Errc::EmptyCalibration, "calibration split is too short for the look-back and horizon");
    }
    if (run.test_origins.size() == 0) throw Error(Errc::EmptyData, "test split is too short for the look-back and horizon");
    return run;
}

IntervalSeries run_method(const PreparedRun& run, const MethodSpec& spec, double alpha, const TrainConfig& train,
                          std::uint64_t seed) {
    const Tensor3 forecasts = run.test_forecasts();
    const std::size_t K = forecasts.horizon();
    const IndexRange& cal = run.calibration_origins;
    const IndexRange& test = run.test_origins;
    switch (spec.method) {
        case Method::SCP:
            return scp_intervals(run.residual_rows(cal), forecasts, alpha);
        case Method::SeqCP:
            return seqcp_intervals(run.residual_rows({cal.begin, test.end}), test.begin - cal.begin, forecasts, alpha,
                                   spec.window_K);
        case Method::NexCP:
            return nexcp_intervals(run.residual_rows({cal.begin, test.end}), test.begin - cal.begin, forecasts, alpha,
                                   spec.rho);
        case Method::SpectralSCP: {
            const Tensor3 calib_low = low_frequency_forecast(run.low_by_target, run.first_target, cal, K);
            const Tensor3 test_low = low_frequency_forecast(run.low_by_target, run.first_target, test, K);
            return spectral_scp_intervals(run.residual_rows(cal), run.frame, run.cutoff, forecasts, test_low, alpha,
                                          &calib_low);
        }
        case Method::SCALE: {
            const ScaleDataset data = run.scale_dataset();
            ScaleDims dims;
            dims.lookback = data.lookback;
            dims.horizon = K;
            dims.n_nodes = data.n_nodes();
            dims.slots_per_day = data.slots_per_day;
            TrainConfig tc = train;
            tc.seed = train.seed + seed;
            IndexRange fit = cal;
            IndexRange holdout{cal.end, cal.end};
            if (spec.conformalize) {
                fit.end = cal.begin + cal.size() * 3 / 4;
                holdout.begin = fit.end;
                if (fit.size() == 0 || holdout.size() == 0) {
                    throw Error(Errc::EmptyCalibration, "calibration split too short to hold out a conformal tail");
                }
            }
            const ScaleModel model = train_scale(data, fit, alpha, tc, dims);
            const double correction = spec.conformalize ? conformal_correction(model, data, holdout) : 0.0;
            return scale_intervals(predict_quantiles(model, data, test), forecasts, alpha, correction);
        }
    }
    throw Error(Errc::InvalidConfig, "unhandled method");
}

std::vector<SummaryRow> summarize(const std::vector<MetricRow>& rows) {
    std::vector<SummaryRow> out;
    std::vector<std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) {
        std::size_t g = 0;
        while (g < out.size() && !(out[g].method == r.method && out[g].alpha == r.alpha)) ++g;
        if (g == out.size()) {
            out.push_back(SummaryRow{r.method, r.alpha});
            groups.emplace_back();
        }
        groups[g].push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        std::vector<double> cov, wid, wink;
        for (const auto* r : groups[g]) {
            cov.push_back(r->metrics.coverage);
            wid.push_back(r->metrics.pi_width);
            wink.push_back(r->metrics.winkler);
            out[g].infinite_cells += r->metrics.infinite_cells;
        }
        std::tie(out[g].coverage_mean, out[g].coverage_std) = mean_std(cov);
        std::tie(out[g].width_mean, out[g].width_std) = mean_std(wid);
        std::tie(out[g].winkler_mean, out[g].winkler_std) = mean_std(wink);
        out[g].coverage_ok = std::abs(out[g].coverage_mean - (1.0 - out[g].alpha)) <= 0.02;
    }
    return out;
}

std::vector<std::filesystem::path> cmd_synth(const ExperimentConfig& config) {
    if (config.data.source != "synthetic") throw Error(Errc::InvalidConfig, "synth needs data.source = synthetic");
    std::vector<GraphSignalSeries> all;
    for (auto seed : config.seeds) all.push_back(load_or_generate(config.data, seed));

    ensure_dir(config.output_dir);
    std::vector<std::filesystem::path> files;
    const auto graph_path = config.output_dir / "graph.csv";
    const std::string comment = comment_header(config);
    save_edge_list_csv(all.front().graph, graph_path);
    prepend_comment(graph_path, comment);
    files.push_back(graph_path);
    ordered_json manifest = header_fields(config);
    manifest["graph"] = graph_path.filename().string();
    ordered_json series = ordered_json::array();
    for (std::size_t k = 0; k < all.size(); ++k) {
        const auto path = config.output_dir / ("series_seed" + std::to_string(config.seeds[k]) + ".csv");
        save_series_csv(all[k], path);
        prepend_comment(path, comment);
        files.push_back(path);
        series.push_back({{"seed", config.seeds[k]},
                          {"data_seed", config.data.seed + config.seeds[k]},
                          {"file", path.filename().string()}});
    }
    manifest["series"] = std::move(series);
    manifest["config"] = to_json(config);
    const auto manifest_path = config.output_dir / "manifest.json";
    write_text(manifest_path, manifest.dump(2) + "\n");
    files.push_back(manifest_path);
    return files;
}

ordered_json cmd_decompose(const ExperimentConfig& config) {
    ordered_json out = header_fields(config);
    out["target"] = config.decompose_target;
    ordered_json per_seed = ordered_json::array();
    for (auto seed : config.seeds) {
        Eigen::MatrixXd x;
        Graph graph;
        std::size_t cutoff = 0;
        WaveletFrame frame;
        if (config.decompose_target == "series") {
            const GraphSignalSeries s = load_or_generate(config.data, seed);
            x = s.values;
            graph = s.graph;
            frame = make_wavelet_frame(eigendecompose(normalized_laplacian(graph)), config.sgwt.n_scales,
                                       config.sgwt.family);
        } else {
            const PreparedRun run = prepare_run(config, seed);
            x = calibration_snapshots(snapshot_matrix(run.backbone), run.first_target, run.split.calibration);
            graph = run.series.graph;
            frame = run.frame;
        }
        const CutoffDiagnostics diag = auto_select_cutoff(graph, x, cutoff_options(config, seed));
        cutoff = config.sgwt.cutoff ? *config.sgwt.cutoff : diag.split_cutoff();
        const SeriesDecomposition dec = decompose_series(frame, x, cutoff);
        per_seed.push_back({{"seed", seed},
                            {"cutoff", cutoff},
                            {"raw", band_summary(x)},
                            {"low", band_summary(dec.low)},
                            {"high", band_summary(dec.high)},
                            {"per_scale", to_json(diag)}});
    }
    out["results"] = std::move(per_seed);
    ensure_dir(config.output_dir);
    write_text(config.output_dir / "decompose.json", out.dump(2) + "\n");
    return out;
}

ordered_json cmd_autocut(const ExperimentConfig& config) {
    ordered_json out = header_fields(config);
    ordered_json per_seed = ordered_json::array();
    for (auto seed : config.seeds) {
        ExperimentConfig c = config;
        c.sgwt.cutoff.reset();
        const PreparedRun run = prepare_run(c, seed);
        ordered_json entry = to_json(*run.cutoff_diagnostics);
        entry["seed"] = seed;
        per_seed.push_back(std::move(entry));
    }
    out["results"] = std::move(per_seed);
    ensure_dir(config.output_dir);
    write_text(config.output_dir / "autocut.json", out.dump(2) + "\n");
    return out;
}

EvaluateResult cmd_evaluate(const ExperimentConfig& config) {
    EvaluateResult result;
    for (auto seed : config.seeds) {
        const PreparedRun run = prepare_run(config, seed);
        const Tensor3 truth = run.test_truth();
        for (double alpha : config.alphas) {
            for (const auto& spec : config.methods) {
                try {
                    const IntervalSeries iv = run_method(run, spec, alpha, config.train, seed);
                    result.rows.push_back({spec.label(), alpha, seed, evaluate_intervals(iv, truth)});
                } catch (const Error& e) {
                    throw Error(e.code(), with_context(spec.label(), alpha, seed, e.what()));
                }
            }
        }
    }
    result.summary = summarize(result.rows);

    ordered_json doc = header_fields(config);
    doc["config"] = to_json(config);
    ordered_json rows = ordered_json::array();
    for (const auto& r : result.rows) {
        rows.push_back({{"method", r.method},
                        {"alpha", r.alpha},
                        {"seed", r.seed},
                        {"coverage", r.metrics.coverage},
                        {"pi_width", r.metrics.pi_width},
                        {"winkler", r.metrics.winkler},
                        {"infinite_cells", r.metrics.infinite_cells},
                        {"n_cells", r.metrics.n_cells}});
    }
    doc["rows"] = std::move(rows);
    ordered_json summary = ordered_json::array();
    for (const auto& s : result.summary) {
        summary.push_back({{"method", s.method},
                           {"alpha", s.alpha},
                           {"coverage_mean", s.coverage_mean},
                           {"coverage_std", s.coverage_std},
                           {"width_mean", s.width_mean},
                           {"width_std", s.width_std},
                           {"winkler_mean", s.winkler_mean},
                           {"winkler_std", s.winkler_std},
                           {"infinite_cells", s.infinite_cells},
                           {"coverage_ok", s.coverage_ok}});
    }
    doc["summary"] = std::move(summary);

    std::ostringstream csv;
    csv << comment_header(config)
        << "method,alpha,coverage_mean,coverage_std,width_mean,width_std,winkler_mean,winkler_std,infinite_cells\n";
    using detail::format_double;
    for (const auto& s : result.summary) {
        csv << s.method << ',' << format_double(s.alpha) << ',' << format_double(s.coverage_mean) << ','
            << format_double(s.coverage_std) << ',' << format_double(s.width_mean) << ','
            << format_double(s.width_std) << ',' << format_double(s.winkler_mean) << ','
            << format_double(s.winkler_std) << ',' << s.infinite_cells << '\n';
    }

    ensure_dir(config.output_dir);
    const auto json_path = config.output_dir / "metrics.json";
    const auto csv_path = config.output_dir / "metrics.csv";
    write_text(json_path, doc.dump(2) + "\n");
    write_text(csv_path, csv.str());
    result.files = {json_path, csv_path};
    return result;
}

int exit_code_for(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Data: return 3;
        case ErrorCategory::Numeric: return 4;
    }
    return 1;
}

}  // namespace sgcp
