#include "enscal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <utility>

#include "enscal/rng.hpp"

namespace enscal {
namespace {

std::uint64_t to_u64(std::int64_t v) { return static_cast<std::uint64_t>(v); }

// ----- csv helpers (same conventions as the archive readers) ----------------

std::vector<std::string> split_csv_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double_field(const std::string& field, const std::string& where) {
    double value = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty())
        throw schema_error(where + ": bad numeric field '" + field + "'");
    if (!std::isfinite(value)) throw schema_error(where + ": non-finite value '" + field + "'");
    return value;
}

std::int64_t parse_int_field(const std::string& field, const std::string& where) {
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = first + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty())
        throw schema_error(where + ": bad integer field '" + field + "'");
    return value;
}

const std::string predictions_header =
    "station,init_time,lead_minutes,family,param1,param2,aux_mlp,aux_c1d";

// ----- json helpers ----------------------------------------------------------

void check_keys(const nlohmann::json& doc, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!doc.is_object()) throw config_error(where + ": expected a json object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw config_error(where + ": unknown key '" + it.key() + "'");
    }
}

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(path + ": " + e.what());
    }
}

// ----- layer / training-config serialization ---------------------------------

std::string pool_mode_name(PoolMode m) { return m == PoolMode::max ? "max" : "avg"; }

PoolMode pool_mode_from_name(const std::string& name) {
    if (name == "max") return PoolMode::max;
    if (name == "avg") return PoolMode::avg;
    throw config_error("unknown pool mode '" + name + "'");
}

nlohmann::json layer_spec_to_json(const LayerSpec& s) {
    nlohmann::json doc;
    switch (s.kind) {
        case LayerKind::dense:
            doc["kind"] = "dense";
            doc["units"] = s.units;
            doc["activation"] = activation_name(s.activation);
            break;
        case LayerKind::conv1d:
            doc["kind"] = "conv1d";
            doc["filters"] = s.filters;
            doc["kernel"] = s.kernel;
            doc["activation"] = activation_name(s.activation);
            break;
        case LayerKind::pool1d:
            doc["kind"] = "pool1d";
            doc["mode"] = pool_mode_name(s.pool_mode);
            doc["size"] = s.pool_size;
            break;
        case LayerKind::flatten: doc["kind"] = "flatten"; break;
        case LayerKind::normalization: doc["kind"] = "normalization"; break;
    }
    return doc;
}

LayerSpec layer_spec_from_json(const nlohmann::json& doc, const std::string& where) {
    if (!doc.is_object() || !doc.contains("kind"))
        throw config_error(where + ": layer needs a 'kind'");
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "dense") {
        check_keys(doc, {"kind", "units", "activation"}, where);
        return LayerSpec::dense(doc.at("units").get<int>(),
                                doc.contains("activation")
                                    ? activation_from_name(doc.at("activation").get<std::string>())
                                    : Activation::linear);
    }
    if (kind == "conv1d") {
        check_keys(doc, {"kind", "filters", "kernel", "activation"}, where);
        return LayerSpec::conv1d(doc.at("filters").get<int>(), doc.at("kernel").get<int>(),
                                 doc.contains("activation")
                                     ? activation_from_name(doc.at("activation").get<std::string>())
                                     : Activation::linear);
    }
    if (kind == "pool1d") {
        check_keys(doc, {"kind", "mode", "size"}, where);
        return LayerSpec::pool1d(pool_mode_from_name(doc.at("mode").get<std::string>()),
                                 doc.at("size").get<int>());
    }
    if (kind == "flatten") {
        check_keys(doc, {"kind"}, where);
        return LayerSpec::flatten();
    }
    if (kind == "normalization") {
        check_keys(doc, {"kind"}, where);
        return LayerSpec::normalization();
    }
    throw config_error(where + ": unknown layer kind '" + kind + "'");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json factors = nlohmann::json::object();
    for (const auto& [epoch, f] : c.lr_factors) factors[std::to_string(epoch)] = f;
    return {{"base_lr", c.base_lr},       {"lr_factors", factors},
            {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
            {"patience", c.patience},     {"val_fraction", c.val_fraction},
            {"restore_best", c.restore_best}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& where) {
    check_keys(doc,
               {"base_lr", "lr_factors", "batch_size", "max_epochs", "patience", "val_fraction",
                "restore_best"},
               where);
    TrainConfig c;
    if (doc.contains("base_lr")) c.base_lr = doc.at("base_lr").get<double>();
    if (doc.contains("lr_factors")) {
        const auto& factors = doc.at("lr_factors");
        if (!factors.is_object()) throw config_error(where + ": lr_factors must be an object");
        for (auto it = factors.begin(); it != factors.end(); ++it) {
            const std::int64_t epoch = parse_int_field(it.key(), where + ".lr_factors");
            c.lr_factors[static_cast<int>(epoch)] = it.value().get<double>();
        }
    }
    if (doc.contains("batch_size")) c.batch_size = doc.at("batch_size").get<int>();
    if (doc.contains("max_epochs")) c.max_epochs = doc.at("max_epochs").get<int>();
    if (doc.contains("patience")) c.patience = doc.at("patience").get<int>();
    if (doc.contains("val_fraction")) c.val_fraction = doc.at("val_fraction").get<double>();
    if (doc.contains("restore_best")) c.restore_best = doc.at("restore_best").get<bool>();
    return c;
}

nlohmann::json net_spec_to_json(const NetSpec& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.hidden) layers.push_back(layer_spec_to_json(l));
    return {{"layers", layers}, {"train", train_config_to_json(s.train)}};
}

NetSpec net_spec_from_json(const nlohmann::json& doc, const std::string& where) {
    check_keys(doc, {"layers", "train"}, where);
    NetSpec s;
    if (doc.contains("layers")) {
        if (!doc.at("layers").is_array()) throw config_error(where + ": layers must be an array");
        for (const auto& l : doc.at("layers")) s.hidden.push_back(layer_spec_from_json(l, where));
    }
    if (doc.contains("train")) s.train = train_config_from_json(doc.at("train"), where + ".train");
    return s;
}

// ----- regression parameter serialization ------------------------------------

nlohmann::json emos_params_to_json(Family family, const EmosParams& params) {
    if (family == Family::tn) {
        const auto& p = std::get<TnEmosParams>(params);
        return {{"a0", p.a0}, {"a_ctrl", p.a_ctrl}, {"a_ens", p.a_ens}, {"b0", p.b0},
                {"b1", p.b1}};
    }
    if (family == Family::ln) {
        const auto& p = std::get<LnEmosParams>(params);
        return {{"alpha0", p.alpha0},
                {"alpha_ctrl", p.alpha_ctrl},
                {"alpha_ens", p.alpha_ens},
                {"beta0", p.beta0},
                {"beta1", p.beta1}};
    }
    const auto& p = std::get<CensoredEmosParams>(params);
    return {{"gamma0", p.gamma0},   {"gamma_ctrl", p.gamma_ctrl}, {"gamma_ens", p.gamma_ens},
            {"nu", p.nu},           {"delta0", p.delta0},         {"delta1", p.delta1}};
}

EmosParams emos_params_from_json(Family family, const nlohmann::json& doc) {
    if (family == Family::tn) {
        TnEmosParams p;
        p.a0 = doc.at("a0").get<double>();
        p.a_ctrl = doc.at("a_ctrl").get<double>();
        p.a_ens = doc.at("a_ens").get<double>();
        p.b0 = doc.at("b0").get<double>();
        p.b1 = doc.at("b1").get<double>();
        return p;
    }
    if (family == Family::ln) {
        LnEmosParams p;
        p.alpha0 = doc.at("alpha0").get<double>();
        p.alpha_ctrl = doc.at("alpha_ctrl").get<double>();
        p.alpha_ens = doc.at("alpha_ens").get<double>();
        p.beta0 = doc.at("beta0").get<double>();
        p.beta1 = doc.at("beta1").get<double>();
        return p;
    }
    CensoredEmosParams p;
    p.gamma0 = doc.at("gamma0").get<double>();
    p.gamma_ctrl = doc.at("gamma_ctrl").get<double>();
    p.gamma_ens = doc.at("gamma_ens").get<double>();
    p.nu = doc.at("nu").get<double>();
    p.delta0 = doc.at("delta0").get<double>();
    p.delta1 = doc.at("delta1").get<double>();
    return p;
}

// ----- model document helpers -------------------------------------------------

nlohmann::json history_to_json(const TrainHistory& h) {
    return {{"epochs", h.train_loss.size()},
            {"best_epoch", h.best_epoch},
            {"early_stopped", h.early_stopped},
            {"final_train_loss", h.train_loss.empty() ? 0.0 : h.train_loss.back()},
            {"final_val_loss", h.val_loss.empty() ? 0.0 : h.val_loss.back()}};
}

void put_net_model(nlohmann::json& doc, const Network& net, const AffineScaler& scaler,
                   const std::vector<std::string>& features, double target_scale,
                   std::size_t n_train, const TrainHistory& history) {
    doc["features"] = features;
    doc["scaler"] = scaler_to_json(scaler);
    doc["target_scale"] = target_scale;
    doc["network"] = network_to_json(net);
    doc["n_train"] = n_train;
    doc["history"] = history_to_json(history);
}

DistModel dist_model_from_json(const nlohmann::json& doc, const std::string& where) {
    try {
        DistModel m;
        m.features = doc.at("features").get<std::vector<std::string>>();
        m.scaler = scaler_from_json(doc.at("scaler"));
        m.target_scale = doc.at("target_scale").get<double>();
        m.net = network_from_json(doc.at("network"));
        m.n_train = doc.at("n_train").get<std::size_t>();
        if (m.net.head == HeadTransform::point)
            throw validation_error(where + ": expected a distribution head");
        if (m.scaler.shift.size() != m.features.size())
            throw validation_error(where + ": scaler width does not match the feature list");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(where + ": malformed model document: " + e.what());
    }
}

PointModel point_model_from_json(const nlohmann::json& doc, const std::string& where) {
    try {
        PointModel m;
        m.features = doc.at("features").get<std::vector<std::string>>();
        m.scaler = scaler_from_json(doc.at("scaler"));
        m.target_scale = doc.at("target_scale").get<double>();
        m.net = network_from_json(doc.at("network"));
        m.n_train = doc.at("n_train").get<std::size_t>();
        if (m.net.head != HeadTransform::point || m.net.output_width() != 1)
            throw validation_error(where + ": expected a single-output point head");
        if (m.scaler.shift.size() != m.features.size())
            throw validation_error(where + ": scaler width does not match the feature list");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(where + ": malformed model document: " + e.what());
    }
}

SequenceModel sequence_model_from_json(const nlohmann::json& doc, const std::string& where) {
    try {
        SequenceModel m;
        m.features = doc.at("features").get<std::vector<std::string>>();
        m.scaler = scaler_from_json(doc.at("scaler"));
        m.target_scale = doc.at("target_scale").get<double>();
        m.net = network_from_json(doc.at("network"));
        m.n_train = doc.at("n_train").get<std::size_t>();
        m.slices.window_len = doc.at("slices").at("window_len").get<int>();
        m.slices.shift = doc.at("slices").at("shift").get<int>();
        if (m.net.head != HeadTransform::point ||
            m.net.output_width() != m.slices.window_len)
            throw validation_error(where + ": expected one output per slice position");
        if (m.scaler.shift.size() != m.features.size())
            throw validation_error(where + ": scaler width does not match the feature list");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(where + ": malformed model document: " + e.what());
    }
}

// ----- network output reads ---------------------------------------------------

// mirror of the training-side head reads: raw outputs holding e^x are floored
// before the log, cube roots and moments are taken as-is (moments floored to
// stay inside the family)
double read_log_output(double o) { return std::log(std::max(o, 1e-6)); }

Distribution head_distribution(HeadTransform head, double o1, double o2, double target_scale) {
    const double s = target_scale;
    switch (head) {
        case HeadTransform::tn_exp_exp:
            return TruncatedNormal{read_log_output(o1) * s, read_log_output(o2) * s};
        case HeadTransform::cn0_cube_exp:
            return CensoredNormal{std::cbrt(o1) * s, read_log_output(o2) * s};
        case HeadTransform::ln_moments:
            return LogNormalMoments{std::max(o1, 1e-6) * s, std::max(o2, 1e-10) * s * s};
        case HeadTransform::point: break;
    }
    throw config_error("point networks do not predict distributions");
}

std::vector<Distribution> dist_predict_rows(const DistModel& m,
                                            const std::vector<std::vector<double>>& rows) {
    Batch in;
    in.count = static_cast<int>(rows.size());
    in.shape = {1, static_cast<int>(m.features.size())};
    in.values.reserve(rows.size() * m.features.size());
    for (const auto& row : rows) {
        if (row.size() != m.features.size())
            throw validation_error("feature row width does not match the model");
        const auto scaled = apply_scaler(m.scaler, row);
        in.values.insert(in.values.end(), scaled.begin(), scaled.end());
    }
    const Batch out = forward(m.net, in);
    std::vector<Distribution> dists;
    dists.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        dists.push_back(head_distribution(m.net.head, out.values[2 * i], out.values[2 * i + 1],
                                          m.target_scale));
    return dists;
}

// head and loss implied by the predictive family
HeadTransform head_for(Family family) {
    switch (family) {
        case Family::tn: return HeadTransform::tn_exp_exp;
        case Family::cn0: return HeadTransform::cn0_cube_exp;
        case Family::ln: return HeadTransform::ln_moments;
        case Family::cl0: break;
    }
    throw config_error("no network head for family '" + family_name(family) + "'");
}

Loss loss_for(Family family) {
    switch (family) {
        case Family::tn: return Loss::crps_tn;
        case Family::cn0: return Loss::crps_cn0;
        case Family::ln: return Loss::crps_ln;
        case Family::cl0: break;
    }
    throw config_error("no network loss for family '" + family_name(family) + "'");
}

AffineScaler identity_scaler(std::size_t width) {
    AffineScaler s;
    s.shift.assign(width, 0.0);
    s.scale.assign(width, 1.0);
    return s;
}

void check_train_config(const TrainConfig& c, const std::string& which) {
    if (!(c.base_lr > 0.0)) throw config_error(which + ": base_lr must be positive");
    if (c.batch_size < 1) throw config_error(which + ": batch_size must be at least 1");
    if (c.max_epochs < 1) throw config_error(which + ": max_epochs must be at least 1");
    if (c.patience < 1) throw config_error(which + ": patience must be at least 1");
    if (c.val_fraction < 0.0 || c.val_fraction >= 1.0)
        throw config_error(which + ": val_fraction must be in [0, 1)");
}

void check_feature_names(const std::vector<std::string>& names, const std::string& which) {
    if (names.empty()) throw config_error(which + ": needs at least one feature");
    for (const auto& name : names) {
        if (name == "aux_mlp" || name == "aux_c1d")
            throw config_error(which + ": '" + name + "' is appended automatically");
        feature_value(name, Members{}, EnsembleSummary{}, 0);  // throws on unknown names
    }
}

std::string lead_file(std::int64_t lead_minutes) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "lead-%04lld.json", static_cast<long long>(lead_minutes));
    return buf;
}

void require_doc_field(const nlohmann::json& doc, const char* key, const std::string& want,
                       const std::string& where) {
    std::string got;
    try {
        got = doc.at(key).get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw io_error(where + ": malformed model document: " + e.what());
    }
    if (got != want)
        throw validation_error(where + ": document has " + std::string(key) + " '" + got +
                               "', expected '" + want + "'");
}

// ----- training tasks ---------------------------------------------------------

std::string artifact_dir(const MethodConfig& cfg, const std::string& scope,
                         std::int64_t valid_date) {
    return method_dir_name(cfg.method, cfg.family) + "/" + scope + "/" + format_date(valid_date);
}

nlohmann::json base_doc(const MethodConfig& cfg, const char* kind, int pool) {
    nlohmann::json doc;
    doc["format"] = 1;
    doc["kind"] = kind;
    doc["method"] = method_name(cfg.method);
    doc["family"] = family_name(cfg.family);
    doc["variable"] = variable_name(cfg.variable);
    if (pool >= 0) doc["pool"] = pool_tag(pool);
    return doc;
}

std::vector<Artifact> train_emos_task(const Dataset& data, const std::vector<std::size_t>& idx,
                                      const MethodConfig& cfg, std::uint64_t task_seed,
                                      const std::string& dir, std::int64_t valid_date,
                                      const std::string& scope) {
    std::map<std::int64_t, std::vector<std::size_t>> by_lead;
    for (const std::size_t i : idx) by_lead[data.cases[i].forecast.lead_minutes].push_back(i);

    std::vector<Artifact> artifacts;
    std::optional<EmosParams> warm;  // parameters vary smoothly in lead
    for (const auto& [lead, ids] : by_lead) {
        std::vector<EmosCase> cases;
        cases.reserve(ids.size());
        for (const std::size_t i : ids)
            cases.push_back(make_emos_case(data.cases[i].forecast.members, *data.cases[i].obs));
        const EmosFit fit = fit_emos(cases, cfg.family, warm, derive_seed(task_seed, to_u64(lead)));
        warm = fit.params;

        nlohmann::json doc = base_doc(cfg, "emos", -1);
        doc["lead_minutes"] = lead;
        doc["params"] = emos_params_to_json(fit.family, fit.params);
        doc["mean_crps"] = fit.mean_crps;
        doc["iterations"] = fit.iterations;
        doc["converged"] = fit.converged;
        doc["flagged_zero_variance"] = fit.flagged_zero_variance;
        doc["penalized_cases"] = fit.penalized_cases;
        doc["n_train"] = cases.size();
        artifacts.push_back({dir + "/" + lead_file(lead), std::move(doc), valid_date, scope});
    }
    return artifacts;
}

std::vector<Artifact> train_mlp_s_task(const Dataset& data, const std::vector<std::size_t>& idx,
                                       const MethodConfig& cfg, std::uint64_t task_seed,
                                       const std::string& dir, std::int64_t valid_date,
                                       const std::string& scope) {
    std::vector<Artifact> artifacts;
    for (int pool = 0; pool < 2; ++pool) {
        std::vector<std::size_t> ids;
        for (const std::size_t i : idx)
            if (half_day_pool(data.cases[i].forecast.lead_minutes) == pool) ids.push_back(i);
        std::vector<std::vector<double>> rows = feature_rows(data, ids, cfg.dist_features);
        std::vector<double> obs;
        obs.reserve(ids.size());
        for (const std::size_t i : ids) obs.push_back(*data.cases[i].obs);

        const DistModel m = train_dist_net(rows, obs, cfg.family, cfg.dist_net, cfg.dist_features,
                                           cfg.standardize_features, cfg.target_scale,
                                           derive_seed(task_seed, hash_string("dist"), to_u64(pool)));

        nlohmann::json doc = base_doc(cfg, "dist-net", pool);
        put_net_model(doc, m.net, m.scaler, m.features, m.target_scale, m.n_train, m.history);
        artifacts.push_back(
            {dir + "/" + pool_tag(pool) + ".json", std::move(doc), valid_date, scope});
    }
    return artifacts;
}

std::vector<Artifact> train_mlpex_task(const Dataset& data, const std::vector<std::size_t>& idx,
                                       const MethodConfig& cfg, std::uint64_t task_seed,
                                       const std::string& dir, std::int64_t valid_date,
                                       const std::string& scope) {
    // idx keeps cases with missing observations so the sequence series stay on
    // the forecast grid; the point and distribution fits use the complete ones
    std::vector<std::size_t> complete;
    for (const std::size_t i : idx)
        if (data.cases[i].complete()) complete.push_back(i);
    if (complete.empty())
        throw insufficient_data_error("no observed cases in the training window");

    std::vector<double> complete_obs;
    complete_obs.reserve(complete.size());
    for (const std::size_t i : complete) complete_obs.push_back(*data.cases[i].obs);

    const PointModel aux_mlp = train_point_net(
        feature_rows(data, complete, cfg.aux_mlp_features), complete_obs, cfg.aux_mlp_net,
        cfg.aux_loss, cfg.aux_mlp_features, cfg.standardize_features, cfg.target_scale,
        derive_seed(task_seed, hash_string("aux-mlp")));

    // per-station series over the full window, pooled into one slice set
    std::vector<std::pair<std::size_t, std::size_t>> runs;  // [first, last) into idx
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t e = k + 1;
        while (e < idx.size() &&
               data.cases[idx[e]].forecast.station == data.cases[idx[k]].forecast.station)
            ++e;
        runs.emplace_back(k, e);
        k = e;
    }
    std::vector<LocationSeries> series;
    series.reserve(runs.size());
    for (const auto& [b, e] : runs) {
        LocationSeries s;
        s.features.reserve(e - b);
        s.targets.reserve(e - b);
        for (std::size_t k = b; k < e; ++k) {
            const auto& c = data.cases[idx[k]];
            s.features.push_back(case_features(cfg.aux_c1d_features, c.forecast));
            s.targets.push_back(c.obs);
        }
        series.push_back(std::move(s));
    }
    const SequenceModel aux_c1d = train_sequence_net(
        series, cfg.aux_c1d_net, cfg.aux_loss, cfg.slices, cfg.aux_c1d_features,
        cfg.standardize_features, cfg.target_scale, derive_seed(task_seed, hash_string("aux-c1d")));

    // in-sample corrected forecasts become extra inputs of the distribution fit
    const std::vector<double> aux_mlp_vals =
        point_predict(aux_mlp, feature_rows(data, idx, cfg.aux_mlp_features));
    std::vector<double> aux_c1d_vals(idx.size(), 0.0);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto vals = sequence_predict(aux_c1d, series[r].features);
        for (std::size_t k = runs[r].first; k < runs[r].second; ++k)
            aux_c1d_vals[k] = vals[k - runs[r].first];
    }

    std::vector<std::string> dist_names = cfg.dist_features;
    dist_names.push_back("aux_mlp");
    dist_names.push_back("aux_c1d");

    nlohmann::json aux_doc;
    {
        nlohmann::json mlp_doc;
        put_net_model(mlp_doc, aux_mlp.net, aux_mlp.scaler, aux_mlp.features, aux_mlp.target_scale,
                      aux_mlp.n_train, aux_mlp.history);
        nlohmann::json c1d_doc;
        put_net_model(c1d_doc, aux_c1d.net, aux_c1d.scaler, aux_c1d.features, aux_c1d.target_scale,
                      aux_c1d.n_train, aux_c1d.history);
        c1d_doc["slices"] = {{"window_len", aux_c1d.slices.window_len},
                             {"shift", aux_c1d.slices.shift}};
        aux_doc = {{"mlp", std::move(mlp_doc)}, {"c1d", std::move(c1d_doc)}};
    }

    std::vector<Artifact> artifacts;
    for (int pool = 0; pool < 2; ++pool) {
        std::vector<std::vector<double>> rows;
        std::vector<double> obs;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto& c = data.cases[idx[k]];
            if (!c.complete() || half_day_pool(c.forecast.lead_minutes) != pool) continue;
            auto row = case_features(cfg.dist_features, c.forecast);
            row.push_back(aux_mlp_vals[k]);
            row.push_back(aux_c1d_vals[k]);
            rows.push_back(std::move(row));
            obs.push_back(*c.obs);
        }
        const DistModel m = train_dist_net(rows, obs, cfg.family, cfg.dist_net, dist_names,
                                           cfg.standardize_features, cfg.target_scale,
                                           derive_seed(task_seed, hash_string("dist"), to_u64(pool)));

        nlohmann::json doc = base_doc(cfg, "dist-net", pool);
        put_net_model(doc, m.net, m.scaler, m.features, m.target_scale, m.n_train, m.history);
        doc["aux"] = aux_doc;  // each pool document predicts on its own
        artifacts.push_back(
            {dir + "/" + pool_tag(pool) + ".json", std::move(doc), valid_date, scope});
    }
    return artifacts;
}

}  // namespace

// ----- names ------------------------------------------------------------------

std::string spatial_name(Spatial s) {
    return s == Spatial::local ? "local" : "regional";
}

Spatial spatial_from_name(const std::string& name) {
    if (name == "local") return Spatial::local;
    if (name == "regional") return Spatial::regional;
    throw config_error("unknown spatial scope '" + name + "'");
}

std::string pooling_name(Pooling p) {
    return p == Pooling::per_lead_time ? "per_lead_time" : "half_day_pooled";
}

Pooling pooling_from_name(const std::string& name) {
    if (name == "per_lead_time") return Pooling::per_lead_time;
    if (name == "half_day_pooled") return Pooling::half_day_pooled;
    throw config_error("unknown pooling '" + name + "'");
}

std::string method_name(Method m) {
    switch (m) {
        case Method::emos: return "emos";
        case Method::mlp_s: return "mlp-s";
        case Method::mlpex: return "mlpex";
    }
    throw config_error("unknown method");
}

Method method_from_name(const std::string& name) {
    if (name == "emos") return Method::emos;
    if (name == "mlp-s") return Method::mlp_s;
    if (name == "mlpex") return Method::mlpex;
    throw config_error("unknown method '" + name + "'");
}

std::string pool_tag(int pool) {
    if (pool == 0) return "h00-24";
    if (pool == 1) return "h24-48";
    throw config_error("lead pool must be 0 or 1");
}

// ----- training windows -------------------------------------------------------

std::vector<std::size_t> rolling_window(const Dataset& data, std::int64_t valid_date,
                                        const WindowConfig& cfg, const std::string& station,
                                        bool include_missing) {
    if (cfg.train_days < 1) throw config_error("train_days must be at least 1");
    const std::int64_t first = valid_date - cfg.train_days;
    const std::int64_t last = valid_date - 1;

    std::size_t lo = 0, hi = data.cases.size();
    if (cfg.spatial == Spatial::local) {
        if (station.empty()) throw config_error("a local training window needs a station");
        std::tie(lo, hi) = data.station_range(station);
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < hi; ++i) {
        const auto& c = data.cases[i];
        const std::int64_t d = c.forecast.init_date();
        if (d < first || d > last) continue;
        if (!include_missing && !c.complete()) continue;
        idx.push_back(i);
    }
    if (idx.empty())
        throw insufficient_data_error("no training cases in the " +
                                      std::to_string(cfg.train_days) + "-day window before " +
                                      format_date(valid_date) +
                                      (station.empty() ? "" : " at " + station));
    return idx;
}

// ----- sequence slicing ---------------------------------------------------------

std::vector<std::size_t> overlapping_slice_starts(std::size_t n, const SliceConfig& cfg) {
    if (cfg.window_len < 1) throw config_error("slice window_len must be at least 1");
    if (cfg.shift < 1 || cfg.shift > cfg.window_len)
        throw config_error("slice shift must be in [1, window_len]");
    const std::size_t w = static_cast<std::size_t>(cfg.window_len);
    if (n < w) throw insufficient_data_error("series shorter than one slice");
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + w <= n; s += static_cast<std::size_t>(cfg.shift))
        starts.push_back(s);
    return starts;
}

std::vector<std::size_t> disjoint_slice_starts(std::size_t n, int window_len) {
    if (window_len < 1) throw config_error("slice window_len must be at least 1");
    const std::size_t w = static_cast<std::size_t>(window_len);
    if (n < w) throw insufficient_data_error("series shorter than one slice");
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + w <= n; s += w) starts.push_back(s);
    if (starts.back() + w < n) starts.push_back(n - w);  // tail overlaps its predecessor
    return starts;
}

namespace {

std::size_t series_width(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw insufficient_data_error("empty feature series");
    const std::size_t d = rows[0].size();
    if (d == 0) throw validation_error("feature rows must not be empty");
    for (const auto& r : rows)
        if (r.size() != d) throw validation_error("feature rows have inconsistent widths");
    return d;
}

void append_slice(Batch& inputs, const std::vector<std::vector<double>>& rows, std::size_t start,
                  std::size_t w) {
    for (std::size_t t = 0; t < w; ++t)
        inputs.values.insert(inputs.values.end(), rows[start + t].begin(), rows[start + t].end());
}

}  // namespace

SliceSet make_overlapping_slices(const LocationSeries& series, const SliceConfig& cfg) {
    const std::size_t d = series_width(series.features);
    if (series.targets.size() != series.features.size())
        throw validation_error("series targets must align with its features");
    const std::size_t w = static_cast<std::size_t>(cfg.window_len);
    SliceSet set;
    set.inputs.shape = {cfg.window_len, static_cast<int>(d)};
    for (const std::size_t s : overlapping_slice_starts(series.features.size(), cfg)) {
        bool complete = true;
        for (std::size_t t = 0; t < w && complete; ++t)
            complete = series.targets[s + t].has_value();
        if (!complete) continue;  // a gap anywhere drops the whole slice
        set.starts.push_back(s);
        append_slice(set.inputs, series.features, s, w);
        for (std::size_t t = 0; t < w; ++t) set.targets.push_back(*series.targets[s + t]);
    }
    if (set.starts.empty())
        throw insufficient_data_error("every candidate slice has a missing observation");
    set.inputs.count = static_cast<int>(set.starts.size());
    return set;
}

SliceSet make_disjoint_slices(const std::vector<std::vector<double>>& features, int window_len) {
    const std::size_t d = series_width(features);
    const std::size_t w = static_cast<std::size_t>(window_len);
    SliceSet set;
    set.inputs.shape = {window_len, static_cast<int>(d)};
    set.starts = disjoint_slice_starts(features.size(), window_len);
    for (const std::size_t s : set.starts) append_slice(set.inputs, features, s, w);
    set.inputs.count = static_cast<int>(set.starts.size());
    return set;
}

std::vector<double> stitch_slices(std::size_t n, const std::vector<std::size_t>& starts,
                                  const Batch& outputs) {
    const std::size_t w = static_cast<std::size_t>(outputs.shape.size());
    if (static_cast<std::size_t>(outputs.count) != starts.size())
        throw validation_error("slice outputs do not match the slice starts");
    std::vector<double> out(n, 0.0);
    std::vector<bool> covered(n, false);
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (starts[k] + w > n) throw validation_error("slice extends past the series");
        for (std::size_t t = 0; t < w; ++t) {
            const std::size_t pos = starts[k] + t;
            if (covered[pos]) continue;  // the earlier slice keeps overlapped points
            out[pos] = outputs.values[k * w + t];
            covered[pos] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!covered[i]) throw validation_error("slices leave series positions uncovered");
    return out;
}

// ----- feature scaling ----------------------------------------------------------

AffineScaler fit_scaler(const std::vector<std::vector<double>>& rows) {
    const std::size_t d = series_width(rows);
    AffineScaler s;
    s.shift.assign(d, 0.0);
    s.scale.assign(d, 1.0);
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[j];
        mean *= inv_n;
        double ss = 0.0;
        for (const auto& r : rows) ss += (r[j] - mean) * (r[j] - mean);
        const double sd = std::sqrt(ss * inv_n);
        s.shift[j] = mean;
        if (sd > 1e-12) s.scale[j] = sd;  // near-constant features stay unscaled
    }
    return s;
}

std::vector<double> apply_scaler(const AffineScaler& s, const std::vector<double>& row) {
    if (row.size() != s.shift.size())
        throw validation_error("feature row width does not match the scaler");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - s.shift[j]) / s.scale[j];
    return out;
}

void apply_scaler_in_place(const AffineScaler& s, Batch& batch) {
    if (static_cast<std::size_t>(batch.shape.channels) != s.shift.size())
        throw validation_error("batch channels do not match the scaler");
    const std::size_t d = s.shift.size();
    for (std::size_t i = 0; i < batch.values.size(); ++i) {
        const std::size_t j = i % d;
        batch.values[i] = (batch.values[i] - s.shift[j]) / s.scale[j];
    }
}

nlohmann::json scaler_to_json(const AffineScaler& s) {
    return {{"shift", s.shift}, {"scale", s.scale}};
}

AffineScaler scaler_from_json(const nlohmann::json& doc) {
    AffineScaler s;
    try {
        s.shift = doc.at("shift").get<std::vector<double>>();
        s.scale = doc.at("scale").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw io_error(std::string("malformed scaler document: ") + e.what());
    }
    if (s.shift.size() != s.scale.size())
        throw validation_error("scaler shift and scale must have equal widths");
    for (const double v : s.scale)
        if (!(v > 0.0)) throw validation_error("scaler scale entries must be positive");
    return s;
}

// ----- method configuration -----------------------------------------------------

void validate_method_config(const MethodConfig& cfg) {
    if (cfg.variable == Variable::wind_speed_mps) {
        if (cfg.family != Family::tn && cfg.family != Family::ln)
            throw config_error("wind speed supports the tn and ln families");
    } else {
        if (cfg.family == Family::tn || cfg.family == Family::ln)
            throw config_error("irradiance supports the cn0 and cl0 families");
        if (cfg.family == Family::cl0 && cfg.method != Method::emos)
            throw config_error("the cl0 family is only available with the emos method");
    }
    if (cfg.method == Method::emos) {
        if (cfg.window.pooling != Pooling::per_lead_time)
            throw config_error("emos fits one model per lead time");
    } else {
        if (cfg.window.pooling != Pooling::half_day_pooled)
            throw config_error("network methods pool lead times into forecast-day halves");
    }
    if (cfg.window.train_days < 1) throw config_error("train_days must be at least 1");
    if (!(cfg.target_scale > 0.0) || !std::isfinite(cfg.target_scale))
        throw config_error("target_scale must be positive");

    if (cfg.method != Method::emos) {
        check_feature_names(cfg.dist_features, "dist_features");
        check_train_config(cfg.dist_net.train, "dist_net");
    }
    if (cfg.method == Method::mlpex) {
        check_feature_names(cfg.aux_mlp_features, "aux_mlp_features");
        check_feature_names(cfg.aux_c1d_features, "aux_c1d_features");
        check_train_config(cfg.aux_mlp_net.train, "aux_mlp_net");
        check_train_config(cfg.aux_c1d_net.train, "aux_c1d_net");
        if (cfg.aux_loss != Loss::mae && cfg.aux_loss != Loss::mse)
            throw config_error("auxiliary networks train on a point loss (mae or mse)");
        if (cfg.slices.window_len < 1) throw config_error("slice window_len must be at least 1");
        if (cfg.slices.shift < 1 || cfg.slices.shift > cfg.slices.window_len)
            throw config_error("slice shift must be in [1, window_len]");
    }
}

nlohmann::json method_config_to_json(const MethodConfig& cfg) {
    nlohmann::json doc;
    doc["method"] = method_name(cfg.method);
    doc["family"] = family_name(cfg.family);
    doc["variable"] = variable_name(cfg.variable);
    doc["window"] = {{"train_days", cfg.window.train_days},
                     {"spatial", spatial_name(cfg.window.spatial)},
                     {"pooling", pooling_name(cfg.window.pooling)}};
    doc["dist_features"] = cfg.dist_features;
    doc["aux_mlp_features"] = cfg.aux_mlp_features;
    doc["aux_c1d_features"] = cfg.aux_c1d_features;
    doc["dist_net"] = net_spec_to_json(cfg.dist_net);
    doc["aux_mlp_net"] = net_spec_to_json(cfg.aux_mlp_net);
    doc["aux_c1d_net"] = net_spec_to_json(cfg.aux_c1d_net);
    doc["aux_loss"] = loss_name(cfg.aux_loss);
    doc["slices"] = {{"window_len", cfg.slices.window_len}, {"shift", cfg.slices.shift}};
    doc["standardize_features"] = cfg.standardize_features;
    doc["target_scale"] = cfg.target_scale;
    doc["seed"] = cfg.seed;
    return doc;
}

MethodConfig method_config_from_json(const nlohmann::json& doc) {
    check_keys(doc,
               {"method", "family", "variable", "window", "dist_features", "aux_mlp_features",
                "aux_c1d_features", "dist_net", "aux_mlp_net", "aux_c1d_net", "aux_loss", "slices",
                "standardize_features", "target_scale", "seed"},
               "config");
    MethodConfig cfg;
    try {
        if (doc.contains("method")) cfg.method = method_from_name(doc.at("method").get<std::string>());
        if (doc.contains("family")) cfg.family = family_from_name(doc.at("family").get<std::string>());
        if (doc.contains("variable"))
            cfg.variable = variable_from_name(doc.at("variable").get<std::string>());
        if (doc.contains("window")) {
            const auto& w = doc.at("window");
            check_keys(w, {"train_days", "spatial", "pooling"}, "config.window");
            if (w.contains("train_days")) cfg.window.train_days = w.at("train_days").get<int>();
            if (w.contains("spatial"))
                cfg.window.spatial = spatial_from_name(w.at("spatial").get<std::string>());
            if (w.contains("pooling"))
                cfg.window.pooling = pooling_from_name(w.at("pooling").get<std::string>());
        }
        if (doc.contains("dist_features"))
            cfg.dist_features = doc.at("dist_features").get<std::vector<std::string>>();
        if (doc.contains("aux_mlp_features"))
            cfg.aux_mlp_features = doc.at("aux_mlp_features").get<std::vector<std::string>>();
        if (doc.contains("aux_c1d_features"))
            cfg.aux_c1d_features = doc.at("aux_c1d_features").get<std::vector<std::string>>();
        if (doc.contains("dist_net"))
            cfg.dist_net = net_spec_from_json(doc.at("dist_net"), "config.dist_net");
        if (doc.contains("aux_mlp_net"))
            cfg.aux_mlp_net = net_spec_from_json(doc.at("aux_mlp_net"), "config.aux_mlp_net");
        if (doc.contains("aux_c1d_net"))
            cfg.aux_c1d_net = net_spec_from_json(doc.at("aux_c1d_net"), "config.aux_c1d_net");
        if (doc.contains("aux_loss")) cfg.aux_loss = loss_from_name(doc.at("aux_loss").get<std::string>());
        if (doc.contains("slices")) {
            const auto& s = doc.at("slices");
            check_keys(s, {"window_len", "shift"}, "config.slices");
            if (s.contains("window_len")) cfg.slices.window_len = s.at("window_len").get<int>();
            if (s.contains("shift")) cfg.slices.shift = s.at("shift").get<int>();
        }
        if (doc.contains("standardize_features"))
            cfg.standardize_features = doc.at("standardize_features").get<bool>();
        if (doc.contains("target_scale")) cfg.target_scale = doc.at("target_scale").get<double>();
        if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad config value: ") + e.what());
    }
    return cfg;
}

MethodConfig load_method_config(const std::string& path) {
    return method_config_from_json(load_json_file(path));
}

// ----- feature assembly ----------------------------------------------------------

std::vector<double> case_features(const std::vector<std::string>& names,
                                  const EnsembleForecast& fc) {
    return feature_vector(names, fc.members, summarize(fc.members), fc.lead_minutes);
}

std::vector<std::vector<double>> feature_rows(const Dataset& data,
                                              const std::vector<std::size_t>& idx,
                                              const std::vector<std::string>& names) {
    std::vector<std::vector<double>> rows;
    rows.reserve(idx.size());
    for (const std::size_t i : idx) rows.push_back(case_features(names, data.cases[i].forecast));
    return rows;
}

// ----- trainers -------------------------------------------------------------------

DistModel train_dist_net(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& obs, Family family, const NetSpec& spec,
                         const std::vector<std::string>& feature_names, bool standardize,
                         double target_scale, std::uint64_t seed) {
    if (rows.empty()) throw insufficient_data_error("no training rows");
    if (rows.size() != obs.size())
        throw validation_error("training rows and observations must align");
    const std::size_t d = series_width(rows);
    if (d != feature_names.size())
        throw validation_error("feature rows do not match the feature names");

    DistModel m;
    m.features = feature_names;
    m.target_scale = target_scale;
    m.scaler = standardize ? fit_scaler(rows) : identity_scaler(d);
    m.n_train = rows.size();

    Batch inputs = make_batch({1, static_cast<int>(d)}, rows);
    apply_scaler_in_place(m.scaler, inputs);
    std::vector<double> targets(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) targets[i] = obs[i] / target_scale;

    std::vector<LayerSpec> specs = spec.hidden;
    specs.push_back(LayerSpec::dense(2, Activation::linear));
    m.net = build_network(specs, head_for(family), inputs.shape,
                          derive_seed(seed, hash_string("weights")));
    TrainConfig tc = spec.train;
    tc.seed = derive_seed(seed, hash_string("train"));
    m.history = train(m.net, inputs, targets, loss_for(family), tc);
    return m;
}

Distribution dist_predict(const DistModel& m, const std::vector<double>& row) {
    return dist_predict_rows(m, {row})[0];
}

PointModel train_point_net(const std::vector<std::vector<double>>& rows,
                           const std::vector<double>& obs, const NetSpec& spec, Loss loss,
                           const std::vector<std::string>& feature_names, bool standardize,
                           double target_scale, std::uint64_t seed) {
    if (rows.empty()) throw insufficient_data_error("no training rows");
    if (rows.size() != obs.size())
        throw validation_error("training rows and observations must align");
    if (loss != Loss::mae && loss != Loss::mse)
        throw config_error("point networks train on a point loss (mae or mse)");
    const std::size_t d = series_width(rows);
    if (d != feature_names.size())
        throw validation_error("feature rows do not match the feature names");

    PointModel m;
    m.features = feature_names;
    m.target_scale = target_scale;
    m.scaler = standardize ? fit_scaler(rows) : identity_scaler(d);
    m.n_train = rows.size();

    Batch inputs = make_batch({1, static_cast<int>(d)}, rows);
    apply_scaler_in_place(m.scaler, inputs);
    std::vector<double> targets(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) targets[i] = obs[i] / target_scale;

    std::vector<LayerSpec> specs = spec.hidden;
    specs.push_back(LayerSpec::dense(1, Activation::linear));
    m.net = build_network(specs, HeadTransform::point, inputs.shape,
                          derive_seed(seed, hash_string("weights")));
    TrainConfig tc = spec.train;
    tc.seed = derive_seed(seed, hash_string("train"));
    m.history = train(m.net, inputs, targets, loss, tc);
    return m;
}

std::vector<double> point_predict(const PointModel& m,
                                  const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Batch in;
    in.count = static_cast<int>(rows.size());
    in.shape = {1, static_cast<int>(m.features.size())};
    in.values.reserve(rows.size() * m.features.size());
    for (const auto& row : rows) {
        if (row.size() != m.features.size())
            throw validation_error("feature row width does not match the model");
        const auto scaled = apply_scaler(m.scaler, row);
        in.values.insert(in.values.end(), scaled.begin(), scaled.end());
    }
    const Batch out = forward(m.net, in);
    std::vector<double> vals(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = out.values[i] * m.target_scale;
    return vals;
}

SequenceModel train_sequence_net(const std::vector<LocationSeries>& series, const NetSpec& spec,
                                 Loss loss, const SliceConfig& slices,
                                 const std::vector<std::string>& feature_names, bool standardize,
                                 double target_scale, std::uint64_t seed) {
    if (series.empty()) throw insufficient_data_error("no series to train on");
    if (loss != Loss::mae && loss != Loss::mse)
        throw config_error("sequence networks train on a point loss (mae or mse)");

    std::vector<std::vector<double>> all_rows;
    for (const auto& s : series) {
        if (s.targets.size() != s.features.size())
            throw validation_error("series targets must align with its features");
        all_rows.insert(all_rows.end(), s.features.begin(), s.features.end());
    }
    const std::size_t d = series_width(all_rows);
    if (d != feature_names.size())
        throw validation_error("feature rows do not match the feature names");

    SequenceModel m;
    m.features = feature_names;
    m.slices = slices;
    m.target_scale = target_scale;
    m.scaler = standardize ? fit_scaler(all_rows) : identity_scaler(d);

    // pool complete slices across every location
    Batch inputs;
    inputs.shape = {slices.window_len, static_cast<int>(d)};
    std::vector<double> targets;
    const std::size_t w = static_cast<std::size_t>(slices.window_len);
    std::size_t n_slices = 0;
    for (const auto& s : series) {
        if (s.features.size() < w) continue;  // too short to cut a single slice
        for (const std::size_t start : overlapping_slice_starts(s.features.size(), slices)) {
            bool complete = true;
            for (std::size_t t = 0; t < w && complete; ++t)
                complete = s.targets[start + t].has_value();
            if (!complete) continue;
            for (std::size_t t = 0; t < w; ++t) {
                const auto scaled = apply_scaler(m.scaler, s.features[start + t]);
                inputs.values.insert(inputs.values.end(), scaled.begin(), scaled.end());
                targets.push_back(*s.targets[start + t] / target_scale);
            }
            ++n_slices;
        }
    }
    if (n_slices == 0)
        throw insufficient_data_error("every candidate slice has a missing observation");
    inputs.count = static_cast<int>(n_slices);
    m.n_train = n_slices;

    std::vector<LayerSpec> specs = spec.hidden;
    specs.push_back(LayerSpec::dense(slices.window_len, Activation::linear));
    m.net = build_network(specs, HeadTransform::point, inputs.shape,
                          derive_seed(seed, hash_string("weights")));
    TrainConfig tc = spec.train;
    tc.seed = derive_seed(seed, hash_string("train"));
    m.history = train(m.net, inputs, targets, loss, tc);
    return m;
}

std::vector<double> sequence_predict(const SequenceModel& m,
                                     const std::vector<std::vector<double>>& features) {
    const std::size_t d = series_width(features);
    if (d != m.features.size())
        throw validation_error("feature row width does not match the model");
    std::vector<std::vector<double>> scaled;
    scaled.reserve(features.size());
    for (const auto& row : features) scaled.push_back(apply_scaler(m.scaler, row));

    const SliceSet set = make_disjoint_slices(scaled, m.slices.window_len);
    const Batch out = forward(m.net, set.inputs);
    std::vector<double> vals = stitch_slices(features.size(), set.starts, out);
    for (double& v : vals) v *= m.target_scale;
    return vals;
}

// ----- training orchestration --------------------------------------------------

std::string method_dir_name(Method m, Family f) {
    return method_name(m) + "-" + family_name(f);
}

std::vector<std::string> scopes_for(const Dataset& data, const WindowConfig& cfg) {
    if (cfg.spatial == Spatial::regional) return {"regional"};
    return data.stations;
}

std::vector<Artifact> train_method_scope(const Dataset& data, std::int64_t valid_date,
                                         const std::string& scope, const MethodConfig& cfg) {
    validate_method_config(cfg);
    const bool local = cfg.window.spatial == Spatial::local;
    if (!local && scope != "regional")
        throw config_error("regional configurations train the single scope 'regional'");
    const std::string station = local ? scope : std::string{};
    const bool with_gaps = cfg.method == Method::mlpex;
    const auto idx = rolling_window(data, valid_date, cfg.window, station, with_gaps);

    const std::uint64_t task_seed = derive_seed(cfg.seed, hash_string(method_name(cfg.method)),
                                                hash_string(scope), to_u64(valid_date));
    const std::string dir = artifact_dir(cfg, scope, valid_date);
    switch (cfg.method) {
        case Method::emos:
            return train_emos_task(data, idx, cfg, task_seed, dir, valid_date, scope);
        case Method::mlp_s:
            return train_mlp_s_task(data, idx, cfg, task_seed, dir, valid_date, scope);
        case Method::mlpex:
            return train_mlpex_task(data, idx, cfg, task_seed, dir, valid_date, scope);
    }
    throw config_error("unknown method");
}

std::uint64_t config_hash(const MethodConfig& cfg, std::int64_t valid_date,
                          const std::string& scope) {
    return hash_string(method_config_to_json(cfg).dump() + "|" + format_date(valid_date) + "|" +
                       scope);
}

nlohmann::json manifest_to_json(const MethodConfig& cfg, std::vector<ManifestEntry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : entries) list.push_back({{"path", e.path}, {"hash", e.hash}});
    return {{"format", 1}, {"config", method_config_to_json(cfg)}, {"artifacts", list}};
}

void write_artifacts(const std::string& model_root, const std::vector<Artifact>& artifacts) {
    namespace fs = std::filesystem;
    for (const auto& a : artifacts) {
        const fs::path path = fs::path(model_root) / a.path;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw io_error("cannot create " + path.parent_path().string() + ": " + ec.message());
        std::ofstream out(path);
        if (!out) throw io_error("cannot write " + path.string());
        out << a.doc.dump(2) << '\n';
        if (!out) throw io_error("failed writing " + path.string());
    }
}

std::vector<std::int64_t> init_dates(const Dataset& data) {
    std::set<std::int64_t> dates;
    for (const auto& c : data.cases) dates.insert(c.forecast.init_date());
    return {dates.begin(), dates.end()};
}

TrainRunResult train_dates(const Dataset& data, const MethodConfig& cfg,
                           const std::vector<std::int64_t>& valid_dates, int workers) {
    validate_method_config(cfg);
    if (workers < 1) throw config_error("workers must be at least 1");

    const auto scopes = scopes_for(data, cfg.window);
    struct Task {
        std::int64_t date;
        std::string scope;
    };
    std::vector<Task> tasks;
    for (const std::int64_t date : valid_dates)
        for (const auto& scope : scopes) tasks.push_back({date, scope});

    std::vector<std::vector<Artifact>> results(tasks.size());
    std::vector<std::string> skipped(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};

    const auto run = [&] {
        while (true) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            try {
                results[t] = train_method_scope(data, tasks[t].date, tasks[t].scope, cfg);
            } catch (const insufficient_data_error& e) {
                skipped[t] = format_date(tasks[t].date) + " " + tasks[t].scope + ": " + e.what();
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(tasks.size(), 1));
    if (n_threads <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(run);
        for (auto& th : pool) th.join();
    }

    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    TrainRunResult out;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (auto& a : results[t]) out.artifacts.push_back(std::move(a));
        if (!skipped[t].empty()) out.skipped.push_back(std::move(skipped[t]));
    }
    return out;
}

// ----- prediction ----------------------------------------------------------------

namespace {

struct MlpexModels {
    DistModel dist;
    PointModel aux_mlp;
    SequenceModel aux_c1d;
};

struct ModelCache {
    std::map<std::string, std::pair<Family, EmosParams>> emos;
    std::map<std::string, DistModel> dist;
    std::map<std::string, MlpexModels> mlpex;
};

nlohmann::json load_model_doc(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("missing model document " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": " + e.what());
    }
}

void check_doc_header(const nlohmann::json& doc, const MethodConfig& cfg, const char* kind,
                      const std::string& path) {
    require_doc_field(doc, "kind", kind, path);
    require_doc_field(doc, "method", method_name(cfg.method), path);
    require_doc_field(doc, "family", family_name(cfg.family), path);
    require_doc_field(doc, "variable", variable_name(cfg.variable), path);
}

const std::pair<Family, EmosParams>& cached_emos(ModelCache& cache, const std::string& path,
                                                 const MethodConfig& cfg) {
    const auto it = cache.emos.find(path);
    if (it != cache.emos.end()) return it->second;
    const nlohmann::json doc = load_model_doc(path);
    check_doc_header(doc, cfg, "emos", path);
    try {
        auto params = emos_params_from_json(cfg.family, doc.at("params"));
        return cache.emos.emplace(path, std::make_pair(cfg.family, std::move(params)))
            .first->second;
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": malformed model document: " + e.what());
    }
}

const DistModel& cached_dist(ModelCache& cache, const std::string& path, const MethodConfig& cfg) {
    const auto it = cache.dist.find(path);
    if (it != cache.dist.end()) return it->second;
    const nlohmann::json doc = load_model_doc(path);
    check_doc_header(doc, cfg, "dist-net", path);
    return cache.dist.emplace(path, dist_model_from_json(doc, path)).first->second;
}

const MlpexModels& cached_mlpex(ModelCache& cache, const std::string& path,
                                const MethodConfig& cfg) {
    const auto it = cache.mlpex.find(path);
    if (it != cache.mlpex.end()) return it->second;
    const nlohmann::json doc = load_model_doc(path);
    check_doc_header(doc, cfg, "dist-net", path);
    if (!doc.contains("aux"))
        throw io_error(path + ": malformed model document: missing auxiliary networks");
    MlpexModels m{dist_model_from_json(doc, path),
                  point_model_from_json(doc.at("aux").at("mlp"), path),
                  sequence_model_from_json(doc.at("aux").at("c1d"), path)};
    return cache.mlpex.emplace(path, std::move(m)).first->second;
}

}  // namespace

std::vector<CalibratedForecast> predict_forecasts(const std::vector<EnsembleForecast>& forecasts,
                                                  const MethodConfig& cfg,
                                                  const std::string& model_root) {
    validate_method_config(cfg);
    std::vector<std::size_t> ord(forecasts.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = forecasts[a];
        const auto& fb = forecasts[b];
        return std::tie(fa.station, fa.init_time, fa.lead_minutes) <
               std::tie(fb.station, fb.init_time, fb.lead_minutes);
    });
    for (std::size_t k = 1; k < ord.size(); ++k) {
        const auto& prev = forecasts[ord[k - 1]];
        const auto& cur = forecasts[ord[k]];
        if (prev.station == cur.station && prev.init_time == cur.init_time &&
            prev.lead_minutes == cur.lead_minutes)
            throw validation_error("duplicate forecast for " + cur.station + " " +
                                   format_iso_utc(cur.init_time) + " lead " +
                                   std::to_string(cur.lead_minutes));
    }

    ModelCache cache;
    std::vector<CalibratedForecast> out;
    out.reserve(forecasts.size());

    std::size_t g = 0;
    while (g < ord.size()) {
        std::size_t e = g + 1;
        while (e < ord.size() &&
               forecasts[ord[e]].station == forecasts[ord[g]].station &&
               forecasts[ord[e]].init_time == forecasts[ord[g]].init_time)
            ++e;
        const std::string& station = forecasts[ord[g]].station;
        const std::int64_t init_time = forecasts[ord[g]].init_time;
        const std::int64_t date = day_of(init_time);
        const std::string scope =
            cfg.window.spatial == Spatial::local ? station : std::string("regional");
        const std::string dir = model_root + "/" + artifact_dir(cfg, scope, date);

        const auto group_case = [&](std::size_t k) -> const EnsembleForecast& {
            return forecasts[ord[g + k]];
        };
        const std::size_t n = e - g;

        if (cfg.method == Method::emos) {
            for (std::size_t k = 0; k < n; ++k) {
                const auto& fc = group_case(k);
                const auto& [family, params] =
                    cached_emos(cache, dir + "/" + lead_file(fc.lead_minutes), cfg);
                CalibratedForecast p;
                p.station = fc.station;
                p.init_time = fc.init_time;
                p.lead_minutes = fc.lead_minutes;
                p.family = family;
                p.dist = emos_predict(family, params, make_emos_case(fc.members, 0.0));
                out.push_back(std::move(p));
            }
        } else if (cfg.method == Method::mlp_s) {
            for (int pool = 0; pool < 2; ++pool) {
                std::vector<std::size_t> ks;
                for (std::size_t k = 0; k < n; ++k)
                    if (half_day_pool(group_case(k).lead_minutes) == pool) ks.push_back(k);
                if (ks.empty()) continue;
                const DistModel& m =
                    cached_dist(cache, dir + "/" + pool_tag(pool) + ".json", cfg);
                std::vector<std::vector<double>> rows;
                rows.reserve(ks.size());
                for (const std::size_t k : ks) rows.push_back(case_features(m.features, group_case(k)));
                const auto dists = dist_predict_rows(m, rows);
                for (std::size_t j = 0; j < ks.size(); ++j) {
                    const auto& fc = group_case(ks[j]);
                    CalibratedForecast p;
                    p.station = fc.station;
                    p.init_time = fc.init_time;
                    p.lead_minutes = fc.lead_minutes;
                    p.family = cfg.family;
                    p.dist = dists[j];
                    out.push_back(std::move(p));
                }
            }
        } else {
            // the sequence auxiliary slices a complete run, so partial runs are
            // not predictable with the extended method
            bool complete_run = n >= 2 && group_case(0).lead_minutes == 0;
            const std::int64_t step = n >= 2 ? group_case(1).lead_minutes : 0;
            if (complete_run && step > 0) {
                for (std::size_t k = 0; k < n && complete_run; ++k)
                    complete_run = group_case(k).lead_minutes == static_cast<std::int64_t>(k) * step;
                if (complete_run)
                    complete_run = group_case(n - 1).lead_minutes + step == horizon_minutes;
            } else {
                complete_run = false;
            }
            if (!complete_run)
                throw validation_error("the extended method needs the complete lead grid of " +
                                       station + " " + format_iso_utc(init_time));

            const MlpexModels& pool0 = cached_mlpex(cache, dir + "/" + pool_tag(0) + ".json", cfg);
            const MlpexModels& pool1 = cached_mlpex(cache, dir + "/" + pool_tag(1) + ".json", cfg);

            std::vector<std::vector<double>> mlp_rows, c1d_rows;
            mlp_rows.reserve(n);
            c1d_rows.reserve(n);
            for (std::size_t k = 0; k < n; ++k) {
                mlp_rows.push_back(case_features(pool0.aux_mlp.features, group_case(k)));
                c1d_rows.push_back(case_features(pool0.aux_c1d.features, group_case(k)));
            }
            const std::vector<double> aux_mlp_vals = point_predict(pool0.aux_mlp, mlp_rows);
            const std::vector<double> aux_c1d_vals = sequence_predict(pool0.aux_c1d, c1d_rows);

            for (int pool = 0; pool < 2; ++pool) {
                const DistModel& m = pool == 0 ? pool0.dist : pool1.dist;
                std::vector<std::size_t> ks;
                for (std::size_t k = 0; k < n; ++k)
                    if (half_day_pool(group_case(k).lead_minutes) == pool) ks.push_back(k);
                std::vector<std::vector<double>> rows;
                rows.reserve(ks.size());
                for (const std::size_t k : ks) {
                    const auto& fc = group_case(k);
                    const auto summary = summarize(fc.members);
                    std::vector<double> row;
                    row.reserve(m.features.size());
                    for (const auto& name : m.features) {
                        if (name == "aux_mlp")
                            row.push_back(aux_mlp_vals[k]);
                        else if (name == "aux_c1d")
                            row.push_back(aux_c1d_vals[k]);
                        else
                            row.push_back(
                                feature_value(name, fc.members, summary, fc.lead_minutes));
                    }
                    rows.push_back(std::move(row));
                }
                const auto dists = dist_predict_rows(m, rows);
                for (std::size_t j = 0; j < ks.size(); ++j) {
                    const auto& fc = group_case(ks[j]);
                    CalibratedForecast p;
                    p.station = fc.station;
                    p.init_time = fc.init_time;
                    p.lead_minutes = fc.lead_minutes;
                    p.family = cfg.family;
                    p.dist = dists[j];
                    p.aux_mlp = aux_mlp_vals[ks[j]];
                    p.aux_c1d = aux_c1d_vals[ks[j]];
                    out.push_back(std::move(p));
                }
            }
            // group output must stay in lead order across the two pools
            std::sort(out.end() - static_cast<std::ptrdiff_t>(n), out.end(),
                      [](const CalibratedForecast& a, const CalibratedForecast& b) {
                          return a.lead_minutes < b.lead_minutes;
                      });
        }
        g = e;
    }
    return out;
}

// ----- prediction archives --------------------------------------------------------

void write_predictions_csv(std::ostream& out, const std::vector<CalibratedForecast>& preds) {
    out << predictions_header << '\n';
    for (const auto& p : preds) {
        const auto params = distribution_params(p.dist);
        out << p.station << ',' << format_iso_utc(p.init_time) << ',' << p.lead_minutes << ','
            << family_name(p.family) << ',' << format_double(params[0]) << ','
            << format_double(params[1]) << ',';
        if (p.aux_mlp) out << format_double(*p.aux_mlp);
        out << ',';
        if (p.aux_c1d) out << format_double(*p.aux_c1d);
        out << '\n';
    }
}

void write_predictions_csv(const std::string& path, const std::vector<CalibratedForecast>& preds) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    write_predictions_csv(out, preds);
    if (!out) throw io_error("failed writing " + path);
}

std::vector<CalibratedForecast> read_predictions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw schema_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != predictions_header)
        throw schema_error(path + ": expected header '" + predictions_header + "'");

    std::vector<CalibratedForecast> preds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (fields.size() != 8)
            throw schema_error(where + ": expected 8 fields, got " +
                               std::to_string(fields.size()));
        CalibratedForecast p;
        p.station = fields[0];
        if (p.station.empty()) throw schema_error(where + ": empty station id");
        p.init_time = parse_iso_utc(fields[1]);
        p.lead_minutes = parse_int_field(fields[2], where);
        if (p.lead_minutes < 0 || p.lead_minutes >= horizon_minutes)
            throw validation_error(where + ": lead " + fields[2] + " outside the horizon");
        p.family = family_from_name(fields[3]);
        const double p1 = parse_double_field(fields[4], where);
        const double p2 = parse_double_field(fields[5], where);
        p.dist = make_distribution(p.family, p1, p2);
        if (!fields[6].empty()) p.aux_mlp = parse_double_field(fields[6], where);
        if (!fields[7].empty()) p.aux_c1d = parse_double_field(fields[7], where);
        preds.push_back(std::move(p));
    }
    return preds;
}

AlignedPredictions align_predictions(const Dataset& data,
                                     const std::vector<CalibratedForecast>& preds) {
    if (preds.empty()) throw insufficient_data_error("no predictions to align");
    std::vector<std::pair<std::size_t, std::size_t>> hits;  // (case index, prediction index)
    hits.reserve(preds.size());
    for (std::size_t p = 0; p < preds.size(); ++p) {
        const auto& pr = preds[p];
        const auto key = std::make_tuple(std::cref(pr.station), pr.init_time, pr.lead_minutes);
        const auto it = std::lower_bound(
            data.cases.begin(), data.cases.end(), key, [](const ForecastCase& c, const auto& k) {
                return std::tie(c.forecast.station, c.forecast.init_time,
                                c.forecast.lead_minutes) <
                       std::tie(std::get<0>(k), std::get<1>(k), std::get<2>(k));
            });
        if (it == data.cases.end() || it->forecast.station != pr.station ||
            it->forecast.init_time != pr.init_time || it->forecast.lead_minutes != pr.lead_minutes)
            throw validation_error("prediction for " + pr.station + " " +
                                   format_iso_utc(pr.init_time) + " lead " +
                                   std::to_string(pr.lead_minutes) + " matches no forecast case");
        hits.emplace_back(static_cast<std::size_t>(it - data.cases.begin()), p);
    }
    std::sort(hits.begin(), hits.end());
    for (std::size_t k = 1; k < hits.size(); ++k)
        if (hits[k].first == hits[k - 1].first) {
            const auto& pr = preds[hits[k].second];
            throw validation_error("duplicate prediction for " + pr.station + " " +
                                   format_iso_utc(pr.init_time) + " lead " +
                                   std::to_string(pr.lead_minutes));
        }
    AlignedPredictions aligned;
    aligned.case_idx.reserve(hits.size());
    aligned.dists.reserve(hits.size());
    for (const auto& [case_idx, pred_idx] : hits) {
        aligned.case_idx.push_back(case_idx);
        aligned.dists.push_back(preds[pred_idx].dist);
    }
    return aligned;
}

Dataset subset_dataset(const Dataset& data, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.variable = data.variable;
    out.cadence_minutes = data.cadence_minutes;
    out.cases_per_day = data.cases_per_day;
    out.cases.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= data.cases.size()) throw validation_error("case index out of range");
        if (k > 0 && idx[k] <= idx[k - 1])
            throw validation_error("case indices must be ascending and distinct");
        out.cases.push_back(data.cases[idx[k]]);
    }
    for (const auto& c : out.cases)
        if (out.stations.empty() || out.stations.back() != c.forecast.station)
            out.stations.push_back(c.forecast.station);
    out.stats.n_forecasts = out.cases.size();
    for (const auto& c : out.cases)
        c.complete() ? ++out.stats.n_complete : ++out.stats.n_missing;
    out.stats.n_observations = out.stats.n_complete;
    return out;
}

}  // namespace enscal
