#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "enscal/core_data.hpp"
#include "enscal/pipeline.hpp"
#include "enscal/synthetic.hpp"
#include "enscal/verification.hpp"

namespace {

using namespace enscal;

int resolve_cadence(int flag_value, Variable v) {
    return flag_value > 0 ? flag_value : default_cadence(v);
}

Dataset load_dataset(const std::string& forecasts, const std::string& observations, Variable v,
                     int cadence) {
    return join_cases(read_forecast_csv(forecasts), read_observation_csv(observations), v,
                      resolve_cadence(cadence, v));
}

// Shared --config/--variable/--method/... flags of train and predict. The base
// configuration comes from --config when given, otherwise from the built-in
// preset of the target variable; individual flags then override it.
struct ConfigFlags {
    std::string config_path;
    std::string variable = "wind";
    std::string method;
    std::string family;
    std::string spatial;
    int train_days = 0;
    double target_scale = 0.0;
    std::uint64_t seed = 0;

    CLI::Option* variable_opt = nullptr;
    CLI::Option* method_opt = nullptr;
    CLI::Option* family_opt = nullptr;
    CLI::Option* spatial_opt = nullptr;
    CLI::Option* train_days_opt = nullptr;
    CLI::Option* target_scale_opt = nullptr;
    CLI::Option* seed_opt = nullptr;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--config", config_path,
                       "method configuration file (see presets/); flags override it");
        variable_opt = cmd.add_option("--variable", variable, "target variable")
                           ->check(CLI::IsMember({"wind", "ghi"}));
        method_opt = cmd.add_option("--method", method, "calibration method")
                         ->check(CLI::IsMember({"emos", "mlp-s", "mlpex"}));
        family_opt = cmd.add_option("--family", family, "predictive distribution family")
                         ->check(CLI::IsMember({"tn", "ln", "cl0", "cn0"}));
        spatial_opt = cmd.add_option("--spatial", spatial, "training scope")
                          ->check(CLI::IsMember({"local", "regional"}));
        train_days_opt = cmd.add_option("--train-days", train_days, "rolling window length in days")
                             ->check(CLI::PositiveNumber);
        target_scale_opt = cmd.add_option("--target-scale", target_scale,
                                          "network training unit (observations are divided by it)");
        seed_opt = cmd.add_option("--seed", seed, "base seed");
    }

    MethodConfig resolve() const {
        MethodConfig cfg = config_path.empty() ? builtin_preset(variable_from_name(variable))
                                               : load_method_config(config_path);
        if (*variable_opt && !config_path.empty()) cfg.variable = variable_from_name(variable);
        if (*method_opt) {
            cfg.method = method_from_name(method);
            // pooling follows the method: per-lead fits vs half-day networks
            cfg.window.pooling = cfg.method == Method::emos ? Pooling::per_lead_time
                                                            : Pooling::half_day_pooled;
        }
        if (*family_opt) cfg.family = family_from_name(family);
        if (*spatial_opt) cfg.window.spatial = spatial_from_name(spatial);
        if (*train_days_opt) cfg.window.train_days = train_days;
        if (*target_scale_opt) cfg.target_scale = target_scale;
        if (*seed_opt) cfg.seed = seed;
        validate_method_config(cfg);
        return cfg;
    }
};

std::vector<std::int64_t> dates_in_range(std::vector<std::int64_t> dates, const std::string& from,
                                         const std::string& to) {
    std::erase_if(dates, [&](std::int64_t d) {
        return (!from.empty() && d < parse_date(from)) || (!to.empty() && d > parse_date(to));
    });
    if (dates.empty()) throw config_error("no forecast init dates in the requested range");
    return dates;
}

void create_parent_dirs(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
}

// ----- simulate ----------------------------------------------------------

struct SimulateArgs {
    std::string out_dir;
    std::string variable = "wind";
    std::string start = "2021-01-01";
    int stations = 2;
    int days = 90;
    int cadence = 0;
    double bias = 0.0;
    double deflation = 1.0;
    double heterogeneity = 0.0;
    double quad = 0.0;
    std::uint64_t seed = 1;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
    CLI::App& cmd = *app.add_subcommand("simulate", "generate a synthetic forecast archive");
    cmd.add_option("--out", a.out_dir, "output directory")->required();
    cmd.add_option("--variable", a.variable, "target variable")
        ->check(CLI::IsMember({"wind", "ghi"}));
    cmd.add_option("--stations", a.stations, "number of stations")->check(CLI::PositiveNumber);
    cmd.add_option("--days", a.days, "number of forecast days")->check(CLI::PositiveNumber);
    cmd.add_option("--cadence", a.cadence, "lead cadence in minutes (0 = variable default)");
    cmd.add_option("--start", a.start, "first init date (YYYY-MM-DD)");
    cmd.add_option("--bias", a.bias, "additive ensemble bias");
    cmd.add_option("--deflation", a.deflation, "ensemble spread factor in (0,1]");
    cmd.add_option("--heterogeneity", a.heterogeneity, "control-member spread advantage [0,1)");
    cmd.add_option("--quad", a.quad, "quadratic truth term hidden from the ensemble");
    cmd.add_option("--seed", a.seed, "scenario seed");
}

int cmd_simulate(const SimulateArgs& a) {
    ScenarioConfig cfg = default_scenario(variable_from_name(a.variable));
    cfg.n_stations = a.stations;
    cfg.n_days = a.days;
    cfg.cadence_minutes = a.cadence;
    cfg.start_date = a.start;
    cfg.bias = a.bias;
    cfg.deflation = a.deflation;
    cfg.heterogeneity = a.heterogeneity;
    cfg.quad = a.quad;
    cfg.seed = a.seed;

    const Scenario sc = generate(cfg);
    std::filesystem::create_directories(a.out_dir);
    std::vector<EnsembleForecast> forecasts;
    forecasts.reserve(sc.data.cases.size());
    std::vector<Observation> observations;
    std::set<std::pair<std::string, std::int64_t>> seen;  // runs overlap in valid time
    for (const auto& c : sc.data.cases) {
        forecasts.push_back(c.forecast);
        if (seen.emplace(c.forecast.station, c.forecast.valid_time()).second)
            observations.push_back({c.forecast.station, c.forecast.valid_time(), c.obs});
    }
    write_forecast_csv(a.out_dir + "/forecasts.csv", forecasts);
    write_observation_csv(a.out_dir + "/observations.csv", observations);
    write_truth_csv(a.out_dir + "/truth.csv", sc.data, sc.truth);
    std::cout << "wrote " << forecasts.size() << " forecasts (" << a.stations << " stations x "
              << a.days << " days) to " << a.out_dir << "\n";
    return 0;
}

// ----- train --------------------------------------------------------------

struct TrainArgs {
    std::string forecasts, observations, model_dir;
    std::string from, to;
    int cadence = 0;
    int workers = 0;
    ConfigFlags config;
};

void add_train(CLI::App& app, TrainArgs& a) {
    CLI::App& cmd = *app.add_subcommand("train", "fit models for each valid date");
    cmd.add_option("--forecasts", a.forecasts, "forecast csv")->required();
    cmd.add_option("--observations", a.observations, "observation csv")->required();
    cmd.add_option("--model-dir", a.model_dir, "model artifact root")->required();
    cmd.add_option("--from", a.from, "first valid date (default: first init date)");
    cmd.add_option("--to", a.to, "last valid date (default: last init date)");
    cmd.add_option("--cadence", a.cadence, "lead cadence in minutes (0 = variable default)");
    cmd.add_option("--workers", a.workers, "training thread count (0 = hardware)");
    a.config.add_to(cmd);
}

int cmd_train(const TrainArgs& a) {
    const MethodConfig cfg = a.config.resolve();
    const Dataset data = load_dataset(a.forecasts, a.observations, cfg.variable, a.cadence);
    const auto dates = dates_in_range(init_dates(data), a.from, a.to);
    const int workers =
        a.workers > 0 ? a.workers : std::max(1u, std::thread::hardware_concurrency());

    const TrainRunResult run = train_dates(data, cfg, dates, workers);
    for (const auto& s : run.skipped) std::cerr << "warning: skipped " << s << "\n";
    if (run.artifacts.empty()) throw insufficient_data_error("every training date was skipped");

    write_artifacts(a.model_dir, run.artifacts);
    std::vector<ManifestEntry> entries;
    entries.reserve(run.artifacts.size());
    for (const auto& art : run.artifacts)
        entries.push_back({art.path, config_hash(cfg, art.valid_date, art.scope)});
    const std::string manifest_path =
        a.model_dir + "/manifest-" + method_dir_name(cfg.method, cfg.family) + ".json";
    create_parent_dirs(manifest_path);
    std::ofstream out(manifest_path);
    if (!out) throw io_error("cannot write " + manifest_path);
    out << manifest_to_json(cfg, std::move(entries)).dump(2) << "\n";

    std::cout << "trained " << run.artifacts.size() << " artifacts over " << dates.size()
              << " dates (" << run.skipped.size() << " skipped) to " << a.model_dir << "\n";
    return 0;
}

// ----- predict --------------------------------------------------------------

struct PredictArgs {
    std::string forecasts, model_dir, out;
    std::string from, to;
    ConfigFlags config;
};

void add_predict(CLI::App& app, PredictArgs& a) {
    CLI::App& cmd = *app.add_subcommand("predict", "apply trained models to forecasts");
    cmd.add_option("--forecasts", a.forecasts, "forecast csv")->required();
    cmd.add_option("--model-dir", a.model_dir, "model artifact root")->required();
    cmd.add_option("--out", a.out, "prediction csv to write")->required();
    cmd.add_option("--from", a.from, "first init date to predict");
    cmd.add_option("--to", a.to, "last init date to predict");
    a.config.add_to(cmd);
}

int cmd_predict(const PredictArgs& a) {
    const MethodConfig cfg = a.config.resolve();
    std::vector<EnsembleForecast> fcs = read_forecast_csv(a.forecasts);
    if (!a.from.empty() || !a.to.empty()) {
        std::erase_if(fcs, [&](const EnsembleForecast& f) {
            const std::int64_t d = f.init_date();
            return (!a.from.empty() && d < parse_date(a.from)) ||
                   (!a.to.empty() && d > parse_date(a.to));
        });
    }
    if (fcs.empty()) throw config_error("no forecasts in the requested range");

    const auto preds = predict_forecasts(fcs, cfg, a.model_dir);
    create_parent_dirs(a.out);
    write_predictions_csv(a.out, preds);
    std::cout << "wrote " << preds.size() << " predictions to " << a.out << "\n";
    return 0;
}

// ----- verify -----------------------------------------------------------------

struct VerifyArgs {
    std::string forecasts, observations, out_dir;
    std::string variable = "wind";
    std::vector<std::string> predictions;
    int cadence = 0;
    double min_obs = 0.0;
    double nominal = default_nominal_coverage;
    std::uint64_t seed = 1;
    CLI::Option* min_obs_opt = nullptr;
};

void add_verify(CLI::App& app, VerifyArgs& a) {
    CLI::App& cmd = *app.add_subcommand("verify", "score prediction files against observations");
    cmd.add_option("--forecasts", a.forecasts, "forecast csv")->required();
    cmd.add_option("--observations", a.observations, "observation csv")->required();
    cmd.add_option("--predictions", a.predictions,
                   "prediction csv as name=path (bare paths use the file stem)")
        ->required();
    cmd.add_option("--out-dir", a.out_dir, "report directory")->required();
    cmd.add_option("--variable", a.variable, "target variable")
        ->check(CLI::IsMember({"wind", "ghi"}));
    cmd.add_option("--cadence", a.cadence, "lead cadence in minutes (0 = variable default)");
    a.min_obs_opt = cmd.add_option("--min-obs", a.min_obs,
                                   "keep only cases with observation >= threshold");
    cmd.add_option("--nominal", a.nominal, "central interval coverage level")
        ->check(CLI::Range(0.01, 0.999));
    cmd.add_option("--seed", a.seed, "seed for randomized ranks and censored-point pit");
}

int cmd_verify(const VerifyArgs& a) {
    const Dataset data =
        load_dataset(a.forecasts, a.observations, variable_from_name(a.variable), a.cadence);

    std::vector<MethodPredictions> methods;
    std::vector<std::size_t> ref_idx;
    for (const auto& spec : a.predictions) {
        const auto eq = spec.find('=');
        const std::string name =
            eq == std::string::npos ? std::filesystem::path(spec).stem().string()
                                    : spec.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
        if (name.empty() || path.empty())
            throw config_error("bad --predictions value: " + spec);
        if (name == "raw")
            throw config_error("the method name \"raw\" is reserved for the ensemble itself");
        for (const auto& m : methods)
            if (m.method == name) throw config_error("duplicate method name: " + name);

        const AlignedPredictions aligned = align_predictions(data, read_predictions_csv(path));
        if (methods.empty())
            ref_idx = aligned.case_idx;
        else if (aligned.case_idx != ref_idx)
            throw validation_error("prediction files cover different cases: " + path);
        methods.push_back({name, aligned.dists});
    }

    VerificationOptions opts;
    opts.nominal = a.nominal;
    if (*a.min_obs_opt) opts.min_obs = a.min_obs;
    opts.seed = a.seed;
    const VerificationReport report = build_report(subset_dataset(data, ref_idx), methods, opts);

    std::filesystem::create_directories(a.out_dir);
    write_report_csv(a.out_dir + "/report.csv", report);
    write_histogram_csv(a.out_dir + "/histograms.csv", report);
    write_uniformity_csv(a.out_dir + "/uniformity.csv", report);
    std::cout << "scored " << report.n_cases << " cases, " << methods.size() + 1 << " methods, "
              << report.rows.size() << " report rows to " << a.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ensemble forecast calibration"};
    app.require_subcommand(1);

    SimulateArgs sim;
    TrainArgs train;
    PredictArgs predict;
    VerifyArgs verify;
    add_simulate(app, sim);
    add_train(app, train);
    add_predict(app, predict);
    add_verify(app, verify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage problems are config errors
    }

    try {
        if (app.got_subcommand("simulate")) return cmd_simulate(sim);
        if (app.got_subcommand("train")) return cmd_train(train);
        if (app.got_subcommand("predict")) return cmd_predict(predict);
        return cmd_verify(verify);
    } catch (const enscal::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const enscal::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
