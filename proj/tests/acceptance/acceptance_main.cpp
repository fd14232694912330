// End-to-end acceptance checks for the calibration toolkit. Each criterion
// prints one [PASS]/[FAIL] line; the process exits nonzero if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "enscal/common.hpp"
#include "enscal/core_data.hpp"
#include "enscal/distributions.hpp"
#include "enscal/emos.hpp"
#include "enscal/ensemble_stats.hpp"
#include "enscal/neuralnet.hpp"
#include "enscal/pipeline.hpp"
#include "enscal/rng.hpp"
#include "enscal/synthetic.hpp"
#include "enscal/verification.hpp"

using namespace enscal;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

struct Outcome {
    bool ok = false;
    std::string detail;
};

fs::path work_root() {
    static const fs::path root = [] {
        const fs::path p = fs::temp_directory_path() / "enscal-acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string day(int n) {  // n-th day of the default scenario start date
    return format_date(parse_date("2021-01-01") + n - 1);
}

// ----- 1: closed-form crps vs numeric integration ---------------------------

double integrate_segment(const Distribution& d, double a, double b, bool upper, int n) {
    if (b <= a) return 0.0;
    const double h = (b - a) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double F = cdf(d, a + h * i);
        const double g = upper ? 1.0 - F : F;
        sum += (i == 0 || i == n ? 0.5 : 1.0) * g * g;
    }
    return sum * h;
}

// crps as the integrated squared distance between the predictive cdf and the
// observation step function, split at the observation so each half is smooth
double crps_numeric(const Distribution& d, double x) {
    const double q_hi = quantile(d, 1.0 - 1e-9);
    const double spread = std::max(q_hi - quantile(d, 0.5), 1e-3);
    const double upper_limit = std::max(x, q_hi) + 0.5 * spread + 1.0;
    return integrate_segment(d, 0.0, x, false, 100000) +
           integrate_segment(d, x, upper_limit, true, 100000);
}

Outcome crit_closed_forms() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(91101);
    double worst = 0.0;
    int n_pairs = 0;
    for (const Family family : {Family::tn, Family::ln, Family::cl0, Family::cn0}) {
        for (int rep = 0; rep < 110; ++rep) {
            Distribution d;
            switch (family) {
                case Family::tn:
                    d = make_distribution(family, rng.uniform(-1.0, 8.0), rng.uniform(0.3, 3.0));
                    break;
                case Family::ln: {
                    const double m = rng.uniform(0.5, 8.0);
                    const double cv = rng.uniform(0.2, 1.2);
                    d = make_distribution(family, m, (cv * m) * (cv * m));
                    break;
                }
                default:
                    d = make_distribution(family, rng.uniform(-2.0, 6.0), rng.uniform(0.5, 3.0));
            }
            const double x = rep % 10 == 9 && (family == Family::cl0 || family == Family::cn0)
                                 ? 0.0
                                 : quantile(d, rng.uniform(0.001, 0.999));
            const double closed = crps(d, x);
            const double numeric = crps_numeric(d, x);
            worst = std::max(worst, std::abs(closed - numeric) / std::max(numeric, 1e-12));
            ++n_pairs;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-5 && secs < 60.0,
            fmt("max rel err %.2e over %d pairs in %.1fs", worst, n_pairs, secs)};
}

// ----- 2: analytic gradients vs central finite differences -------------------

double rel_gap(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(std::abs(numeric), 0.05);
}

double crit_grad_distributions(Rng& rng) {
    double worst = 0.0;
    for (const Family family : {Family::tn, Family::ln, Family::cl0, Family::cn0}) {
        for (int rep = 0; rep < 50; ++rep) {
            double p1 = 0.0, p2 = 0.0;
            if (family == Family::ln) {
                p1 = rng.uniform(0.5, 6.0);
                const double cv = rng.uniform(0.3, 1.0);
                p2 = (cv * p1) * (cv * p1);
            } else {
                p1 = rng.uniform(-1.0, 6.0);
                p2 = rng.uniform(0.4, 2.5);
            }
            const Distribution d = make_distribution(family, p1, p2);
            const double x = quantile(d, rng.uniform(0.05, 0.95));
            const auto analytic = crps_grad(d, x);
            for (int k = 0; k < 2; ++k) {
                const double h = 1e-5 * std::max(1.0, std::abs(k == 0 ? p1 : p2));
                const double lo1 = k == 0 ? p1 - h : p1, hi1 = k == 0 ? p1 + h : p1;
                const double lo2 = k == 1 ? p2 - h : p2, hi2 = k == 1 ? p2 + h : p2;
                const double fd = (crps(make_distribution(family, hi1, hi2), x) -
                                   crps(make_distribution(family, lo1, lo2), x)) /
                                  (2.0 * h);
                worst = std::max(worst, rel_gap(analytic[k], fd));
            }
        }
    }
    return worst;
}

struct NetTemplate {
    Shape input;
    std::vector<LayerSpec> specs;
    HeadTransform head;
    Loss loss;
};

std::vector<NetTemplate> gradient_templates() {
    std::vector<NetTemplate> t;
    t.push_back({{1, 3},
                 {LayerSpec::dense(5, Activation::elu), LayerSpec::dense(2)},
                 HeadTransform::tn_exp_exp,
                 Loss::crps_tn});
    t.push_back({{1, 2},
                 {LayerSpec::normalization(), LayerSpec::dense(4, Activation::relu),
                  LayerSpec::dense(2)},
                 HeadTransform::cn0_cube_exp,
                 Loss::crps_cn0});
    t.push_back({{1, 3},
                 {LayerSpec::dense(6, Activation::elu), LayerSpec::dense(2)},
                 HeadTransform::ln_moments,
                 Loss::crps_ln});
    t.push_back({{1, 2},
                 {LayerSpec::dense(4, Activation::exponential), LayerSpec::dense(3)},
                 HeadTransform::point,
                 Loss::mse});
    t.push_back({{8, 2},
                 {LayerSpec::conv1d(4, 3, Activation::relu), LayerSpec::pool1d(PoolMode::max, 2),
                  LayerSpec::flatten(), LayerSpec::dense(2)},
                 HeadTransform::tn_exp_exp,
                 Loss::crps_tn});
    t.push_back({{8, 3},
                 {LayerSpec::conv1d(3, 3, Activation::elu), LayerSpec::pool1d(PoolMode::avg, 2),
                  LayerSpec::conv1d(2, 2, Activation::relu), LayerSpec::flatten(),
                  LayerSpec::dense(2)},
                 HeadTransform::cn0_cube_exp,
                 Loss::crps_cn0});
    t.push_back({{6, 2},
                 {LayerSpec::normalization(), LayerSpec::conv1d(3, 2, Activation::elu),
                  LayerSpec::flatten(), LayerSpec::dense(6)},
                 HeadTransform::point,
                 Loss::mae});
    t.push_back({{6, 3},
                 {LayerSpec::flatten(), LayerSpec::dense(5, Activation::elu),
                  LayerSpec::dense(2)},
                 HeadTransform::ln_moments,
                 Loss::crps_ln});
    return t;
}

double crit_grad_networks(Rng& rng) {
    const auto templates = gradient_templates();
    double worst = 0.0;
    for (int cfg_idx = 0; cfg_idx < 50; ++cfg_idx) {
        const NetTemplate& t = templates[cfg_idx % templates.size()];
        Network net = build_network(t.specs, t.head, t.input, 7000 + cfg_idx);

        const int n = 3 + cfg_idx % 3;
        Batch in;
        in.count = n;
        in.shape = t.input;
        for (int i = 0; i < n * t.input.size(); ++i) in.values.push_back(0.3 * rng.normal());
        const int width = net.output_width();
        std::vector<double> targets;
        const bool point = t.head == HeadTransform::point;
        for (int i = 0; i < (point ? n * width : n); ++i)
            targets.push_back(point ? rng.uniform(-1.0, 1.0) : rng.uniform(0.5, 3.0));

        double loss_value = 0.0;
        const Gradients grads = compute_gradients(net, in, t.loss, targets, false, loss_value);
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            for (int part = 0; part < 2; ++part) {
                auto& params = part == 0 ? net.layers[li].weights : net.layers[li].bias;
                const auto& analytic = part == 0 ? grads.weights[li] : grads.bias[li];
                for (std::size_t pi = 0; pi < params.size(); ++pi) {
                    const double saved = params[pi];
                    const double h = 1e-5 * std::max(1.0, std::abs(saved));
                    params[pi] = saved + h;
                    const double up = evaluate_loss(net, t.loss, in, targets);
                    params[pi] = saved - h;
                    const double down = evaluate_loss(net, t.loss, in, targets);
                    params[pi] = saved;
                    worst = std::max(worst, rel_gap(analytic[pi], (up - down) / (2.0 * h)));
                }
            }
        }
    }
    return worst;
}

Outcome crit_gradients() {
    Rng rng(91202);
    const double worst_dist = crit_grad_distributions(rng);
    const double worst_net = crit_grad_networks(rng);
    const double worst = std::max(worst_dist, worst_net);
    return {worst <= 1e-4,
            fmt("max rel gap %.2e (losses %.2e, layers %.2e)", worst, worst_dist, worst_net)};
}

// ----- 3: near-degenerate scale reduces crps to absolute error ---------------

Outcome crit_degenerate() {
    struct Probe {
        Family family;
        double p1, p2, point;
    };
    const std::vector<Probe> probes{
        {Family::tn, 3.0, 1e-8, 3.0},    {Family::ln, 2.0, 1e-16, 2.0},
        {Family::cl0, 2.0, 1e-8, 2.0},   {Family::cn0, 2.0, 1e-8, 2.0},
        {Family::cl0, -1.0, 1e-8, 0.0},  {Family::cn0, -1.0, 1e-8, 0.0},
    };
    double worst = 0.0;
    for (const auto& p : probes) {
        const Distribution d = make_distribution(p.family, p.p1, p.p2);
        for (const double x : {0.0, 1.0, p.point, p.point + 2.5})
            worst = std::max(worst, std::abs(crps(d, x) - std::abs(x - p.point)));
    }
    return {worst <= 1e-6, fmt("max |crps - abs err| %.2e", worst)};
}

// ----- 4: ensemble crps identities -------------------------------------------

double crps_step_integral(const Members& members, double x) {
    std::vector<double> pts(members.begin(), members.end());
    pts.push_back(x);
    std::sort(pts.begin(), pts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const double a = pts[i], b = pts[i + 1];
        if (b <= a) continue;
        const double mid = 0.5 * (a + b);
        double f = 0.0;
        for (const double m : members) f += m <= mid ? 1.0 : 0.0;
        f /= static_cast<double>(ensemble_size);
        const double g = f - (mid >= x ? 1.0 : 0.0);
        total += g * g * (b - a);
    }
    return total;
}

Outcome crit_ensemble_crps() {
    Members ladder{};
    for (std::size_t k = 0; k < ensemble_size; ++k) ladder[k] = static_cast<double>(k + 1);
    const double pair_form = crps_ensemble(ladder, 6.0);
    const double exact_err = std::abs(pair_form - 10.0 / 11.0);
    double worst = std::abs(pair_form - crps_step_integral(ladder, 6.0));
    Rng rng(91404);
    for (int rep = 0; rep < 100; ++rep) {
        Members m{};
        for (auto& v : m) v = rng.uniform(0.0, 10.0);
        const double x = rng.uniform(-1.0, 11.0);
        worst = std::max(worst, std::abs(crps_ensemble(m, x) - crps_step_integral(m, x)));
    }
    return {exact_err <= 1e-12 && worst <= 1e-10,
            fmt("ladder err %.1e, identity gap %.1e", exact_err, worst)};
}

// ----- 5: emos recovery on a matched truth ------------------------------------

Outcome crit_emos_recovery() {
    const TnEmosParams truth{0.4, 0.6, 0.9, 0.5, 0.8};
    Rng rng(91505);
    const auto draw_case = [&](EmosCase& c, Distribution& d) {
        Members m{};
        const double center = rng.uniform(2.0, 7.0);
        for (auto& v : m) v = center + 0.8 * rng.normal();
        c = make_emos_case(m, 0.0);
        const TruncatedNormal tn = tn_link(truth, c.f_ctrl, c.mean_exch, c.md);
        d = tn;
        c.obs = quantile(d, rng.uniform());
    };

    std::vector<EmosCase> train(2000);
    Distribution scratch;
    for (auto& c : train) draw_case(c, scratch);
    const EmosFit fit = fit_emos(train, Family::tn, std::nullopt, 77);

    double fitted_crps = 0.0, oracle_crps = 0.0;
    std::vector<Interval> intervals;
    std::vector<double> obs;
    const int n_test = 5000;
    for (int i = 0; i < n_test; ++i) {
        EmosCase c;
        Distribution d_true;
        draw_case(c, d_true);
        const Distribution d_fit = emos_predict(fit, c);
        fitted_crps += crps(d_fit, c.obs);
        oracle_crps += crps(d_true, c.obs);
        intervals.push_back(central_interval(d_fit));
        obs.push_back(c.obs);
    }
    fitted_crps /= n_test;
    oracle_crps /= n_test;
    const CoverageWidth cw = coverage_and_width(intervals, obs);
    const double nominal_pct = 100.0 * default_nominal_coverage;
    const bool ok = fitted_crps <= 1.02 * oracle_crps && std::abs(cw.coverage_pct - nominal_pct) <= 2.0;
    return {ok, fmt("crps %.4f vs oracle %.4f (ratio %.4f), coverage %.2f%%", fitted_crps,
                    oracle_crps, fitted_crps / oracle_crps, cw.coverage_pct)};
}

// ----- 6/7 shared plumbing: train methods on a scenario, score the tail ------

struct ScoredMethod {
    std::string name;
    double mean_crps = 0.0;
    double ks_p = 0.0;
};

MethodConfig scenario_emos_config(int window_days, std::uint64_t seed) {
    MethodConfig cfg;
    cfg.method = Method::emos;
    cfg.family = Family::tn;
    cfg.variable = Variable::wind_speed_mps;
    cfg.window = {window_days, Spatial::regional, Pooling::per_lead_time};
    cfg.seed = seed;
    return cfg;
}

// The shipped architectures, resized for a desk-scale scenario: small batches
// give the optimizer enough steps per window, and a target scale near the
// observation range keeps the output layer close to its initialization.
MethodConfig scenario_net_config(Method m, int window_days, int batch, int aux_batch,
                                 SliceConfig slices, std::uint64_t seed) {
    MethodConfig cfg = builtin_preset(Variable::wind_speed_mps);
    cfg.method = m;
    cfg.window.train_days = window_days;
    cfg.window.spatial = Spatial::regional;
    cfg.target_scale = 8.0;
    cfg.dist_net.train.batch_size = batch;
    cfg.aux_mlp_net.train.batch_size = aux_batch;
    cfg.aux_c1d_net.train.batch_size = aux_batch;
    cfg.slices = slices;
    cfg.seed = seed;
    return cfg;
}

// trains every valid date, predicts them, and returns scores + pit p-value
std::vector<ScoredMethod> score_methods(const Dataset& data,
                                        const std::vector<MethodConfig>& configs,
                                        const std::vector<std::string>& names,
                                        const std::vector<std::int64_t>& dates,
                                        const fs::path& root, double* raw_crps_out) {
    std::vector<EnsembleForecast> fcs;
    for (const auto& c : data.cases)
        if (std::find(dates.begin(), dates.end(), c.forecast.init_date()) != dates.end())
            fcs.push_back(c.forecast);

    std::vector<ScoredMethod> out;
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const fs::path model_root = root / names[k];
        const TrainRunResult run = train_dates(data, configs[k], dates, 1);
        if (!run.skipped.empty())
            throw validation_error("unexpected skipped training task: " + run.skipped.front());
        write_artifacts(model_root.string(), run.artifacts);
        const auto preds = predict_forecasts(fcs, configs[k], model_root.string());
        const AlignedPredictions aligned = align_predictions(data, preds);
        idx = aligned.case_idx;

        double total = 0.0;
        std::vector<double> pits;
        Rng pit_rng(derive_seed(4242, hash_string(names[k])));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double obs = *data.cases[idx[i]].obs;
            total += crps(aligned.dists[i], obs);
            pits.push_back(pit(aligned.dists[i], obs, pit_rng));
        }
        const UniformityTest ks = uniformity_test(pits);
        out.push_back({names[k], total / static_cast<double>(idx.size()), ks.p_value});
    }

    if (raw_crps_out) {
        double raw = 0.0;
        for (const std::size_t i : idx)
            raw += crps_ensemble(data.cases[i].forecast.members, *data.cases[i].obs);
        *raw_crps_out = raw / static_cast<double>(idx.size());
    }
    return out;
}

Outcome crit_calibration_correction() {
    // raw-rank shape on a large archive: deflated spread, positive bias
    ScenarioConfig big = default_scenario(Variable::wind_speed_mps);
    big.n_stations = 2;
    big.n_days = 105;
    big.cadence_minutes = 30;
    big.deflation = 0.5;
    big.bias = 1.0;
    big.seed = 606;
    const Scenario raw_sc = generate(big);
    Rng rank_rng(91606);
    std::array<std::int64_t, histogram_bins> counts{};
    std::size_t n = 0;
    for (const auto& c : raw_sc.data.cases) {
        ++counts[static_cast<std::size_t>(verification_rank(c.forecast.members, *c.obs, rank_rng)) - 1];
        ++n;
    }
    const double edge_share =
        static_cast<double>(counts.front() + counts.back()) / static_cast<double>(n);

    // every method's pit on a trainable archive with the same corruption
    ScenarioConfig trainable = big;
    trainable.n_days = 55;
    trainable.cadence_minutes = 60;
    trainable.seed = 607;
    const Scenario sc = generate(trainable);
    std::vector<std::int64_t> dates;
    for (int d = 46; d <= 55; ++d) dates.push_back(parse_date("2021-01-01") + d - 1);
    const auto scored = score_methods(
        sc.data,
        {scenario_emos_config(45, 71),
         scenario_net_config(Method::mlp_s, 45, 64, 64, {16, 4}, 72),
         scenario_net_config(Method::mlpex, 45, 64, 64, {16, 4}, 73)},
        {"emos", "mlp-s", "mlpex"}, dates, work_root() / "calibration", nullptr);

    bool pits_ok = true;
    std::string pit_detail;
    for (const auto& s : scored) {
        pits_ok = pits_ok && s.ks_p > 0.01;
        pit_detail += fmt(" %s p=%.3f", s.name.c_str(), s.ks_p);
    }
    return {edge_share > 0.33 && pits_ok,
            fmt("raw edge-bin share %.1f%% (n=%zu);%s", 100.0 * edge_share, n, pit_detail.c_str())};
}

Outcome crit_ranking() {
    const std::vector<std::uint64_t> seeds{11, 12, 13};
    std::array<std::vector<double>, 3> method_crps;  // emos, mlp-s, mlpex
    std::vector<double> raw_crps;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
        cfg.n_stations = 2;
        cfg.n_days = 38;
        cfg.cadence_minutes = 60;
        cfg.quad = 0.18;  // curvature the ensemble does not see
        cfg.deflation = 0.75;
        cfg.bias = 0.4;
        cfg.seed = seeds[si];
        const Scenario sc = generate(cfg);
        std::vector<std::int64_t> dates;
        for (int d = 31; d <= 38; ++d) dates.push_back(parse_date("2021-01-01") + d - 1);
        double raw = 0.0;
        const auto scored = score_methods(
            sc.data,
            {scenario_emos_config(30, 81),
             scenario_net_config(Method::mlp_s, 30, 128, 16, {12, 2}, 82),
             scenario_net_config(Method::mlpex, 30, 128, 16, {12, 2}, 83)},
            {"emos", "mlp-s", "mlpex"}, dates,
            work_root() / fmt("ranking-%zu", si), &raw);
        for (std::size_t k = 0; k < 3; ++k) method_crps[k].push_back(scored[k].mean_crps);
        raw_crps.push_back(raw);
    }

    const auto mean_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (const double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    const double emos = mean_of(method_crps[0]);
    const double mlp_s = mean_of(method_crps[1]);
    const double mlpex = mean_of(method_crps[2]);
    const double raw = mean_of(raw_crps);

    // the two network methods may tie within one standard error of their gap
    std::vector<double> diffs;
    for (std::size_t si = 0; si < seeds.size(); ++si)
        diffs.push_back(method_crps[2][si] - method_crps[1][si]);
    const double d_mean = mean_of(diffs);
    double var = 0.0;
    for (const double d : diffs) var += (d - d_mean) * (d - d_mean);
    const double se = std::sqrt(var / (diffs.size() - 1)) / std::sqrt(double(diffs.size()));

    const bool ok = mlpex <= mlp_s + se && mlp_s < emos && emos < raw;
    return {ok, fmt("crps mlpex %.4f, mlp-s %.4f (se %.4f), emos %.4f, raw %.4f", mlpex, mlp_s,
                    se, emos, raw)};
}

// ----- 8: slice arithmetic ----------------------------------------------------

Outcome crit_slices() {
    const bool overlap_ok =
        overlapping_slice_starts(16, {12, 4}) == std::vector<std::size_t>{0, 4};
    const bool disjoint_ok = disjoint_slice_starts(192, 16).size() == 12 &&
                             disjoint_slice_starts(96, 12).size() == 8;
    return {overlap_ok && disjoint_ok,
            fmt("16/{12,4} -> {0,4}; 192/16 -> %zu; 96/12 -> %zu",
                disjoint_slice_starts(192, 16).size(), disjoint_slice_starts(96, 12).size())};
}

// ----- 9: deterministic end-to-end pipeline -----------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ENSCAL_CLI_PATH + "\" " + args + " >/dev/null";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), a));
    std::size_t b_files = 0;
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) ++b_files;
    if (rel.size() != b_files) {
        why = fmt("file counts differ (%zu vs %zu)", rel.size(), b_files);
        return false;
    }
    for (const auto& r : rel)
        if (slurp(a / r) != slurp(b / r)) {
            why = "differs: " + r.string();
            return false;
        }
    return true;
}

Outcome crit_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path base = work_root() / "desk";
    for (const std::string run : {"a", "b"}) {
        for (const std::string var : {"wind", "ghi"}) {
            const std::string dir = (base / run / var).string();
            const std::string preset = std::string(ENSCAL_PRESET_DIR) + "/" + var + ".json";
            if (run_cli("simulate --out " + dir + "/archive --variable " + var +
                        " --stations 2 --days 90 --deflation 0.8 --bias 0.2 --seed 101") != 0)
                return {false, "simulate failed for " + var};
            const std::string data = " --forecasts " + dir + "/archive/forecasts.csv" +
                                     " --observations " + dir + "/archive/observations.csv";
            if (run_cli("train" + data + " --model-dir " + dir + "/models --config " + preset +
                        " --workers 2 --from " + day(83) + " --to " + day(85)) != 0)
                return {false, "train failed for " + var};
            if (run_cli("predict --forecasts " + dir + "/archive/forecasts.csv --model-dir " +
                        dir + "/models --out " + dir + "/preds.csv --config " + preset +
                        " --from " + day(83) + " --to " + day(85)) != 0)
                return {false, "predict failed for " + var};
            const std::string filter = var == "ghi" ? " --min-obs 7.5" : "";
            if (run_cli("verify" + data + " --predictions mlp-s=" + dir + "/preds.csv" +
                        " --out-dir " + dir + "/report --variable " + var + filter) != 0)
                return {false, "verify failed for " + var};
        }
    }
    std::string why;
    const bool identical = same_tree(base / "a", base / "b", why);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {identical && secs < 900.0,
            identical ? fmt("both runs byte-identical in %.1fs", secs) : why};
}

// ----- 10: shipped preset dimensions -----------------------------------------

Outcome crit_presets() {
    const MethodConfig wind = load_method_config(std::string(ENSCAL_PRESET_DIR) + "/wind.json");
    const MethodConfig ghi = load_method_config(std::string(ENSCAL_PRESET_DIR) + "/ghi.json");
    std::vector<std::string> bad;
    const auto expect = [&](bool cond, const char* what) {
        if (!cond) bad.push_back(what);
    };

    expect(wind.dist_net.hidden.size() == 1 && wind.dist_net.hidden[0].units == 28,
           "wind dist units");
    expect(ghi.dist_net.hidden.size() == 1 && ghi.dist_net.hidden[0].units == 35,
           "ghi dist units");
    expect(wind.aux_c1d_net.hidden[0].filters == 24 && wind.aux_c1d_net.hidden[0].kernel == 3,
           "wind conv");
    expect(ghi.aux_c1d_net.hidden[0].filters == 35 && ghi.aux_c1d_net.hidden[0].kernel == 5,
           "ghi conv");
    expect(wind.aux_c1d_net.hidden[1].kind == LayerKind::pool1d &&
               wind.aux_c1d_net.hidden[1].pool_size == 2,
           "wind pool");
    expect(ghi.aux_c1d_net.hidden[1].kind == LayerKind::pool1d &&
               ghi.aux_c1d_net.hidden[1].pool_size == 2,
           "ghi pool");
    expect(wind.slices.window_len == 16 && wind.slices.shift == 4, "wind slices");
    expect(ghi.slices.window_len == 12 && ghi.slices.shift == 1, "ghi slices");
    expect(wind.dist_net.train.batch_size == 1024 && wind.aux_mlp_net.train.batch_size == 1024 &&
               wind.aux_c1d_net.train.batch_size == 512,
           "wind batches");
    expect(ghi.dist_net.train.batch_size == 1024 && ghi.aux_c1d_net.train.batch_size == 512,
           "ghi batches");
    for (const auto* net : {&wind.dist_net, &wind.aux_mlp_net, &wind.aux_c1d_net, &ghi.dist_net,
                            &ghi.aux_mlp_net, &ghi.aux_c1d_net}) {
        expect(net->train.patience == 10, "patience");
        expect(net->train.val_fraction == 0.2, "train/validation split");
    }
    std::string detail = "all architecture dimensions match";
    if (!bad.empty()) {
        detail = "mismatched:";
        for (const auto& b : bad) detail += " " + b;
    }
    return {bad.empty(), detail};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*fn)();
    };
    const std::vector<Criterion> criteria{
        {"closed-form crps matches numeric cdf integration", crit_closed_forms},
        {"loss and layer gradients match finite differences", crit_gradients},
        {"near-degenerate distributions score the absolute error", crit_degenerate},
        {"ensemble crps identities agree", crit_ensemble_crps},
        {"emos recovers a matched truth near the oracle score", crit_emos_recovery},
        {"underdispersed ensembles are corrected to uniform pit", crit_calibration_correction},
        {"method ranking holds on a nonlinear scenario", crit_ranking},
        {"training and prediction slice arithmetic", crit_slices},
        {"end-to-end pipeline runs are byte-identical", crit_determinism},
        {"shipped presets carry the documented dimensions", crit_presets},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome r;
        try {
            r = criteria[i].fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2zu %s (%s)\n", r.ok ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    r.detail.c_str());
        std::fflush(stdout);
        if (!r.ok) ++failures;
    }
    std::printf("%zu of %zu criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
