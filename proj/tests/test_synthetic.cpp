#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "enscal/emos.hpp"
#include "enscal/ensemble_stats.hpp"
#include "enscal/rng.hpp"
#include "enscal/synthetic.hpp"

using namespace enscal;

namespace {

// raw verification rank of the observation among the members (no ties in the
// continuous wind scenarios)
int raw_rank(const Members& members, double obs) {
    int below = 0;
    for (const double m : members)
        if (m < obs) ++below;
    return below + 1;
}

double chi_square_vs_uniform(const std::array<int, 12>& counts, double n) {
    const double expected = n / 12.0;
    double chi2 = 0.0;
    for (const int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    return chi2;
}

constexpr double chi2_99_df11 = 24.725;  // 0.99 quantile of chi-square(11)

std::array<int, 12> rank_counts(const Scenario& sc) {
    std::array<int, 12> counts{};
    for (const auto& c : sc.data.cases) counts[raw_rank(c.forecast.members, *c.obs) - 1]++;
    return counts;
}

}  // namespace

TEST_CASE("calibrated scenario yields uniform raw ranks") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 2;
    cfg.n_days = 27;  // 2 * 27 * 192 = 10368 cases
    cfg.seed = 424242;
    const auto sc = generate(cfg);
    REQUIRE(sc.data.cases.size() == 10368);
    REQUIRE(sc.data.stats.n_complete == sc.data.cases.size());

    const auto counts = rank_counts(sc);
    CHECK(chi_square_vs_uniform(counts, 10368.0) < chi2_99_df11);
}

TEST_CASE("deflated spread produces a u-shaped rank histogram") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 2;
    cfg.n_days = 27;
    cfg.deflation = 0.5;
    cfg.seed = 77;
    const auto sc = generate(cfg);
    const auto counts = rank_counts(sc);
    const double n = static_cast<double>(sc.data.cases.size());
    // the two extreme ranks hold far more than their uniform 2/12 share
    CHECK(counts.front() + counts.back() > n / 3.0);
    CHECK(chi_square_vs_uniform(counts, n) > chi2_99_df11);
}

TEST_CASE("scenario archives are byte-identical for a fixed seed") {
    ScenarioConfig cfg = default_scenario(Variable::ghi_wm2);
    cfg.n_stations = 2;
    cfg.n_days = 4;
    cfg.seed = 9001;
    const auto a = generate(cfg);
    const auto b = generate(cfg);

    const auto dump = [](const Scenario& sc) {
        std::ostringstream f, o, t;
        std::vector<EnsembleForecast> fs;
        std::vector<Observation> os;
        std::map<std::pair<std::string, std::int64_t>, std::optional<double>> seen;
        for (const auto& c : sc.data.cases) {
            fs.push_back(c.forecast);
            if (seen.emplace(std::make_pair(c.forecast.station, c.valid_time()), c.obs).second) {
                Observation ob;
                ob.station = c.forecast.station;
                ob.valid_time = c.valid_time();
                ob.value = c.obs;
                os.push_back(ob);
            }
        }
        write_forecast_csv(f, fs);
        write_observation_csv(o, os);
        write_truth_csv(t, sc.data, sc.truth);
        return f.str() + o.str() + t.str();
    };
    CHECK(dump(a) == dump(b));

    cfg.seed = 9002;
    const auto c = generate(cfg);
    CHECK(dump(a) != dump(c));
}

TEST_CASE("generated values are non-negative for both variables") {
    for (const Variable v : {Variable::wind_speed_mps, Variable::ghi_wm2}) {
        ScenarioConfig cfg = default_scenario(v);
        cfg.n_stations = 1;
        cfg.n_days = 5;
        cfg.bias = 1.0;
        cfg.deflation = 0.7;
        cfg.seed = 5;
        const auto sc = generate(cfg);
        for (const auto& c : sc.data.cases) {
            CHECK(*c.obs >= 0.0);
            for (const double m : c.forecast.members) CHECK(m >= 0.0);
        }
    }
}

TEST_CASE("ghi nights are exactly zero and dawns are partially censored") {
    ScenarioConfig cfg = default_scenario(Variable::ghi_wm2);
    cfg.n_stations = 2;
    cfg.n_days = 10;
    cfg.seed = 31;
    const auto sc = generate(cfg);

    int night_cases = 0, partial_cases = 0, clear_day_cases = 0;
    for (const auto& c : sc.data.cases) {
        const double hour = static_cast<double>(c.valid_time() % minutes_per_day) / 60.0;
        const auto summary = summarize(c.forecast.members);
        if (hour <= 6.0 || hour >= 18.0) {
            ++night_cases;
            CHECK(*c.obs == 0.0);
            for (const double m : c.forecast.members) CHECK(m == 0.0);
            CHECK(summary.zero_prop == 1.0);
            CHECK(summary.variance == 0.0);
            CHECK(summary.mean_abs_diff == 0.0);
        } else {
            if (summary.zero_prop > 0.0 && summary.zero_prop < 1.0) ++partial_cases;
            if (hour >= 11.0 && hour <= 13.0 && summary.zero_prop == 0.0) ++clear_day_cases;
        }
    }
    CHECK(night_cases > 900);     // half the 48h horizon is night
    CHECK(partial_cases > 50);    // dawn/dusk censoring is exercised
    CHECK(clear_day_cases > 100); // and midday is mostly positive
}

TEST_CASE("ensemble bias strictly degrades the raw mean absolute error") {
    double prev = -1.0;
    for (const double b : {0.0, 1.0, 2.0}) {
        ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
        cfg.n_stations = 2;
        cfg.n_days = 27;
        cfg.bias = b;
        cfg.seed = 2025;
        const auto sc = generate(cfg);
        double mae = 0.0;
        for (const auto& c : sc.data.cases)
            mae += std::abs(summarize(c.forecast.members).mean_all - *c.obs);
        mae /= static_cast<double>(sc.data.cases.size());
        CHECK(mae > prev);
        prev = mae;
    }
}

TEST_CASE("a more skillful control tightens around the truth") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 2;
    cfg.n_days = 27;
    cfg.heterogeneity = 0.6;
    cfg.seed = 12;
    const auto sc = generate(cfg);
    double ctrl_err = 0.0, member_err = 0.0;
    for (std::size_t i = 0; i < sc.data.cases.size(); ++i) {
        const auto& m = sc.data.cases[i].forecast.members;
        const double center = sc.truth.param1[i];  // truth location (no bias)
        ctrl_err += std::abs(m[0] - center);
        for (std::size_t k = 1; k < ensemble_size; ++k)
            member_err += std::abs(m[k] - center) / 10.0;
    }
    CHECK(ctrl_err < 0.7 * member_err);
}

TEST_CASE("oracle score vanishes for a degenerate truth") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 1;
    cfg.n_days = 2;
    cfg.sigma0 = 1e-8;
    cfg.seed = 8;
    const auto sc = generate(cfg);
    CHECK(oracle_mean_crps(sc.truth, sc.data) < 1e-6);
}

TEST_CASE("oracle score agrees with a second-seed monte carlo estimate") {
    // constant truth TN(5, 1): c1 = 0 removes the latent signal
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 3;
    cfg.n_days = 174;  // 3 * 174 * 192 = 100224 cases
    cfg.c0 = 5.0;
    cfg.c1 = 0.0;
    cfg.sigma0 = 1.0;
    cfg.seed = 404;
    const auto sc = generate(cfg);
    const double oracle = oracle_mean_crps(sc.truth, sc.data);

    const Distribution truth = TruncatedNormal{5.0, 1.0};
    Rng rng(505);  // independent seed
    double mc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) mc += crps(truth, quantile(truth, rng.uniform())) / n;
    CHECK(oracle == doctest::Approx(mc).epsilon(0.01));
}

TEST_CASE("fitted scores cannot beat the oracle beyond noise") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_stations = 2;
    cfg.n_days = 7;  // 2688 cases
    cfg.deflation = 0.8;
    cfg.bias = 0.5;
    cfg.seed = 606;
    const auto sc = generate(cfg);

    std::vector<EmosCase> cases;
    for (const auto& c : sc.data.cases) cases.push_back(make_emos_case(c.forecast.members, *c.obs));
    const std::size_t half = cases.size() / 2;
    const std::vector<EmosCase> train(cases.begin(), cases.begin() + half);
    const std::vector<EmosCase> test(cases.begin() + half, cases.end());
    const auto fit = fit_emos(train, Family::tn, std::nullopt, 1);
    const double fitted = emos_mean_crps(test, fit.family, fit.params);

    // oracle mean and its standard error over the same test half
    double sum = 0.0, sum2 = 0.0;
    const double n = static_cast<double>(test.size());
    for (std::size_t i = half; i < cases.size(); ++i) {
        const double v = crps(
            make_distribution(sc.truth.family, sc.truth.param1[i], sc.truth.param2[i]),
            *sc.data.cases[i].obs);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(fitted >= mean - 3.0 * se);
}

TEST_CASE("truth csv round-trips aligned with the dataset") {
    ScenarioConfig cfg = default_scenario(Variable::ghi_wm2);
    cfg.n_stations = 2;
    cfg.n_days = 3;
    cfg.seed = 14;
    const auto sc = generate(cfg);

    const std::string path = "truth_roundtrip_test.csv";
    write_truth_csv(path, sc.data, sc.truth);
    const auto back = read_truth_csv(path, sc.data);
    CHECK(back.family == sc.truth.family);
    CHECK(back.param1 == sc.truth.param1);
    CHECK(back.param2 == sc.truth.param2);

    // a dataset the file does not cover is rejected
    ScenarioConfig other = cfg;
    other.n_days = 4;
    const auto bigger = generate(other);
    CHECK_THROWS_AS(read_truth_csv(path, bigger.data), validation_error);
    std::remove(path.c_str());
}

TEST_CASE("scenario configuration is validated") {
    ScenarioConfig cfg = default_scenario(Variable::wind_speed_mps);
    cfg.deflation = 0.0;
    CHECK_THROWS_AS(generate(cfg), config_error);
    cfg.deflation = 1.2;
    CHECK_THROWS_AS(generate(cfg), config_error);
    cfg = default_scenario(Variable::wind_speed_mps);
    cfg.heterogeneity = 1.0;
    CHECK_THROWS_AS(generate(cfg), config_error);
    cfg = default_scenario(Variable::wind_speed_mps);
    cfg.n_days = 0;
    CHECK_THROWS_AS(generate(cfg), config_error);
    cfg = default_scenario(Variable::wind_speed_mps);
    cfg.family = Family::ln;
    CHECK_THROWS_AS(generate(cfg), config_error);
}
