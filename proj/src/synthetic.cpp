#include "enscal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "enscal/rng.hpp"

namespace enscal {
namespace {

constexpr double night_push_sigmas = 8.0;  // location drop that forces exact zeros
constexpr double diurnal_ramp = 0.15;      // sun factor below which the push blends in

double diurnal_factor(Variable v, std::int64_t valid_time) {
    if (v == Variable::wind_speed_mps) return 1.0;
    const double hour = static_cast<double>(valid_time % minutes_per_day) / 60.0;
    if (hour <= 6.0 || hour >= 18.0) return 0.0;
    return std::sin(std::numbers::pi * (hour - 6.0) / 12.0);
}

std::string station_id(int j) {
    const std::string num = std::to_string(j + 1);
    return "S" + std::string(4 - num.size(), '0') + num;
}

}  // namespace

ScenarioConfig default_scenario(Variable v) {
    ScenarioConfig cfg;
    cfg.variable = v;
    if (v == Variable::ghi_wm2) {
        cfg.family = Family::cn0;
        cfg.c0 = 100.0;
        cfg.c1 = 80.0;
        cfg.sigma0 = 60.0;
    }
    return cfg;
}

Scenario generate(const ScenarioConfig& cfg) {
    if (cfg.n_stations < 1 || cfg.n_days < 1) throw config_error("scenario needs stations and days");
    if (cfg.n_stations > 9999) throw config_error("scenario supports at most 9999 stations");
    if (cfg.deflation <= 0.0 || cfg.deflation > 1.0)
        throw config_error("deflation must lie in (0, 1]");
    if (cfg.heterogeneity < 0.0 || cfg.heterogeneity >= 1.0)
        throw config_error("heterogeneity must lie in [0, 1)");
    if (cfg.family != Family::tn && cfg.family != Family::cn0)
        throw config_error("scenario truth family must be tn or cn0");
    const int cadence =
        cfg.cadence_minutes > 0 ? cfg.cadence_minutes : default_cadence(cfg.variable);
    const int slots = cases_per_day_for(cadence);
    const std::int64_t start_minutes = parse_date(cfg.start_date) * minutes_per_day;

    std::vector<EnsembleForecast> forecasts;
    std::vector<Observation> observations;
    std::map<std::pair<std::string, std::int64_t>, std::optional<double>> seen_obs;
    struct TruthRow {
        double p1, p2;
    };
    std::vector<TruthRow> rows;  // generation order == sorted case order
    forecasts.reserve(static_cast<std::size_t>(cfg.n_stations) * cfg.n_days * slots);

    for (int j = 0; j < cfg.n_stations; ++j) {
        // independent per-station streams: stations can generate in parallel
        const std::uint64_t jtag = static_cast<std::uint64_t>(j);
        Rng member_rng(derive_seed(cfg.seed, hash_string("scenario-members"), jtag));
        const double station_offset =
            Rng(derive_seed(cfg.seed, hash_string("scenario-station"), jtag)).uniform(-1.0, 1.0);
        for (int day = 0; day < cfg.n_days; ++day) {
            const std::int64_t init = start_minutes + static_cast<std::int64_t>(day) * minutes_per_day;
            for (int slot = 0; slot < slots; ++slot) {
                const std::int64_t lead = static_cast<std::int64_t>(slot) * cadence;
                const std::int64_t valid = init + lead;

                // runs launched on consecutive days overlap in valid time, so
                // the truth and the observation are functions of (station,
                // valid time) alone; only the member noise is per-run
                Rng truth_rng(derive_seed(cfg.seed, hash_string("scenario-truth"), jtag,
                                          static_cast<std::uint64_t>(valid)));
                const double frac_days =
                    static_cast<double>(valid - start_minutes) / minutes_per_day;
                const double s = 3.5 + 1.4 * std::sin(2.0 * std::numbers::pi * frac_days / 14.0) +
                                 station_offset + 1.1 * truth_rng.normal();

                const double sun = diurnal_factor(cfg.variable, valid);
                const double push = cfg.variable == Variable::ghi_wm2
                                        ? night_push_sigmas * cfg.sigma0 *
                                              std::clamp((diurnal_ramp - sun) / diurnal_ramp, 0.0, 1.0)
                                        : 0.0;
                const double truth_loc = sun * (cfg.c0 + cfg.c1 * s + cfg.quad * s * s) - push;
                const double member_loc = sun * (cfg.c0 + cfg.c1 * s) - push + cfg.bias;
                const double truth_scale =
                    std::max(cfg.sigma0 + cfg.sigma_slope * std::abs(s), min_scale);

                const Distribution truth = make_distribution(cfg.family, truth_loc, truth_scale);
                const double obs = quantile(truth, truth_rng.uniform());

                EnsembleForecast f;
                f.station = station_id(j);
                f.init_time = init;
                f.lead_minutes = lead;
                for (std::size_t k = 0; k < ensemble_size; ++k) {
                    const double spread = cfg.deflation * truth_scale *
                                          (k == 0 ? 1.0 - cfg.heterogeneity : 1.0);
                    const Distribution member_dist =
                        make_distribution(cfg.family, member_loc, std::max(spread, min_scale));
                    f.members[k] = quantile(member_dist, member_rng.uniform());
                }
                forecasts.push_back(std::move(f));

                const auto key = std::make_pair(station_id(j), valid);
                if (seen_obs.emplace(key, obs).second) {
                    Observation o;
                    o.station = key.first;
                    o.valid_time = valid;
                    o.value = obs;
                    observations.push_back(std::move(o));
                }
                rows.push_back({truth_loc, truth_scale});
            }
        }
    }

    Scenario sc;
    sc.data = join_cases(std::move(forecasts), observations, cfg.variable, cadence);
    sc.truth.family = cfg.family;
    sc.truth.param1.reserve(rows.size());
    sc.truth.param2.reserve(rows.size());
    for (const auto& r : rows) {
        sc.truth.param1.push_back(r.p1);
        sc.truth.param2.push_back(r.p2);
    }
    return sc;
}

double oracle_mean_crps(const TruthRecord& truth, const Dataset& data) {
    if (truth.param1.size() != data.cases.size())
        throw validation_error("truth record does not match the dataset");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.cases.size(); ++i) {
        if (!data.cases[i].obs) continue;
        sum += crps(make_distribution(truth.family, truth.param1[i], truth.param2[i]),
                    *data.cases[i].obs);
        ++n;
    }
    if (n == 0) throw insufficient_data_error("no complete cases to score");
    return sum / static_cast<double>(n);
}

void write_truth_csv(std::ostream& out, const Dataset& data, const TruthRecord& truth) {
    if (truth.param1.size() != data.cases.size())
        throw validation_error("truth record does not match the dataset");
    out << "station,init_time,lead_minutes,family,param1,param2\n";
    for (std::size_t i = 0; i < data.cases.size(); ++i) {
        const auto& f = data.cases[i].forecast;
        out << f.station << ',' << format_iso_utc(f.init_time) << ',' << f.lead_minutes << ','
            << family_name(truth.family) << ',' << format_double(truth.param1[i]) << ','
            << format_double(truth.param2[i]) << '\n';
    }
}

void write_truth_csv(const std::string& path, const Dataset& data, const TruthRecord& truth) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    write_truth_csv(out, data, truth);
    if (!out) throw io_error("failed writing " + path);
}

TruthRecord read_truth_csv(const std::string& path, const Dataset& data) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw schema_error(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "station,init_time,lead_minutes,family,param1,param2")
        throw schema_error(path + ": unexpected truth header");

    struct Parsed {
        Family family;
        double p1, p2;
    };
    std::map<std::tuple<std::string, std::int64_t, std::int64_t>, Parsed> by_key;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string station, init_s, lead_s, family_s, p1_s, p2_s;
        if (!std::getline(ls, station, ',') || !std::getline(ls, init_s, ',') ||
            !std::getline(ls, lead_s, ',') || !std::getline(ls, family_s, ',') ||
            !std::getline(ls, p1_s, ',') || !std::getline(ls, p2_s))
            throw schema_error(path + ":" + std::to_string(line_no) + ": expected 6 fields");
        Parsed p{family_from_name(family_s), std::stod(p1_s), std::stod(p2_s)};
        const auto key = std::make_tuple(station, parse_iso_utc(init_s), std::stoll(lead_s));
        if (!by_key.emplace(key, p).second)
            throw validation_error(path + ": duplicate truth row at line " + std::to_string(line_no));
    }

    TruthRecord rec;
    bool family_set = false;
    for (const auto& c : data.cases) {
        const auto it = by_key.find(
            {c.forecast.station, c.forecast.init_time, c.forecast.lead_minutes});
        if (it == by_key.end())
            throw validation_error(path + ": no truth row for " + c.forecast.station + " lead " +
                                   std::to_string(c.forecast.lead_minutes));
        if (!family_set) {
            rec.family = it->second.family;
            family_set = true;
        } else if (rec.family != it->second.family) {
            throw validation_error(path + ": mixed truth families");
        }
        rec.param1.push_back(it->second.p1);
        rec.param2.push_back(it->second.p2);
    }
    return rec;
}

}  // namespace enscal
