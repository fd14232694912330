#include "doctest.h"

#include <sstream>

#include "enscal/core_data.hpp"
#include "enscal/rng.hpp"

using namespace enscal;

namespace {

const char* forecast_csv_text =
    "station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10\n"
    "LOOS,2021-04-06T00:00:00Z,90,3.25,3.1,2.9,3.4,3.6,2.75,3.05,3.3,2.8,3.2,3.5\n"
    "LOOS,2021-04-06T00:00:00Z,105,3.5,3.2,3.0,3.7,3.9,2.95,3.25,3.6,3.05,3.45,3.75\n"
    "WIEN,2021-04-06T00:00:00Z,90,5.0,4.5,4.8,5.2,5.5,4.2,4.9,5.1,4.6,5.3,5.05\n";

const char* observation_csv_text =
    "station,valid_time,value\n"
    "LOOS,2021-04-06T01:30:00Z,3.4\n"
    "LOOS,2021-04-06T01:45:00Z,\n"
    "WIEN,2021-04-06T01:30:00Z,4.95\n"
    "WIEN,2021-04-06T03:00:00Z,6.1\n";

std::vector<EnsembleForecast> parse_forecasts(const char* text) {
    std::istringstream in(text);
    return parse_forecast_csv(in, "test");
}

std::vector<Observation> parse_observations(const char* text) {
    std::istringstream in(text);
    return parse_observation_csv(in, "test");
}

}  // namespace

TEST_CASE("forecast csv parses fields and keeps member order") {
    const auto fs = parse_forecasts(forecast_csv_text);
    REQUIRE(fs.size() == 3);
    CHECK(fs[0].station == "LOOS");
    CHECK(format_iso_utc(fs[0].init_time) == "2021-04-06T00:00:00Z");
    CHECK(fs[0].lead_minutes == 90);
    CHECK(fs[0].members[0] == 3.25);   // control stays first
    CHECK(fs[0].members[1] == 3.1);
    CHECK(fs[0].members[10] == 3.5);
    CHECK(fs[0].valid_time() == fs[0].init_time + 90);
}

TEST_CASE("observation csv distinguishes missing from zero") {
    const auto os = parse_observations(observation_csv_text);
    REQUIRE(os.size() == 4);
    CHECK(os[0].value == 3.4);
    CHECK_FALSE(os[1].value.has_value());
    const auto zeros = parse_observations("station,valid_time,value\nA,2021-04-06T00:00:00Z,0\n");
    REQUIRE(zeros[0].value.has_value());
    CHECK(*zeros[0].value == 0.0);
}

TEST_CASE("csv schema violations are rejected") {
    CHECK_THROWS_AS(parse_forecasts("station,init_time\n"), schema_error);
    CHECK_THROWS_AS(parse_forecasts(""), schema_error);
    // wrong field count
    CHECK_THROWS_AS(
        parse_forecasts("station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10\n"
                        "A,2021-04-06T00:00:00Z,90,1,2,3\n"),
        schema_error);
    // unparsable number
    CHECK_THROWS_AS(
        parse_forecasts("station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10\n"
                        "A,2021-04-06T00:00:00Z,90,x,1,1,1,1,1,1,1,1,1,1\n"),
        schema_error);
    // bad timestamp
    CHECK_THROWS_AS(
        parse_forecasts("station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10\n"
                        "A,2021-04-06 00:00,90,1,1,1,1,1,1,1,1,1,1,1\n"),
        schema_error);
    // negative member
    CHECK_THROWS_AS(
        parse_forecasts("station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10\n"
                        "A,2021-04-06T00:00:00Z,90,-1,1,1,1,1,1,1,1,1,1,1\n"),
        validation_error);
    CHECK_THROWS_AS(parse_observations("station,valid_time,value\nA,2021-04-06T00:00:00Z,-0.5\n"),
                    validation_error);
    CHECK_THROWS_AS(parse_observations("station,valid,value\n"), schema_error);
}

TEST_CASE("join matches on station and valid time, keeps unmatched forecasts") {
    const auto ds = join_cases(parse_forecasts(forecast_csv_text),
                               parse_observations(observation_csv_text),
                               Variable::wind_speed_mps, 15);
    REQUIRE(ds.cases.size() == 3);
    CHECK(ds.stats.n_forecasts == 3);
    CHECK(ds.stats.n_observations == 4);
    CHECK(ds.stats.n_complete == 2);
    CHECK(ds.stats.n_missing == 1);
    CHECK(ds.cases_per_day == 192);

    // sorted by (station, init, lead)
    CHECK(ds.cases[0].forecast.station == "LOOS");
    CHECK(ds.cases[0].forecast.lead_minutes == 90);
    CHECK(ds.cases[0].obs == 3.4);
    CHECK_FALSE(ds.cases[1].obs.has_value());  // obs row present but empty value
    CHECK(ds.cases[2].forecast.station == "WIEN");
    CHECK(ds.cases[2].obs == 4.95);

    REQUIRE(ds.stations.size() == 2);
    CHECK(ds.stations[0] == "LOOS");
    CHECK(ds.stations[1] == "WIEN");
    const auto [lo, hi] = ds.station_range("LOOS");
    CHECK(lo == 0);
    CHECK(hi == 2);
    const auto [lo2, hi2] = ds.station_range("ZZZ");
    CHECK(lo2 == hi2);
}

TEST_CASE("join rejects duplicates and off-grid leads") {
    auto fs = parse_forecasts(forecast_csv_text);
    auto os = parse_observations(observation_csv_text);

    auto dup_f = fs;
    dup_f.push_back(dup_f[0]);
    CHECK_THROWS_AS(join_cases(dup_f, os, Variable::wind_speed_mps, 15), validation_error);

    auto dup_o = os;
    dup_o.push_back(dup_o[0]);
    CHECK_THROWS_AS(join_cases(fs, dup_o, Variable::wind_speed_mps, 15), validation_error);

    auto off = fs;
    off[0].lead_minutes = 92;
    CHECK_THROWS_AS(join_cases(off, os, Variable::wind_speed_mps, 15), validation_error);
    auto beyond = fs;
    beyond[0].lead_minutes = horizon_minutes;
    CHECK_THROWS_AS(join_cases(beyond, os, Variable::wind_speed_mps, 15), validation_error);

    CHECK_THROWS_AS(join_cases(fs, os, Variable::wind_speed_mps, 13), config_error);
}

TEST_CASE("join never fabricates observations") {
    // no observation rows at all: every case missing, none complete
    const auto ds = join_cases(parse_forecasts(forecast_csv_text), {},
                               Variable::wind_speed_mps, 15);
    CHECK(ds.stats.n_complete == 0);
    CHECK(ds.stats.n_missing == ds.cases.size());
    for (const auto& c : ds.cases) CHECK_FALSE(c.complete());
}

TEST_CASE("csv writers round-trip seeded data exactly") {
    Rng rng(20260822);
    std::vector<EnsembleForecast> fs;
    std::vector<Observation> os;
    const std::int64_t init = parse_iso_utc("2021-06-01T00:00:00Z");
    for (int day = 0; day < 3; ++day) {
        for (int slot = 0; slot < 12; ++slot) {
            EnsembleForecast f;
            f.station = day % 2 ? "11035" : "11320";
            f.init_time = init + day * minutes_per_day;
            f.lead_minutes = slot * 30;
            for (auto& m : f.members) m = rng.uniform(0.0, 12.0);
            fs.push_back(f);
            Observation o;
            o.station = f.station;
            o.valid_time = f.valid_time();
            if (rng.uniform() < 0.8) o.value = rng.uniform(0.0, 12.0);
            os.push_back(o);
        }
    }

    std::ostringstream fout;
    write_forecast_csv(fout, fs);
    std::istringstream fin(fout.str());
    const auto fs2 = parse_forecast_csv(fin, "round-trip");
    REQUIRE(fs2.size() == fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
        CHECK(fs2[i].station == fs[i].station);
        CHECK(fs2[i].init_time == fs[i].init_time);
        CHECK(fs2[i].lead_minutes == fs[i].lead_minutes);
        for (std::size_t k = 0; k < ensemble_size; ++k) CHECK(fs2[i].members[k] == fs[i].members[k]);
    }

    std::ostringstream oout;
    write_observation_csv(oout, os);
    std::istringstream oin(oout.str());
    const auto os2 = parse_observation_csv(oin, "round-trip");
    REQUIRE(os2.size() == os.size());
    for (std::size_t i = 0; i < os.size(); ++i) {
        CHECK(os2[i].station == os[i].station);
        CHECK(os2[i].valid_time == os[i].valid_time);
        CHECK(os2[i].value == os[i].value);
    }

    // writing the same content twice is byte-identical
    std::ostringstream again;
    write_forecast_csv(again, fs);
    CHECK(again.str() == fout.str());
}

TEST_CASE("default cadences divide the horizon") {
    CHECK(default_cadence(Variable::wind_speed_mps) == 15);
    CHECK(default_cadence(Variable::ghi_wm2) == 30);
    CHECK(cases_per_day_for(15) == 192);
    CHECK(cases_per_day_for(30) == 96);
    CHECK(cases_per_day_for(15) * 15 == horizon_minutes);
    CHECK(cases_per_day_for(30) * 30 == horizon_minutes);
}
