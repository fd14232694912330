#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "enscal/common.hpp"
#include "enscal/ensemble_stats.hpp"

namespace enscal {

// forecast csv:    station,init_time,lead_minutes,control,m1,...,m10
// observation csv: station,valid_time,value          (empty value = missing)
// Timestamps are ISO-8601 UTC on disk, epoch minutes in memory.

struct EnsembleForecast {
    std::string station;
    std::int64_t init_time = 0;     // epoch minutes, 0000 UTC runs
    std::int64_t lead_minutes = 0;  // 0 <= lead < horizon, on the cadence grid
    Members members{};              // members[0] is the control

    std::int64_t valid_time() const { return init_time + lead_minutes; }
    std::int64_t init_date() const { return day_of(init_time); }
};

struct Observation {
    std::string station;
    std::int64_t valid_time = 0;
    std::optional<double> value;  // nullopt = missing, never encoded as zero
};

// one forecast joined with the observation valid at init + lead
struct ForecastCase {
    EnsembleForecast forecast;
    std::optional<double> obs;

    bool complete() const { return obs.has_value(); }
    std::int64_t valid_time() const { return forecast.valid_time(); }
};

struct JoinStats {
    std::size_t n_forecasts = 0;
    std::size_t n_observations = 0;
    std::size_t n_complete = 0;  // cases with a present observation value
    std::size_t n_missing = 0;   // forecasts kept with a missing observation
};

struct Dataset {
    Variable variable = Variable::wind_speed_mps;
    int cadence_minutes = 15;
    int cases_per_day = 192;  // L; L * cadence = 48 h horizon
    std::vector<ForecastCase> cases;  // sorted by (station, init_time, lead)
    std::vector<std::string> stations;  // distinct ids, sorted
    JoinStats stats;

    // contiguous [first, last) index range of one station's cases
    std::pair<std::size_t, std::size_t> station_range(const std::string& station) const;
};

int default_cadence(Variable v);  // wind 15, ghi 30
int cases_per_day_for(int cadence_minutes);

std::vector<EnsembleForecast> parse_forecast_csv(std::istream& in, const std::string& source);
std::vector<EnsembleForecast> read_forecast_csv(const std::string& path);
std::vector<Observation> parse_observation_csv(std::istream& in, const std::string& source);
std::vector<Observation> read_observation_csv(const std::string& path);

// Inner join on (station, valid_time). Every forecast is kept; forecasts with
// no observation row (or an empty value) become missing cases. Duplicate
// forecast or observation keys are rejected.
Dataset join_cases(std::vector<EnsembleForecast> forecasts,
                   const std::vector<Observation>& observations, Variable variable,
                   int cadence_minutes);

void write_forecast_csv(std::ostream& out, const std::vector<EnsembleForecast>& forecasts);
void write_forecast_csv(const std::string& path, const std::vector<EnsembleForecast>& forecasts);
void write_observation_csv(std::ostream& out, const std::vector<Observation>& observations);
void write_observation_csv(const std::string& path, const std::vector<Observation>& observations);

// shortest round-trip decimal encoding used in every csv we write
std::string format_double(double v);

}  // namespace enscal
