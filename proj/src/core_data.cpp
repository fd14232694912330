#include "enscal/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <utility>

namespace enscal {
namespace {

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

std::string location(const std::string& source, std::size_t line_no) {
    return source + ":" + std::to_string(line_no);
}

void expect_header(const std::string& got, const std::string& want, const std::string& source) {
    std::string stripped = got;
    if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
    if (stripped != want)
        throw schema_error(source + ": expected header '" + want + "', got '" + stripped + "'");
}

const std::string forecast_header = "station,init_time,lead_minutes,control,m1,m2,m3,m4,m5,m6,m7,m8,m9,m10";
const std::string observation_header = "station,valid_time,value";

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write " + path);
    return out;
}

}  // namespace

int default_cadence(Variable v) {
    return v == Variable::wind_speed_mps ? 15 : 30;
}

int cases_per_day_for(int cadence_minutes) {
    if (cadence_minutes <= 0 || horizon_minutes % cadence_minutes != 0)
        throw config_error("cadence " + std::to_string(cadence_minutes) +
                           " does not divide the " + std::to_string(horizon_minutes) +
                           "-minute horizon");
    return static_cast<int>(horizon_minutes / cadence_minutes);
}

std::pair<std::size_t, std::size_t> Dataset::station_range(const std::string& station) const {
    const auto key_less = [](const ForecastCase& c, const std::string& s) {
        return c.forecast.station < s;
    };
    const auto first = std::lower_bound(cases.begin(), cases.end(), station, key_less);
    auto last = first;
    while (last != cases.end() && last->forecast.station == station) ++last;
    return {static_cast<std::size_t>(first - cases.begin()),
            static_cast<std::size_t>(last - cases.begin())};
}

std::vector<EnsembleForecast> parse_forecast_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw schema_error(source + ": empty file");
    expect_header(line, forecast_header, source);

    std::vector<EnsembleForecast> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        const std::string where = location(source, line_no);
        if (fields.size() != 3 + ensemble_size)
            throw schema_error(where + ": expected " + std::to_string(3 + ensemble_size) +
                               " fields, got " + std::to_string(fields.size()));
        EnsembleForecast f;
        f.station = fields[0];
        if (f.station.empty()) throw schema_error(where + ": empty station id");
        f.init_time = parse_iso_utc(fields[1]);
        f.lead_minutes = parse_int_field(fields[2], where);
        for (std::size_t k = 0; k < ensemble_size; ++k) {
            f.members[k] = parse_double_field(fields[3 + k], where);
            if (f.members[k] < 0.0)
                throw validation_error(where + ": negative member value " + fields[3 + k]);
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<EnsembleForecast> read_forecast_csv(const std::string& path) {
    auto in = open_input(path);
    return parse_forecast_csv(in, path);
}

std::vector<Observation> parse_observation_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw schema_error(source + ": empty file");
    expect_header(line, observation_header, source);

    std::vector<Observation> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        const std::string where = location(source, line_no);
        if (fields.size() != 3)
            throw schema_error(where + ": expected 3 fields, got " +
                               std::to_string(fields.size()));
        Observation o;
        o.station = fields[0];
        if (o.station.empty()) throw schema_error(where + ": empty station id");
        o.valid_time = parse_iso_utc(fields[1]);
        if (!fields[2].empty()) {
            const double v = parse_double_field(fields[2], where);
            if (v < 0.0) throw validation_error(where + ": negative observation " + fields[2]);
            o.value = v;
        }
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<Observation> read_observation_csv(const std::string& path) {
    auto in = open_input(path);
    return parse_observation_csv(in, path);
}

Dataset join_cases(std::vector<EnsembleForecast> forecasts,
                   const std::vector<Observation>& observations, Variable variable,
                   int cadence_minutes) {
    Dataset ds;
    ds.variable = variable;
    ds.cadence_minutes = cadence_minutes;
    ds.cases_per_day = cases_per_day_for(cadence_minutes);
    ds.stats.n_forecasts = forecasts.size();
    ds.stats.n_observations = observations.size();

    std::map<std::pair<std::string, std::int64_t>, std::optional<double>> obs_by_key;
    for (const auto& o : observations) {
        const auto [it, inserted] = obs_by_key.emplace(std::make_pair(o.station, o.valid_time), o.value);
        if (!inserted)
            throw validation_error("duplicate observation for " + o.station + " at " +
                                   format_iso_utc(o.valid_time));
    }

    std::sort(forecasts.begin(), forecasts.end(), [](const auto& a, const auto& b) {
        return std::tie(a.station, a.init_time, a.lead_minutes) <
               std::tie(b.station, b.init_time, b.lead_minutes);
    });

    ds.cases.reserve(forecasts.size());
    for (auto& f : forecasts) {
        if (f.lead_minutes < 0 || f.lead_minutes >= horizon_minutes ||
            f.lead_minutes % cadence_minutes != 0)
            throw validation_error("lead " + std::to_string(f.lead_minutes) + " for " + f.station +
                                   " is off the " + std::to_string(cadence_minutes) +
                                   "-minute grid");
        if (!ds.cases.empty()) {
            const auto& prev = ds.cases.back().forecast;
            if (prev.station == f.station && prev.init_time == f.init_time &&
                prev.lead_minutes == f.lead_minutes)
                throw validation_error("duplicate forecast for " + f.station + " run " +
                                       format_iso_utc(f.init_time) + " lead " +
                                       std::to_string(f.lead_minutes));
        }
        ForecastCase c;
        c.forecast = std::move(f);
        if (const auto it = obs_by_key.find({c.forecast.station, c.valid_time()});
            it != obs_by_key.end())
            c.obs = it->second;
        c.obs.has_value() ? ++ds.stats.n_complete : ++ds.stats.n_missing;
        ds.cases.push_back(std::move(c));
    }

    for (const auto& c : ds.cases)
        if (ds.stations.empty() || ds.stations.back() != c.forecast.station)
            ds.stations.push_back(c.forecast.station);
    return ds;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw io_error("cannot format double");
    return std::string(buf, ptr);
}

void write_forecast_csv(std::ostream& out, const std::vector<EnsembleForecast>& forecasts) {
    out << forecast_header << '\n';
    for (const auto& f : forecasts) {
        out << f.station << ',' << format_iso_utc(f.init_time) << ',' << f.lead_minutes;
        for (const double m : f.members) out << ',' << format_double(m);
        out << '\n';
    }
}

void write_forecast_csv(const std::string& path, const std::vector<EnsembleForecast>& forecasts) {
    auto out = open_output(path);
    write_forecast_csv(out, forecasts);
    if (!out) throw io_error("failed writing " + path);
}

void write_observation_csv(std::ostream& out, const std::vector<Observation>& observations) {
    out << observation_header << '\n';
    for (const auto& o : observations) {
        out << o.station << ',' << format_iso_utc(o.valid_time) << ',';
        if (o.value) out << format_double(*o.value);
        out << '\n';
    }
}

void write_observation_csv(const std::string& path, const std::vector<Observation>& observations) {
    auto out = open_output(path);
    write_observation_csv(out, observations);
    if (!out) throw io_error("failed writing " + path);
}

}  // namespace enscal
