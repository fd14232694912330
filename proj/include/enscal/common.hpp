#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace enscal {

// All timestamps are minutes since the Unix epoch, UTC. One model run per
// day at 0000 UTC, 48 h horizon.
constexpr std::int64_t minutes_per_day = 1440;
constexpr std::int64_t horizon_minutes = 2880;

enum class Variable { wind_speed_mps, ghi_wm2 };

std::string variable_name(Variable v);
Variable variable_from_name(const std::string& name);

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// malformed input files: wrong column counts, unparsable fields, bad timestamps
struct schema_error : error {
    using error::error;
};
// semantically invalid data: duplicate keys, negative members, grid violations
struct validation_error : error {
    using error::error;
};
// bad configuration: unknown names, out-of-range hyperparameters
struct config_error : error {
    using error::error;
};
// not enough data to fit or predict
struct insufficient_data_error : error {
    using error::error;
};
// filesystem / serialization failures
struct io_error : error {
    using error::error;
};

// ISO-8601 UTC ("2021-04-06T00:15:00Z") <-> epoch minutes.
std::int64_t parse_iso_utc(const std::string& s);
std::string format_iso_utc(std::int64_t epoch_minutes);

// Calendar dates as days since the epoch.
std::int64_t days_from_civil(int year, int month, int day);
void civil_from_days(std::int64_t days, int& year, int& month, int& day);
std::int64_t parse_date(const std::string& s);  // "YYYY-MM-DD"
std::string format_date(std::int64_t epoch_days);

inline std::int64_t day_of(std::int64_t epoch_minutes) {
    // runs are at 0000 UTC so floor division is the init date
    std::int64_t d = epoch_minutes / minutes_per_day;
    if (epoch_minutes < 0 && epoch_minutes % minutes_per_day != 0) --d;
    return d;
}

}  // namespace enscal
