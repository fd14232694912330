#pragma once

#include <array>
#include <string>
#include <vector>

#include "enscal/common.hpp"

namespace enscal {

constexpr int ensemble_size = 11;  // 1 control + 10 exchangeable members

// Summary statistics of one 11-member ensemble. The variance uses divisor 10
// over all 11 members; the mean absolute difference runs over all ordered
// member pairs including k = l.
struct EnsembleSummary {
    double mean_all = 0.0;       // mean of all 11 members
    double mean_exch = 0.0;      // mean of the 10 exchangeable members
    double variance = 0.0;       // (1/10) * sum_{k=1..11} (f_k - mean_all)^2
    double std_dev = 0.0;        // sqrt(variance)
    double mean_abs_diff = 0.0;  // (1/11^2) * sum_k sum_l |f_k - f_l|
    double zero_prop = 0.0;      // fraction of members exactly 0
};

using Members = std::array<double, ensemble_size>;

// members[0] is the control member.
EnsembleSummary summarize(const Members& members);

// Named scalar features derived from one forecast case. Valid names:
//   f_ctrl, mean_exch, mean_all, sd, var, md, p0, lead_slot
// lead_slot = floor(lead_minutes / 60), the hour slot in 0..47.
double feature_value(const std::string& name, const Members& members,
                     const EnsembleSummary& summary, std::int64_t lead_minutes);

std::vector<double> feature_vector(const std::vector<std::string>& names, const Members& members,
                                   const EnsembleSummary& summary, std::int64_t lead_minutes);

}  // namespace enscal
