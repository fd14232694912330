#include "enscal/ensemble_stats.hpp"

#include <cmath>

namespace enscal {

EnsembleSummary summarize(const Members& f) {
    EnsembleSummary s;
    double sum = 0.0;
    int zeros = 0;
    for (int k = 0; k < ensemble_size; ++k) {
        sum += f[k];
        if (f[k] == 0.0) ++zeros;
    }
    s.mean_all = sum / ensemble_size;
    s.mean_exch = (sum - f[0]) / (ensemble_size - 1);
    double ss = 0.0;
    for (int k = 0; k < ensemble_size; ++k) {
        const double d = f[k] - s.mean_all;
        ss += d * d;
    }
    s.variance = ss / (ensemble_size - 1);
    s.std_dev = std::sqrt(s.variance);
    double md = 0.0;
    for (int k = 0; k < ensemble_size; ++k)
        for (int l = k + 1; l < ensemble_size; ++l) md += std::fabs(f[k] - f[l]);
    s.mean_abs_diff = 2.0 * md / (static_cast<double>(ensemble_size) * ensemble_size);
    s.zero_prop = static_cast<double>(zeros) / ensemble_size;
    return s;
}

double feature_value(const std::string& name, const Members& members, const EnsembleSummary& s,
                     std::int64_t lead_minutes) {
    if (name == "f_ctrl") return members[0];
    if (name == "mean_exch") return s.mean_exch;
    if (name == "mean_all") return s.mean_all;
    if (name == "sd") return s.std_dev;
    if (name == "var") return s.variance;
    if (name == "md") return s.mean_abs_diff;
    if (name == "p0") return s.zero_prop;
    if (name == "lead_slot") return static_cast<double>(lead_minutes / 60);
    throw config_error("unknown feature '" + name + "'");
}

std::vector<double> feature_vector(const std::vector<std::string>& names, const Members& members,
                                   const EnsembleSummary& s, std::int64_t lead_minutes) {
    std::vector<double> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(feature_value(n, members, s, lead_minutes));
    return out;
}

}  // namespace enscal
