#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "enscal/core_data.hpp"
#include "enscal/distributions.hpp"

namespace enscal {

// Seeded scenario generator with a known per-case truth distribution. A latent
// signal s (seasonal + station offset + case noise) drives the truth location;
// ensemble members are drawn from a corrupted view of the truth:
//
//   truth location  = C * (c0 + c1 s + quad s^2) - night push
//   member location = C * (c0 + c1 s)            - night push + bias
//   member scale    = deflation * truth scale   (control: * (1 - heterogeneity))
//
// For wind the diurnal factor C is 1 and the night push 0; GHI scenarios use
// C = max(0, sin(pi (h - 6) / 12)) of the valid hour h and push the location
// far below zero at night, so night ensembles and observations are exactly 0.
struct ScenarioConfig {
    Variable variable = Variable::wind_speed_mps;
    int n_stations = 2;
    int n_days = 30;
    int cadence_minutes = 0;  // 0 = variable default
    std::string start_date = "2021-01-01";

    Family family = Family::tn;  // truth family: tn (wind) or cn0 (ghi)
    double c0 = 0.5, c1 = 1.0;   // location link on the latent signal
    double quad = 0.0;           // nonlinearity the ensemble does not see
    double sigma0 = 0.8;         // truth scale
    double sigma_slope = 0.0;    // truth scale grows with |s|

    double bias = 0.0;           // additive member bias
    double deflation = 1.0;      // spread factor in (0, 1]: < 1 underdisperses
    double heterogeneity = 0.0;  // in [0, 1): control-member spread advantage

    std::uint64_t seed = 1;
};

ScenarioConfig default_scenario(Variable v);

// per-case truth distributions, aligned with Dataset.cases
struct TruthRecord {
    Family family = Family::tn;
    std::vector<double> param1, param2;
};

struct Scenario {
    Dataset data;
    TruthRecord truth;
};

Scenario generate(const ScenarioConfig& cfg);

// mean CRPS of the true distribution over the complete cases: the
// unimprovable reference score in expectation
double oracle_mean_crps(const TruthRecord& truth, const Dataset& data);

void write_truth_csv(const std::string& path, const Dataset& data, const TruthRecord& truth);
void write_truth_csv(std::ostream& out, const Dataset& data, const TruthRecord& truth);
// reads a truth csv back, aligned against the given dataset's case order
TruthRecord read_truth_csv(const std::string& path, const Dataset& data);

}  // namespace enscal
