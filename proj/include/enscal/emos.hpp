#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "enscal/distributions.hpp"
#include "enscal/ensemble_stats.hpp"

namespace enscal {

// Regression coefficients mapping ensemble statistics to distribution
// parameters. Location coefficients on the ensemble means enter squared for
// tn/ln (nonnegativity by construction); the censored families use them
// unsquared and add a zero-proportion term.

struct TnEmosParams {
    double a0 = 0.0, a_ctrl = 1.0, a_ens = 0.0;  // location = a0 + a_ctrl^2 f + a_ens^2 fbar
    double b0 = 1.0, b1 = 0.0;                   // scale = sqrt(b0^2 + b1^2 md)
};

struct LnEmosParams {
    double alpha0 = 0.0, alpha_ctrl = 1.0, alpha_ens = 0.0;  // mean m, squared coefficients
    double beta0 = 1.0, beta1 = 0.0;                         // variance v = beta0^2 + beta1^2 var
};

struct CensoredEmosParams {  // shared by cl0 and cn0
    double gamma0 = 0.0, gamma_ctrl = 1.0, gamma_ens = 0.0, nu = 0.0;  // unsquared, + nu * p0
    double delta0 = 0.0, delta1 = 0.0;  // sigma = exp(delta0 + delta1 * log(var))
};

using EmosParams = std::variant<TnEmosParams, LnEmosParams, CensoredEmosParams>;

// ensemble variance is floored here before taking its log in the spread link
constexpr double min_ensemble_var = 1e-6;

TruncatedNormal tn_link(const TnEmosParams& p, double f_ctrl, double mean_exch, double md);
// mean is floored at 1e-6 so the link is total; the fit penalizes m <= 0 instead
LogNormalMoments ln_link(const LnEmosParams& p, double f_ctrl, double mean_exch, double var);
Distribution censored_link(const CensoredEmosParams& p, Family family, double f_ctrl,
                           double mean_exch, double p0, double var);

// One training case reduced to the statistics the links consume.
struct EmosCase {
    double f_ctrl = 0.0;
    double mean_exch = 0.0;
    double md = 0.0;
    double var = 0.0;
    double p0 = 0.0;
    double obs = 0.0;
};

EmosCase make_emos_case(const Members& members, double obs);

struct EmosFit {
    Family family = Family::tn;
    EmosParams params;
    double mean_crps = 0.0;
    int iterations = 0;
    bool converged = false;
    int flagged_zero_variance = 0;  // cases whose ensemble variance hit the floor
    int penalized_cases = 0;        // ln fits: cases with nonpositive mean at the optimum
};

Distribution emos_predict(const EmosFit& fit, const EmosCase& c);
Distribution emos_predict(Family family, const EmosParams& params, const EmosCase& c);

// Minimum-CRPS estimation over the training cases: quasi-Newton from three
// deterministic starts (the provided previous fit if any, a least-squares warm
// start, and a small seeded perturbation), keeping the best final objective.
EmosFit fit_emos(const std::vector<EmosCase>& cases, Family family,
                 const std::optional<EmosParams>& init = std::nullopt, std::uint64_t seed = 0);

// mean CRPS of a parameter vector on a case set (exposed for diagnostics)
double emos_mean_crps(const std::vector<EmosCase>& cases, Family family, const EmosParams& params);

}  // namespace enscal
