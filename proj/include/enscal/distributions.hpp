#pragma once

#include <array>
#include <string>
#include <variant>

#include "enscal/common.hpp"

namespace enscal {

// Parametric predictive distributions, all with support in [0, inf).
// Truncation / censoring is fixed at zero.

struct TruncatedNormal {  // normal truncated from below at 0
    double mu = 0.0;      // location of the parent normal
    double sigma = 1.0;   // scale of the parent normal
};

struct LogNormalMoments {  // log-normal parameterized by its mean and variance
    double m = 1.0;        // mean, > 0
    double v = 1.0;        // variance, > 0
};

struct CensoredLogistic {  // logistic censored from below at 0
    double mu = 0.0;
    double sigma = 1.0;
};

struct CensoredNormal {  // normal censored from below at 0
    double mu = 0.0;
    double sigma = 1.0;
};

using Distribution =
    std::variant<TruncatedNormal, LogNormalMoments, CensoredLogistic, CensoredNormal>;

enum class Family { tn, ln, cl0, cn0 };

std::string family_name(Family f);
Family family_from_name(const std::string& name);
Family family_of(const Distribution& d);
// build from the two serialized parameters (tn/cl0/cn0: mu,sigma; ln: m,v)
Distribution make_distribution(Family f, double p1, double p2);
std::array<double, 2> distribution_params(const Distribution& d);

// Scale parameters are floored at this value inside cdf/quantile/crps; callers
// may pass smaller (or zero) scales and see the floored result.
constexpr double min_scale = 1e-8;

// standard normal helpers, exposed because verification needs them too
double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);  // AS 241 (PPND16)

// moment map for the log-normal: mean m > 0, variance v > 0 -> (mu_log, sigma_log)
std::array<double, 2> ln_from_moments(double m, double v);

double cdf(const Distribution& d, double x);
// smallest x with cdf(x) >= p; p in [0, 1]
double quantile(const Distribution& d, double p);
// closed-form CRPS; finite for every finite x (x below the support contributes |x|)
double crps(const Distribution& d, double x);
// d crps / d (natural params): tn/cl0/cn0 -> (d mu, d sigma); ln -> (d m, d v)
std::array<double, 2> crps_grad(const Distribution& d, double x);

double mean(const Distribution& d);
double median(const Distribution& d);
double point_mass_at_zero(const Distribution& d);

}  // namespace enscal
