#include "enscal/distributions.hpp"

#include <cmath>
#include <limits>

namespace enscal {

namespace {

constexpr double inv_sqrt_2pi = 0.3989422804014326779;
constexpr double sqrt_2 = 1.4142135623730950488;
constexpr double inv_sqrt_pi = 0.5641895835477562869;

// The truncated-normal closed forms divide by Phi(mu/sigma)^2; below this
// ratio the denominator underflows, and the distribution is numerically a
// point mass at zero anyway, so the location is lifted to the clamp.
// mu/sigma is clamped here so every Phi(alpha) power that appears in the
// truncated-normal crps and its gradient (up to Phi(alpha)^3) stays a normal
// double: Phi(-17)^3 ~ 7e-194
constexpr double tn_min_alpha = -17.0;

double stable_logistic(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

double softplus(double u) {
    if (u > 0.0) return u + std::log1p(std::exp(-u));
    return std::log1p(std::exp(u));
}

}  // namespace

double normal_pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / sqrt_2); }

// Wichura's algorithm AS 241, PPND16. Relative error ~1e-16 over (0,1).
double normal_quantile(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw validation_error("quantile probability outside [0,1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) *
                        r +
                    4.5921953931549871457e+4) *
                       r +
                   1.3731693765509461125e+4) *
                      r +
                  1.9715909503065514427e+3) *
                     r +
                 1.3314166789178437745e+2) *
                    r +
                3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) *
                        r +
                    2.1213794301586595867e+4) *
                       r +
                   5.3941960214247511077e+3) *
                      r +
                  6.8718700749205790830e+2) *
                     r +
                 4.2313330701600911252e+1) *
                    r +
                1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) *
                       r +
                   1.27045825245236838258e+0) *
                      r +
                  3.64784832476320460504e+0) *
                     r +
                 5.76949722146069140550e+0) *
                    r +
                4.63033784615654529590e+0) *
                   r +
               1.42343711074968357734e+0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) *
                       r +
                   1.48103976427480074590e-1) *
                      r +
                  6.89767334985100004550e-1) *
                     r +
                 1.67638483018380384940e+0) *
                    r +
                2.05319162663775882187e+0) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) *
                       r +
                   2.65321895265761230930e-2) *
                      r +
                  2.96560571828504891230e-1) *
                     r +
                 1.78482653991729133580e+0) *
                    r +
                5.46378491116411436990e+0) *
                   r +
               6.65790464350110377720e+0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) *
                       r +
                   7.86869131145613259100e-4) *
                      r +
                  1.48753612908506148525e-2) *
                     r +
                 1.36929880922735805310e-1) *
                    r +
                5.99832206555887937690e-1) *
                   r +
               1.0);
    }
    return q < 0.0 ? -val : val;
}

std::string family_name(Family f) {
    switch (f) {
        case Family::tn: return "tn";
        case Family::ln: return "ln";
        case Family::cl0: return "cl0";
        case Family::cn0: return "cn0";
    }
    throw config_error("bad family");
}

Family family_from_name(const std::string& name) {
    if (name == "tn") return Family::tn;
    if (name == "ln") return Family::ln;
    if (name == "cl0") return Family::cl0;
    if (name == "cn0") return Family::cn0;
    throw config_error("unknown family '" + name + "' (expected tn|ln|cl0|cn0)");
}

Family family_of(const Distribution& d) {
    // variant alternatives are declared in Family order
    return static_cast<Family>(d.index());
}

Distribution make_distribution(Family f, double p1, double p2) {
    switch (f) {
        case Family::tn: return TruncatedNormal{p1, p2};
        case Family::ln:
            if (p1 <= 0.0 || p2 <= 0.0)
                throw validation_error("log-normal moments must be positive");
            return LogNormalMoments{p1, p2};
        case Family::cl0: return CensoredLogistic{p1, p2};
        case Family::cn0: return CensoredNormal{p1, p2};
    }
    throw config_error("bad family");
}

std::array<double, 2> distribution_params(const Distribution& d) {
    if (auto* t = std::get_if<TruncatedNormal>(&d)) return {t->mu, t->sigma};
    if (auto* l = std::get_if<LogNormalMoments>(&d)) return {l->m, l->v};
    if (auto* c = std::get_if<CensoredLogistic>(&d)) return {c->mu, c->sigma};
    auto& n = std::get<CensoredNormal>(d);
    return {n.mu, n.sigma};
}

std::array<double, 2> ln_from_moments(double m, double v) {
    if (!(m > 0.0) || !(v > 0.0)) throw validation_error("ln_from_moments requires m > 0, v > 0");
    const double a = v + m * m;
    const double mu_log = std::log(m * m / std::sqrt(a));
    const double sigma_log = std::sqrt(std::log1p(v / (m * m)));
    return {mu_log, sigma_log};
}

namespace {

struct TnParts {
    double s;      // floored sigma
    double mu;     // clamped location
    double alpha;  // mu / s, >= tn_min_alpha
    double denom;  // Phi(alpha), the mass of the parent above 0
};

TnParts tn_parts(const TruncatedNormal& d) {
    TnParts p;
    p.s = std::max(d.sigma, min_scale);
    p.alpha = d.mu / p.s;
    if (p.alpha < tn_min_alpha) p.alpha = tn_min_alpha;
    p.mu = p.alpha * p.s;
    p.denom = normal_cdf(p.alpha);
    return p;
}

// CRPS of the truncated normal for x >= 0, written as sigma * G(z, alpha)
// with z = (x - mu)/sigma and alpha = mu/sigma:
//   G = [2 z Phi(z) + 2 phi(z) - z (1 + Phi(-alpha))] / Phi(alpha)
//       - Phi(sqrt(2) alpha) / (sqrt(pi) Phi(alpha)^2)
// Evaluated through survival functions: the bracket equals
// z (Phi(alpha) - 2 Phi(-z)) + 2 phi(z), which avoids the catastrophic
// cancellation of 2 z Phi(z) - 2z when both tails saturate.
double tn_G(double z, double alpha, double denom) {
    const double a_over_d = z * (1.0 - 2.0 * normal_cdf(-z) / denom) + 2.0 * normal_pdf(z) / denom;
    return a_over_d - inv_sqrt_pi * normal_cdf(sqrt_2 * alpha) / (denom * denom);
}

}  // namespace

double cdf(const Distribution& dist, double x) {
    if (auto* t = std::get_if<TruncatedNormal>(&dist)) {
        if (x < 0.0) return 0.0;
        const TnParts p = tn_parts(*t);
        const double z = (x - p.mu) / p.s;
        const double c = (normal_cdf(z) - normal_cdf(-p.alpha)) / p.denom;
        return std::min(1.0, std::max(0.0, c));
    }
    if (auto* l = std::get_if<LogNormalMoments>(&dist)) {
        if (x <= 0.0) return 0.0;
        const auto [mu_log, sigma_log] = ln_from_moments(l->m, l->v);
        return normal_cdf((std::log(x) - mu_log) / std::max(sigma_log, min_scale));
    }
    if (auto* c = std::get_if<CensoredLogistic>(&dist)) {
        if (x < 0.0) return 0.0;
        return stable_logistic((x - c->mu) / std::max(c->sigma, min_scale));
    }
    auto& n = std::get<CensoredNormal>(dist);
    if (x < 0.0) return 0.0;
    return normal_cdf((x - n.mu) / std::max(n.sigma, min_scale));
}

double quantile(const Distribution& dist, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw validation_error("quantile probability outside [0,1]");
    if (auto* t = std::get_if<TruncatedNormal>(&dist)) {
        const TnParts q = tn_parts(*t);
        const double target = normal_cdf(-q.alpha) + p * q.denom;
        const double x = q.mu + q.s * normal_quantile(std::min(target, 1.0));
        return std::max(0.0, x);
    }
    if (auto* l = std::get_if<LogNormalMoments>(&dist)) {
        if (p == 0.0) return 0.0;
        const auto [mu_log, sigma_log] = ln_from_moments(l->m, l->v);
        return std::exp(mu_log + std::max(sigma_log, min_scale) * normal_quantile(p));
    }
    if (auto* c = std::get_if<CensoredLogistic>(&dist)) {
        const double s = std::max(c->sigma, min_scale);
        if (p <= stable_logistic(-c->mu / s)) return 0.0;
        if (p == 1.0) return std::numeric_limits<double>::infinity();
        return c->mu + s * std::log(p / (1.0 - p));
    }
    auto& n = std::get<CensoredNormal>(dist);
    const double s = std::max(n.sigma, min_scale);
    if (p <= normal_cdf(-n.mu / s)) return 0.0;
    return n.mu + s * normal_quantile(p);
}

double crps(const Distribution& dist, double x) {
    // observations below the support contribute |x| plus the score at zero
    if (x < 0.0) return -x + crps(dist, 0.0);

    if (auto* t = std::get_if<TruncatedNormal>(&dist)) {
        const TnParts p = tn_parts(*t);
        const double z = (x - p.mu) / p.s;
        return p.s * tn_G(z, p.alpha, p.denom);
    }
    if (auto* l = std::get_if<LogNormalMoments>(&dist)) {
        // x (2 Phi(w) - 1) - 2 m [Phi(w - sl) + Phi(sl/sqrt(2)) - 1],
        // w = (log x - ml)/sl; the moment parameterization makes E X = m exact
        const auto [ml, sl0] = ln_from_moments(l->m, l->v);
        const double sl = std::max(sl0, min_scale);
        double pw = 0.0, pws = 0.0;  // Phi(w), Phi(w - sl); x = 0 -> w = -inf
        if (x > 0.0) {
            const double w = (std::log(x) - ml) / sl;
            pw = normal_cdf(w);
            pws = normal_cdf(w - sl);
        }
        return x * (2.0 * pw - 1.0) - 2.0 * l->m * (pws + normal_cdf(sl / sqrt_2) - 1.0);
    }
    if (auto* c = std::get_if<CensoredLogistic>(&dist)) {
        // sigma [2 softplus(z) - z - 1 - softplus(a) + logistic(a)], a = -mu/sigma
        const double s = std::max(c->sigma, min_scale);
        const double z = (x - c->mu) / s;
        const double a = -c->mu / s;
        return s * (2.0 * softplus(z) - z - 1.0 - softplus(a) + stable_logistic(a));
    }
    // censored normal:
    // sigma [z (2 Phi(z) - 1) + 2 phi(z) - a Phi(a)^2 - 2 phi(a) Phi(a)
    //        - Phi(-sqrt(2) a)/sqrt(pi)], a = -mu/sigma
    auto& n = std::get<CensoredNormal>(dist);
    const double s = std::max(n.sigma, min_scale);
    const double z = (x - n.mu) / s;
    const double a = -n.mu / s;
    const double pa = normal_cdf(a);
    return s * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - a * pa * pa -
                2.0 * normal_pdf(a) * pa - inv_sqrt_pi * normal_cdf(-sqrt_2 * a));
}

std::array<double, 2> crps_grad(const Distribution& dist, double x) {
    const double xe = std::max(x, 0.0);  // below the support the score is |x| + crps(0)

    if (auto* t = std::get_if<TruncatedNormal>(&dist)) {
        const TnParts p = tn_parts(*t);
        const double z = (xe - p.mu) / p.s;
        const double D = p.denom;
        const double G = tn_G(z, p.alpha, D);
        const double phi_a = normal_pdf(p.alpha);
        const double a_over_d =
            z * (1.0 - 2.0 * normal_cdf(-z) / D) + 2.0 * normal_pdf(z) / D;
        const double Gz = 1.0 - 2.0 * normal_cdf(-z) / D;
        const double Ga = (z - a_over_d) * phi_a / D -
                          inv_sqrt_pi * (sqrt_2 * normal_pdf(sqrt_2 * p.alpha) / (D * D) -
                                         2.0 * normal_cdf(sqrt_2 * p.alpha) * phi_a / (D * D * D));
        double dmu = -Gz + Ga;
        double dsigma = G - z * Gz - p.alpha * Ga;
        if (t->sigma < min_scale) dsigma = 0.0;
        return {dmu, dsigma};
    }
    if (auto* l = std::get_if<LogNormalMoments>(&dist)) {
        const auto [ml, sl0] = ln_from_moments(l->m, l->v);
        const double sl = std::max(sl0, min_scale);
        const double m = l->m, v = l->v;
        double pws = 0.0, phiw_x = 0.0;  // Phi(w - sl), x*phi(w)
        if (xe > 0.0) {
            const double w = (std::log(xe) - ml) / sl;
            pws = normal_cdf(w - sl);
            phiw_x = xe * normal_pdf(w);
        }
        const double bracket = pws + normal_cdf(sl / sqrt_2) - 1.0;
        const double d_ml = -2.0 * m * bracket;
        const double d_sl =
            2.0 * phiw_x - 2.0 * m * sl * bracket - sqrt_2 * m * normal_pdf(sl / sqrt_2);
        // chain through the moment map
        const double A = v + m * m;
        const double dml_dm = 2.0 / m - m / A;
        const double dml_dv = -0.5 / A;
        const double dsl_dm = (m / A - 1.0 / m) / sl;
        const double dsl_dv = 0.5 / (A * sl);
        return {d_ml * dml_dm + d_sl * dsl_dm, d_ml * dml_dv + d_sl * dsl_dv};
    }
    if (auto* c = std::get_if<CensoredLogistic>(&dist)) {
        const double s = std::max(c->sigma, min_scale);
        const double z = (xe - c->mu) / s;
        const double a = -c->mu / s;
        const double La = stable_logistic(a);
        const double K = 2.0 * softplus(z) - z - 1.0 - softplus(a) + La;
        const double Kz = 2.0 * stable_logistic(z) - 1.0;
        const double Ka = -La * La;
        double dsigma = K - z * Kz - a * Ka;
        if (c->sigma < min_scale) dsigma = 0.0;
        return {-Kz - Ka, dsigma};
    }
    auto& n = std::get<CensoredNormal>(dist);
    const double s = std::max(n.sigma, min_scale);
    const double z = (xe - n.mu) / s;
    const double a = -n.mu / s;
    const double pa = normal_cdf(a);
    const double H = z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - a * pa * pa -
                     2.0 * normal_pdf(a) * pa - inv_sqrt_pi * normal_cdf(-sqrt_2 * a);
    const double Hz = 2.0 * normal_cdf(z) - 1.0;
    const double Ha = -pa * pa;
    double dsigma = H - z * Hz - a * Ha;
    if (n.sigma < min_scale) dsigma = 0.0;
    return {-Hz - Ha, dsigma};
}

double mean(const Distribution& dist) {
    if (auto* t = std::get_if<TruncatedNormal>(&dist)) {
        const TnParts p = tn_parts(*t);
        return p.mu + p.s * normal_pdf(p.alpha) / p.denom;
    }
    if (auto* l = std::get_if<LogNormalMoments>(&dist)) return l->m;
    if (auto* c = std::get_if<CensoredLogistic>(&dist)) {
        const double s = std::max(c->sigma, min_scale);
        return s * softplus(c->mu / s);
    }
    auto& n = std::get<CensoredNormal>(dist);
    const double s = std::max(n.sigma, min_scale);
    return n.mu * normal_cdf(n.mu / s) + s * normal_pdf(n.mu / s);
}

double median(const Distribution& dist) { return quantile(dist, 0.5); }

double point_mass_at_zero(const Distribution& dist) {
    if (std::holds_alternative<TruncatedNormal>(dist) ||
        std::holds_alternative<LogNormalMoments>(dist))
        return 0.0;
    return cdf(dist, 0.0);
}

}  // namespace enscal
