#include "enscal/emos.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "enscal/optim.hpp"
#include "enscal/rng.hpp"

namespace enscal {

TruncatedNormal tn_link(const TnEmosParams& p, double f_ctrl, double mean_exch, double md) {
    const double mu = p.a0 + p.a_ctrl * p.a_ctrl * f_ctrl + p.a_ens * p.a_ens * mean_exch;
    const double sigma = std::sqrt(p.b0 * p.b0 + p.b1 * p.b1 * md);
    return TruncatedNormal{mu, sigma};
}

LogNormalMoments ln_link(const LnEmosParams& p, double f_ctrl, double mean_exch, double var) {
    const double m =
        p.alpha0 + p.alpha_ctrl * p.alpha_ctrl * f_ctrl + p.alpha_ens * p.alpha_ens * mean_exch;
    const double v = p.beta0 * p.beta0 + p.beta1 * p.beta1 * var;
    return LogNormalMoments{std::max(m, 1e-6), std::max(v, 1e-10)};
}

Distribution censored_link(const CensoredEmosParams& p, Family family, double f_ctrl,
                           double mean_exch, double p0, double var) {
    const double mu = p.gamma0 + p.gamma_ctrl * f_ctrl + p.gamma_ens * mean_exch + p.nu * p0;
    const double sigma = std::exp(p.delta0 + p.delta1 * std::log(std::max(var, min_ensemble_var)));
    if (family == Family::cl0) return CensoredLogistic{mu, sigma};
    if (family == Family::cn0) return CensoredNormal{mu, sigma};
    throw config_error("censored_link expects cl0 or cn0");
}

EmosCase make_emos_case(const Members& members, double obs) {
    const auto s = summarize(members);
    return EmosCase{members[0], s.mean_exch, s.mean_abs_diff, s.variance, s.zero_prop, obs};
}

Distribution emos_predict(Family family, const EmosParams& params, const EmosCase& c) {
    if (auto* t = std::get_if<TnEmosParams>(&params)) return tn_link(*t, c.f_ctrl, c.mean_exch, c.md);
    if (auto* l = std::get_if<LnEmosParams>(&params)) return ln_link(*l, c.f_ctrl, c.mean_exch, c.var);
    return censored_link(std::get<CensoredEmosParams>(params), family, c.f_ctrl, c.mean_exch, c.p0,
                         c.var);
}

Distribution emos_predict(const EmosFit& fit, const EmosCase& c) {
    return emos_predict(fit.family, fit.params, c);
}

double emos_mean_crps(const std::vector<EmosCase>& cases, Family family, const EmosParams& params) {
    double acc = 0.0;
    for (const auto& c : cases) acc += crps(emos_predict(family, params, c), c.obs);
    return acc / static_cast<double>(cases.size());
}

namespace {

std::vector<double> pack(const EmosParams& p) {
    if (auto* t = std::get_if<TnEmosParams>(&p)) return {t->a0, t->a_ctrl, t->a_ens, t->b0, t->b1};
    if (auto* l = std::get_if<LnEmosParams>(&p))
        return {l->alpha0, l->alpha_ctrl, l->alpha_ens, l->beta0, l->beta1};
    auto& c = std::get<CensoredEmosParams>(p);
    return {c.gamma0, c.gamma_ctrl, c.gamma_ens, c.nu, c.delta0, c.delta1};
}

EmosParams unpack(Family family, const std::vector<double>& x) {
    switch (family) {
        case Family::tn: return TnEmosParams{x[0], x[1], x[2], x[3], x[4]};
        case Family::ln: return LnEmosParams{x[0], x[1], x[2], x[3], x[4]};
        default: return CensoredEmosParams{x[0], x[1], x[2], x[3], x[4], x[5]};
    }
}

// mean CRPS (with the ln penalty) and its gradient in the packed coordinates
double objective(const std::vector<EmosCase>& cases, Family family, const std::vector<double>& x,
                 std::vector<double>& grad) {
    const double n = static_cast<double>(cases.size());
    for (auto& g : grad) g = 0.0;
    double loss = 0.0;

    if (family == Family::tn) {
        for (const auto& c : cases) {
            const double mu = x[0] + x[1] * x[1] * c.f_ctrl + x[2] * x[2] * c.mean_exch;
            const double sigma = std::sqrt(x[3] * x[3] + x[4] * x[4] * c.md);
            const Distribution d = TruncatedNormal{mu, sigma};
            loss += crps(d, c.obs);
            const auto g = crps_grad(d, c.obs);
            const double sden = std::max(sigma, min_scale);
            grad[0] += g[0];
            grad[1] += g[0] * 2.0 * x[1] * c.f_ctrl;
            grad[2] += g[0] * 2.0 * x[2] * c.mean_exch;
            grad[3] += g[1] * x[3] / sden;
            grad[4] += g[1] * x[4] * c.md / sden;
        }
    } else if (family == Family::ln) {
        for (const auto& c : cases) {
            const double m = x[0] + x[1] * x[1] * c.f_ctrl + x[2] * x[2] * c.mean_exch;
            const double v = std::max(x[3] * x[3] + x[4] * x[4] * c.var, 1e-10);
            if (m <= 1e-9) {
                // infeasible mean: large finite penalty with a restoring slope
                loss += 1e6 + m * m;
                grad[0] += 2.0 * m;
                grad[1] += 2.0 * m * 2.0 * x[1] * c.f_ctrl;
                grad[2] += 2.0 * m * 2.0 * x[2] * c.mean_exch;
                continue;
            }
            const Distribution d = LogNormalMoments{m, v};
            loss += crps(d, c.obs);
            const auto g = crps_grad(d, c.obs);
            grad[0] += g[0];
            grad[1] += g[0] * 2.0 * x[1] * c.f_ctrl;
            grad[2] += g[0] * 2.0 * x[2] * c.mean_exch;
            grad[3] += g[1] * 2.0 * x[3];
            grad[4] += g[1] * 2.0 * x[4] * c.var;
        }
    } else {
        for (const auto& c : cases) {
            const double mu = x[0] + x[1] * c.f_ctrl + x[2] * c.mean_exch + x[3] * c.p0;
            const double t = std::log(std::max(c.var, min_ensemble_var));
            const double sigma = std::exp(x[4] + x[5] * t);
            if (!std::isfinite(sigma)) {  // line-search probe overshot
                for (auto& g : grad) g = 0.0;
                return std::numeric_limits<double>::infinity();
            }
            const Distribution d = family == Family::cl0
                                       ? Distribution{CensoredLogistic{mu, sigma}}
                                       : Distribution{CensoredNormal{mu, sigma}};
            loss += crps(d, c.obs);
            const auto g = crps_grad(d, c.obs);
            grad[0] += g[0];
            grad[1] += g[0] * c.f_ctrl;
            grad[2] += g[0] * c.mean_exch;
            grad[3] += g[0] * c.p0;
            grad[4] += g[1] * sigma;
            grad[5] += g[1] * sigma * t;
        }
    }
    for (auto& g : grad) g /= n;
    return loss / n;
}

struct CaseStats {
    double mean_obs = 0.0, mean_ctrl = 0.0, resid_sd = 1.0, mean_md = 1.0, mean_logvar = 0.0;
    std::array<double, 3> ls = {0.0, 1.0, 0.0};  // obs ~ 1 + f_ctrl + mean_exch
};

CaseStats case_stats(const std::vector<EmosCase>& cases) {
    CaseStats s;
    const double n = static_cast<double>(cases.size());
    double a[3][3] = {{0}}, b[3] = {0};
    double rss = 0.0;
    for (const auto& c : cases) {
        s.mean_obs += c.obs;
        s.mean_ctrl += c.f_ctrl;
        s.mean_md += c.md;
        s.mean_logvar += std::log(std::max(c.var, min_ensemble_var));
        const double row[3] = {1.0, c.f_ctrl, c.mean_exch};
        for (int i = 0; i < 3; ++i) {
            b[i] += row[i] * c.obs;
            for (int j = 0; j < 3; ++j) a[i][j] += row[i] * row[j];
        }
    }
    s.mean_obs /= n;
    s.mean_ctrl /= n;
    s.mean_md /= n;
    s.mean_logvar /= n;
    for (int i = 0; i < 3; ++i) a[i][i] += 1e-8 * std::max(1.0, a[i][i]);  // ridge for rank defects
    // gaussian elimination with partial pivoting on the 3x3 system
    int piv[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(a[piv[r]][col]) > std::fabs(a[piv[best]][col])) best = r;
        std::swap(piv[col], piv[best]);
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[piv[r]][col] / a[piv[col]][col];
            for (int cc = col; cc < 3; ++cc) a[piv[r]][cc] -= f * a[piv[col]][cc];
            b[piv[r]] -= f * b[piv[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double acc = b[piv[col]];
        for (int cc = col + 1; cc < 3; ++cc) acc -= a[piv[col]][cc] * s.ls[cc];
        s.ls[col] = acc / a[piv[col]][col];
    }
    for (const auto& c : cases) {
        const double fit = s.ls[0] + s.ls[1] * c.f_ctrl + s.ls[2] * c.mean_exch;
        rss += (c.obs - fit) * (c.obs - fit);
    }
    s.resid_sd = std::sqrt(std::max(rss / n, 1e-4));
    return s;
}

EmosParams default_init(Family family, const CaseStats& s) {
    if (family == Family::tn)
        return TnEmosParams{s.mean_obs - s.mean_ctrl, 1.0, 0.0, std::max(0.1, s.resid_sd), 0.3};
    if (family == Family::ln)
        return LnEmosParams{std::max(0.05, s.mean_obs - s.mean_ctrl), 1.0, 0.0,
                            std::max(0.1, s.resid_sd), 0.3};
    return CensoredEmosParams{s.mean_obs - s.mean_ctrl, 1.0,           0.0, 0.0,
                              std::log(std::max(0.1, s.resid_sd)),     0.0};
}

EmosParams least_squares_init(Family family, const CaseStats& s) {
    const double c0 = s.ls[0], c1 = s.ls[1], c2 = s.ls[2];
    if (family == Family::tn)
        return TnEmosParams{c0, std::sqrt(std::max(c1, 1e-3)), std::sqrt(std::max(c2, 1e-3)),
                            0.8 * s.resid_sd,
                            0.5 * s.resid_sd / std::sqrt(std::max(s.mean_md, 1e-3))};
    if (family == Family::ln)
        return LnEmosParams{c0, std::sqrt(std::max(c1, 1e-3)), std::sqrt(std::max(c2, 1e-3)),
                            0.8 * s.resid_sd, 0.5};
    // spread: log sigma = delta0 + delta1 log var around the residual sd
    const double delta1 = 0.3;
    return CensoredEmosParams{c0,  c1, c2, 0.0,
                              std::log(std::max(0.05, s.resid_sd)) - delta1 * s.mean_logvar,
                              delta1};
}

}  // namespace

EmosFit fit_emos(const std::vector<EmosCase>& cases, Family family,
                 const std::optional<EmosParams>& init, std::uint64_t seed) {
    if (cases.size() < 2)
        throw insufficient_data_error("emos fit needs at least 2 cases, got " +
                                      std::to_string(cases.size()));
    const CaseStats stats = case_stats(cases);

    std::vector<std::vector<double>> starts;
    starts.push_back(pack(init ? *init : default_init(family, stats)));
    starts.push_back(pack(least_squares_init(family, stats)));
    {
        Rng rng(derive_seed(seed, 0x0e05u, static_cast<std::uint64_t>(family)));
        auto perturbed = pack(default_init(family, stats));
        for (auto& p : perturbed) p += 0.1 * rng.normal();
        starts.push_back(std::move(perturbed));
    }

    const Objective obj = [&](const std::vector<double>& x, std::vector<double>& g) {
        return objective(cases, family, x, g);
    };

    OptimResult best;
    best.value = std::numeric_limits<double>::infinity();
    for (auto& x0 : starts) {
        OptimResult r = minimize_bfgs(obj, std::move(x0), 300, 1e-8);
        if (r.value < best.value) best = std::move(r);
    }

    EmosFit fit;
    fit.family = family;
    fit.params = unpack(family, best.x);
    fit.iterations = best.iterations;
    fit.converged = best.converged;
    fit.mean_crps = emos_mean_crps(cases, family, fit.params);
    for (const auto& c : cases) {
        if (c.var < min_ensemble_var) ++fit.flagged_zero_variance;
        if (family == Family::ln) {
            const auto& p = std::get<LnEmosParams>(fit.params);
            const double m = p.alpha0 + p.alpha_ctrl * p.alpha_ctrl * c.f_ctrl +
                             p.alpha_ens * p.alpha_ens * c.mean_exch;
            if (m <= 1e-9) ++fit.penalized_cases;
        }
    }
    return fit;
}

}  // namespace enscal
