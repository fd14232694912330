#include <cmath>

#include "doctest.h"
#include "enscal/distributions.hpp"
#include "enscal/rng.hpp"
#include "support/oracles.hpp"

using namespace enscal;

namespace {

// integration bound: far enough out that 1 - F is ~1e-12
double upper_bound_for(const Distribution& d) {
    if (auto* t = std::get_if<TruncatedNormal>(&d)) return std::max(0.0, t->mu) + 9.0 * t->sigma;
    if (auto* l = std::get_if<LogNormalMoments>(&d)) {
        const auto [ml, sl] = ln_from_moments(l->m, l->v);
        return std::exp(ml + 7.5 * sl);
    }
    if (auto* c = std::get_if<CensoredLogistic>(&d)) return std::max(0.0, c->mu) + 18.0 * c->sigma;
    auto& n = std::get<CensoredNormal>(d);
    return std::max(0.0, n.mu) + 9.0 * n.sigma;
}

double crps_oracle(const Distribution& d, double x) {
    const double hi = std::max(upper_bound_for(d), x + 1.0);
    return oracles::crps_by_integration([&](double y) { return cdf(d, y); }, x, hi, 20000);
}

}  // namespace

TEST_CASE("cdf frozen anchor values") {
    // logistic censored at zero: point mass (1 + e^{mu/sigma})^{-1}
    CHECK(cdf(CensoredLogistic{0.0, 1.0}, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(cdf(CensoredLogistic{1.0, 1.0}, 0.0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
    // normal censored at zero: Phi(-mu/sigma); Phi(-1) from tables
    CHECK(cdf(CensoredNormal{1.0, 1.0}, 0.0) == doctest::Approx(0.15865525393145707).epsilon(1e-10));
    // truncation leaves no mass at zero
    CHECK(cdf(TruncatedNormal{1.0, 1.0}, 0.0) == doctest::Approx(0.0));
    CHECK(cdf(TruncatedNormal{5.0, 1.0}, -0.001) == 0.0);
    CHECK(cdf(LogNormalMoments{1.0, 1.0}, 0.0) == 0.0);
    // far right tail
    CHECK(cdf(TruncatedNormal{5.0, 1.0}, 60.0) == doctest::Approx(1.0));
}

TEST_CASE("quantile frozen anchor values") {
    for (double p : {0.01, 0.1, 0.5, 0.9, 0.99})
        CHECK(quantile(LogNormalMoments{std::exp(0.5), (std::exp(1.0) - 1.0) * std::exp(1.0)}, p) ==
              doctest::Approx(std::exp(normal_quantile(p))).epsilon(1e-10));
    CHECK(quantile(TruncatedNormal{5.0, 1.0}, 0.5) == doctest::Approx(5.0).epsilon(1e-4));
    // censored families return 0 for any p inside the point mass
    CHECK(quantile(CensoredNormal{-1.0, 1.0}, 0.5) == 0.0);
    CHECK(quantile(CensoredLogistic{0.0, 1.0}, 0.5) == 0.0);
    CHECK(quantile(CensoredLogistic{0.0, 1.0}, 0.500001) > 0.0);
    CHECK_THROWS_AS(quantile(TruncatedNormal{1.0, 1.0}, 1.5), validation_error);
    CHECK_THROWS_AS(quantile(TruncatedNormal{1.0, 1.0}, -0.1), validation_error);
}

TEST_CASE("quantile inverts the cdf") {
    Rng rng(21);
    for (int rep = 0; rep < 60; ++rep) {
        Distribution dists[4] = {
            TruncatedNormal{rng.uniform(-2.0, 8.0), rng.uniform(0.2, 4.0)},
            LogNormalMoments{rng.uniform(0.5, 8.0), rng.uniform(0.1, 4.0)},
            CensoredLogistic{rng.uniform(-2.0, 8.0), rng.uniform(0.2, 4.0)},
            CensoredNormal{rng.uniform(-2.0, 8.0), rng.uniform(0.2, 4.0)},
        };
        for (const auto& d : dists) {
            const double p = rng.uniform(0.02, 0.98);
            const double q = quantile(d, p);
            if (q == 0.0) {
                CHECK(cdf(d, 0.0) >= p - 1e-9);  // inside the point mass
            } else {
                CHECK(cdf(d, q) == doctest::Approx(p).epsilon(1e-7));
            }
        }
    }
}

TEST_CASE("moment map hits the frozen log-scale parameters") {
    const double m = std::exp(0.5);
    const double v = (std::exp(1.0) - 1.0) * std::exp(1.0);
    const auto [mu_log, sigma_log] = ln_from_moments(m, v);
    CHECK(mu_log == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sigma_log == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ln_from_moments(0.0, 1.0), validation_error);
    CHECK_THROWS_AS(ln_from_moments(1.0, -1.0), validation_error);
}

TEST_CASE("moment map round-trips against the analytic moments") {
    Rng rng(22);
    for (int rep = 0; rep < 50; ++rep) {
        const double m = rng.uniform(0.1, 10.0);
        const double v = rng.uniform(0.01, 8.0);
        const auto [ml, sl] = ln_from_moments(m, v);
        const double m_back = std::exp(ml + 0.5 * sl * sl);
        const double v_back = (std::exp(sl * sl) - 1.0) * std::exp(2.0 * ml + sl * sl);
        CHECK(m_back == doctest::Approx(m).epsilon(1e-10));
        CHECK(v_back == doctest::Approx(v).epsilon(1e-10));
    }
}

TEST_CASE("crps closed forms match the integration oracle") {
    Rng rng(23);
    int checked = 0;
    for (int rep = 0; rep < 30; ++rep) {
        const Distribution dists[4] = {
            TruncatedNormal{rng.uniform(-2.0, 8.0), rng.uniform(0.2, 4.0)},
            LogNormalMoments{rng.uniform(0.5, 8.0), rng.uniform(0.1, 6.0)},
            CensoredLogistic{rng.uniform(-4.0, 8.0), rng.uniform(0.2, 4.0)},
            CensoredNormal{rng.uniform(-4.0, 8.0), rng.uniform(0.2, 4.0)},
        };
        for (const auto& d : dists) {
            const double x = rng.uniform(0.0, 12.0);
            const double closed = crps(d, x);
            const double numeric = crps_oracle(d, x);
            CHECK(std::fabs(closed - numeric) <= 1e-5 * std::max(std::fabs(numeric), 1e-3));
            ++checked;
        }
    }
    CHECK(checked >= 120);
}

TEST_CASE("crps anchor: truncated normal far from the boundary behaves like a normal") {
    // TN(5,1) at the center: sigma * (2 phi(0) - 1/sqrt(pi)) up to truncation ~1e-7
    CHECK(crps(TruncatedNormal{5.0, 1.0}, 5.0) == doctest::Approx(0.2337).epsilon(1e-3 / 0.2337));
    CHECK(crps(TruncatedNormal{5.0, 1.0}, 5.0) ==
          doctest::Approx(crps_oracle(TruncatedNormal{5.0, 1.0}, 5.0)).epsilon(1e-6));
}

TEST_CASE("degenerate scales collapse the score to absolute error") {
    // effective point: max(mu, 0) for tn/cl0/cn0, m for ln (as v -> 0)
    CHECK(crps(TruncatedNormal{3.0, 1e-8}, 5.0) == doctest::Approx(2.0).epsilon(1e-6 / 2.0));
    CHECK(crps(TruncatedNormal{-3.0, 1e-8}, 5.0) == doctest::Approx(5.0).epsilon(1e-6 / 5.0));
    CHECK(crps(CensoredNormal{3.0, 1e-8}, 5.0) == doctest::Approx(2.0).epsilon(1e-6 / 2.0));
    CHECK(crps(CensoredNormal{-3.0, 1e-8}, 5.0) == doctest::Approx(5.0).epsilon(1e-6 / 5.0));
    CHECK(crps(CensoredLogistic{3.0, 1e-8}, 5.0) == doctest::Approx(2.0).epsilon(1e-6 / 2.0));
    CHECK(crps(CensoredLogistic{-3.0, 1e-8}, 5.0) == doctest::Approx(5.0).epsilon(1e-6 / 5.0));
    const double sl = 1e-8;
    const double v = 9.0 * std::expm1(sl * sl);  // m = 3, sigma_log = 1e-8
    CHECK(crps(LogNormalMoments{3.0, v}, 5.0) == doctest::Approx(2.0).epsilon(1e-6 / 2.0));
    // at the point itself the score vanishes
    CHECK(crps(TruncatedNormal{3.0, 1e-8}, 3.0) <= 1e-6);
    // zero scale is floored, not rejected
    CHECK(crps(TruncatedNormal{3.0, 0.0}, 5.0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("observations below the support add their distance") {
    const Distribution d = TruncatedNormal{2.0, 1.0};
    CHECK(crps(d, -1.5) == doctest::Approx(1.5 + crps(d, 0.0)).epsilon(1e-12));
}

TEST_CASE("crps is nonnegative") {
    Rng rng(24);
    for (int rep = 0; rep < 100; ++rep) {
        const Distribution dists[4] = {
            TruncatedNormal{rng.uniform(-5.0, 10.0), rng.uniform(0.05, 5.0)},
            LogNormalMoments{rng.uniform(0.1, 10.0), rng.uniform(0.01, 10.0)},
            CensoredLogistic{rng.uniform(-5.0, 10.0), rng.uniform(0.05, 5.0)},
            CensoredNormal{rng.uniform(-5.0, 10.0), rng.uniform(0.05, 5.0)},
        };
        for (const auto& d : dists) CHECK(crps(d, rng.uniform(0.0, 15.0)) >= 0.0);
    }
}

TEST_CASE("analytic crps gradients match central finite differences") {
    Rng rng(25);
    auto check_pair = [&](Family fam, double p1, double p2, double x) {
        const auto g = crps_grad(make_distribution(fam, p1, p2), x);
        const double fd1 = oracles::central_diff(
            [&](double t) { return crps(make_distribution(fam, t, p2), x); }, p1);
        const double fd2 = oracles::central_diff(
            [&](double t) { return crps(make_distribution(fam, p1, t), x); }, p2);
        CHECK(std::fabs(g[0] - fd1) <= 1e-5 * std::max(std::fabs(fd1), 1e-3));
        CHECK(std::fabs(g[1] - fd2) <= 1e-5 * std::max(std::fabs(fd2), 1e-3));
    };
    for (int rep = 0; rep < 50; ++rep) {
        check_pair(Family::tn, rng.uniform(-2.0, 8.0), rng.uniform(0.3, 4.0),
                   rng.uniform(0.0, 12.0));
        check_pair(Family::ln, rng.uniform(0.5, 8.0), rng.uniform(0.2, 6.0),
                   rng.uniform(0.1, 12.0));
        check_pair(Family::cl0, rng.uniform(-3.0, 8.0), rng.uniform(0.3, 4.0),
                   rng.uniform(0.0, 12.0));
        check_pair(Family::cn0, rng.uniform(-3.0, 8.0), rng.uniform(0.3, 4.0),
                   rng.uniform(0.0, 12.0));
    }
}

TEST_CASE("the sampling distribution minimizes expected crps") {
    // Monte Carlo propriety check against a panel of perturbed forecasts.
    Rng rng(26);
    const Distribution truth = TruncatedNormal{2.0, 1.0};
    const Distribution panel[4] = {
        TruncatedNormal{2.4, 1.0},
        TruncatedNormal{2.0, 1.5},
        TruncatedNormal{1.5, 0.7},
        CensoredNormal{2.0, 1.0},
    };
    const int n = 100000;
    double score_truth = 0.0, score_panel[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) {
        const double x = quantile(truth, rng.uniform(1e-12, 1.0 - 1e-12));
        score_truth += crps(truth, x);
        for (int j = 0; j < 4; ++j) score_panel[j] += crps(panel[j], x);
    }
    for (int j = 0; j < 4; ++j) CHECK(score_truth <= score_panel[j] * 1.01);
}

TEST_CASE("means match their closed forms and the frozen anchor") {
    // TN(5,1): mu + sigma phi(5)/Phi(5), within 2e-6 of 5
    const double m = mean(TruncatedNormal{5.0, 1.0});
    CHECK(std::fabs(m - 5.0) < 2e-6);
    CHECK(m > 5.0);
    CHECK(mean(LogNormalMoments{3.5, 2.0}) == doctest::Approx(3.5));
    // censored families lose the mass below zero
    CHECK(mean(CensoredNormal{0.0, 1.0}) == doctest::Approx(normal_pdf(0.0)).epsilon(1e-10));
    CHECK(mean(CensoredLogistic{0.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
    // numeric check of the mean against integration of 1 - F on [0, inf)
    for (const Distribution d :
         {Distribution{TruncatedNormal{1.0, 2.0}}, Distribution{CensoredNormal{2.0, 1.5}},
          Distribution{CensoredLogistic{1.0, 0.8}}, Distribution{LogNormalMoments{2.0, 1.0}}}) {
        const double hi = upper_bound_for(d);
        const double numeric = oracles::simpson(
            [&](double y) { return 1.0 - cdf(d, y); }, 0.0, hi, 40000);
        CHECK(mean(d) == doctest::Approx(numeric).epsilon(1e-6));
    }
}

TEST_CASE("point mass at zero") {
    CHECK(point_mass_at_zero(TruncatedNormal{1.0, 1.0}) == 0.0);
    CHECK(point_mass_at_zero(LogNormalMoments{1.0, 1.0}) == 0.0);
    CHECK(point_mass_at_zero(CensoredLogistic{0.0, 1.0}) == doctest::Approx(0.5));
    CHECK(point_mass_at_zero(CensoredNormal{1.0, 1.0}) ==
          doctest::Approx(0.15865525393145707).epsilon(1e-10));
}

TEST_CASE("family names and parameter round-trip") {
    for (Family f : {Family::tn, Family::ln, Family::cl0, Family::cn0}) {
        CHECK(family_from_name(family_name(f)) == f);
        const auto d = make_distribution(f, 2.0, 1.5);
        CHECK(family_of(d) == f);
        const auto p = distribution_params(d);
        CHECK(p[0] == 2.0);
        CHECK(p[1] == 1.5);
    }
    CHECK_THROWS_AS(family_from_name("weibull"), config_error);
    CHECK_THROWS_AS(make_distribution(Family::ln, -1.0, 1.0), validation_error);
}

TEST_CASE("normal quantile agrees with the cdf") {
    for (double p : {1e-9, 1e-4, 0.025, 0.5, 0.8, 1.0 - 1e-4, 1.0 - 1e-9})
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
    // 11/12 quantile, used by the default central interval
    CHECK(normal_quantile(11.0 / 12.0) == doctest::Approx(1.3829941271006).epsilon(1e-9));
}
