#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "enscal/core_data.hpp"
#include "enscal/distributions.hpp"
#include "enscal/ensemble_stats.hpp"
#include "enscal/rng.hpp"

namespace enscal {

// Probabilistic and point-forecast verification: CRPS/CRPSS, PIT and rank
// histograms, central-interval coverage and width, MAE/RMSE, uniformity tests.

// CRPS of the raw ensemble as the empirical-CDF expectation identity:
// (1/K) sum |f_k - x| - (1/(2 K^2)) sum_k sum_l |f_k - f_l|.
double crps_ensemble(const Members& members, double x);

// Probability integral transform. Families with an atom at zero get a
// randomized PIT at the censor point: uniform on [0, cdf(0)].
double pit(const Distribution& d, double x, Rng& rng);

// Rank of the observation in the pooled sorted set of members + observation,
// in 1..12. Ties are broken uniformly among the admissible ranks (relevant
// for zero-irradiance night cases where members and observation are all 0).
int verification_rank(const Members& members, double x, Rng& rng);

// Skill score 1 - crps_f / crps_ref; larger is better, ref must be positive.
double crpss(double mean_crps_f, double mean_crps_ref);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

// Central interval at the given nominal coverage: quantiles at alpha/2 and
// 1 - alpha/2 with alpha = 1 - nominal. The default 5/6 is the nominal
// coverage of an 11-member ensemble range.
constexpr double default_nominal_coverage = 5.0 / 6.0;
Interval central_interval(const Distribution& d, double nominal = default_nominal_coverage);
// ensemble counterpart: the interval spanned by the members
Interval ensemble_interval(const Members& members);

struct CoverageWidth {
    double coverage_pct = 0.0;  // percent of observations inside the closed interval
    double mean_width = 0.0;
};
CoverageWidth coverage_and_width(const std::vector<Interval>& intervals,
                                 const std::vector<double>& observations);

struct PointScores {
    double mae_median = 0.0;  // the median is the MAE-optimal point forecast
    double rmse_mean = 0.0;   // the mean is the RMSE-optimal point forecast
};
PointScores point_scores(const std::vector<Distribution>& dists,
                         const std::vector<double>& observations);
PointScores point_scores(const std::vector<Members>& ensembles,
                         const std::vector<double>& observations);

// One-sample Kolmogorov-Smirnov test against the standard uniform law.
// p-value via the asymptotic Kolmogorov series with the Stephens small-sample
// correction. Requires n >= 20.
struct UniformityTest {
    double statistic = 0.0;
    double p_value = 0.0;
};
UniformityTest uniformity_test(std::vector<double> sample);

// ----- report assembly ------------------------------------------------------

// Predictive distributions of one method, aligned with Dataset.cases.
struct MethodPredictions {
    std::string method;
    std::vector<Distribution> dists;
};

struct VerificationOptions {
    double nominal = default_nominal_coverage;
    std::optional<double> min_obs;  // keep cases with obs >= threshold
    std::uint64_t seed = 1;         // randomized PIT / rank tie-breaking
};

constexpr int histogram_bins = 12;  // K + 1 ranks; PIT binned to match

// Scores of one method at one lead time. The raw ensemble appears as the
// reserved method name "raw" and is the CRPSS reference.
struct ReportRow {
    std::int64_t lead_minutes = 0;
    std::string method;
    std::size_t n_cases = 0;
    double mean_crps = 0.0;
    double mean_crps_raw = 0.0;
    double crpss = 0.0;
    double coverage_pct = 0.0;
    double mean_width = 0.0;
    double mae_median = 0.0;
    double rmse_mean = 0.0;
};

// Pooled PIT histogram and uniformity test of one method.
struct MethodDiagnostics {
    std::string method;
    std::array<std::int64_t, histogram_bins> pit_counts{};
    std::string test = "ks";
    std::size_t n = 0;
    double statistic = 0.0;  // NaN when n < 20 (test not run)
    double p_value = 0.0;    // NaN when n < 20
};

struct VerificationReport {
    std::vector<ReportRow> rows;  // (lead, method), raw first within each lead
    std::array<std::int64_t, histogram_bins> rank_counts{};  // raw ensemble, pooled
    std::vector<MethodDiagnostics> diagnostics;               // one per method
    std::size_t n_cases = 0;  // complete cases that passed the filter
};

// Scores every method against the observations in `data`. Cases with missing
// observations are skipped; `min_obs` additionally drops low observations
// (the irradiance night filter). Randomization is keyed per case so the
// report is invariant under permutations of `data.cases`.
VerificationReport build_report(const Dataset& data, const std::vector<MethodPredictions>& methods,
                                const VerificationOptions& opts = {});

void write_report_csv(std::ostream& out, const VerificationReport& report);
void write_report_csv(const std::string& path, const VerificationReport& report);
// rank + PIT histograms, one row per bin with edges and counts
void write_histogram_csv(std::ostream& out, const VerificationReport& report);
void write_histogram_csv(const std::string& path, const VerificationReport& report);
// uniformity test per method (labels the test used)
void write_uniformity_csv(std::ostream& out, const VerificationReport& report);
void write_uniformity_csv(const std::string& path, const VerificationReport& report);

}  // namespace enscal
