#include "enscal/verification.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>

namespace enscal {

namespace {

std::ofstream open_report(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open output file: " + path);
    return out;
}

// NaN marks an undefined score (e.g. skill against a perfect reference);
// it becomes an empty CSV field
std::string field(double v) { return std::isnan(v) ? std::string() : format_double(v); }

}  // namespace

double crps_ensemble(const Members& members, double x) {
    constexpr double k = static_cast<double>(ensemble_size);
    double obs_term = 0.0;
    double pair_term = 0.0;
    for (const double f : members) {
        obs_term += std::abs(f - x);
        for (const double g : members) pair_term += std::abs(f - g);
    }
    return obs_term / k - pair_term / (2.0 * k * k);
}

double pit(const Distribution& d, double x, Rng& rng) {
    if (x <= 0.0 && point_mass_at_zero(d) > 0.0) return rng.uniform() * cdf(d, 0.0);
    return cdf(d, x);
}

int verification_rank(const Members& members, double x, Rng& rng) {
    int below = 0;
    int ties = 0;
    for (const double f : members) {
        if (f < x)
            ++below;
        else if (f == x)
            ++ties;
    }
    // admissible ranks are below+1 .. below+ties+1, each equally likely
    return below + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(ties) + 1));
}

double crpss(double mean_crps_f, double mean_crps_ref) {
    if (!(mean_crps_ref > 0.0)) throw validation_error("crpss reference score must be positive");
    return 1.0 - mean_crps_f / mean_crps_ref;
}

Interval central_interval(const Distribution& d, double nominal) {
    if (!(nominal > 0.0 && nominal < 1.0))
        throw config_error("nominal coverage must be in (0, 1)");
    const double alpha = 1.0 - nominal;
    return {quantile(d, alpha / 2.0), quantile(d, 1.0 - alpha / 2.0)};
}

Interval ensemble_interval(const Members& members) {
    const auto [lo, hi] = std::minmax_element(members.begin(), members.end());
    return {*lo, *hi};
}

CoverageWidth coverage_and_width(const std::vector<Interval>& intervals,
                                 const std::vector<double>& observations) {
    if (intervals.size() != observations.size())
        throw validation_error("coverage inputs are not aligned");
    if (intervals.empty()) throw insufficient_data_error("no cases to score");
    const double n = static_cast<double>(intervals.size());
    CoverageWidth cw;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        const auto& iv = intervals[i];
        if (observations[i] >= iv.lower && observations[i] <= iv.upper) ++hits;
        cw.mean_width += (iv.upper - iv.lower) / n;
    }
    cw.coverage_pct = 100.0 * static_cast<double>(hits) / n;
    return cw;
}

namespace {

PointScores point_scores_impl(const std::vector<double>& medians, const std::vector<double>& means,
                              const std::vector<double>& observations) {
    if (medians.empty()) throw insufficient_data_error("no cases to score");
    const double n = static_cast<double>(medians.size());
    PointScores ps;
    for (std::size_t i = 0; i < medians.size(); ++i) {
        ps.mae_median += std::abs(medians[i] - observations[i]) / n;
        const double e = means[i] - observations[i];
        ps.rmse_mean += e * e / n;
    }
    ps.rmse_mean = std::sqrt(ps.rmse_mean);
    return ps;
}

}  // namespace

PointScores point_scores(const std::vector<Distribution>& dists,
                         const std::vector<double>& observations) {
    if (dists.size() != observations.size())
        throw validation_error("point score inputs are not aligned");
    std::vector<double> medians(dists.size()), means(dists.size());
    for (std::size_t i = 0; i < dists.size(); ++i) {
        medians[i] = median(dists[i]);
        means[i] = mean(dists[i]);
    }
    return point_scores_impl(medians, means, observations);
}

PointScores point_scores(const std::vector<Members>& ensembles,
                         const std::vector<double>& observations) {
    if (ensembles.size() != observations.size())
        throw validation_error("point score inputs are not aligned");
    std::vector<double> medians(ensembles.size()), means(ensembles.size());
    for (std::size_t i = 0; i < ensembles.size(); ++i) {
        Members sorted = ensembles[i];
        std::sort(sorted.begin(), sorted.end());
        medians[i] = sorted[ensemble_size / 2];
        means[i] = summarize(ensembles[i]).mean_all;
    }
    return point_scores_impl(medians, means, observations);
}

UniformityTest uniformity_test(std::vector<double> sample) {
    if (sample.size() < 20)
        throw insufficient_data_error("uniformity test needs at least 20 values");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double u = std::clamp(sample[i], 0.0, 1.0);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - u);
        d = std::max(d, u - static_cast<double>(i) / n);
    }
    // Stephens' modification maps the finite-sample statistic onto the
    // asymptotic Kolmogorov distribution
    const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
    double p = 0.0;
    double sign = 1.0;
    double prev_term = 0.0;
    bool converged = false;
    for (int j = 1; j <= 200; ++j) {
        const double term = 2.0 * std::exp(-2.0 * lambda * lambda * j * j);
        p += sign * term;
        if (term <= 1e-3 * prev_term || term <= 1e-10 * p) {
            converged = true;
            break;
        }
        sign = -sign;
        prev_term = term;
    }
    if (!converged) p = 1.0;  // lambda so small the series is numerically 1
    return {d, std::clamp(p, 0.0, 1.0)};
}

namespace {

int pit_bin(double u) {
    const int b = static_cast<int>(u * histogram_bins);
    return std::clamp(b, 0, histogram_bins - 1);
}

std::uint64_t case_tag(const ForecastCase& c) {
    return derive_seed(hash_string(c.forecast.station),
                       static_cast<std::uint64_t>(c.forecast.init_time),
                       static_cast<std::uint64_t>(c.forecast.lead_minutes));
}

}  // namespace

VerificationReport build_report(const Dataset& data, const std::vector<MethodPredictions>& methods,
                                const VerificationOptions& opts) {
    if (!(opts.nominal > 0.0 && opts.nominal < 1.0))
        throw config_error("nominal coverage must be in (0, 1)");
    for (const auto& m : methods) {
        if (m.method == "raw") throw validation_error("method name 'raw' is reserved");
        if (m.dists.size() != data.cases.size())
            throw validation_error("predictions for '" + m.method +
                                   "' are not aligned with the dataset");
        for (const auto& other : methods)
            if (&other != &m && other.method == m.method)
                throw validation_error("duplicate method name: " + m.method);
    }

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.cases.size(); ++i) {
        const auto& c = data.cases[i];
        if (!c.complete()) continue;
        if (opts.min_obs && *c.obs < *opts.min_obs) continue;
        keep.push_back(i);
    }
    if (keep.empty()) throw insufficient_data_error("no complete cases to verify");
    // canonical accumulation order: scores are identical no matter how the
    // caller ordered the cases
    std::sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
        const auto& fa = data.cases[a].forecast;
        const auto& fb = data.cases[b].forecast;
        return std::tie(fa.station, fa.init_time, fa.lead_minutes) <
               std::tie(fb.station, fb.init_time, fb.lead_minutes);
    });

    VerificationReport report;
    report.n_cases = keep.size();

    // pooled histograms, keyed per case so case order cannot matter
    for (const std::size_t i : keep) {
        const auto& c = data.cases[i];
        Rng rank_rng(derive_seed(opts.seed, hash_string("verify-rank"), case_tag(c)));
        report.rank_counts[verification_rank(c.forecast.members, *c.obs, rank_rng) - 1]++;
    }
    for (const auto& m : methods) {
        MethodDiagnostics diag;
        diag.method = m.method;
        std::vector<double> pits;
        pits.reserve(keep.size());
        for (const std::size_t i : keep) {
            const auto& c = data.cases[i];
            Rng pit_rng(derive_seed(opts.seed, hash_string("verify-pit"), hash_string(m.method),
                                    case_tag(c)));
            pits.push_back(pit(m.dists[i], *c.obs, pit_rng));
        }
        for (const double u : pits) diag.pit_counts[pit_bin(u)]++;
        diag.n = pits.size();
        if (pits.size() >= 20) {
            const auto t = uniformity_test(pits);
            diag.statistic = t.statistic;
            diag.p_value = t.p_value;
        } else {
            diag.statistic = std::numeric_limits<double>::quiet_NaN();
            diag.p_value = std::numeric_limits<double>::quiet_NaN();
        }
        report.diagnostics.push_back(std::move(diag));
    }

    // per-lead rows, raw first (it is the skill reference)
    std::map<std::int64_t, std::vector<std::size_t>> by_lead;
    for (const std::size_t i : keep) by_lead[data.cases[i].forecast.lead_minutes].push_back(i);

    for (const auto& [lead, idx] : by_lead) {
        std::vector<Members> ensembles;
        std::vector<double> obs;
        std::vector<Interval> raw_intervals;
        for (const std::size_t i : idx) {
            ensembles.push_back(data.cases[i].forecast.members);
            obs.push_back(*data.cases[i].obs);
            raw_intervals.push_back(ensemble_interval(data.cases[i].forecast.members));
        }
        double raw_crps = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j)
            raw_crps += crps_ensemble(ensembles[j], obs[j]) / static_cast<double>(idx.size());

        ReportRow raw_row;
        raw_row.lead_minutes = lead;
        raw_row.method = "raw";
        raw_row.n_cases = idx.size();
        raw_row.mean_crps = raw_crps;
        raw_row.mean_crps_raw = raw_crps;
        raw_row.crpss = 0.0;  // the reference scores itself
        const auto raw_cw = coverage_and_width(raw_intervals, obs);
        raw_row.coverage_pct = raw_cw.coverage_pct;
        raw_row.mean_width = raw_cw.mean_width;
        const auto raw_ps = point_scores(ensembles, obs);
        raw_row.mae_median = raw_ps.mae_median;
        raw_row.rmse_mean = raw_ps.rmse_mean;
        report.rows.push_back(std::move(raw_row));

        for (const auto& m : methods) {
            std::vector<Distribution> dists;
            std::vector<Interval> intervals;
            double mean_crps = 0.0;
            for (const std::size_t i : idx) {
                dists.push_back(m.dists[i]);
                intervals.push_back(central_interval(m.dists[i], opts.nominal));
                mean_crps += crps(m.dists[i], *data.cases[i].obs) / static_cast<double>(idx.size());
            }
            ReportRow row;
            row.lead_minutes = lead;
            row.method = m.method;
            row.n_cases = idx.size();
            row.mean_crps = mean_crps;
            row.mean_crps_raw = raw_crps;
            // a perfect reference (all-zero night ensembles verifying zero
            // observations) leaves the skill score undefined
            row.crpss = raw_crps > 0.0 ? crpss(mean_crps, raw_crps)
                                       : std::numeric_limits<double>::quiet_NaN();
            const auto cw = coverage_and_width(intervals, obs);
            row.coverage_pct = cw.coverage_pct;
            row.mean_width = cw.mean_width;
            const auto ps = point_scores(dists, obs);
            row.mae_median = ps.mae_median;
            row.rmse_mean = ps.rmse_mean;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const VerificationReport& report) {
    out << "lead_minutes,method,n_cases,mean_crps,mean_crps_raw,crpss,coverage_pct,"
           "mean_width,mae_median,rmse_mean\n";
    for (const auto& r : report.rows) {
        out << r.lead_minutes << ',' << r.method << ',' << r.n_cases << ','
            << field(r.mean_crps) << ',' << field(r.mean_crps_raw) << ',' << field(r.crpss) << ','
            << field(r.coverage_pct) << ',' << field(r.mean_width) << ',' << field(r.mae_median)
            << ',' << field(r.rmse_mean) << '\n';
    }
}

void write_report_csv(const std::string& path, const VerificationReport& report) {
    auto out = open_report(path);
    write_report_csv(out, report);
}

void write_histogram_csv(std::ostream& out, const VerificationReport& report) {
    out << "kind,method,bin,lower,upper,count\n";
    for (int b = 0; b < histogram_bins; ++b)
        out << "rank,raw," << b + 1 << ',' << b + 1 << ',' << b + 1 << ','
            << report.rank_counts[b] << '\n';
    for (const auto& d : report.diagnostics)
        for (int b = 0; b < histogram_bins; ++b)
            out << "pit," << d.method << ',' << b + 1 << ','
                << format_double(static_cast<double>(b) / histogram_bins) << ','
                << format_double(static_cast<double>(b + 1) / histogram_bins) << ','
                << d.pit_counts[b] << '\n';
}

void write_histogram_csv(const std::string& path, const VerificationReport& report) {
    auto out = open_report(path);
    write_histogram_csv(out, report);
}

void write_uniformity_csv(std::ostream& out, const VerificationReport& report) {
    out << "method,test,n,statistic,p_value\n";
    for (const auto& d : report.diagnostics)
        out << d.method << ',' << d.test << ',' << d.n << ',' << field(d.statistic) << ','
            << field(d.p_value) << '\n';
}

void write_uniformity_csv(const std::string& path, const VerificationReport& report) {
    auto out = open_report(path);
    write_uniformity_csv(out, report);
}

}  // namespace enscal
