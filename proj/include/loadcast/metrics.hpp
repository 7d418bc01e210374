#ifndef LOADCAST_METRICS_HPP
#define LOADCAST_METRICS_HPP

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/csv.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

// ---------------------------------------------------------------------------
// Deterministic metrics
// ---------------------------------------------------------------------------

inline void check_pair(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty()) throw EmptyInput("empty prediction");
    if (pred.size() != truth.size()) throw AlignmentError("pred/truth length mismatch");
}

inline double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

// 100 * mean(|y - yhat| / ((|y| + |yhat|)/2)); the y = yhat = 0 term is 0.
inline double smape(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double denom = (std::fabs(truth[i]) + std::fabs(pred[i])) / 2.0;
        if (denom > 0.0) s += std::fabs(truth[i] - pred[i]) / denom;
    }
    return 100.0 * s / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Losses (shared with model training)
// ---------------------------------------------------------------------------

inline double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    check_pair(pred, target);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

// Two-branch quantile loss for one (rho, diff) pair, diff = y - yhat.
inline double pinball_term(double rho, double diff) {
    return std::max(rho * diff, (rho - 1.0) * diff);
}

// Mean over all (rho, slot) pairs. pred is quantiles x horizon, row-major.
inline double pinball_loss(const std::vector<double>& pred, const std::vector<double>& target,
                           const std::vector<double>& quantiles) {
    if (quantiles.empty()) throw UsageError("quantile list must not be empty");
    for (std::size_t q = 1; q < quantiles.size(); ++q) {
        if (quantiles[q] <= quantiles[q - 1]) {
            throw UsageError("quantiles must be strictly increasing");
        }
    }
    if (quantiles.front() <= 0.0 || quantiles.back() >= 1.0) {
        throw UsageError("quantiles must lie in (0, 1)");
    }
    const std::size_t h = target.size();
    if (pred.size() != quantiles.size() * h) throw AlignmentError("pinball shape mismatch");
    double s = 0.0;
    for (std::size_t q = 0; q < quantiles.size(); ++q) {
        for (std::size_t i = 0; i < h; ++i) {
            s += pinball_term(quantiles[q], target[i] - pred[q * h + i]);
        }
    }
    return s / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Interval and distributional scores
// ---------------------------------------------------------------------------

struct PredictionInterval {
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.2; // [lower, upper] is the 100(1-alpha)% interval
};

// Interval width plus a 2/alpha-scaled penalty when the observation falls
// outside the interval.
inline double winkler(const PredictionInterval& iv, double y) {
    const double width = iv.upper - iv.lower;
    if (y < iv.lower) return width + (2.0 / iv.alpha) * (iv.lower - y);
    if (y > iv.upper) return width + (2.0 / iv.alpha) * (y - iv.upper);
    return width;
}

struct GaussianForecast {
    double mean = 0.0;
    double sd = 1.0;
};

// Closed form of the integrated squared difference between the Gaussian
// forecast CDF and the step function at the observation:
//   sigma * [ z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ],  z = (y - mean)/sigma.
// The sigma -> 0 limit is the absolute error.
inline double crps_gaussian(const GaussianForecast& f, double y) {
    if (f.sd < 0.0) throw UsageError("negative forecast sd");
    if (f.sd == 0.0) return std::fabs(y - f.mean);
    const double z = (y - f.mean) / f.sd;
    return f.sd * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) -
                   1.0 / std::sqrt(kPi));
}

// ---------------------------------------------------------------------------
// Forecast results
// ---------------------------------------------------------------------------

// One day-ahead forecast: 48 point values, plus the per-quantile rows when
// the model ran in quantile mode (rows non-decreasing in rho at every slot).
struct ForecastResult {
    Date anchor_day{};
    std::vector<double> point;            // 48
    std::vector<double> quantile_levels;  // empty in point mode
    Matrix quantiles;                     // levels x 48
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct SegmentScores {
    double rmse = 0.0;
    double mae = 0.0;
    double smape = 0.0;
};

struct MetricReport {
    std::string model;
    double rmse = 0.0;
    double mae = 0.0;
    double smape = 0.0;                      // overall, daily averaged
    std::array<SegmentScores, 4> segments{}; // per day segment

    std::vector<double> quantile_levels;     // empty in point mode
    std::vector<double> pinball_by_quantile;

    std::string interval_kind;               // e.g. "quantile[0.1,0.9]" or "gaussian(alpha=0.2)"
    double winkler_alpha = 0.2;
    double winkler_overall = 0.0;
    std::array<double, 4> winkler_by_segment{};
    double crps_overall = 0.0;
    std::array<double, 4> crps_by_segment{};
};

struct ReportOptions {
    std::string model_name = "model";
    // point-mode uncertainty: residual sd in demand units (ignored when the
    // forecasts carry quantiles)
    double residual_sd = 0.0;
    double interval_alpha = 0.2;
};

namespace detail {

// z for the central 100(1-alpha)% Gaussian interval, by bisection on the CDF
inline double central_z(double alpha) {
    double lo = 0.0, hi = 10.0;
    const double target = 1.0 - alpha / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Daily-averaged deterministic and probabilistic scores, overall and per day
// segment. In quantile mode the interval is [lowest, highest quantile] and
// the per-slot CRPS sigma is half the (q_hi - q_lo) spread divided by the
// matching Gaussian z; in point mode both come from the residual sd.
inline MetricReport segment_report(const std::vector<ForecastResult>& forecasts,
                                   const std::vector<std::vector<double>>& truths,
                                   const ReportOptions& opts) {
    if (forecasts.empty()) throw EmptyInput("no forecasts to score");
    if (forecasts.size() != truths.size()) throw AlignmentError("forecasts/truths mismatch");

    const bool quantile_mode = !forecasts.front().quantile_levels.empty();
    const std::size_t n_days = forecasts.size();

    MetricReport rep;
    rep.model = opts.model_name;

    // deterministic metrics, metric per day then averaged across days
    std::vector<double> day_rmse, day_mae, day_smape;
    std::array<std::vector<double>, 4> seg_rmse, seg_mae, seg_smape;
    for (std::size_t d = 0; d < n_days; ++d) {
        const auto& p = forecasts[d].point;
        const auto& y = truths[d];
        if (p.size() != kSlotsPerDay || y.size() != kSlotsPerDay) {
            throw AlignmentError("forecast horizon must be 48 slots");
        }
        day_rmse.push_back(rmse(p, y));
        day_mae.push_back(mae(p, y));
        day_smape.push_back(smape(p, y));
        for (int s = 0; s < 4; ++s) {
            std::vector<double> ps, ys;
            for (int k = 0; k < kSlotsPerDay; ++k) {
                if (segment_of(k) == kAllSegments[s]) {
                    ps.push_back(p[k]);
                    ys.push_back(y[k]);
                }
            }
            seg_rmse[s].push_back(rmse(ps, ys));
            seg_mae[s].push_back(mae(ps, ys));
            seg_smape[s].push_back(smape(ps, ys));
        }
    }
    rep.rmse = mean_of(day_rmse);
    rep.mae = mean_of(day_mae);
    rep.smape = mean_of(day_smape);
    for (int s = 0; s < 4; ++s) {
        rep.segments[s] = {mean_of(seg_rmse[s]), mean_of(seg_mae[s]), mean_of(seg_smape[s])};
    }

    // probabilistic scores
    double z_interval = 0.0;
    double q_lo = 0.0, q_hi = 0.0;
    std::size_t lo_idx = 0, hi_idx = 0;
    if (quantile_mode) {
        const auto& levels = forecasts.front().quantile_levels;
        rep.quantile_levels = levels;
        lo_idx = 0;
        hi_idx = levels.size() - 1;
        q_lo = levels[lo_idx];
        q_hi = levels[hi_idx];
        rep.winkler_alpha = q_lo + (1.0 - q_hi);
        rep.interval_kind = "quantile[" + format_sig6(q_lo) + "," + format_sig6(q_hi) + "]";
        z_interval = detail::central_z(rep.winkler_alpha); // for the CRPS sigma
        rep.pinball_by_quantile.assign(levels.size(), 0.0);
    } else {
        rep.winkler_alpha = opts.interval_alpha;
        rep.interval_kind = "gaussian(alpha=" + format_sig6(opts.interval_alpha) + ")";
        z_interval = detail::central_z(opts.interval_alpha);
    }

    std::vector<double> day_winkler;
    std::array<std::vector<double>, 4> seg_winkler;
    std::vector<double> day_crps;
    std::array<std::vector<double>, 4> seg_crps;

    for (std::size_t d = 0; d < n_days; ++d) {
        const auto& f = forecasts[d];
        const auto& y = truths[d];
        double w_day = 0.0, c_day = 0.0;
        std::array<double, 4> w_seg{}, c_seg{};
        std::array<int, 4> n_seg{};
        for (int k = 0; k < kSlotsPerDay; ++k) {
            PredictionInterval iv;
            GaussianForecast g;
            if (quantile_mode) {
                iv = {f.quantiles(lo_idx, k), f.quantiles(hi_idx, k), rep.winkler_alpha};
                const double spread = f.quantiles(hi_idx, k) - f.quantiles(lo_idx, k);
                g = {f.point[k], std::max(0.0, 0.5 * spread / z_interval)};
            } else {
                iv = {f.point[k] - z_interval * opts.residual_sd,
                      f.point[k] + z_interval * opts.residual_sd, rep.winkler_alpha};
                g = {f.point[k], opts.residual_sd};
            }
            const double w = winkler(iv, y[k]);
            const double c = crps_gaussian(g, y[k]);
            const int s = static_cast<int>(segment_of(k));
            w_day += w;
            c_day += c;
            w_seg[s] += w;
            c_seg[s] += c;
            ++n_seg[s];
        }
        day_winkler.push_back(w_day / kSlotsPerDay);
        day_crps.push_back(c_day / kSlotsPerDay);
        for (int s = 0; s < 4; ++s) {
            seg_winkler[s].push_back(w_seg[s] / n_seg[s]);
            seg_crps[s].push_back(c_seg[s] / n_seg[s]);
        }

        if (quantile_mode) {
            const std::size_t nq = f.quantile_levels.size();
            for (std::size_t q = 0; q < nq; ++q) {
                double s = 0.0;
                for (int k = 0; k < kSlotsPerDay; ++k) {
                    s += pinball_term(f.quantile_levels[q], y[k] - f.quantiles(q, k));
                }
                rep.pinball_by_quantile[q] += s / kSlotsPerDay / static_cast<double>(n_days);
            }
        }
    }
    rep.winkler_overall = mean_of(day_winkler);
    rep.crps_overall = mean_of(day_crps);
    for (int s = 0; s < 4; ++s) {
        rep.winkler_by_segment[s] = mean_of(seg_winkler[s]);
        rep.crps_by_segment[s] = mean_of(seg_crps[s]);
    }

    // sanity: every score non-negative and rmse >= mae (power-mean inequality)
    auto check = [](double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("invalid metric value");
    };
    check(rep.rmse);
    check(rep.mae);
    check(rep.smape);
    check(rep.winkler_overall);
    check(rep.crps_overall);
    if (rep.rmse + 1e-12 < rep.mae) throw NumericError("rmse < mae: metric inconsistency");

    return rep;
}

// ---------------------------------------------------------------------------
// Model comparison (ablation grids)
// ---------------------------------------------------------------------------

struct DeterministicRow {
    std::string model;
    double rmse = 0.0;
    double mae = 0.0;
    double smape = 0.0;
};

struct ComparisonRow {
    DeterministicRow scores;
    // improvement over the baseline in percent, one per metric
    double rmse_improvement = 0.0;
    double mae_improvement = 0.0;
    double smape_improvement = 0.0;
};

// improvement% = (baseline - model) / baseline * 100, per metric
inline std::vector<ComparisonRow> compare_models(const std::vector<DeterministicRow>& rows,
                                                 const std::string& baseline) {
    const DeterministicRow* base = nullptr;
    for (const auto& r : rows) {
        if (r.model == baseline) base = &r;
    }
    if (!base) throw UnknownBaseline("baseline model not found: " + baseline);
    auto imp = [](double b, double m) { return b != 0.0 ? (b - m) / b * 100.0 : 0.0; };
    std::vector<ComparisonRow> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        ComparisonRow c;
        c.scores = r;
        c.rmse_improvement = imp(base->rmse, r.rmse);
        c.mae_improvement = imp(base->mae, r.mae);
        c.smape_improvement = imp(base->smape, r.smape);
        out.push_back(c);
    }
    return out;
}

inline void write_comparison_csv(const std::vector<ComparisonRow>& rows,
                                 const std::string& path) {
    std::vector<std::string> lines;
    lines.push_back("model,rmse,mae,smape_percent,rmse_improvement_percent,"
                    "mae_improvement_percent,smape_improvement_percent");
    for (const auto& r : rows) {
        lines.push_back(join_csv({r.scores.model, format_sig6(r.scores.rmse),
                                  format_sig6(r.scores.mae), format_sig6(r.scores.smape),
                                  format_sig6(r.rmse_improvement), format_sig6(r.mae_improvement),
                                  format_sig6(r.smape_improvement)}));
    }
    write_lines(path, lines);
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const MetricReport& rep) {
    nlohmann::json j;
    j["model"] = rep.model;
    j["rmse"] = rep.rmse;
    j["mae"] = rep.mae;
    j["smape_percent"] = rep.smape;
    for (int s = 0; s < 4; ++s) {
        const char* label = segment_label(kAllSegments[s]);
        j["segments"][label] = {{"rmse", rep.segments[s].rmse},
                                {"mae", rep.segments[s].mae},
                                {"smape_percent", rep.segments[s].smape}};
        j["winkler_by_segment"][label] = rep.winkler_by_segment[s];
        j["crps_by_segment"][label] = rep.crps_by_segment[s];
    }
    j["interval_kind"] = rep.interval_kind;
    j["winkler_alpha"] = rep.winkler_alpha;
    j["winkler_overall"] = rep.winkler_overall;
    j["crps_overall"] = rep.crps_overall;
    if (!rep.quantile_levels.empty()) {
        j["quantiles"] = rep.quantile_levels;
        j["pinball_by_quantile"] = rep.pinball_by_quantile;
    }
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport rep;
    rep.model = j.at("model").get<std::string>();
    rep.rmse = j.at("rmse").get<double>();
    rep.mae = j.at("mae").get<double>();
    rep.smape = j.at("smape_percent").get<double>();
    for (int s = 0; s < 4; ++s) {
        const char* label = segment_label(kAllSegments[s]);
        const auto& seg = j.at("segments").at(label);
        rep.segments[s] = {seg.at("rmse").get<double>(), seg.at("mae").get<double>(),
                           seg.at("smape_percent").get<double>()};
        rep.winkler_by_segment[s] = j.at("winkler_by_segment").at(label).get<double>();
        rep.crps_by_segment[s] = j.at("crps_by_segment").at(label).get<double>();
    }
    rep.interval_kind = j.at("interval_kind").get<std::string>();
    rep.winkler_alpha = j.at("winkler_alpha").get<double>();
    rep.winkler_overall = j.at("winkler_overall").get<double>();
    rep.crps_overall = j.at("crps_overall").get<double>();
    if (j.contains("quantiles")) {
        rep.quantile_levels = j.at("quantiles").get<std::vector<double>>();
        rep.pinball_by_quantile = j.at("pinball_by_quantile").get<std::vector<double>>();
    }
    return rep;
}

// segments.csv, pinball_by_quantile.csv, winkler_by_segment.csv,
// crps_by_segment.csv: figure-ready series for external plotting
inline void write_report_files(const MetricReport& rep, const std::string& dir) {
    {
        std::vector<std::string> lines{"segment,rmse,mae,smape_percent"};
        for (int s = 0; s < 4; ++s) {
            lines.push_back(join_csv({segment_label(kAllSegments[s]),
                                      format_sig6(rep.segments[s].rmse),
                                      format_sig6(rep.segments[s].mae),
                                      format_sig6(rep.segments[s].smape)}));
        }
        write_lines(dir + "/segments.csv", lines);
    }
    {
        std::vector<std::string> lines{"quantile,pinball"};
        for (std::size_t q = 0; q < rep.quantile_levels.size(); ++q) {
            lines.push_back(join_csv({format_sig6(rep.quantile_levels[q]),
                                      format_sig6(rep.pinball_by_quantile[q])}));
        }
        write_lines(dir + "/pinball_by_quantile.csv", lines);
    }
    {
        std::vector<std::string> lines{"segment,winkler"};
        for (int s = 0; s < 4; ++s) {
            lines.push_back(join_csv({segment_label(kAllSegments[s]),
                                      format_sig6(rep.winkler_by_segment[s])}));
        }
        write_lines(dir + "/winkler_by_segment.csv", lines);
    }
    {
        std::vector<std::string> lines{"segment,crps"};
        for (int s = 0; s < 4; ++s) {
            lines.push_back(join_csv({segment_label(kAllSegments[s]),
                                      format_sig6(rep.crps_by_segment[s])}));
        }
        write_lines(dir + "/crps_by_segment.csv", lines);
    }
}

} // namespace loadcast

#endif
