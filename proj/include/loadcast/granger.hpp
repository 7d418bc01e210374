#ifndef LOADCAST_GRANGER_HPP
#define LOADCAST_GRANGER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "loadcast/csv.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"
#include "loadcast/text_features.hpp"

namespace loadcast {

struct GrangerResult {
    std::string feature_name;
    int max_lag = 0;
    double f_statistic = std::numeric_limits<double>::quiet_NaN();
    double p_value = std::numeric_limits<double>::quiet_NaN();
    bool selected = false;
    std::string error; // set when the test could not run (feature skipped)
};

// F-test on nested OLS regressions: does past x improve the prediction of y
// beyond past y alone?
//   restricted:   y_t ~ 1 + y_{t-1..L}
//   unrestricted: y_t ~ 1 + y_{t-1..L} + x_{t-1..L}
//   F = ((RSS_r - RSS_u)/L) / (RSS_u / df2),  df2 = n_obs - 2L - 1
// with n_obs = len - L usable rows. The p-value is the F(L, df2) upper tail.
inline GrangerResult granger_test(const std::vector<double>& x, const std::vector<double>& y,
                                  int max_lag, const std::string& name = "") {
    if (x.size() != y.size()) throw AlignmentError("granger series length mismatch");
    const int n = static_cast<int>(y.size());
    const int lag = max_lag;
    if (lag < 1) throw UsageError("max_lag must be >= 1");
    if (n <= 3 * lag + 2) {
        throw SeriesTooShort("granger test needs more than " + std::to_string(3 * lag + 2) +
                             " points, have " + std::to_string(n));
    }
    if (variance_of(x) <= 0.0 || variance_of(y) <= 0.0) {
        throw SingularDesign("constant series in granger test" +
                             (name.empty() ? "" : " (" + name + ")"));
    }

    const int m = n - lag; // usable observations
    const int p_r = lag + 1;
    const int p_u = 2 * lag + 1;

    std::vector<double> xr(static_cast<std::size_t>(m) * p_r);
    std::vector<double> xu(static_cast<std::size_t>(m) * p_u);
    std::vector<double> yy(m);
    for (int t = 0; t < m; ++t) {
        const int row = t + lag; // index into the original series
        yy[t] = y[row];
        double* rr = xr.data() + static_cast<std::size_t>(t) * p_r;
        double* ru = xu.data() + static_cast<std::size_t>(t) * p_u;
        rr[0] = 1.0;
        ru[0] = 1.0;
        for (int k = 1; k <= lag; ++k) {
            rr[k] = y[row - k];
            ru[k] = y[row - k];
            ru[lag + k] = x[row - k];
        }
    }

    double rss_r = 0.0, rss_u = 0.0;
    ols_fit(xr, yy, m, p_r, &rss_r);
    ols_fit(xu, yy, m, p_u, &rss_u);

    const double df2 = static_cast<double>(m - 2 * lag - 1);
    GrangerResult res;
    res.feature_name = name;
    res.max_lag = lag;
    if (rss_u <= 0.0) {
        // unrestricted model fits exactly; strongest possible evidence
        res.f_statistic = std::numeric_limits<double>::infinity();
        res.p_value = 0.0;
        return res;
    }
    res.f_statistic = std::max(0.0, ((rss_r - rss_u) / lag) / (rss_u / df2));
    res.p_value = f_survival(res.f_statistic, static_cast<double>(lag), df2);
    return res;
}

struct NamedSeries {
    std::string name;
    std::vector<double> values;
};

// Screen every feature against the daily-mean demand series. Per-feature
// failures are recorded on the result instead of aborting the batch; results
// come back sorted by feature name. With bonferroni set the threshold is
// alpha / n_features.
inline std::vector<GrangerResult> granger_screen(const std::vector<NamedSeries>& features,
                                                 const std::vector<double>& demand_daily,
                                                 int max_lag, double alpha,
                                                 bool bonferroni = false) {
    if (features.empty()) throw UsageError("no features to screen");
    const double threshold = bonferroni ? alpha / static_cast<double>(features.size()) : alpha;
    std::vector<GrangerResult> out;
    out.reserve(features.size());
    for (const auto& f : features) {
        GrangerResult r;
        try {
            r = granger_test(f.values, demand_daily, max_lag, f.name);
            r.selected = r.p_value < threshold;
        } catch (const SingularDesign& e) {
            r.feature_name = f.name;
            r.max_lag = max_lag;
            r.error = e.what();
        } catch (const SeriesTooShort& e) {
            r.feature_name = f.name;
            r.max_lag = max_lag;
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    std::sort(out.begin(), out.end(),
              [](const GrangerResult& a, const GrangerResult& b) {
                  return a.feature_name < b.feature_name;
              });
    return out;
}

// Spec-shaped convenience: tables aligned to the demand dates by date lookup.
inline std::vector<GrangerResult> select_features(const std::vector<TextFeatureTable>& tables,
                                                  const std::vector<Date>& demand_dates,
                                                  const std::vector<double>& demand_daily,
                                                  int max_lag, double alpha,
                                                  bool bonferroni = false) {
    if (demand_dates.size() != demand_daily.size()) {
        throw AlignmentError("demand dates/values length mismatch");
    }
    std::vector<NamedSeries> feats;
    for (const auto& t : tables) {
        for (std::size_t dim = 0; dim < t.dims(); ++dim) {
            NamedSeries s;
            s.name = "text_" + t.group + "_" + t.dim_names[dim];
            s.values.resize(demand_dates.size());
            std::size_t j = 0;
            for (std::size_t i = 0; i < demand_dates.size(); ++i) {
                while (j < t.dates.size() && t.dates[j] < demand_dates[i]) ++j;
                if (j >= t.dates.size() || t.dates[j] != demand_dates[i]) {
                    throw AlignmentError(s.name + " has no value for " +
                                         format_date(demand_dates[i]));
                }
                s.values[i] = t.values[j][dim];
            }
            feats.push_back(std::move(s));
        }
    }
    return granger_screen(feats, demand_daily, max_lag, alpha, bonferroni);
}

inline void write_granger_report(const std::vector<GrangerResult>& results,
                                 const std::string& path, int max_lag, double alpha) {
    std::vector<std::string> lines;
    lines.push_back("# max_lag=" + std::to_string(max_lag) + " alpha=" + format_sig6(alpha));
    lines.push_back("feature,f_stat,p_value,selected");
    for (const auto& r : results) {
        std::vector<std::string> fields{r.feature_name};
        if (r.error.empty()) {
            fields.push_back(format_sig6(r.f_statistic));
            fields.push_back(format_sig6(r.p_value));
        } else {
            fields.push_back("nan");
            fields.push_back("nan");
        }
        fields.push_back(r.selected ? "1" : "0");
        lines.push_back(join_csv(fields));
    }
    write_lines(path, lines);
}

} // namespace loadcast

#endif
