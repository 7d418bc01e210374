#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "loadcast/metrics.hpp"

using namespace loadcast;

TEST_CASE("deterministic metrics on simple pairs") {
    const std::vector<double> truth{100.0};
    const std::vector<double> pred{50.0};
    REQUIRE(rmse(pred, truth) == Catch::Approx(50.0));
    REQUIRE(mae(pred, truth) == Catch::Approx(50.0));
    REQUIRE(smape(pred, truth) == Catch::Approx(100.0 * 50.0 / 75.0)); // 66.667%

    REQUIRE(rmse(truth, truth) == 0.0);
    REQUIRE(mae(truth, truth) == 0.0);
    REQUIRE(smape(truth, truth) == 0.0);
    REQUIRE(smape({0.0}, {0.0}) == 0.0); // y = yhat = 0 term defined as 0

    REQUIRE_THROWS_AS(rmse({}, {}), EmptyInput);
    REQUIRE_THROWS_AS(mae({1.0}, {1.0, 2.0}), AlignmentError);
}

TEST_CASE("metrics match independent recomputation on random pairs") {
    Rng rng(8);
    std::vector<double> pred(1000), truth(1000);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        pred[i] = rng.uniform(-50.0, 150.0);
        truth[i] = rng.uniform(-50.0, 150.0);
    }
    double se = 0.0, ae = 0.0, sm = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        se += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        ae += std::fabs(pred[i] - truth[i]);
        const double denom = (std::fabs(pred[i]) + std::fabs(truth[i])) / 2.0;
        if (denom > 0) sm += std::fabs(pred[i] - truth[i]) / denom;
    }
    const double n = static_cast<double>(pred.size());
    REQUIRE(rmse(pred, truth) == Catch::Approx(std::sqrt(se / n)).margin(1e-10));
    REQUIRE(mae(pred, truth) == Catch::Approx(ae / n).margin(1e-10));
    REQUIRE(smape(pred, truth) == Catch::Approx(100.0 * sm / n).margin(1e-10));
    REQUIRE(rmse(pred, truth) >= mae(pred, truth));
}

TEST_CASE("mse loss") {
    REQUIRE(mse_loss({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    REQUIRE(mse_loss({3.0, 4.0}, {1.0, 2.0}) == Catch::Approx(4.0));
}

TEST_CASE("pinball loss branches and identities") {
    // single slot, rho = 0.9, y = 10, yhat = 0 -> 9
    REQUIRE(pinball_loss({0.0}, {10.0}, {0.9}) == Catch::Approx(9.0));
    // single slot, rho = 0.1, y = 0, yhat = 10 -> 9
    REQUIRE(pinball_loss({10.0}, {0.0}, {0.1}) == Catch::Approx(9.0));
    // exact prediction at all quantiles -> 0
    REQUIRE(pinball_loss({5.0, 5.0, 5.0}, {5.0}, {0.25, 0.5, 0.75}) == 0.0);

    REQUIRE_THROWS_AS(pinball_loss({1.0}, {1.0}, {}), UsageError);
    REQUIRE_THROWS_AS(pinball_loss({1.0, 1.0}, {1.0}, {0.5, 0.5}), UsageError);
    REQUIRE_THROWS_AS(pinball_loss({1.0}, {1.0}, {1.5}), UsageError);
}

TEST_CASE("pinball at rho = 0.5 equals half the MAE") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> pred(48), truth(48);
        for (int k = 0; k < 48; ++k) {
            pred[k] = rng.uniform(-100.0, 100.0);
            truth[k] = rng.uniform(-100.0, 100.0);
        }
        const double p = pinball_loss(pred, truth, {0.5});
        REQUIRE(p == Catch::Approx(0.5 * mae(pred, truth)).margin(1e-12));
    }
}

TEST_CASE("winkler score branches") {
    const PredictionInterval iv{0.0, 10.0, 0.2};
    REQUIRE(winkler(iv, 5.0) == Catch::Approx(10.0));
    REQUIRE(winkler(iv, 12.0) == Catch::Approx(30.0)); // 10 + (2/0.2)*2
    REQUIRE(winkler(iv, -1.0) == Catch::Approx(20.0)); // 10 + 10*1
    // inside the interval the score equals the width exactly
    REQUIRE(winkler(iv, 0.0) == 10.0);
    REQUIRE(winkler(iv, 10.0) == 10.0);
}

TEST_CASE("winkler is translation invariant") {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const double l = rng.uniform(-50.0, 50.0);
        const double u = l + rng.uniform(0.0, 40.0);
        const double y = rng.uniform(-80.0, 80.0);
        const double shift = rng.uniform(-1000.0, 1000.0);
        const PredictionInterval a{l, u, 0.2};
        const PredictionInterval b{l + shift, u + shift, 0.2};
        REQUIRE(winkler(a, y) == Catch::Approx(winkler(b, y + shift)).margin(1e-9));
    }
}

TEST_CASE("winkler matches direct formula evaluation on random cases") {
    Rng rng(29);
    for (int trial = 0; trial < 10000; ++trial) {
        const double l = rng.uniform(-100.0, 100.0);
        const double u = l + rng.uniform(0.0, 50.0);
        const double y = rng.uniform(-150.0, 150.0);
        const double alpha = rng.uniform(0.05, 0.5);
        const double w = winkler({l, u, alpha}, y);
        double expected = u - l;
        if (y < l) expected += (2.0 / alpha) * (l - y);
        if (y > u) expected += (2.0 / alpha) * (y - u);
        REQUIRE(w == Catch::Approx(expected).margin(1e-10));
    }
}

namespace {

// trapezoid quadrature of the defining integral over +/- 10 sigma around the
// relevant mass, split at the observation so the Heaviside jump sits on a
// panel boundary
double crps_by_quadrature(double mean, double sd, double y) {
    const double lo = std::min(mean, y) - 10.0 * std::max(sd, 1e-3);
    const double hi = std::max(mean, y) + 10.0 * std::max(sd, 1e-3);
    auto trapezoid = [&](double a, double b, auto f) {
        const int n = 100000;
        const double h = (b - a) / n;
        double s = 0.5 * (f(a) + f(b));
        for (int i = 1; i < n; ++i) s += f(a + i * h);
        return s * h;
    };
    auto cdf = [&](double x) { return normal_cdf((x - mean) / sd); };
    const double below = trapezoid(lo, y, [&](double x) { return cdf(x) * cdf(x); });
    const double above =
        trapezoid(y, hi, [&](double x) { return (cdf(x) - 1.0) * (cdf(x) - 1.0); });
    return below + above;
}

} // namespace

TEST_CASE("crps closed form at the center and in the degenerate limit") {
    // frozen quadrature value for y = mean, sd = 1
    REQUIRE(crps_gaussian({0.0, 1.0}, 0.0) == Catch::Approx(0.2336949772551).margin(1e-5));
    // sigma -> 0 recovers the absolute error
    REQUIRE(crps_gaussian({1.0, 0.0}, 3.0) == Catch::Approx(2.0));
    REQUIRE_THROWS_AS(crps_gaussian({0.0, -1.0}, 0.0), UsageError);
}

TEST_CASE("crps closed form agrees with quadrature") {
    for (double sd : {0.1, 1.0, 10.0}) {
        for (double z : {-5.0, -2.0, -0.5, 0.0, 0.7, 3.1, 5.0}) {
            const double mean = 2.0;
            const double y = mean + z * sd;
            const double closed = crps_gaussian({mean, sd}, y);
            const double quad = crps_by_quadrature(mean, sd, y);
            REQUIRE(closed == Catch::Approx(quad).margin(1e-6));
        }
    }
}

namespace {

std::vector<ForecastResult> fake_forecasts(std::size_t days, std::uint64_t seed,
                                           bool with_quantiles,
                                           std::vector<std::vector<double>>* truths) {
    Rng rng(seed);
    std::vector<ForecastResult> out;
    for (std::size_t d = 0; d < days; ++d) {
        ForecastResult f;
        f.anchor_day = parse_date("2020-06-01") + std::chrono::days{static_cast<long>(d)};
        f.point.resize(kSlotsPerDay);
        std::vector<double> truth(kSlotsPerDay);
        for (int k = 0; k < kSlotsPerDay; ++k) {
            f.point[k] = 100.0 + 10.0 * std::sin(k * 0.3) + rng.normal();
            truth[k] = f.point[k] + rng.normal(0.0, 2.0);
        }
        if (with_quantiles) {
            f.quantile_levels = {0.1, 0.5, 0.9};
            f.quantiles = Matrix(3, kSlotsPerDay);
            for (int k = 0; k < kSlotsPerDay; ++k) {
                f.quantiles(0, k) = f.point[k] - 2.6;
                f.quantiles(1, k) = f.point[k];
                f.quantiles(2, k) = f.point[k] + 2.6;
            }
        }
        truths->push_back(truth);
        out.push_back(std::move(f));
    }
    return out;
}

} // namespace

TEST_CASE("segment report: zero errors and partition behaviour") {
    std::vector<std::vector<double>> truths;
    auto forecasts = fake_forecasts(3, 9, false, &truths);
    // force exact predictions
    for (std::size_t d = 0; d < forecasts.size(); ++d) truths[d] = forecasts[d].point;

    ReportOptions opts;
    opts.model_name = "exact";
    opts.residual_sd = 1.0;
    const MetricReport rep = segment_report(forecasts, truths, opts);
    REQUIRE(rep.rmse == 0.0);
    REQUIRE(rep.mae == 0.0);
    REQUIRE(rep.smape == 0.0);
    for (int s = 0; s < 4; ++s) {
        REQUIRE(rep.segments[s].rmse == 0.0);
    }

    // errors concentrated in the morning only
    for (std::size_t d = 0; d < forecasts.size(); ++d) {
        truths[d] = forecasts[d].point;
        for (int k = 12; k < 24; ++k) truths[d][k] += 5.0;
    }
    const MetricReport rep2 = segment_report(forecasts, truths, opts);
    REQUIRE(rep2.segments[static_cast<int>(DaySegment::morning)].mae == Catch::Approx(5.0));
    REQUIRE(rep2.segments[static_cast<int>(DaySegment::midnight)].mae == 0.0);
    REQUIRE(rep2.segments[static_cast<int>(DaySegment::afternoon)].mae == 0.0);
    REQUIRE(rep2.segments[static_cast<int>(DaySegment::evening)].mae == 0.0);
}

TEST_CASE("segment report: daily averaging matches a flat recomputation") {
    std::vector<std::vector<double>> truths;
    const auto forecasts = fake_forecasts(7, 13, false, &truths);
    ReportOptions opts;
    opts.residual_sd = 2.0;
    const MetricReport rep = segment_report(forecasts, truths, opts);

    double mae_daily_mean = 0.0;
    for (std::size_t d = 0; d < forecasts.size(); ++d) {
        mae_daily_mean += mae(forecasts[d].point, truths[d]);
    }
    mae_daily_mean /= static_cast<double>(forecasts.size());
    REQUIRE(rep.mae == Catch::Approx(mae_daily_mean).margin(1e-12));

    // total squared error decomposes over segments (before daily averaging)
    for (std::size_t d = 0; d < forecasts.size(); ++d) {
        double total_sq = 0.0, seg_sq = 0.0;
        for (int k = 0; k < kSlotsPerDay; ++k) {
            const double e = forecasts[d].point[k] - truths[d][k];
            total_sq += e * e;
        }
        for (int s = 0; s < 4; ++s) {
            for (int k = 0; k < kSlotsPerDay; ++k) {
                if (static_cast<int>(segment_of(k)) != s) continue;
                const double e = forecasts[d].point[k] - truths[d][k];
                seg_sq += e * e;
            }
        }
        REQUIRE(total_sq == Catch::Approx(seg_sq).margin(1e-9));
    }
}

TEST_CASE("segment report in quantile mode uses the outer interval") {
    std::vector<std::vector<double>> truths;
    const auto forecasts = fake_forecasts(5, 31, true, &truths);
    ReportOptions opts;
    opts.model_name = "q";
    const MetricReport rep = segment_report(forecasts, truths, opts);
    REQUIRE(rep.winkler_alpha == Catch::Approx(0.2));
    REQUIRE(rep.interval_kind == "quantile[0.1,0.9]");
    REQUIRE(rep.pinball_by_quantile.size() == 3);
    REQUIRE(rep.winkler_overall > 0.0);
    REQUIRE(rep.crps_overall > 0.0);
    for (double p : rep.pinball_by_quantile) REQUIRE(p > 0.0);
}

TEST_CASE("compare_models reproduces published-style improvement figures") {
    const std::vector<DeterministicRow> rows{
        {"LSTM", 2775.99, 2333.20, 7.10},
        {"LSTM-S-G-CG", 2692.33, 2248.55, 6.83},
    };
    const auto cmp = compare_models(rows, "LSTM");
    REQUIRE(cmp[0].rmse_improvement == 0.0);
    REQUIRE(cmp[1].rmse_improvement == Catch::Approx(3.01).margin(0.005));
    REQUIRE(cmp[1].smape_improvement == Catch::Approx(3.80).margin(0.005));
    REQUIRE(cmp[1].mae_improvement == Catch::Approx((2333.20 - 2248.55) / 2333.20 * 100.0)
                                          .margin(1e-9));

    REQUIRE_THROWS_AS(compare_models(rows, "missing"), UnknownBaseline);
}

TEST_CASE("metric report json round trip") {
    std::vector<std::vector<double>> truths;
    const auto forecasts = fake_forecasts(4, 47, true, &truths);
    ReportOptions opts;
    opts.model_name = "round";
    const MetricReport rep = segment_report(forecasts, truths, opts);
    const MetricReport back = report_from_json(report_to_json(rep));
    REQUIRE(back.model == rep.model);
    REQUIRE(back.rmse == rep.rmse);
    REQUIRE(back.winkler_overall == rep.winkler_overall);
    REQUIRE(back.crps_by_segment == rep.crps_by_segment);
    REQUIRE(back.pinball_by_quantile == rep.pinball_by_quantile);
}
