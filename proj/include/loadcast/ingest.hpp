#ifndef LOADCAST_INGEST_HPP
#define LOADCAST_INGEST_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loadcast/csv.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

enum class TableKind { demand, temperature, holidays, text_features };

// Parsed input file, prior to grid alignment. Demand/temperature rows are
// timestamped; holidays and text features are dated (daily).
struct RawTable {
    std::string source_path;
    TableKind kind = TableKind::demand;
    std::string text_group; // set when kind == text_features

    std::vector<Timestamp> times;
    std::vector<double> values;

    std::vector<Date> dates;
    std::vector<std::vector<double>> date_values;
    std::vector<std::string> dim_names;
};

struct DateRange {
    Date first{};
    Date last{}; // inclusive
    std::size_t n_days() const { return static_cast<std::size_t>((last - first).count()) + 1; }
};

// ---------------------------------------------------------------------------
// read_csv
// ---------------------------------------------------------------------------

namespace detail {

inline void check_time_order(const RawTable& t, Timestamp ts, int line_no) {
    if (!t.times.empty()) {
        if (ts == t.times.back()) {
            throw DuplicateTimestamp(t.source_path + ":" + std::to_string(line_no) +
                                     ": duplicate timestamp " + format_timestamp(ts));
        }
        if (ts < t.times.back()) {
            throw NonMonotonicTime(t.source_path + ":" + std::to_string(line_no) +
                                   ": timestamp goes backwards at " + format_timestamp(ts));
        }
    }
}

// Insert linear midpoints wherever consecutive stamps are exactly one hour
// apart, converting hourly series to the half-hourly grid.
inline void interpolate_hourly(RawTable& t) {
    std::vector<Timestamp> times;
    std::vector<double> values;
    times.reserve(t.times.size() * 2);
    values.reserve(t.values.size() * 2);
    for (std::size_t i = 0; i < t.times.size(); ++i) {
        if (i > 0 && t.times[i] - t.times[i - 1] == std::chrono::seconds{3600}) {
            times.push_back(t.times[i - 1] + kSlotStep);
            values.push_back(0.5 * (t.values[i - 1] + t.values[i]));
        }
        times.push_back(t.times[i]);
        values.push_back(t.values[i]);
    }
    t.times = std::move(times);
    t.values = std::move(values);
}

} // namespace detail

inline RawTable read_csv(const std::string& path, TableKind kind,
                         const std::string& text_group = "") {
    const CsvFile f = read_csv_file(path);
    RawTable t;
    t.source_path = path;
    t.kind = kind;
    t.text_group = text_group;

    auto context = [&](int line_no) { return "at " + path + ":" + std::to_string(line_no); };

    switch (kind) {
        case TableKind::demand:
        case TableKind::temperature: {
            for (const auto& row : f.rows) {
                if (row.fields.size() != 2) {
                    throw ParseError("expected 2 fields " + context(row.line_no));
                }
                Timestamp ts;
                try {
                    ts = parse_timestamp(row.fields[0]);
                } catch (const ParseError& e) {
                    throw ParseError(std::string(e.what()) + " " + context(row.line_no));
                }
                detail::check_time_order(t, ts, row.line_no);
                t.times.push_back(ts);
                t.values.push_back(parse_double(row.fields[1], context(row.line_no)));
            }
            detail::interpolate_hourly(t);
            break;
        }
        case TableKind::holidays: {
            for (const auto& row : f.rows) {
                if (row.fields.empty() || row.fields[0].empty()) {
                    throw ParseError("expected a date " + context(row.line_no));
                }
                t.dates.push_back(parse_date(row.fields[0]));
            }
            break;
        }
        case TableKind::text_features: {
            if (f.header.size() < 2 || f.header[0] != "date") {
                throw ParseError(path + ": text feature header must be date,f1,...");
            }
            t.dim_names.assign(f.header.begin() + 1, f.header.end());
            for (const auto& row : f.rows) {
                if (row.fields.size() != f.header.size()) {
                    throw ParseError("field count mismatch " + context(row.line_no));
                }
                const Date d = parse_date(row.fields[0]);
                if (!t.dates.empty() && d <= t.dates.back()) {
                    throw NonMonotonicTime(path + ":" + std::to_string(row.line_no) +
                                           ": dates must be strictly increasing");
                }
                t.dates.push_back(d);
                std::vector<double> vals;
                vals.reserve(row.fields.size() - 1);
                for (std::size_t i = 1; i < row.fields.size(); ++i) {
                    vals.push_back(parse_double(row.fields[i], context(row.line_no)));
                }
                t.date_values.push_back(std::move(vals));
            }
            break;
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// assemble_frame
// ---------------------------------------------------------------------------

namespace detail {

// Align a timestamped series onto the frame grid. Gaps up to max_gap interior
// slots are linearly interpolated; when edge_extend is set, leading/trailing
// gaps take the nearest value (hourly sources legitimately miss the last
// half-hour of the range). Longer interior gaps raise GapTooLong.
inline std::vector<double> align_to_grid(const RawTable& t, const std::vector<Timestamp>& grid,
                                         int max_gap, bool edge_extend) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> out(grid.size(), nan);
    std::size_t j = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        while (j < t.times.size() && t.times[j] < grid[i]) ++j;
        if (j < t.times.size() && t.times[j] == grid[i]) out[i] = t.values[j];
    }

    std::size_t i = 0;
    while (i < out.size()) {
        if (!std::isnan(out[i])) {
            ++i;
            continue;
        }
        std::size_t end = i;
        while (end < out.size() && std::isnan(out[end])) ++end;
        const std::size_t run = end - i;
        const bool at_edge = (i == 0 || end == out.size());
        if (at_edge) {
            if (!edge_extend) {
                throw GapTooLong(t.source_path + ": no data for " + format_timestamp(grid[i]) +
                                 " .. " + format_timestamp(grid[end - 1]));
            }
            const double v = (i == 0) ? out[end] : out[i - 1];
            if (std::isnan(v)) throw GapTooLong(t.source_path + ": series entirely missing");
            for (std::size_t k = i; k < end; ++k) out[k] = v;
        } else if (static_cast<int>(run) <= max_gap) {
            const double a = out[i - 1];
            const double b = out[end];
            for (std::size_t k = 0; k < run; ++k) {
                out[i + k] = a + (b - a) * static_cast<double>(k + 1) / static_cast<double>(run + 1);
            }
        } else {
            throw GapTooLong(t.source_path + ": gap of " + std::to_string(run) + " slots at " +
                             format_timestamp(grid[i]) + " exceeds " + std::to_string(max_gap));
        }
        i = end;
    }
    return out;
}

// Daily values broadcast to 48 slots; missing days carry the nearest
// available day (previous if any, otherwise next).
inline std::vector<double> broadcast_daily(const std::vector<Date>& dates,
                                           const std::vector<double>& vals, const DateRange& range) {
    const std::size_t n_days = range.n_days();
    std::vector<double> daily(n_days, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (dates[i] < range.first || dates[i] > range.last) continue;
        daily[static_cast<std::size_t>((dates[i] - range.first).count())] = vals[i];
    }
    for (std::size_t d = 0; d < n_days; ++d) {
        if (std::isnan(daily[d]) && d > 0) daily[d] = daily[d - 1];
    }
    for (std::size_t d = n_days; d-- > 0;) {
        if (std::isnan(daily[d]) && d + 1 < n_days) daily[d] = daily[d + 1];
    }
    std::vector<double> out(n_days * kSlotsPerDay);
    for (std::size_t d = 0; d < n_days; ++d) {
        for (int k = 0; k < kSlotsPerDay; ++k) out[d * kSlotsPerDay + k] = daily[d];
    }
    return out;
}

inline std::vector<Timestamp> day_grid(const DateRange& range) {
    std::vector<Timestamp> grid;
    grid.reserve(range.n_days() * kSlotsPerDay);
    for (Timestamp t = range.first; t <= Timestamp{range.last} + std::chrono::hours{23} +
                                             std::chrono::minutes{30};
         t += kSlotStep) {
        grid.push_back(t);
    }
    return grid;
}

} // namespace detail

// Demand gaps longer than two consecutive slots (one hour) are rejected.
inline constexpr int kMaxDemandGapSlots = 2;

inline SeriesFrame assemble_frame(const std::vector<RawTable>& tables, const DateRange& range) {
    const RawTable* demand = nullptr;
    const RawTable* temperature = nullptr;
    const RawTable* holidays = nullptr;
    std::vector<const RawTable*> text_tables;
    for (const auto& t : tables) {
        switch (t.kind) {
            case TableKind::demand: demand = &t; break;
            case TableKind::temperature: temperature = &t; break;
            case TableKind::holidays: holidays = &t; break;
            case TableKind::text_features: text_tables.push_back(&t); break;
        }
    }
    if (!demand) throw MissingTargetTable("no demand table supplied");

    SeriesFrame frame(detail::day_grid(range));
    const auto& grid = frame.timestamps();

    frame.add_column({"demand", kRoleTarget,
                      detail::align_to_grid(*demand, grid, kMaxDemandGapSlots, false)});

    if (temperature) {
        frame.add_column({"temp", kRoleTemperature,
                          detail::align_to_grid(*temperature, grid, kSlotsPerDay, true)});
    }

    if (holidays) {
        std::vector<double> dummy(grid.size(), 0.0);
        for (Date d : holidays->dates) {
            if (d < range.first || d > range.last) continue;
            const std::size_t base = static_cast<std::size_t>((d - range.first).count()) *
                                     kSlotsPerDay;
            for (int k = 0; k < kSlotsPerDay; ++k) dummy[base + k] = 1.0;
        }
        frame.add_column({"holiday", kRoleHoliday, std::move(dummy)});
    }

    {
        std::vector<double> ws(grid.size()), wc(grid.size()), ys(grid.size()), yc(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const CalendarEncoding e = encode_calendar(grid[i]);
            ws[i] = e.week_sin;
            wc[i] = e.week_cos;
            ys[i] = e.year_sin;
            yc[i] = e.year_cos;
        }
        frame.add_column({"cal_week_sin", kRoleCalendar, std::move(ws)});
        frame.add_column({"cal_week_cos", kRoleCalendar, std::move(wc)});
        frame.add_column({"cal_year_sin", kRoleCalendar, std::move(ys)});
        frame.add_column({"cal_year_cos", kRoleCalendar, std::move(yc)});
    }

    for (const RawTable* t : text_tables) {
        for (std::size_t dim = 0; dim < t->dim_names.size(); ++dim) {
            std::vector<double> vals(t->dates.size());
            for (std::size_t i = 0; i < t->dates.size(); ++i) vals[i] = t->date_values[i][dim];
            frame.add_column({"text_" + t->text_group + "_" + t->dim_names[dim],
                              text_role(t->text_group),
                              detail::broadcast_daily(t->dates, vals, range)});
        }
    }

    frame.validate();
    return frame;
}

// ---------------------------------------------------------------------------
// Frame file round trip (frame.csv)
// ---------------------------------------------------------------------------

inline void write_frame_csv(const SeriesFrame& frame, const std::string& path) {
    std::vector<std::string> lines;
    lines.reserve(frame.n_rows() + 2);
    std::vector<std::string> header{"timestamp"};
    std::vector<std::string> roles{"#role"};
    for (const auto& c : frame.columns()) {
        header.push_back(c.name);
        roles.push_back(c.role);
    }
    lines.push_back(join_csv(header));
    lines.push_back(join_csv(roles)); // comment row: column roles
    for (std::size_t i = 0; i < frame.n_rows(); ++i) {
        std::vector<std::string> fields{format_timestamp(frame.timestamps()[i])};
        for (const auto& c : frame.columns()) fields.push_back(format_full(c.values[i]));
        lines.push_back(join_csv(fields));
    }
    write_lines(path, lines);
}

inline SeriesFrame read_frame_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file: " + path);
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "timestamp") {
        throw ParseError(path + ": bad frame header");
    }
    if (!std::getline(in, line) || line.rfind("#role", 0) != 0) {
        throw ParseError(path + ": missing role row");
    }
    const auto roles = split_csv_line(line);
    if (roles.size() != header.size()) throw ParseError(path + ": role row length mismatch");

    std::vector<Timestamp> times;
    std::vector<std::vector<double>> cols(header.size() - 1);
    int line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": field count mismatch");
        }
        times.push_back(parse_timestamp(fields[0]));
        for (std::size_t j = 1; j < fields.size(); ++j) {
            cols[j - 1].push_back(parse_double(fields[j], "at " + path + ":" +
                                               std::to_string(line_no)));
        }
    }
    SeriesFrame frame(std::move(times));
    for (std::size_t j = 1; j < header.size(); ++j) {
        frame.add_column({header[j], roles[j], std::move(cols[j - 1])});
    }
    frame.validate();
    return frame;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::size_t n_days = 100;
    std::vector<double> daily_profile;   // 48 values; empty -> default shape
    double weekly_amplitude = 0.08;
    double annual_amplitude = 0.15;
    double temperature_coupling = 0.0;   // MW per degree away from the 10 C base
    int text_signal_lag = 1;             // days by which the text factor leads demand
    double text_signal_gain = 0.0;       // MW per unit of the text factor
    double noise_sd = 0.0;               // MW
    std::uint64_t seed = 1;

    // extras for desk-scale experiments
    int n_noise_text = 0;                // extra white-noise sentiment channels
    double text_ar = 0.0;                // AR(1) coefficient of the text factor
    bool with_embeddings = false;        // emit a rank-1 embedding table
    std::size_t embedding_dim = 100;
    Date start_date = parse_date("2016-06-01");
};

struct SyntheticTruth {
    std::vector<double> text_factor;        // s(d), one per day
    std::vector<double> embedding_latent;   // a(d) when embeddings are generated
    std::vector<double> deterministic_demand; // demand minus the Gaussian noise
    int text_signal_lag = 0;
    double text_signal_gain = 0.0;
    std::string description;
};

// UK-flavoured double-peak base shape in MW: overnight trough, morning ramp,
// evening peak.
inline std::vector<double> default_daily_profile() {
    std::vector<double> p(kSlotsPerDay);
    for (int k = 0; k < kSlotsPerDay; ++k) {
        const double h = (k + 0.5) / 2.0;
        double shape = 1.0;
        shape += 0.25 * std::exp(-0.5 * ((h - 8.5) / 2.0) * ((h - 8.5) / 2.0));
        shape += 0.35 * std::exp(-0.5 * ((h - 18.5) / 2.5) * ((h - 18.5) / 2.5));
        shape -= 0.20 * std::exp(-0.5 * ((h - 3.5) / 2.5) * ((h - 3.5) / 2.5));
        p[k] = 25000.0 * shape;
    }
    return p;
}

inline constexpr double kSyntheticTempBase = 10.0;

inline double synthetic_temperature(Timestamp t) {
    const CalendarEncoding e = encode_calendar(t);
    const Date day = date_of(t);
    const double frac =
        static_cast<double>(
            std::chrono::duration_cast<std::chrono::seconds>(t - day).count()) /
        86400.0;
    return kSyntheticTempBase - 8.0 * e.year_cos + 3.0 * std::sin(2.0 * kPi * (frac - 0.25));
}

// Demand is daily_profile modulated by weekly/annual sinusoids, plus a
// temperature term, plus the lagged daily text factor, plus Gaussian noise.
// Draw order from the seed: (1) text factor innovations for days
// -lag..n_days-1, (2) noise channels (channel-major), (3) demand noise per
// slot, (4) embedding direction. Fixed order keeps runs bit-reproducible.
inline std::pair<SeriesFrame, SyntheticTruth> generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_days < 9) throw UsageError("synthetic spec needs n_days >= 9");
    if (spec.noise_sd < 0.0) throw UsageError("noise_sd must be >= 0");
    const std::vector<double> profile =
        spec.daily_profile.empty() ? default_daily_profile() : spec.daily_profile;
    if (profile.size() != kSlotsPerDay) {
        throw UsageError("daily_profile must have 48 entries");
    }

    Rng rng(spec.seed);
    const int lag = spec.text_signal_lag;
    const std::size_t n_ext = spec.n_days + static_cast<std::size_t>(std::max(lag, 0));

    // (1) text factor, AR(1) with unit stationary variance
    std::vector<double> s_ext(n_ext, 0.0);
    const double ar = spec.text_ar;
    const double innov_sd = std::sqrt(std::max(0.0, 1.0 - ar * ar));
    for (std::size_t i = 0; i < n_ext; ++i) {
        const double innov = rng.normal();
        s_ext[i] = (i == 0) ? innov : ar * s_ext[i - 1] + innov_sd * innov;
    }

    // (2) white-noise sentiment channels
    std::vector<std::vector<double>> noise_channels(spec.n_noise_text);
    for (auto& ch : noise_channels) {
        ch.resize(spec.n_days);
        for (auto& v : ch) v = rng.normal();
    }

    const DateRange range{spec.start_date,
                          spec.start_date + std::chrono::days{static_cast<long>(spec.n_days - 1)}};
    SeriesFrame frame(detail::day_grid(range));
    const auto& grid = frame.timestamps();

    std::vector<double> temp(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) temp[i] = synthetic_temperature(grid[i]);

    SyntheticTruth truth;
    truth.text_signal_lag = lag;
    truth.text_signal_gain = spec.text_signal_gain;
    truth.text_factor.assign(s_ext.end() - static_cast<long>(spec.n_days), s_ext.end());
    truth.description =
        "demand = profile * (1 + weekly_amplitude*week_sin + annual_amplitude*year_sin)"
        " + temperature_coupling*(temp - 10)"
        " + text_signal_gain*s(day - text_signal_lag) + N(0, noise_sd^2)";

    // (3) demand
    std::vector<double> demand(grid.size());
    truth.deterministic_demand.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const int k = static_cast<int>(i % kSlotsPerDay);
        const std::size_t d = i / kSlotsPerDay;
        const CalendarEncoding e = encode_calendar(grid[i]);
        double v = profile[k] *
                   (1.0 + spec.weekly_amplitude * e.week_sin + spec.annual_amplitude * e.year_sin);
        v += spec.temperature_coupling * (temp[i] - kSyntheticTempBase);
        // s index d - lag, shifted into the extended array which starts at -lag
        const long ext_idx = static_cast<long>(d) - lag + std::max(lag, 0);
        v += spec.text_signal_gain * s_ext[static_cast<std::size_t>(std::max(ext_idx, 0L))];
        truth.deterministic_demand[i] = v;
        demand[i] = v + (spec.noise_sd > 0.0 ? rng.normal(0.0, spec.noise_sd) : 0.0);
    }

    frame.add_column({"demand", kRoleTarget, std::move(demand)});
    frame.add_column({"temp", kRoleTemperature, std::move(temp)});

    {
        std::vector<double> holiday(grid.size(), 0.0);
        for (std::size_t d = 0; d < spec.n_days; ++d) {
            const std::chrono::year_month_day ymd{range.first + std::chrono::days{(long)d}};
            const bool hol = (ymd.month() == std::chrono::January && ymd.day() == std::chrono::day{1}) ||
                             (ymd.month() == std::chrono::December && ymd.day() == std::chrono::day{25});
            if (hol) {
                for (int k = 0; k < kSlotsPerDay; ++k) holiday[d * kSlotsPerDay + k] = 1.0;
            }
        }
        frame.add_column({"holiday", kRoleHoliday, std::move(holiday)});
    }

    {
        std::vector<double> ws(grid.size()), wc(grid.size()), ys(grid.size()), yc(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const CalendarEncoding e = encode_calendar(grid[i]);
            ws[i] = e.week_sin;
            wc[i] = e.week_cos;
            ys[i] = e.year_sin;
            yc[i] = e.year_cos;
        }
        frame.add_column({"cal_week_sin", kRoleCalendar, std::move(ws)});
        frame.add_column({"cal_week_cos", kRoleCalendar, std::move(wc)});
        frame.add_column({"cal_year_sin", kRoleCalendar, std::move(ys)});
        frame.add_column({"cal_year_cos", kRoleCalendar, std::move(yc)});
    }

    {
        std::vector<double> sig(grid.size());
        for (std::size_t d = 0; d < spec.n_days; ++d) {
            for (int k = 0; k < kSlotsPerDay; ++k) {
                sig[d * kSlotsPerDay + k] = truth.text_factor[d];
            }
        }
        frame.add_column({"text_sentiment_signal", text_role("sentiment"), std::move(sig)});
        for (std::size_t c = 0; c < noise_channels.size(); ++c) {
            std::vector<double> ch(grid.size());
            for (std::size_t d = 0; d < spec.n_days; ++d) {
                for (int k = 0; k < kSlotsPerDay; ++k) {
                    ch[d * kSlotsPerDay + k] = noise_channels[c][d];
                }
            }
            char name[64];
            std::snprintf(name, sizeof(name), "text_sentiment_noise%02zu", c + 1);
            frame.add_column({name, text_role("sentiment"), std::move(ch)});
        }
    }

    if (spec.with_embeddings) {
        // rank-1 structure: e(d) = a(d) * v, with a slowly varying latent so
        // the compressed channel is attributable day by day
        truth.embedding_latent.resize(spec.n_days);
        for (std::size_t d = 0; d < spec.n_days; ++d) {
            truth.embedding_latent[d] =
                std::sin(2.0 * kPi * d / 64.0) + 0.3 * std::sin(2.0 * kPi * d / 151.0);
        }
        // (4) direction drawn last
        std::vector<double> v(spec.embedding_dim);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        for (std::size_t j = 0; j < spec.embedding_dim; ++j) {
            std::vector<double> col(grid.size());
            for (std::size_t d = 0; d < spec.n_days; ++d) {
                for (int k = 0; k < kSlotsPerDay; ++k) {
                    col[d * kSlotsPerDay + k] = truth.embedding_latent[d] * v[j];
                }
            }
            char name[64];
            std::snprintf(name, sizeof(name), "text_embedding_e%03zu", j + 1);
            frame.add_column({name, text_role("embedding"), std::move(col)});
        }
    }

    frame.validate();
    return {std::move(frame), std::move(truth)};
}

} // namespace loadcast

#endif
