#ifndef LOADCAST_TIMESERIES_HPP
#define LOADCAST_TIMESERIES_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "loadcast/errors.hpp"
#include "loadcast/math.hpp"

namespace loadcast {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

inline constexpr int kSlotsPerDay = 48;
inline constexpr int kLagDays = 7;
inline constexpr int kLagSteps = kLagDays * kSlotsPerDay; // 336
inline constexpr std::chrono::seconds kSlotStep{1800};

// ---------------------------------------------------------------------------
// Timestamps
// ---------------------------------------------------------------------------

// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM", "YYYY-MM-DDTHH:MM:SS", each with
// an optional trailing 'Z'. Everything is UTC.
inline Timestamp parse_timestamp(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    char sep = 0, z = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d%c", &y, &mo, &d, &sep, &h, &mi, &se, &z);
    if (n < 3 || (n > 3 && sep != 'T' && sep != ' ')) {
        throw ParseError("invalid timestamp: '" + s + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(mo)},
                                          std::chrono::day{unsigned(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 59) {
        throw ParseError("invalid timestamp: '" + s + "'");
    }
    return Timestamp{std::chrono::sys_days{ymd} + std::chrono::hours{h} +
                     std::chrono::minutes{mi} + std::chrono::seconds{se}};
}

inline Date parse_date(const std::string& s) {
    return std::chrono::floor<std::chrono::days>(parse_timestamp(s));
}

inline std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

inline std::string format_timestamp(Timestamp t) {
    const Date day = std::chrono::floor<std::chrono::days>(t);
    const auto tod = std::chrono::duration_cast<std::chrono::minutes>(t - day);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%sT%02d:%02dZ", format_date(day).c_str(),
                  int(tod.count() / 60), int(tod.count() % 60));
    return buf;
}

inline Date date_of(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

// half-hour slot within the day, 0..47
inline int slot_of(Timestamp t) {
    const auto tod = std::chrono::duration_cast<std::chrono::seconds>(t - date_of(t));
    return static_cast<int>(tod.count() / kSlotStep.count());
}

// ---------------------------------------------------------------------------
// Calendar encoding
// ---------------------------------------------------------------------------

struct CalendarEncoding {
    double week_sin = 0.0;
    double week_cos = 0.0;
    double year_sin = 0.0;
    double year_cos = 0.0;
};

// Week phase: 2 pi (day_of_week + fraction_of_day) / 7 with Monday = 0.
// Year phase: 2 pi (day_of_year - 1 + fraction_of_day) / 365.25; the 365.25
// divisor keeps the encoding continuous across leap years.
inline CalendarEncoding encode_calendar(Timestamp t) {
    const Date day = date_of(t);
    const auto tod = std::chrono::duration_cast<std::chrono::seconds>(t - day);
    const double frac = static_cast<double>(tod.count()) / 86400.0;

    const std::chrono::weekday wd{day};
    const double dow = static_cast<double>(wd.iso_encoding() - 1); // Monday = 0

    const std::chrono::year_month_day ymd{day};
    const Date jan1{std::chrono::sys_days{ymd.year() / std::chrono::January / 1}};
    const double doy = static_cast<double>((day - jan1).count()) + 1.0;

    const double wphase = 2.0 * kPi * (dow + frac) / 7.0;
    const double yphase = 2.0 * kPi * (doy - 1.0 + frac) / 365.25;

    CalendarEncoding e;
    e.week_sin = std::sin(wphase);
    e.week_cos = std::cos(wphase);
    e.year_sin = std::sin(yphase);
    e.year_cos = std::cos(yphase);
    return e;
}

// ---------------------------------------------------------------------------
// Day segments
// ---------------------------------------------------------------------------

enum class DaySegment { midnight, morning, afternoon, evening };

inline const char* segment_label(DaySegment s) {
    switch (s) {
        case DaySegment::midnight: return "midnight";
        case DaySegment::morning: return "morning";
        case DaySegment::afternoon: return "afternoon";
        case DaySegment::evening: return "evening";
    }
    return "?";
}

inline constexpr DaySegment kAllSegments[4] = {DaySegment::midnight, DaySegment::morning,
                                               DaySegment::afternoon, DaySegment::evening};

// Slots are labeled by the hour they end in, so slot 0 (00:00-00:30) belongs
// to hour 1 and the midnight segment covers hours 1-6 exactly.
inline DaySegment segment_of(int slot_index) {
    const int ending_hour = slot_index / 2 + 1;
    if (ending_hour <= 6) return DaySegment::midnight;
    if (ending_hour <= 12) return DaySegment::morning;
    if (ending_hour <= 18) return DaySegment::afternoon;
    return DaySegment::evening;
}

// ---------------------------------------------------------------------------
// SeriesFrame
// ---------------------------------------------------------------------------

inline constexpr const char* kRoleTarget = "target";
inline constexpr const char* kRoleTemperature = "temperature";
inline constexpr const char* kRoleCalendar = "calendar";
inline constexpr const char* kRoleHoliday = "holiday";

inline std::string text_role(const std::string& group) { return "text:" + group; }
inline bool is_text_role(const std::string& role) { return role.rfind("text:", 0) == 0; }
inline std::string text_group_of(const std::string& role) {
    return is_text_role(role) ? role.substr(5) : std::string{};
}

struct Column {
    std::string name;
    std::string role; // target | temperature | calendar | holiday | text:<group>
    std::vector<double> values;
};

// Timestamp-aligned half-hourly multivariate table. Columns are kept sorted
// by name so every consumer sees the same deterministic channel order.
class SeriesFrame {
public:
    SeriesFrame() = default;

    explicit SeriesFrame(std::vector<Timestamp> timestamps) : timestamps_(std::move(timestamps)) {}

    const std::vector<Timestamp>& timestamps() const { return timestamps_; }
    const std::vector<Column>& columns() const { return columns_; }
    std::size_t n_rows() const { return timestamps_.size(); }
    std::size_t n_cols() const { return columns_.size(); }
    std::size_t n_days() const { return timestamps_.size() / kSlotsPerDay; }

    Date first_day() const { return date_of(timestamps_.front()); }
    Date day_at(std::size_t day_index) const {
        return first_day() + std::chrono::days{static_cast<long>(day_index)};
    }

    void add_column(Column col) {
        auto it = std::lower_bound(columns_.begin(), columns_.end(), col.name,
                                   [](const Column& c, const std::string& n) { return c.name < n; });
        if (it != columns_.end() && it->name == col.name) {
            throw DataError("duplicate column name: " + col.name);
        }
        columns_.insert(it, std::move(col));
    }

    bool has_column(const std::string& name) const { return find(name) != nullptr; }

    const Column& column(const std::string& name) const {
        const Column* c = find(name);
        if (!c) throw DataError("no such column: " + name);
        return *c;
    }

    const Column& target_column() const {
        for (const auto& c : columns_)
            if (c.role == kRoleTarget) return c;
        throw DataError("frame has no target column");
    }

    // keep only the named columns (the target stays regardless)
    SeriesFrame select_columns(const std::vector<std::string>& names) const {
        SeriesFrame out(timestamps_);
        for (const auto& c : columns_) {
            if (c.role == kRoleTarget ||
                std::find(names.begin(), names.end(), c.name) != names.end()) {
                out.add_column(c);
            }
        }
        return out;
    }

    // mean of the target over each day
    std::vector<double> daily_target_means() const {
        const auto& y = target_column().values;
        std::vector<double> out(n_days(), 0.0);
        for (std::size_t d = 0; d < out.size(); ++d) {
            double s = 0.0;
            for (int k = 0; k < kSlotsPerDay; ++k) s += y[d * kSlotsPerDay + k];
            out[d] = s / kSlotsPerDay;
        }
        return out;
    }

    // first value of the day for a column (text columns are day-constant)
    std::vector<double> daily_values(const std::string& name) const {
        const auto& v = column(name).values;
        std::vector<double> out(n_days(), 0.0);
        for (std::size_t d = 0; d < out.size(); ++d) out[d] = v[d * kSlotsPerDay];
        return out;
    }

    void validate() const {
        if (timestamps_.empty()) throw DataError("empty frame");
        if (timestamps_.size() % kSlotsPerDay != 0 || slot_of(timestamps_.front()) != 0) {
            throw DataError("frame is not aligned to whole days");
        }
        for (std::size_t i = 1; i < timestamps_.size(); ++i) {
            if (timestamps_[i] - timestamps_[i - 1] != kSlotStep) {
                throw NonMonotonicTime("timestamp grid broken at row " + std::to_string(i) +
                                       " (" + format_timestamp(timestamps_[i]) + ")");
            }
        }
        int n_targets = 0;
        for (const auto& c : columns_) {
            if (c.values.size() != timestamps_.size()) {
                throw DataError("column " + c.name + " length mismatch");
            }
            if (c.role == kRoleTarget) ++n_targets;
            for (double v : c.values) {
                if (!std::isfinite(v)) throw DataError("non-finite value in column " + c.name);
            }
            if (is_text_role(c.role)) {
                for (std::size_t d = 0; d < n_days(); ++d) {
                    const double v0 = c.values[d * kSlotsPerDay];
                    for (int k = 1; k < kSlotsPerDay; ++k) {
                        if (c.values[d * kSlotsPerDay + k] != v0) {
                            throw DataError("text column " + c.name +
                                            " varies within day " + format_date(day_at(d)));
                        }
                    }
                }
            }
        }
        if (n_targets != 1) {
            throw DataError("frame must have exactly one target column, found " +
                            std::to_string(n_targets));
        }
    }

private:
    const Column* find(const std::string& name) const {
        auto it = std::lower_bound(columns_.begin(), columns_.end(), name,
                                   [](const Column& c, const std::string& n) { return c.name < n; });
        if (it != columns_.end() && it->name == name) return &*it;
        return nullptr;
    }

    std::vector<Timestamp> timestamps_;
    std::vector<Column> columns_; // sorted by name
};

// ---------------------------------------------------------------------------
// Sample windows
// ---------------------------------------------------------------------------

// One training/inference example: the lag block covers days D-7..D-1 (day D
// itself excluded) and the target block is day D+1.
struct SampleWindow {
    Date anchor_day{};
    Matrix lag;                 // kLagSteps x F, channels in frame column order
    std::vector<double> target; // kSlotsPerDay demand values
};

struct WindowSet {
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> test;
    std::vector<std::string> channels; // column names, lexicographic
};

inline WindowSet make_windows(const SeriesFrame& frame, Date split_date) {
    frame.validate();
    const std::size_t n_days = frame.n_days();
    if (n_days < kLagDays + 2) throw SpanTooShort("need at least 9 days, have " +
                                                  std::to_string(n_days));

    WindowSet out;
    for (const auto& c : frame.columns()) out.channels.push_back(c.name);
    const std::size_t f = frame.n_cols();
    const auto& target = frame.target_column().values;

    for (std::size_t d = kLagDays; d + 1 < n_days; ++d) {
        SampleWindow w;
        w.anchor_day = frame.day_at(d);
        w.lag = Matrix(kLagSteps, f);
        const std::size_t lag_start = (d - kLagDays) * kSlotsPerDay;
        for (std::size_t t = 0; t < kLagSteps; ++t) {
            double* row = w.lag.row(t);
            std::size_t j = 0;
            for (const auto& c : frame.columns()) row[j++] = c.values[lag_start + t];
        }
        w.target.resize(kSlotsPerDay);
        const std::size_t tgt_start = (d + 1) * kSlotsPerDay;
        for (int k = 0; k < kSlotsPerDay; ++k) w.target[k] = target[tgt_start + k];

        if (w.anchor_day < split_date) {
            out.train.push_back(std::move(w));
        } else {
            out.test.push_back(std::move(w));
        }
    }
    return out;
}

} // namespace loadcast

#endif
