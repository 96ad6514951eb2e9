#pragma once

// Day calendar and most-frequent-cell home/work inference.

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chrono_cdr/common.hpp"
#include "chrono_cdr/ingest.hpp"

namespace chrono_cdr {

enum class DayClass : std::uint8_t { workday, holiday };

inline std::string_view to_string(DayClass c) { return c == DayClass::workday ? "workday" : "holiday"; }

/// Workday/holiday classification with a fixed UTC offset. Weekends and
/// listed holidays are holidays unless overridden as workdays (e.g. swapped
/// Saturdays). When a range is set, dates outside it are rejected.
class Calendar {
 public:
  Calendar() = default;
  Calendar(TzOffset tz, std::set<DayNumber> holidays, std::set<DayNumber> workday_overrides = {},
           std::optional<DayNumber> first = std::nullopt, std::optional<DayNumber> last = std::nullopt)
      : tz_(tz), holidays_(std::move(holidays)), overrides_(std::move(workday_overrides)), first_(first), last_(last) {
    if (first_ && last_ && *first_ > *last_) throw_validation("calendar: first day after last day");
  }

  TzOffset tz() const { return tz_; }
  std::optional<DayNumber> first_day() const { return first_; }
  std::optional<DayNumber> last_day() const { return last_; }
  const std::set<DayNumber>& holidays() const { return holidays_; }
  const std::set<DayNumber>& workday_overrides() const { return overrides_; }

  bool in_range(DayNumber day) const { return (!first_ || day >= *first_) && (!last_ || day <= *last_); }

  DayClass classify(DayNumber day) const {
    if (!in_range(day)) throw_validation("date " + format_date(day) + " is outside the calendar range");
    if (overrides_.contains(day)) return DayClass::workday;
    if (holidays_.contains(day) || iso_weekday(day) >= 5) return DayClass::holiday;
    return DayClass::workday;
  }

  /// Copy with the range set to [first, last].
  Calendar with_range(DayNumber first, DayNumber last) const {
    return Calendar(tz_, holidays_, overrides_, first, last);
  }

 private:
  TzOffset tz_{120};
  std::set<DayNumber> holidays_;
  std::set<DayNumber> overrides_;
  std::optional<DayNumber> first_, last_;
};

inline DayClass classify_day(DayNumber day, const Calendar& calendar) { return calendar.classify(day); }

/// {"tz_offset_minutes": int, "holidays": [dates], "workday_overrides": [dates],
///  "first_day": date?, "last_day": date?}
inline Calendar calendar_from_json(const nlohmann::json& j) {
  auto dates = [&](const char* key) {
    std::set<DayNumber> out;
    if (!j.contains(key)) return out;
    for (const auto& v : j.at(key)) {
      auto d = parse_date(v.get<std::string>());
      if (!d) throw_validation(std::string("calendar: invalid date in ") + key);
      out.insert(*d);
    }
    return out;
  };
  auto single = [&](const char* key) -> std::optional<DayNumber> {
    if (!j.contains(key)) return std::nullopt;
    auto d = parse_date(j.at(key).get<std::string>());
    if (!d) throw_validation(std::string("calendar: invalid ") + key);
    return d;
  };
  try {
    int tz = j.value("tz_offset_minutes", 120);
    if (tz < -14 * 60 || tz > 14 * 60) throw_validation("calendar: tz_offset_minutes out of range");
    return Calendar(TzOffset{tz}, dates("holidays"), dates("workday_overrides"), single("first_day"), single("last_day"));
  } catch (const nlohmann::json::exception& e) {
    throw_validation(std::string("calendar: ") + e.what());
  }
}

inline nlohmann::json to_json(const Calendar& c) {
  auto list = [](const std::set<DayNumber>& s) {
    std::vector<std::string> out;
    for (auto d : s) out.push_back(format_date(d));
    return out;
  };
  nlohmann::json j{{"tz_offset_minutes", c.tz().minutes},
                   {"holidays", list(c.holidays())},
                   {"workday_overrides", list(c.workday_overrides())}};
  if (c.first_day()) j["first_day"] = format_date(*c.first_day());
  if (c.last_day()) j["last_day"] = format_date(*c.last_day());
  return j;
}

inline Calendar read_calendar_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open " + path);
  try {
    return calendar_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw_validation(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Home / work inference
// ---------------------------------------------------------------------------

/// Half-open local-time windows, in seconds of day.
struct LocationParams {
  int work_begin = 9 * 3600;
  int work_end = 16 * 3600;
  int night_begin = 22 * 3600;  // night wraps midnight: [night_begin, 24h) ∪ [0, night_end)
  int night_end = 6 * 3600;
};

struct CellSupport {
  std::uint32_t cell = 0;
  std::uint32_t support = 0;

  friend bool operator==(const CellSupport&, const CellSupport&) = default;
};

struct LocationAssignment {
  std::uint32_t sim = 0;
  std::optional<CellSupport> home;
  std::optional<CellSupport> work;

  friend bool operator==(const LocationAssignment&, const LocationAssignment&) = default;
};

inline bool in_work_window(int second_of_day, DayClass day, const LocationParams& p) {
  return day == DayClass::workday && second_of_day >= p.work_begin && second_of_day < p.work_end;
}

inline bool in_home_window(int second_of_day, DayClass day, const LocationParams& p) {
  if (day == DayClass::holiday) return true;
  return second_of_day >= p.night_begin || second_of_day < p.night_end;
}

namespace detail {

/// Most frequent cell among records accepted by `qualifies`. Ties go to the
/// larger all-day count, then to the smaller cell index; cell indices of an
/// ActivityTable are in lexicographic id order.
template <class Pred>
std::optional<CellSupport> most_frequent_cell(std::span<const Activity> records, Pred&& qualifies) {
  struct Tally {
    std::uint32_t cell;
    std::uint32_t qualifying;
    std::uint32_t all;
  };
  std::vector<Tally> tallies;
  for (const auto& a : records) {
    auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& t) { return t.cell == a.cell; });
    if (it == tallies.end()) {
      tallies.push_back({a.cell, 0, 0});
      it = tallies.end() - 1;
    }
    ++it->all;
    if (qualifies(a)) ++it->qualifying;
  }
  const Tally* best = nullptr;
  for (const auto& t : tallies) {
    if (t.qualifying == 0) continue;
    if (!best || t.qualifying > best->qualifying ||
        (t.qualifying == best->qualifying &&
         (t.all > best->all || (t.all == best->all && t.cell < best->cell))))
      best = &t;
  }
  if (!best) return std::nullopt;
  return CellSupport{best->cell, best->qualifying};
}

}  // namespace detail

/// Most frequent cell during workday working hours.
inline std::optional<CellSupport> infer_work(std::span<const Activity> records, const Calendar& calendar,
                                             const LocationParams& params = {}) {
  TzOffset tz = calendar.tz();
  return detail::most_frequent_cell(records, [&](const Activity& a) {
    return in_work_window(tz.second_of_day(a.timestamp), calendar.classify(tz.day_of(a.timestamp)), params);
  });
}

/// Most frequent cell at night on workdays and all day on holidays.
inline std::optional<CellSupport> infer_home(std::span<const Activity> records, const Calendar& calendar,
                                             const LocationParams& params = {}) {
  TzOffset tz = calendar.tz();
  return detail::most_frequent_cell(records, [&](const Activity& a) {
    return in_home_window(tz.second_of_day(a.timestamp), calendar.classify(tz.day_of(a.timestamp)), params);
  });
}

/// Home and work for every SIM of the table; result index == SIM index.
inline std::vector<LocationAssignment> infer_locations(const ActivityTable& table, const Calendar& calendar,
                                                       const LocationParams& params = {}, unsigned threads = 1) {
  std::vector<LocationAssignment> out(table.sim_count());
  parallel_chunks(table.sim_count(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      auto recs = table.of_sim(s);
      out[s] = {static_cast<std::uint32_t>(s), infer_home(recs, calendar, params), infer_work(recs, calendar, params)};
    }
  });
  return out;
}

/// Home cell when its support reaches `min_support`.
inline std::optional<std::uint32_t> accepted_home(const LocationAssignment& a, std::uint32_t min_support) {
  if (a.home && a.home->support >= min_support) return a.home->cell;
  return std::nullopt;
}

inline std::optional<std::uint32_t> accepted_work(const LocationAssignment& a, std::uint32_t min_support) {
  if (a.work && a.work->support >= min_support) return a.work->cell;
  return std::nullopt;
}

inline void write_locations_csv(const ActivityTable& table, std::span<const LocationAssignment> assignments,
                                const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "sim_id,home_cell,home_support,work_cell,work_support\n");
  for (const auto& a : assignments) {
    fmt::format_to(out, "{},{},{},{},{}\n", table.sim_ids[a.sim], a.home ? table.cell_ids[a.home->cell] : "",
                   a.home ? std::to_string(a.home->support) : "", a.work ? table.cell_ids[a.work->cell] : "",
                   a.work ? std::to_string(a.work->support) : "");
    w.flush_if_large();
  }
  w.close();
}

/// Reads locations.csv against `table`'s id space. SIMs missing from the file
/// get no home or work.
inline std::vector<LocationAssignment> read_locations_csv(const std::string& path, const ActivityTable& table) {
  std::vector<LocationAssignment> out(table.sim_count());
  for (std::size_t s = 0; s < out.size(); ++s) out[s].sim = static_cast<std::uint32_t>(s);
  read_csv(path, {"sim_id", "home_cell", "home_support", "work_cell", "work_support"},
           [&](const auto& f, std::size_t line) {
             auto sim = table.find_sim(f[0]);
             if (!sim) throw_validation(fmt::format("{}:{}: unknown sim_id '{}'", path, line, f[0]));
             auto parse_cell = [&](std::string_view cell, std::string_view support) -> std::optional<CellSupport> {
               if (cell.empty()) return std::nullopt;
               auto idx = table.find_cell(cell);
               if (!idx) throw_validation(fmt::format("{}:{}: unknown cell_id '{}'", path, line, cell));
               return CellSupport{*idx, require_number<std::uint32_t>(support, "support")};
             };
             out[*sim].home = parse_cell(f[1], f[2]);
             out[*sim].work = parse_cell(f[3], f[4]);
           });
  return out;
}

}  // namespace chrono_cdr
