#pragma once

// Circadian indicators from grouped activity: 10-minute binning under the
// cell / inhabitant / worker groupings, centred moving-average smoothing,
// mid-level threshold crossings (wake-up and bedtime), daily medians,
// working hours, the dominant period of the city series and weekday × hour
// heatmaps.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "chrono_cdr/common.hpp"
#include "chrono_cdr/geo.hpp"
#include "chrono_cdr/ingest.hpp"
#include "chrono_cdr/locations.hpp"

namespace chrono_cdr {

inline constexpr int kBinMinutes = 10;
inline constexpr int kBinsPerDay = kMinutesPerDay / kBinMinutes;  // 144

/// Bin index of a local time: floor(second_of_day / 600).
inline int bin_of(Epoch t, TzOffset tz) { return tz.second_of_day(t) / (kBinMinutes * 60); }

/// Minutes since local midnight at the middle of bin `i` (bins may run past
/// 143 into the following day).
constexpr double bin_midpoint(int i) { return kBinMinutes * i + kBinMinutes / 2.0; }

/// Offset of smoothed sample i from 10·i minutes: the centre of its window.
/// An even window spans bins [i − w/2, i + w/2 − 1], centred on the start of
/// bin i; an odd one is centred on its middle.
constexpr double smoothed_sample_offset(int window) { return window % 2 ? kBinMinutes / 2.0 : 0.0; }

// ---------------------------------------------------------------------------
// Grouping and binning
// ---------------------------------------------------------------------------

enum class GroupingMode {
  cell_based,        // records occurring in the area, whoever made them
  inhabitant_based,  // all records of SIMs whose home is in the area
  worker_based,      // all records of SIMs whose work is in the area
  workplace_based,   // records of SIMs whose work is in the area, made inside it
};

enum class GroupLevel { cell, site, all };

inline std::string_view to_string(GroupingMode m) {
  switch (m) {
    case GroupingMode::cell_based: return "cell";
    case GroupingMode::inhabitant_based: return "inhabitant";
    case GroupingMode::worker_based: return "worker";
    case GroupingMode::workplace_based: return "workplace";
  }
  return "?";
}

inline std::string_view to_string(GroupLevel l) {
  switch (l) {
    case GroupLevel::cell: return "cell";
    case GroupLevel::site: return "site";
    case GroupLevel::all: return "all";
  }
  return "?";
}

/// Maps each table cell to a group at a given level.
struct GroupIndex {
  GroupLevel level = GroupLevel::all;
  std::vector<std::string> group_ids;
  std::vector<std::optional<std::uint32_t>> cell_group;  // indexed like ActivityTable::cell_ids
};

inline GroupIndex make_group_index(const ActivityTable& table, GroupLevel level, const Tessellation* tess = nullptr) {
  GroupIndex gi;
  gi.level = level;
  gi.cell_group.resize(table.cell_ids.size());
  switch (level) {
    case GroupLevel::all:
      gi.group_ids = {"all"};
      std::fill(gi.cell_group.begin(), gi.cell_group.end(), 0u);
      break;
    case GroupLevel::cell:
      gi.group_ids = table.cell_ids;
      for (std::size_t c = 0; c < gi.cell_group.size(); ++c) gi.cell_group[c] = static_cast<std::uint32_t>(c);
      break;
    case GroupLevel::site:
      if (!tess) throw_validation("site-level grouping requires a tessellation");
      for (const auto& s : tess->sites()) gi.group_ids.push_back(s.site_id);
      for (std::size_t c = 0; c < gi.cell_group.size(); ++c)
        if (auto s = tess->site_of_cell(table.cell_ids[c])) gi.cell_group[c] = static_cast<std::uint32_t>(*s);
      break;
  }
  return gi;
}

/// Dense 10-minute counts laid out as [group][day][bin].
struct BinnedActivity {
  GroupingMode mode = GroupingMode::cell_based;
  GroupLevel level = GroupLevel::all;
  std::vector<std::string> group_ids;
  DayNumber first_day = 0;
  int days = 0;
  std::vector<std::uint32_t> counts;
  std::uint64_t skipped_sims = 0;     // no accepted home/work in inhabitant/worker modes
  std::uint64_t skipped_records = 0;  // records left out for that reason or an unmapped cell

  std::size_t groups() const { return group_ids.size(); }
  std::span<const std::uint32_t> group_bins(std::size_t g) const {
    return std::span<const std::uint32_t>(counts).subspan(g * static_cast<std::size_t>(days) * kBinsPerDay,
                                                          static_cast<std::size_t>(days) * kBinsPerDay);
  }
  std::span<const std::uint32_t> day_bins(std::size_t g, int day_offset) const {
    return group_bins(g).subspan(static_cast<std::size_t>(day_offset) * kBinsPerDay, kBinsPerDay);
  }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
};

/// Inclusive local-day range spanned by the table's records.
inline std::optional<std::pair<DayNumber, DayNumber>> observed_days(const ActivityTable& table, TzOffset tz) {
  if (table.records.empty()) return std::nullopt;
  DayNumber lo = tz.day_of(table.records.front().timestamp), hi = lo;
  for (const auto& a : table.records) {
    DayNumber d = tz.day_of(a.timestamp);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return std::pair{lo, hi};
}

struct BinningOptions {
  GroupingMode mode = GroupingMode::cell_based;
  TzOffset tz{120};
  DayNumber first_day = 0;
  DayNumber last_day = 0;
  std::uint32_t min_support = 5;  // home/work support needed in the SIM-based modes
  bool commuters_only = true;     // worker modes: drop SIMs whose work cell is their home cell
};

/// Counts records into [group][day][bin]. `assignments` (indexed by SIM) is
/// required for every mode except cell_based. Records outside
/// [first_day, last_day] are ignored.
inline BinnedActivity bin_activity(const ActivityTable& table, const GroupIndex& groups,
                                   std::span<const LocationAssignment> assignments, const BinningOptions& opt,
                                   unsigned threads = 1) {
  if (opt.last_day < opt.first_day) throw_validation("bin_activity: empty day range");
  if (opt.mode != GroupingMode::cell_based && assignments.size() != table.sim_count())
    throw_validation("bin_activity: SIM-based grouping requires a location assignment per SIM");
  BinnedActivity out;
  out.mode = opt.mode;
  out.level = groups.level;
  out.group_ids = groups.group_ids;
  out.first_day = opt.first_day;
  out.days = opt.last_day - opt.first_day + 1;
  const std::size_t stride = static_cast<std::size_t>(out.days) * kBinsPerDay;
  const std::size_t cells = groups.group_ids.size() * stride;

  const std::size_t n = table.sim_count();
  const std::size_t chunks = chunk_count(n, threads);
  std::vector<std::vector<std::uint32_t>> partial(chunks);
  std::vector<std::uint64_t> skipped_sims(chunks, 0), skipped_records(chunks, 0);
  parallel_chunks(n, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    auto& acc = partial[chunk];
    acc.assign(cells, 0);
    for (std::size_t s = begin; s < end; ++s) {
      auto recs = table.of_sim(s);
      std::optional<std::uint32_t> sim_group;
      if (opt.mode != GroupingMode::cell_based) {
        const auto& a = assignments[s];
        auto cell = opt.mode == GroupingMode::inhabitant_based ? accepted_home(a, opt.min_support)
                                                               : accepted_work(a, opt.min_support);
        if (cell) sim_group = groups.cell_group[*cell];
        if (sim_group && opt.commuters_only && opt.mode != GroupingMode::inhabitant_based)
          if (auto home = accepted_home(a, opt.min_support); home && *home == *cell) sim_group.reset();
        if (!sim_group) {
          ++skipped_sims[chunk];
          skipped_records[chunk] += recs.size();
          continue;
        }
      }
      for (const auto& rec : recs) {
        std::optional<std::uint32_t> g;
        switch (opt.mode) {
          case GroupingMode::cell_based: g = groups.cell_group[rec.cell]; break;
          case GroupingMode::inhabitant_based:
          case GroupingMode::worker_based: g = sim_group; break;
          case GroupingMode::workplace_based:
            if (groups.cell_group[rec.cell] == sim_group) g = sim_group;
            break;
        }
        if (!g) {
          ++skipped_records[chunk];
          continue;
        }
        DayNumber day = opt.tz.day_of(rec.timestamp);
        if (day < opt.first_day || day > opt.last_day) continue;
        std::size_t idx = *g * stride + static_cast<std::size_t>(day - opt.first_day) * kBinsPerDay +
                          static_cast<std::size_t>(bin_of(rec.timestamp, opt.tz));
        ++acc[idx];
      }
    }
  });
  out.counts = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c)
    for (std::size_t i = 0; i < cells; ++i) out.counts[i] += partial[c][i];
  for (std::size_t c = 0; c < chunks; ++c) {
    out.skipped_sims += skipped_sims[c];
    out.skipped_records += skipped_records[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------

/// Centred moving average. For an even window w the span is
/// [i − w/2, i + w/2 − 1] (12 bins: six before, five after). Near either end
/// of the sequence the window shrinks symmetrically to [i − h, i + h].
inline std::vector<double> smooth_series(std::span<const double> raw, int window = 12) {
  if (window < 1) throw_validation("smooth_series: window must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(raw.size());
  const std::ptrdiff_t left = window / 2;
  const std::ptrdiff_t right = window - 1 - left;
  std::vector<double> prefix(raw.size() + 1, 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + raw[i];
  std::vector<double> out(raw.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::ptrdiff_t lo = i - left, hi = i + right;
    if (lo < 0 || hi > n - 1) {
      std::ptrdiff_t h = std::min({i, n - 1 - i, right});
      lo = i - h;
      hi = i + h;
    }
    // Summing directly keeps the result independent of the prefix's
    // accumulated rounding for long series.
    double acc = 0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) acc += raw[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

/// Smooths one day using the previous and next days (when available) as
/// context and returns the day's 144 values.
inline std::vector<double> smooth_day(std::span<const double> previous, std::span<const double> day,
                                      std::span<const double> next, int window = 12) {
  std::vector<double> joined(previous.begin(), previous.end());
  joined.insert(joined.end(), day.begin(), day.end());
  joined.insert(joined.end(), next.begin(), next.end());
  auto smoothed = smooth_series(joined, window);
  auto first = smoothed.begin() + static_cast<std::ptrdiff_t>(previous.size());
  return {first, first + static_cast<std::ptrdiff_t>(day.size())};
}

/// Smoothed series of one group over all its days.
inline std::vector<double> smooth_group(const BinnedActivity& binned, std::size_t g, int window = 12) {
  auto bins = binned.group_bins(g);
  std::vector<double> raw(bins.begin(), bins.end());
  return smooth_series(raw, window);
}

// ---------------------------------------------------------------------------
// Edge detection
// ---------------------------------------------------------------------------

/// Half-open window in minutes since local midnight (may exceed 1440).
struct SearchWindow {
  double begin = 0;
  double end = 0;
  bool contains(double t) const { return t >= begin && t < end; }
};

struct EdgeParams {
  double half_fraction = 0.5;
  int window = 12;
  SearchWindow rise{180, 720};    // wake-up search, [03:00, 12:00)
  SearchWindow fall{1020, 1620};  // bedtime search, [17:00, 03:00 next day)
  double noise_floor_abs = 5.0;   // counts per bin
  double noise_floor_rel = 0.05;  // share of the median daily peak
};

struct EdgeThreshold {
  double a_min = 0;
  double a_max = 0;
  double m = 0;
};

/// a_min / a_max of the smoothed values and m = (a_max − a_min)·f + a_min.
inline EdgeThreshold edge_threshold(std::span<const double> smoothed, double half_fraction = 0.5) {
  if (smoothed.empty()) throw_validation("edge_threshold: empty series");
  auto [lo, hi] = std::minmax_element(smoothed.begin(), smoothed.end());
  return {*lo, *hi, (*hi - *lo) * half_fraction + *lo};
}

enum class EdgeStatus : std::uint8_t { ok, flat, no_rise, no_fall, none };

inline std::string_view to_string(EdgeStatus s) {
  switch (s) {
    case EdgeStatus::ok: return "ok";
    case EdgeStatus::flat: return "flat";
    case EdgeStatus::no_rise: return "no_rise";
    case EdgeStatus::no_fall: return "no_fall";
    case EdgeStatus::none: return "none";
  }
  return "?";
}

struct DailyEdges {
  std::optional<double> rise_min;  // wake-up / work start
  std::optional<double> fall_min;  // bedtime / work end; may exceed 1440
  EdgeStatus status = EdgeStatus::none;
  double amplitude = 0;  // a_max − a_min over the day

  std::optional<double> length_min() const {
    if (rise_min && fall_min) return *fall_min - *rise_min;
    return std::nullopt;
  }
};

namespace detail {

/// First upward crossing of m with an interpolated time inside `w`. Sample j
/// sits at 10·j + offset minutes.
inline std::optional<double> first_rise(std::span<const double> s, double m, SearchWindow w, double offset) {
  for (std::size_t j = 0; j + 1 < s.size(); ++j) {
    if (s[j] < m && s[j + 1] >= m) {
      double t = kBinMinutes * static_cast<double>(j) + offset + kBinMinutes * (m - s[j]) / (s[j + 1] - s[j]);
      if (t >= w.end) break;
      if (w.contains(t)) return t;
    }
  }
  return std::nullopt;
}

/// Last downward crossing of m with an interpolated time inside `w`.
inline std::optional<double> last_fall(std::span<const double> s, double m, SearchWindow w, double offset) {
  for (std::size_t j = s.size() - 1; j-- > 0;) {
    if (s[j] >= m && s[j + 1] < m) {
      double t = kBinMinutes * static_cast<double>(j) + offset + kBinMinutes * (s[j] - m) / (s[j] - s[j + 1]);
      if (t < w.begin) break;
      if (w.contains(t)) return t;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Rising and falling mid-level crossings of one smoothed day. The rise uses
/// the threshold of the local day; the fall uses the day extended into the
/// early bins of `next_day` when the fall window runs past midnight. Days
/// whose amplitude is below `noise_floor` are flat. Sample j is taken to sit
/// at 10·j + `sample_offset` minutes (bin midpoints by default).
inline DailyEdges detect_daily_edges(std::span<const double> day, std::span<const double> next_day,
                                     const EdgeParams& params, double noise_floor = 0.0,
                                     double sample_offset = kBinMinutes / 2.0) {
  if (day.size() != static_cast<std::size_t>(kBinsPerDay))
    throw_validation("detect_daily_edges: a day has 144 bins");
  DailyEdges out;
  auto rise_th = edge_threshold(day, params.half_fraction);
  out.amplitude = rise_th.a_max - rise_th.a_min;
  if (out.amplitude <= 0 || out.amplitude < noise_floor) {
    out.status = EdgeStatus::flat;
    return out;
  }
  std::vector<double> extended(day.begin(), day.end());
  if (params.fall.end > kMinutesPerDay && !next_day.empty()) {
    auto extra = static_cast<std::size_t>(std::ceil((params.fall.end - kMinutesPerDay) / kBinMinutes));
    extra = std::min(extra, next_day.size());
    extended.insert(extended.end(), next_day.begin(), next_day.begin() + static_cast<std::ptrdiff_t>(extra));
  }
  auto fall_th = edge_threshold(extended, params.half_fraction);
  out.rise_min = detail::first_rise(day, rise_th.m, params.rise, sample_offset);
  out.fall_min = detail::last_fall(extended, fall_th.m, params.fall, sample_offset);
  if (out.rise_min && out.fall_min && *out.fall_min <= *out.rise_min) out.fall_min.reset();
  out.status = out.rise_min ? (out.fall_min ? EdgeStatus::ok : EdgeStatus::no_fall)
                            : (out.fall_min ? EdgeStatus::no_rise : EdgeStatus::none);
  return out;
}

struct GroupDayEdges {
  std::uint32_t group = 0;
  DayNumber day = 0;
  DailyEdges edges;
};

/// max(noise_floor_abs, noise_floor_rel × median daily peak) of a smoothed
/// multi-day series.
inline double group_noise_floor(std::span<const double> smoothed, int days, const EdgeParams& params) {
  std::vector<double> peaks;
  for (int d = 0; d < days; ++d) {
    auto day = smoothed.subspan(static_cast<std::size_t>(d) * kBinsPerDay, kBinsPerDay);
    peaks.push_back(*std::max_element(day.begin(), day.end()));
  }
  double median_peak = lower_median(peaks).value_or(0.0);
  return std::max(params.noise_floor_abs, params.noise_floor_rel * median_peak);
}

/// Edges of every (group, day). Parallel over groups; output sorted by
/// (group, day).
inline std::vector<GroupDayEdges> detect_all_edges(const BinnedActivity& binned, const EdgeParams& params,
                                                   unsigned threads = 1) {
  std::vector<std::vector<GroupDayEdges>> per_group(binned.groups());
  parallel_chunks(binned.groups(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t g = begin; g < end; ++g) {
      auto smoothed = smooth_group(binned, g, params.window);
      std::span<const double> all(smoothed);
      double floor = group_noise_floor(all, binned.days, params);
      for (int d = 0; d < binned.days; ++d) {
        auto day = all.subspan(static_cast<std::size_t>(d) * kBinsPerDay, kBinsPerDay);
        std::span<const double> next;
        if (d + 1 < binned.days) next = all.subspan(static_cast<std::size_t>(d + 1) * kBinsPerDay, kBinsPerDay);
        per_group[g].push_back({static_cast<std::uint32_t>(g), binned.first_day + d,
                                detect_daily_edges(day, next, params, floor, smoothed_sample_offset(params.window))});
      }
    }
  });
  std::vector<GroupDayEdges> out;
  for (auto& v : per_group) out.insert(out.end(), v.begin(), v.end());
  return out;
}

struct EdgeSummary {
  std::optional<double> rise_min;
  std::optional<double> fall_min;
  std::optional<double> length_min;
  std::size_t rise_days = 0;
  std::size_t fall_days = 0;
  std::size_t length_days = 0;
};

/// Lower medians over the days of `day_class` (all days when nullopt).
/// Day length is the median of per-day differences.
inline EdgeSummary median_edges(std::span<const GroupDayEdges> edges, const Calendar& calendar,
                                std::optional<DayClass> day_class) {
  std::vector<double> rise, fall, length;
  for (const auto& e : edges) {
    if (day_class && calendar.classify(e.day) != *day_class) continue;
    if (e.edges.rise_min) rise.push_back(*e.edges.rise_min);
    if (e.edges.fall_min) fall.push_back(*e.edges.fall_min);
    if (auto l = e.edges.length_min()) length.push_back(*l);
  }
  return {lower_median(rise), lower_median(fall), lower_median(length), rise.size(), fall.size(), length.size()};
}

/// Splits sorted per-(group, day) edges into per-group spans.
inline std::vector<std::span<const GroupDayEdges>> edges_by_group(std::span<const GroupDayEdges> edges,
                                                                  std::size_t groups) {
  std::vector<std::span<const GroupDayEdges>> out(groups);
  std::size_t i = 0;
  while (i < edges.size()) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].group == edges[i].group) ++j;
    out[edges[i].group] = edges.subspan(i, j - i);
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Periodicity
// ---------------------------------------------------------------------------

struct Periodogram {
  std::vector<double> period_hours;  // k = 1 .. n/2
  std::vector<double> magnitude;
  double sample_minutes = kBinMinutes;
  std::size_t length = 0;
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// DFT magnitude spectrum of the mean-removed series, excluding DC.
inline Periodogram periodogram(std::span<const double> series, double sample_minutes = kBinMinutes) {
  const std::size_t n = series.size();
  if (n < 4) throw_validation("periodogram: at least four samples are needed");
  double mean = 0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> in(n);
  for (std::size_t i = 0; i < n; ++i) in[i] = series[i] - mean;
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  Periodogram p;
  p.sample_minutes = sample_minutes;
  p.length = n;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    p.period_hours.push_back(static_cast<double>(n) * sample_minutes / 60.0 / static_cast<double>(k));
    p.magnitude.push_back(std::abs(out[k]));
  }
  return p;
}

/// Period (hours) of the largest non-DC spectral peak; needs at least three
/// days of samples.
inline double dominant_period(std::span<const double> series, double sample_minutes = kBinMinutes) {
  double minutes = static_cast<double>(series.size()) * sample_minutes;
  if (minutes < 3.0 * kMinutesPerDay) throw_validation("dominant_period: at least three days of data are needed");
  auto p = periodogram(series, sample_minutes);
  auto best = std::max_element(p.magnitude.begin(), p.magnitude.end());
  return p.period_hours[static_cast<std::size_t>(best - p.magnitude.begin())];
}

/// Per-bin sum over every group.
inline std::vector<double> city_series(const BinnedActivity& binned) {
  std::vector<double> out(static_cast<std::size_t>(binned.days) * kBinsPerDay, 0.0);
  for (std::size_t g = 0; g < binned.groups(); ++g) {
    auto bins = binned.group_bins(g);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bins[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weekday × hour heatmap
// ---------------------------------------------------------------------------

/// counts[iso_weekday][local_hour], Monday == 0.
using Heatmap = std::array<std::array<std::uint64_t, 24>, 7>;

template <class Filter>
Heatmap weekday_hour_heatmap(const ActivityTable& table, TzOffset tz, Filter&& keep) {
  Heatmap h{};
  for (const auto& a : table.records) {
    if (!keep(a)) continue;
    ++h[static_cast<std::size_t>(iso_weekday(tz.day_of(a.timestamp)))]
       [static_cast<std::size_t>(tz.second_of_day(a.timestamp) / 3600)];
  }
  return h;
}

inline Heatmap weekday_hour_heatmap(const ActivityTable& table, TzOffset tz) {
  return weekday_hour_heatmap(table, tz, [](const Activity&) { return true; });
}

// ---------------------------------------------------------------------------
// Working hours
// ---------------------------------------------------------------------------

struct WorkParams {
  EdgeParams edges{0.5, 12, {240, 840}, {840, 1440}, 5.0, 0.05};  // start [04:00,14:00), end [14:00,24:00)
  double min_daily_volume = 200;  // mean workplace records per workday
};

struct WorkingHoursDay {
  DayNumber day = 0;
  DailyEdges edges;
  std::uint64_t volume = 0;
};

struct WorkingHours {
  std::string site_id;
  std::optional<double> start_min;
  std::optional<double> end_min;
  std::optional<double> length_min;
  double volume = 0;  // mean records per workday
  bool low_confidence = true;
  std::vector<WorkingHoursDay> days;
};

/// Working hours of one group of a workplace-based binning: per-workday rise
/// and fall of the workers' on-site activity, summarized by lower medians.
inline WorkingHours working_hours(const BinnedActivity& workplace, std::size_t group, const Calendar& calendar,
                                  const WorkParams& params = {}) {
  WorkingHours out;
  out.site_id = workplace.group_ids[group];
  auto smoothed = smooth_group(workplace, group, params.edges.window);
  std::span<const double> all(smoothed);
  double floor = group_noise_floor(all, workplace.days, params.edges);
  std::vector<double> starts, ends, lengths;
  std::uint64_t total = 0;
  std::size_t workdays = 0;
  for (int d = 0; d < workplace.days; ++d) {
    DayNumber day = workplace.first_day + d;
    if (calendar.classify(day) != DayClass::workday) continue;
    ++workdays;
    auto raw = workplace.day_bins(group, d);
    std::uint64_t volume = 0;
    for (auto c : raw) volume += c;
    total += volume;
    auto day_span = all.subspan(static_cast<std::size_t>(d) * kBinsPerDay, kBinsPerDay);
    auto edges = detect_daily_edges(day_span, {}, params.edges, floor, smoothed_sample_offset(params.edges.window));
    if (edges.rise_min) starts.push_back(*edges.rise_min);
    if (edges.fall_min) ends.push_back(*edges.fall_min);
    if (auto l = edges.length_min()) lengths.push_back(*l);
    out.days.push_back({day, edges, volume});
  }
  out.start_min = lower_median(starts);
  out.end_min = lower_median(ends);
  out.length_min = lower_median(lengths);
  out.volume = workdays ? static_cast<double>(total) / static_cast<double>(workdays) : 0.0;
  out.low_confidence = out.volume < params.min_daily_volume || !out.length_min;
  return out;
}

/// Most frequent start and end times (rounded to `bin_minutes`) and the
/// site counts of each (start, end) pair among them.
struct StartEndPairing {
  std::vector<int> start_bins;  // minutes, most frequent first
  std::vector<std::uint64_t> start_counts;
  std::vector<int> end_bins;
  std::vector<std::uint64_t> end_counts;
  std::vector<std::vector<std::uint64_t>> pair_counts;  // [start][end]
};

inline int round_to_bin(double minutes, int bin_minutes) {
  return static_cast<int>(std::floor(minutes / bin_minutes + 0.5)) * bin_minutes;
}

inline StartEndPairing start_end_pairing(std::span<const WorkingHours> sites, std::size_t k = 5,
                                         int bin_minutes = 30) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& s : sites)
    if (s.start_min && s.end_min)
      pairs.emplace_back(round_to_bin(*s.start_min, bin_minutes), round_to_bin(*s.end_min, bin_minutes));
  auto top = [&](auto pick, std::vector<int>& bins, std::vector<std::uint64_t>& counts) {
    std::map<int, std::uint64_t> freq;
    for (const auto& p : pairs) ++freq[pick(p)];
    std::vector<std::pair<int, std::uint64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](auto a, auto b) { return a.second > b.second; });
    if (ranked.size() > k) ranked.resize(k);
    for (auto [b, c] : ranked) {
      bins.push_back(b);
      counts.push_back(c);
    }
  };
  StartEndPairing out;
  top([](const auto& p) { return p.first; }, out.start_bins, out.start_counts);
  top([](const auto& p) { return p.second; }, out.end_bins, out.end_counts);
  out.pair_counts.assign(out.start_bins.size(), std::vector<std::uint64_t>(out.end_bins.size(), 0));
  for (const auto& [s, e] : pairs) {
    auto si = std::find(out.start_bins.begin(), out.start_bins.end(), s);
    auto ei = std::find(out.end_bins.begin(), out.end_bins.end(), e);
    if (si == out.start_bins.end() || ei == out.end_bins.end()) continue;
    ++out.pair_counts[static_cast<std::size_t>(si - out.start_bins.begin())]
                     [static_cast<std::size_t>(ei - out.end_bins.begin())];
  }
  return out;
}

}  // namespace chrono_cdr
