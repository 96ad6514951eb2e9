#pragma once

// Per-SIM daily radius of gyration and normalized location entropy, plus the
// series utilities (min-max scaling, Pearson correlation) used to relate
// them to circadian indicators.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chrono_cdr/common.hpp"
#include "chrono_cdr/geo.hpp"
#include "chrono_cdr/ingest.hpp"

namespace chrono_cdr {

struct Visit {
  std::uint32_t location_id = 0;
  Point2 location;
  std::uint64_t count = 0;
};

/// Multiset of visited locations keyed by location id.
class VisitSet {
 public:
  void add(std::uint32_t id, Point2 location, std::uint64_t count = 1) {
    if (count == 0) return;
    auto it = std::lower_bound(visits_.begin(), visits_.end(), id,
                               [](const Visit& v, std::uint32_t key) { return v.location_id < key; });
    if (it != visits_.end() && it->location_id == id) {
      it->count += count;
    } else {
      visits_.insert(it, Visit{id, location, count});
    }
    total_ += count;
  }

  void merge(const VisitSet& other) {
    for (const auto& v : other.visits_) add(v.location_id, v.location, v.count);
  }

  std::span<const Visit> visits() const { return visits_; }
  std::uint64_t total() const { return total_; }
  std::size_t distinct() const { return visits_.size(); }
  bool empty() const { return total_ == 0; }

  Point2 center_of_mass() const {
    double x = 0, y = 0;
    for (const auto& v : visits_) {
      x += static_cast<double>(v.count) * v.location.x;
      y += static_cast<double>(v.count) * v.location.y;
    }
    auto n = static_cast<double>(total_);
    return {x / n, y / n};
  }

 private:
  std::vector<Visit> visits_;  // sorted by location_id
  std::uint64_t total_ = 0;
};

/// sqrt((1/N) Σ n_i |r_i − r_cm|²) in the units of the visit coordinates.
inline double radius_of_gyration(const VisitSet& v) {
  if (v.empty()) throw_validation("radius_of_gyration: empty visit set");
  Point2 cm = v.center_of_mass();
  double acc = 0;
  for (const auto& visit : v.visits()) {
    double dx = visit.location.x - cm.x, dy = visit.location.y - cm.y;
    acc += static_cast<double>(visit.count) * (dx * dx + dy * dy);
  }
  return std::sqrt(acc / static_cast<double>(v.total()));
}

/// −Σ p(l) ln p(l) / ln N with N the total number of visits. Zero when N == 1
/// or only one location was visited.
inline double location_entropy(const VisitSet& v) {
  if (v.empty()) throw_validation("location_entropy: empty visit set");
  if (v.total() == 1 || v.distinct() == 1) return 0.0;
  auto n = static_cast<double>(v.total());
  double h = 0;
  for (const auto& visit : v.visits()) {
    double p = static_cast<double>(visit.count) / n;
    h -= p * std::log(p);
  }
  return h / std::log(n);
}

struct MobilityDaily {
  std::uint32_t sim = 0;
  DayNumber day = 0;
  double radius_of_gyration_km = 0;
  double entropy = 0;
  std::uint64_t activity = 0;
};

struct MobilityResult {
  std::vector<MobilityDaily> rows;  // sorted by (sim, day)
  std::uint64_t skipped_unknown_cell = 0;
};

/// Planar cell centroids indexed like `table.cell_ids`; cells missing from
/// `cells` map to nullopt.
inline std::vector<std::optional<Point2>> cell_points(const ActivityTable& table, std::span<const CellInfo> cells,
                                                      const LocalProjection& projection) {
  std::vector<std::optional<Point2>> out(table.cell_ids.size());
  for (const auto& c : cells)
    if (auto idx = table.find_cell(c.cell_id)) out[*idx] = projection.forward(c.centroid);
  return out;
}

/// Per (SIM, local day) mobility metrics from that day's records located at
/// cell centroids. Records in cells without coordinates are skipped.
inline MobilityResult daily_mobility(const ActivityTable& table, std::span<const std::optional<Point2>> points,
                                     TzOffset tz, unsigned threads = 1) {
  const std::size_t n = table.sim_count();
  std::vector<std::vector<MobilityDaily>> per_sim(n);
  std::vector<std::uint64_t> skipped(chunk_count(n, threads), 0);
  parallel_chunks(n, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      auto recs = table.of_sim(s);
      std::size_t i = 0;
      while (i < recs.size()) {
        DayNumber day = tz.day_of(recs[i].timestamp);
        VisitSet visits;
        for (; i < recs.size() && tz.day_of(recs[i].timestamp) == day; ++i) {
          const auto& p = points[recs[i].cell];
          if (!p) {
            ++skipped[chunk];
            continue;
          }
          visits.add(recs[i].cell, *p);
        }
        if (visits.empty()) continue;
        per_sim[s].push_back({static_cast<std::uint32_t>(s), day, radius_of_gyration(visits),
                              location_entropy(visits), visits.total()});
      }
    }
  });
  MobilityResult out;
  for (auto& rows : per_sim) out.rows.insert(out.rows.end(), rows.begin(), rows.end());
  for (auto k : skipped) out.skipped_unknown_cell += k;
  return out;
}

enum class Aggregate { mean, median };

struct CityMobilityDay {
  DayNumber day = 0;
  double radius_of_gyration_km = 0;
  double entropy = 0;
  std::uint64_t sims = 0;
};

/// Per-date aggregate over SIMs (sequential reduction, so the result does not
/// depend on how the rows were produced).
inline std::vector<CityMobilityDay> city_daily(std::span<const MobilityDaily> rows, Aggregate how = Aggregate::mean) {
  std::map<DayNumber, std::pair<std::vector<double>, std::vector<double>>> by_day;
  for (const auto& r : rows) {
    auto& [g, e] = by_day[r.day];
    g.push_back(r.radius_of_gyration_km);
    e.push_back(r.entropy);
  }
  std::vector<CityMobilityDay> out;
  for (auto& [day, ge] : by_day) {
    auto& [g, e] = ge;
    CityMobilityDay d{day, 0, 0, g.size()};
    if (how == Aggregate::mean) {
      for (double v : g) d.radius_of_gyration_km += v;
      for (double v : e) d.entropy += v;
      d.radius_of_gyration_km /= static_cast<double>(g.size());
      d.entropy /= static_cast<double>(e.size());
    } else {
      d.radius_of_gyration_km = *lower_median(g);
      d.entropy = *lower_median(e);
    }
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Series utilities
// ---------------------------------------------------------------------------

using DailySeries = std::map<DayNumber, double>;

/// (x − min) / (max − min); a constant series maps to all zeros.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) throw_validation("minmax_normalize: empty series");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double min = *lo, range = *hi - *lo;
  std::vector<double> out(values.size(), 0.0);
  if (range > 0)
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / range;
  return out;
}

inline DailySeries minmax_normalize(const DailySeries& series) {
  std::vector<double> values;
  for (auto [d, v] : series) values.push_back(v);
  auto scaled = minmax_normalize(values);
  DailySeries out;
  std::size_t i = 0;
  for (auto [d, v] : series) out[d] = scaled[i++];
  return out;
}

/// Sample Pearson correlation. Throws when lengths differ, fewer than two
/// points are given, or either series is constant.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw_validation("pearson_r: series lengths differ");
  if (x.size() < 2) throw_validation("pearson_r: undefined correlation for fewer than two points");
  auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw_validation("pearson_r: undefined correlation for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Pearson correlation over the dates present in both series.
inline double pearson_r(const DailySeries& x, const DailySeries& y) {
  std::vector<double> a, b;
  for (auto [d, v] : x) {
    auto it = y.find(d);
    if (it == y.end()) continue;
    a.push_back(v);
    b.push_back(it->second);
  }
  return pearson_r(a, b);
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

inline void write_mobility_daily_csv(const ActivityTable& table, std::span<const MobilityDaily> rows,
                                     const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "sim_id,date,gyration_km,entropy,activity\n");
  for (const auto& r : rows) {
    fmt::format_to(out, "{},{},{:.6f},{:.6f},{}\n", table.sim_ids[r.sim], format_date(r.day),
                   r.radius_of_gyration_km, r.entropy, r.activity);
    w.flush_if_large();
  }
  w.close();
}

inline void write_city_mobility_csv(std::span<const CityMobilityDay> days, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "date,gyration_km,entropy,sims\n");
  for (const auto& d : days)
    fmt::format_to(out, "{},{:.9f},{:.9f},{}\n", format_date(d.day), d.radius_of_gyration_km, d.entropy, d.sims);
  w.close();
}

inline std::vector<CityMobilityDay> read_city_mobility_csv(const std::string& path) {
  std::vector<CityMobilityDay> out;
  read_csv(path, {"date", "gyration_km", "entropy", "sims"}, [&](const auto& f, std::size_t line) {
    auto day = parse_date(f[0]);
    if (!day) throw_validation(fmt::format("{}:{}: invalid date", path, line));
    out.push_back({*day, require_number<double>(f[1], "gyration_km"), require_number<double>(f[2], "entropy"),
                   require_number<std::uint64_t>(f[3], "sims")});
  });
  return out;
}

}  // namespace chrono_cdr
