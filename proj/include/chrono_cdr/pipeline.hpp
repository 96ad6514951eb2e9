#pragma once

// Subcommand orchestration over a run directory. Each stage reads the
// artifacts of earlier stages and writes its own; all parameters come from a
// flat run configuration (see docs/config.md).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "chrono_cdr/circadian.hpp"
#include "chrono_cdr/common.hpp"
#include "chrono_cdr/geo.hpp"
#include "chrono_cdr/ingest.hpp"
#include "chrono_cdr/locations.hpp"
#include "chrono_cdr/mobility.hpp"
#include "chrono_cdr/ses.hpp"
#include "chrono_cdr/synthgen.hpp"

namespace chrono_cdr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

inline nlohmann::json default_run_config() {
  using nlohmann::json;
  return {
      {"run_dir", "run"},
      {"threads", 0},
      {"input.cdr", ""},
      {"input.cells", ""},
      {"input.calendar", ""},
      {"input.estate_ads", ""},
      {"input.device_catalog", ""},
      {"ingest.tz_offset_minutes", 120},
      {"ingest.column.sim_id", "sim_id"},
      {"ingest.column.timestamp", "timestamp"},
      {"ingest.column.cell_id", "cell_id"},
      {"ingest.column.customer_type", "customer_type"},
      {"ingest.column.subscription_type", "subscription_type"},
      {"ingest.column.age", "age"},
      {"ingest.column.gender", "gender"},
      {"ingest.column.tac", "tac"},
      {"ingest.min_records", 0},
      {"ingest.min_active_days", 0},
      {"ingest.histogram_edges", json::array({10, 100, 1000})},
      {"geo.merge_tolerance_m", 0.0},
      {"geo.bbox_pad_km", 10.0},
      {"geo.bbox", nullptr},
      {"locations.work_window_min", json::array({540, 960})},
      {"locations.night_window_min", json::array({1320, 360})},
      {"locations.min_support", 5},
      {"mobility.aggregate", "mean"},
      {"circadian.window", 12},
      {"circadian.half_fraction", 0.5},
      {"circadian.wake_search_min", json::array({180, 720})},
      {"circadian.bed_search_min", json::array({1020, 1620})},
      {"circadian.noise_floor_abs", 5.0},
      {"circadian.noise_floor_rel", 0.05},
      {"circadian.modes", json::array({"cell", "inhabitant", "worker"})},
      {"circadian.level", "site"},
      {"circadian.min_daily_volume", 200.0},
      {"circadian.commuters_only", true},
      {"working_hours.mode", "workplace"},
      {"working_hours.start_search_min", json::array({240, 840})},
      {"working_hours.end_search_min", json::array({840, 1440})},
      {"working_hours.min_daily_volume", 200.0},
      {"working_hours.pairing_k", 5},
      {"working_hours.pairing_bin_min", 30},
      {"ses.dataset_month", ""},
      {"ses.property_edges_huf", json::array({300000, 500000, 700000, 900000, 1300000})},
      {"ses.phone_price_edges_eur", json::array({0, 150, 300, 450, 600, 750})},
      {"ses.phone_age_edges_years", json::array({0, 1, 2, 3, 4, 5})},
      {"correlate.mode", "inhabitant"},
      {"correlate.group", "sites"},
  };
}

class RunConfig {
 public:
  RunConfig() : values_(default_run_config()) {}

  /// Overlays a flat user object on the defaults. Keys under "synth." are
  /// scenario parameters; any other unknown key is rejected.
  static RunConfig from_json(const nlohmann::json& user) {
    if (!user.is_object()) throw_validation("run config must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : user.items()) {
      if (key.rfind("synth.", 0) == 0) {
        c.synth_[key] = value;
        continue;
      }
      auto it = c.values_.find(key);
      if (it == c.values_.end()) throw_validation("run config: unknown key '" + key + "'");
      if (!compatible(*it, value)) throw_validation("run config: wrong type for '" + key + "'");
      *it = value;
    }
    return c;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open config " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw_validation(path + ": " + e.what());
    }
  }

  template <class T>
  T get(const std::string& key) const {
    try {
      return values_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw_validation("run config '" + key + "': " + e.what());
    }
  }

  const nlohmann::json& raw(const std::string& key) const { return values_.at(key); }

  fs::path run_dir() const { return fs::path(get<std::string>("run_dir")); }
  fs::path artifact(const std::string& name) const { return run_dir() / name; }
  /// Input path from `key`, or the file of that name in the run directory.
  fs::path input(const std::string& key, const std::string& default_name) const {
    auto p = get<std::string>(key);
    return p.empty() ? artifact(default_name) : fs::path(p);
  }

  /// Scenario parameters with "synth." stripped and dotted keys nested.
  nlohmann::json scenario() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [key, value] : synth_.items()) {
      auto rest = key.substr(6);
      nlohmann::json* node = &out;
      std::size_t pos;
      while ((pos = rest.find('.')) != std::string::npos) {
        node = &(*node)[rest.substr(0, pos)];
        rest = rest.substr(pos + 1);
      }
      (*node)[rest] = value;
    }
    return out;
  }

  nlohmann::json effective() const {
    nlohmann::json out = values_;
    for (const auto& [k, v] : synth_.items()) out[k] = v;
    return out;
  }

 private:
  static bool compatible(const nlohmann::json& def, const nlohmann::json& v) {
    if (def.is_null()) return v.is_null() || v.is_array();
    if (def.is_number()) return v.is_number();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array();
    return def.type() == v.type();
  }

  nlohmann::json values_;
  nlohmann::json synth_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

inline void log_line(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

/// Throws a missing-prerequisite error naming `producer` when `path` is absent.
inline void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw Error(ErrorKind::missing_prerequisite,
                fmt::format("missing {}; run `chrono-cdr {}` first", path.string(), producer), producer);
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw_validation(path.string() + ": " + e.what());
  }
}

inline std::pair<double, double> window_param(const RunConfig& c, const std::string& key, double lo, double hi) {
  auto v = c.get<std::vector<double>>(key);
  if (v.size() != 2) throw_validation("run config '" + key + "': expected [begin, end]");
  if (v[0] < lo || v[1] > hi) throw_validation(fmt::format("run config '{}': values must lie in [{}, {}]", key, lo, hi));
  return {v[0], v[1]};
}

inline SearchWindow search_window(const RunConfig& c, const std::string& key, double hi) {
  auto [a, b] = window_param(c, key, 0, hi);
  if (!(b > a)) throw_validation("run config '" + key + "': begin must precede end");
  return {a, b};
}

inline TzOffset config_tz(const RunConfig& c) {
  int m = c.get<int>("ingest.tz_offset_minutes");
  if (m < -14 * 60 || m > 14 * 60) throw_validation("ingest.tz_offset_minutes out of range");
  return TzOffset{m};
}

inline std::uint32_t config_min_support(const RunConfig& c) {
  int v = c.get<int>("locations.min_support");
  if (v < 0) throw_validation("locations.min_support must be >= 0");
  return static_cast<std::uint32_t>(v);
}

inline Calendar load_calendar(const RunConfig& c) {
  auto path = c.input("input.calendar", "calendar.json");
  require_artifact(path, "synth");
  return read_calendar_json(path.string());
}

/// Calendar restricted to the data's days when it carries no range itself.
inline Calendar ranged_calendar(const Calendar& cal, const ActivityTable& table) {
  if (cal.first_day() && cal.last_day()) return cal;
  auto days = observed_days(table, cal.tz());
  if (!days) throw_validation("activity table is empty");
  return cal.with_range(cal.first_day().value_or(days->first), cal.last_day().value_or(days->second));
}

inline ActivityTable load_activity(const RunConfig& c, unsigned threads) {
  auto path = c.artifact("activity.csv");
  require_artifact(path, "ingest");
  return read_activity_csv(path.string(), threads);
}

inline Tessellation load_tessellation(const RunConfig& c) {
  auto path = c.artifact("sites.geojson");
  require_artifact(path, "tessellate");
  return tessellation_from_geojson(read_json_file(path));
}

inline std::vector<LocationAssignment> load_locations(const RunConfig& c, const ActivityTable& table) {
  auto path = c.artifact("locations.csv");
  require_artifact(path, "locate");
  return read_locations_csv(path.string(), table);
}

inline GroupingMode parse_mode(const std::string& s) {
  if (s == "cell") return GroupingMode::cell_based;
  if (s == "inhabitant") return GroupingMode::inhabitant_based;
  if (s == "worker") return GroupingMode::worker_based;
  if (s == "workplace") return GroupingMode::workplace_based;
  throw_validation("unknown grouping mode '" + s + "'");
}

inline GroupLevel parse_level(const std::string& s) {
  if (s == "cell") return GroupLevel::cell;
  if (s == "site") return GroupLevel::site;
  if (s == "all") return GroupLevel::all;
  throw_validation("unknown grouping level '" + s + "'");
}

inline EdgeParams edge_params(const RunConfig& c) {
  EdgeParams p;
  p.window = c.get<int>("circadian.window");
  p.half_fraction = c.get<double>("circadian.half_fraction");
  p.rise = search_window(c, "circadian.wake_search_min", 2 * kMinutesPerDay);
  p.fall = search_window(c, "circadian.bed_search_min", 2 * kMinutesPerDay);
  p.noise_floor_abs = c.get<double>("circadian.noise_floor_abs");
  p.noise_floor_rel = c.get<double>("circadian.noise_floor_rel");
  if (p.window < 1) throw_validation("circadian.window must be >= 1");
  if (!(p.half_fraction > 0 && p.half_fraction < 1)) throw_validation("circadian.half_fraction must lie in (0, 1)");
  if (p.rise.end > p.fall.begin) throw_validation("wake and bed search windows overlap");
  if (p.noise_floor_abs < 0 || p.noise_floor_rel < 0) throw_validation("noise floors must be >= 0");
  return p;
}

inline std::string opt_str(const std::optional<double>& v, int precision = 3) {
  return v ? fmt::format("{:.{}f}", *v, precision) : std::string();
}

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

/// Reads a CSV with a header into rows of named string fields.
inline std::vector<std::map<std::string, std::string>> read_table_csv(const fs::path& path,
                                                                      std::initializer_list<const char*> columns) {
  std::vector<std::map<std::string, std::string>> rows;
  std::vector<std::string> names(columns.begin(), columns.end());
  std::vector<std::string_view> required(columns.begin(), columns.end());
  read_csv(path.string(), required, [&](const auto& f, std::size_t) {
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < names.size(); ++i) row[names[i]] = std::string(f[i]);
    rows.push_back(std::move(row));
  });
  return rows;
}

inline std::optional<double> opt_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return require_number<double>(s, "number");
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline void run_synth(const RunConfig& c, unsigned threads) {
  auto scenario = scenario_from_json(c.scenario());
  log_line(fmt::format("synth: {} sims, {} sites, {} days", scenario.n_sims, scenario.n_sites, scenario.days));
  auto ds = generate(scenario, threads);
  write_dataset(ds, c.run_dir());
  log_line(fmt::format("synth: wrote {} records to {}", ds.records.size(), c.run_dir().string()));
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

inline void run_ingest(const RunConfig& c, unsigned threads) {
  auto input = c.input("input.cdr", "cdr_wide.csv");
  require_artifact(input, "synth");
  CdrSchema schema;
  schema.sim_id = c.get<std::string>("ingest.column.sim_id");
  schema.timestamp = c.get<std::string>("ingest.column.timestamp");
  schema.cell_id = c.get<std::string>("ingest.column.cell_id");
  schema.customer_type = c.get<std::string>("ingest.column.customer_type");
  schema.subscription_type = c.get<std::string>("ingest.column.subscription_type");
  schema.age = c.get<std::string>("ingest.column.age");
  schema.gender = c.get<std::string>("ingest.column.gender");
  schema.tac = c.get<std::string>("ingest.column.tac");
  schema.tz = config_tz(c);
  auto min_records = c.get<long long>("ingest.min_records");
  auto min_days = c.get<long long>("ingest.min_active_days");
  if (min_records < 0 || min_days < 0) throw_validation("ingest thresholds must be >= 0");
  auto edges = c.get<std::vector<std::uint64_t>>("ingest.histogram_edges");

  IngestAccumulator acc;
  auto stats = parse_cdr_file(input.string(), schema, [&](const CdrRowView& row) { acc.add(row); });
  auto tables = std::move(acc).finish(threads);
  auto histograms = activity_histograms(tables.activity, schema.tz, edges);
  auto filtered = filter_sims(tables.activity, schema.tz, static_cast<std::size_t>(min_records),
                              static_cast<std::size_t>(min_days));

  fs::create_directories(c.run_dir());
  write_activity_csv(filtered.table, c.artifact("activity.csv").string());
  write_subscribers_csv(tables.subscribers, c.artifact("subscribers.csv").string());
  write_devices_csv(tables.devices, c.artifact("devices.csv").string());
  nlohmann::json report{{"parse", to_json(stats)},
                        {"subscriber_conflicts", tables.subscriber_conflicts},
                        {"sims", tables.activity.sim_count()},
                        {"cells", tables.activity.cell_ids.size()},
                        {"records", tables.activity.size()},
                        {"histograms_before_filter", to_json(histograms)},
                        {"filter", to_json(filtered.report)},
                        {"records_after_filter", filtered.table.size()}};
  write_json_file(report, c.artifact("ingest_report.json").string());
  log_line(fmt::format("ingest: {} records, {} sims, {} malformed lines", stats.records_out,
                       tables.activity.sim_count(), stats.malformed));
}

// ---------------------------------------------------------------------------
// tessellate
// ---------------------------------------------------------------------------

inline void run_tessellate(const RunConfig& c, unsigned) {
  auto cells_path = c.input("input.cells", "cells.csv");
  require_artifact(cells_path, "synth");
  auto cells = read_cells_csv(cells_path.string());
  double tol = c.get<double>("geo.merge_tolerance_m");
  if (tol < 0) throw_validation("geo.merge_tolerance_m must be >= 0");
  auto sites = merge_cells_to_sites(cells, tol);
  BoundingBox box;
  if (c.raw("geo.bbox").is_null()) {
    double pad = c.get<double>("geo.bbox_pad_km");
    if (pad < 0) throw_validation("geo.bbox_pad_km must be >= 0");
    std::vector<LatLon> stations;
    for (const auto& s : sites) stations.push_back(s.location);
    box = padded_box(stations, pad);
  } else {
    auto v = c.get<std::vector<double>>("geo.bbox");
    if (v.size() != 4) throw_validation("geo.bbox must be [min_lat, min_lon, max_lat, max_lon]");
    box = {v[0], v[1], v[2], v[3]};
  }
  auto tess = build_voronoi(std::move(sites), box);
  fs::create_directories(c.run_dir());
  write_json_file(to_geojson(tess), c.artifact("sites.geojson").string());
  log_line(fmt::format("tessellate: {} cells merged into {} sites", cells.size(), tess.size()));
}

// ---------------------------------------------------------------------------
// locate
// ---------------------------------------------------------------------------

inline LocationParams location_params(const RunConfig& c) {
  auto [wb, we] = window_param(c, "locations.work_window_min", 0, kMinutesPerDay);
  auto [nb, ne] = window_param(c, "locations.night_window_min", 0, kMinutesPerDay);
  if (!(we > wb)) throw_validation("locations.work_window_min: begin must precede end");
  LocationParams p;
  p.work_begin = static_cast<int>(wb * 60);
  p.work_end = static_cast<int>(we * 60);
  p.night_begin = static_cast<int>(nb * 60);
  p.night_end = static_cast<int>(ne * 60);
  return p;
}

inline void run_locate(const RunConfig& c, unsigned threads) {
  auto params = location_params(c);
  auto calendar = load_calendar(c);
  auto table = load_activity(c, threads);
  calendar = ranged_calendar(calendar, table);
  auto locs = infer_locations(table, calendar, params, threads);
  write_locations_csv(table, locs, c.artifact("locations.csv").string());
  auto support = config_min_support(c);
  std::size_t homes = 0, works = 0;
  for (const auto& a : locs) {
    homes += accepted_home(a, support).has_value();
    works += accepted_work(a, support).has_value();
  }
  log_line(fmt::format("locate: {} sims, {} accepted homes, {} accepted workplaces", locs.size(), homes, works));
}

// ---------------------------------------------------------------------------
// mobility
// ---------------------------------------------------------------------------

inline void run_mobility(const RunConfig& c, unsigned threads) {
  auto cells_path = c.input("input.cells", "cells.csv");
  require_artifact(cells_path, "synth");
  auto tess = load_tessellation(c);
  auto table = load_activity(c, threads);
  auto cells = read_cells_csv(cells_path.string());
  auto how_s = c.get<std::string>("mobility.aggregate");
  if (how_s != "mean" && how_s != "median") throw_validation("mobility.aggregate must be mean or median");
  auto points = cell_points(table, cells, tess.projection());
  auto result = daily_mobility(table, points, config_tz(c), threads);
  auto city = city_daily(result.rows, how_s == "mean" ? Aggregate::mean : Aggregate::median);
  write_mobility_daily_csv(table, result.rows, c.artifact("mobility_daily.csv").string());
  write_city_mobility_csv(city, c.artifact("mobility_city.csv").string());
  log_line(fmt::format("mobility: {} sim-days, {} records in cells without coordinates", result.rows.size(),
                       result.skipped_unknown_cell));
}

// ---------------------------------------------------------------------------
// circadian
// ---------------------------------------------------------------------------

struct CircadianRun {
  GroupingMode mode;
  BinnedActivity binned;
  std::vector<GroupDayEdges> edges;
};

inline double mean_daily_volume(const BinnedActivity& b, std::size_t g) {
  std::uint64_t n = 0;
  for (auto v : b.group_bins(g)) n += v;
  return b.days ? static_cast<double>(n) / b.days : 0.0;
}

inline nlohmann::json summary_json(const EdgeSummary& s) {
  return {{"wake_min", opt_json(s.rise_min)},
          {"bed_min", opt_json(s.fall_min)},
          {"day_length_min", opt_json(s.length_min)},
          {"wake_days", s.rise_days},
          {"bed_days", s.fall_days},
          {"day_length_days", s.length_days}};
}

inline void run_circadian(const RunConfig& c, unsigned threads) {
  auto params = edge_params(c);
  auto level = parse_level(c.get<std::string>("circadian.level"));
  std::vector<GroupingMode> modes;
  for (const auto& m : c.get<std::vector<std::string>>("circadian.modes")) modes.push_back(parse_mode(m));
  if (modes.empty()) throw_validation("circadian.modes must not be empty");
  double min_volume = c.get<double>("circadian.min_daily_volume");
  bool need_locations = std::any_of(modes.begin(), modes.end(), [](auto m) { return m != GroupingMode::cell_based; });

  auto calendar = load_calendar(c);
  std::optional<Tessellation> tess;
  if (level == GroupLevel::site) tess = load_tessellation(c);
  if (need_locations) require_artifact(c.artifact("locations.csv"), "locate");
  auto table = load_activity(c, threads);
  calendar = ranged_calendar(calendar, table);
  std::vector<LocationAssignment> locs;
  if (need_locations) locs = load_locations(c, table);

  BinningOptions opt;
  opt.tz = calendar.tz();
  opt.first_day = *calendar.first_day();
  opt.last_day = *calendar.last_day();
  opt.min_support = config_min_support(c);
  opt.commuters_only = c.get<bool>("circadian.commuters_only");
  auto groups = make_group_index(table, level, tess ? &*tess : nullptr);
  auto everything = make_group_index(table, GroupLevel::all);

  BufferedWriter daily(c.artifact("edges_daily.csv").string());
  BufferedWriter summary(c.artifact("edges_summary.csv").string());
  auto dout = std::back_inserter(daily.buf());
  auto sout = std::back_inserter(summary.buf());
  fmt::format_to(dout, "group_kind,group_id,date,day_class,wake_min,bed_min,day_length_min,confidence\n");
  fmt::format_to(sout, "group_kind,group_id,day_class,wake_min,bed_min,day_length_min,days,volume_per_day,adequate\n");

  nlohmann::json modes_json = nlohmann::json::object();
  for (auto mode : modes) {
    opt.mode = mode;
    auto kind = std::string(to_string(mode));
    nlohmann::json mj;
    std::vector<double> site_wake_work, site_wake_hol, site_len_work, site_len_hol;
    std::size_t adequate = 0;
    for (const auto* gi : {&groups, &everything}) {
      if (gi == &everything && level == GroupLevel::all) continue;
      auto binned = bin_activity(table, *gi, locs, opt, threads);
      auto edges = detect_all_edges(binned, params, threads);
      auto by_group = edges_by_group(edges, binned.groups());
      for (std::size_t g = 0; g < binned.groups(); ++g) {
        const auto& id = binned.group_ids[g];
        for (const auto& e : by_group[g]) {
          auto cls = calendar.classify(e.day);
          fmt::format_to(dout, "{},{},{},{},{},{},{},{}\n", kind, id, format_date(e.day), to_string(cls),
                         opt_str(e.edges.rise_min), opt_str(e.edges.fall_min), opt_str(e.edges.length_min()),
                         to_string(e.edges.status));
        }
        daily.flush_if_large();
        double volume = mean_daily_volume(binned, g);
        bool ok = volume >= min_volume;
        nlohmann::json per_class;
        for (std::optional<DayClass> cls : {std::optional<DayClass>(DayClass::workday),
                                            std::optional<DayClass>(DayClass::holiday), std::optional<DayClass>()}) {
          auto s = median_edges(by_group[g], calendar, cls);
          auto cls_name = cls ? std::string(to_string(*cls)) : std::string("all");
          fmt::format_to(sout, "{},{},{},{},{},{},{},{:.3f},{}\n", kind, id, cls_name, opt_str(s.rise_min),
                         opt_str(s.fall_min), opt_str(s.length_min), s.length_days, volume, ok ? "true" : "false");
          per_class[cls_name] = summary_json(s);
          if (gi == &groups && ok && cls) {
            auto& wv = *cls == DayClass::workday ? site_wake_work : site_wake_hol;
            auto& lv = *cls == DayClass::workday ? site_len_work : site_len_hol;
            if (s.rise_min) wv.push_back(*s.rise_min);
            if (s.length_min) lv.push_back(*s.length_min);
          }
        }
        if (gi == &everything || level == GroupLevel::all) mj["city"] = per_class;
        if (gi == &groups && ok) ++adequate;
      }
      if (gi == &groups) {
        mj["groups"] = binned.groups();
        mj["skipped_sims"] = binned.skipped_sims;
        mj["skipped_records"] = binned.skipped_records;
      }
    }
    mj["adequate_groups"] = adequate;
    mj["median_of_group_medians"] = {{"workday_wake_min", opt_json(lower_median(site_wake_work))},
                                     {"holiday_wake_min", opt_json(lower_median(site_wake_hol))},
                                     {"workday_day_length_min", opt_json(lower_median(site_len_work))},
                                     {"holiday_day_length_min", opt_json(lower_median(site_len_hol))}};
    modes_json[kind] = mj;
    log_line(fmt::format("circadian: {} grouping done", kind));
  }
  daily.close();
  summary.close();

  // City series periodicity.
  BinningOptions city_opt = opt;
  city_opt.mode = GroupingMode::cell_based;
  auto city = bin_activity(table, everything, {}, city_opt, threads);
  auto series = city_series(city);
  nlohmann::json period = nullptr;
  if (city.days >= 3) {
    auto pg = periodogram(series);
    BufferedWriter w(c.artifact("periodogram.csv").string());
    auto out = std::back_inserter(w.buf());
    fmt::format_to(out, "period_hours,magnitude\n");
    for (std::size_t k = 0; k < pg.magnitude.size(); ++k)
      fmt::format_to(out, "{:.6f},{:.6f}\n", pg.period_hours[k], pg.magnitude[k]);
    w.close();
    double hours = dominant_period(series);
    double span_hours = static_cast<double>(series.size()) * kBinMinutes / 60.0;
    period = {{"dominant_period_hours", hours}, {"frequency_resolution_per_hour", 1.0 / span_hours}};
  } else {
    log_line("circadian: fewer than three days, no periodogram");
  }

  // Weekday × hour heatmaps.
  BufferedWriter hw(c.artifact("heatmap.csv").string());
  auto hout = std::back_inserter(hw.buf());
  fmt::format_to(hout, "population,weekday,hour,count\n");
  auto emit = [&](const char* name, const Heatmap& h) {
    for (std::size_t d = 0; d < 7; ++d)
      for (std::size_t hr = 0; hr < 24; ++hr) fmt::format_to(hout, "{},{},{},{}\n", name, d, hr, h[d][hr]);
  };
  emit("all", weekday_hour_heatmap(table, calendar.tz()));
  if (need_locations) {
    auto support = opt.min_support;
    emit("workers_at_work", weekday_hour_heatmap(table, calendar.tz(), [&](const Activity& a) {
           auto w = accepted_work(locs[a.sim], support);
           return w && *w == a.cell;
         }));
  }
  hw.close();

  nlohmann::json out{{"level", to_string(level)},
                     {"days", city.days},
                     {"first_day", format_date(city.first_day)},
                     {"modes", modes_json},
                     {"periodicity", period},
                     {"min_daily_volume", min_volume}};
  write_json_file(out, c.artifact("circadian_summary.json").string());
}

// ---------------------------------------------------------------------------
// working-hours
// ---------------------------------------------------------------------------

inline void run_working_hours(const RunConfig& c, unsigned threads) {
  WorkParams params;
  params.edges = edge_params(c);
  params.edges.rise = search_window(c, "working_hours.start_search_min", kMinutesPerDay);
  params.edges.fall = search_window(c, "working_hours.end_search_min", kMinutesPerDay);
  params.min_daily_volume = c.get<double>("working_hours.min_daily_volume");
  auto mode = parse_mode(c.get<std::string>("working_hours.mode"));
  if (mode != GroupingMode::workplace_based && mode != GroupingMode::worker_based)
    throw_validation("working_hours.mode must be workplace or worker");
  int k = c.get<int>("working_hours.pairing_k");
  int bin = c.get<int>("working_hours.pairing_bin_min");
  if (k < 1 || bin < 1) throw_validation("working_hours pairing parameters must be positive");

  auto calendar = load_calendar(c);
  auto tess = load_tessellation(c);
  require_artifact(c.artifact("locations.csv"), "locate");
  auto table = load_activity(c, threads);
  calendar = ranged_calendar(calendar, table);
  auto locs = load_locations(c, table);

  BinningOptions opt;
  opt.mode = mode;
  opt.tz = calendar.tz();
  opt.first_day = *calendar.first_day();
  opt.last_day = *calendar.last_day();
  opt.min_support = config_min_support(c);
  opt.commuters_only = c.get<bool>("circadian.commuters_only");
  auto groups = make_group_index(table, GroupLevel::site, &tess);
  auto binned = bin_activity(table, groups, locs, opt, threads);
  std::vector<WorkingHours> sites(binned.groups());
  parallel_chunks(binned.groups(), threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t g = b; g < e; ++g) sites[g] = working_hours(binned, g, calendar, params);
  });

  BufferedWriter w(c.artifact("working_hours.csv").string());
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "site_id,start_min,end_min,length_min,volume,confidence\n");
  std::vector<WorkingHours> confident;
  std::uint64_t total_volume = 0, low_volume = 0;
  for (const auto& s : sites) {
    fmt::format_to(out, "{},{},{},{},{:.3f},{}\n", s.site_id, opt_str(s.start_min), opt_str(s.end_min),
                   opt_str(s.length_min), s.volume, s.low_confidence ? "low" : "ok");
    total_volume += static_cast<std::uint64_t>(std::llround(s.volume));
    if (s.low_confidence) low_volume += static_cast<std::uint64_t>(std::llround(s.volume));
    else confident.push_back(s);
  }
  w.close();

  auto pairing = start_end_pairing(confident, static_cast<std::size_t>(k), bin);
  BufferedWriter pw(c.artifact("working_hours_pairing.csv").string());
  auto pout = std::back_inserter(pw.buf());
  fmt::format_to(pout, "start_bin_min,end_bin_min,sites\n");
  for (std::size_t i = 0; i < pairing.start_bins.size(); ++i)
    for (std::size_t j = 0; j < pairing.end_bins.size(); ++j)
      fmt::format_to(pout, "{},{},{}\n", pairing.start_bins[i], pairing.end_bins[j], pairing.pair_counts[i][j]);
  pw.close();

  std::vector<double> starts, ends, lengths;
  for (const auto& s : confident) {
    if (s.start_min) starts.push_back(*s.start_min);
    if (s.end_min) ends.push_back(*s.end_min);
    if (s.length_min) lengths.push_back(*s.length_min);
  }
  std::map<int, std::size_t> start_hist, length_hist;
  for (double v : starts) ++start_hist[round_to_bin(v, bin)];
  for (double v : lengths) ++length_hist[round_to_bin(v, bin)];
  auto hist_json = [](const std::map<int, std::size_t>& h) {
    nlohmann::json j = nlohmann::json::array();
    for (auto [b, n] : h) j.push_back({{"bin_min", b}, {"sites", n}});
    return j;
  };
  nlohmann::json summary{
      {"mode", to_string(mode)},
      {"sites", sites.size()},
      {"confident_sites", confident.size()},
      {"low_confidence_sites", sites.size() - confident.size()},
      {"low_confidence_volume_share",
       total_volume ? static_cast<double>(low_volume) / static_cast<double>(total_volume) : 0.0},
      {"median_start_min", opt_json(lower_median(starts))},
      {"median_end_min", opt_json(lower_median(ends))},
      {"median_length_min", opt_json(lower_median(lengths))},
      {"start_histogram", hist_json(start_hist)},
      {"length_histogram", hist_json(length_hist)},
      {"pairing",
       {{"start_bins_min", pairing.start_bins},
        {"start_counts", pairing.start_counts},
        {"end_bins_min", pairing.end_bins},
        {"end_counts", pairing.end_counts},
        {"pair_counts", pairing.pair_counts}}}};
  write_json_file(summary, c.artifact("working_hours_summary.json").string());
  log_line(fmt::format("working-hours: {} sites, {} confident", sites.size(), confident.size()));
}

// ---------------------------------------------------------------------------
// ses
// ---------------------------------------------------------------------------

inline Bins config_bins(const RunConfig& c, const std::string& key, const std::string& name, double unit,
                        int precision) {
  auto edges = c.get<std::vector<double>>(key);
  std::vector<std::string> labels;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    labels.push_back(fmt::format("{:.{}f}-{:.{}f}", edges[i] / unit, precision, edges[i + 1] / unit, precision));
  return make_bins(name, edges, labels);
}

/// Workday wake-up per tessellation site from the inhabitant-based edge summary.
inline std::vector<std::optional<double>> site_workday_wake(const RunConfig& c, const Tessellation& tess) {
  auto path = c.artifact("edges_summary.csv");
  require_artifact(path, "circadian");
  std::vector<std::optional<double>> out(tess.size());
  bool any = false;
  for (const auto& row : read_table_csv(path, {"group_kind", "group_id", "day_class", "wake_min"})) {
    if (row.at("group_kind") != "inhabitant" || row.at("day_class") != "workday") continue;
    any = true;
    if (auto s = tess.find_site(row.at("group_id"))) out[*s] = opt_number(row.at("wake_min"));
  }
  if (!any)
    throw Error(ErrorKind::missing_prerequisite,
                "edges_summary.csv has no inhabitant-based site rows; run `chrono-cdr circadian` with the "
                "inhabitant mode at site level",
                "circadian");
  return out;
}

inline void run_ses(const RunConfig& c, unsigned threads) {
  auto ads_path = c.input("input.estate_ads", "estate_ads.csv");
  auto catalog_path = c.input("input.device_catalog", "device_catalog.csv");
  require_artifact(ads_path, "synth");
  require_artifact(catalog_path, "synth");
  auto property = config_bins(c, "ses.property_edges_huf", "property_huf_per_sqm", 1e6, 1);
  auto price = config_bins(c, "ses.phone_price_edges_eur", "phone_price_eur", 1, 0);
  auto age = config_bins(c, "ses.phone_age_edges_years", "phone_age_years", 1, 0);
  auto calendar = load_calendar(c);
  auto tess = load_tessellation(c);
  require_artifact(c.artifact("devices.csv"), "ingest");
  require_artifact(c.artifact("locations.csv"), "locate");
  auto site_wake = site_workday_wake(c, tess);
  auto table = load_activity(c, threads);
  calendar = ranged_calendar(calendar, table);
  auto locs = load_locations(c, table);

  MonthIndex month;
  auto month_s = c.get<std::string>("ses.dataset_month");
  if (month_s.empty()) {
    auto ymd = civil(*calendar.first_day());
    month = month_index(static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())));
  } else {
    auto ym = parse_year_month(month_s);
    if (!ym || month_s.size() != 7) throw_validation("ses.dataset_month must be YYYY-MM");
    month = month_index(ym->first, ym->second);
  }

  auto ads = read_estate_ads_csv(ads_path.string());
  auto prices = site_price(ads.ads, tess);
  auto catalog = read_device_catalog_csv(catalog_path.string());
  auto devices = read_devices_csv(c.artifact("devices.csv").string());
  std::stable_sort(devices.begin(), devices.end(), [](const auto& a, const auto& b) { return a.sim_id < b.sim_id; });
  auto profiles = build_profiles({table, locs, tess, prices, devices, catalog, month, config_min_support(c)});
  auto cats = categorize(profiles.profiles, property, price, age);
  auto m_price = wakeup_by_category(profiles.profiles, cats.categories, site_wake, property, price, ColumnIndicator::phone_price);
  auto m_age = wakeup_by_category(profiles.profiles, cats.categories, site_wake, property, age, ColumnIndicator::phone_age);

  write_ses_profiles_csv(table, tess, profiles.profiles, cats.categories, property, price, age,
                         c.artifact("ses_profiles.csv").string());
  write_category_matrix_csv(m_price, c.artifact("ses_matrix_price.csv").string());
  write_category_matrix_csv(m_age, c.artifact("ses_matrix_age.csv").string());

  std::map<std::string, std::uint64_t> device_status;
  for (const auto& p : profiles.profiles) ++device_status[std::string(to_string(p.device))];
  std::size_t priced_sites = 0;
  for (const auto& v : prices.median_per_sqm) priced_sites += v.has_value();
  auto tau = [](const std::optional<double>& t) { return opt_json(t); };
  nlohmann::json summary{
      {"wake_definition", "inhabitant-based median workday wake-up of the SIM's home site"},
      {"price_caveat", "catalog phone prices are indicative and may have depreciated since launch"},
      {"dataset_month", fmt::format("{:04}-{:02}", month / 12, month % 12 + 1)},
      {"ads", {{"valid", ads.ads.size()}, {"invalid", ads.invalid}, {"outside_box", prices.outside}}},
      {"priced_sites", priced_sites},
      {"device_status", device_status},
      {"future_release_phones", profiles.future_release},
      {"uncategorized",
       {{"property", cats.property_uncategorized}, {"phone_price", cats.price_uncategorized},
        {"phone_age", cats.age_uncategorized}}},
      {"matrix_price", to_json(m_price)},
      {"matrix_age", to_json(m_age)},
      {"trend_tau",
       {{"price_rows", tau(trend_tau(m_price.row_median))},
        {"price_cols", tau(trend_tau(m_price.col_median))},
        {"age_rows", tau(trend_tau(m_age.row_median))},
        {"age_cols", tau(trend_tau(m_age.col_median))}}}};
  write_json_file(summary, c.artifact("ses_summary.json").string());
  log_line(fmt::format("ses: {} profiles, {} SIMs in the price matrix", profiles.profiles.size(), m_price.total()));
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

struct DailyEdgeSeries {
  DailySeries wake, bed;
};

/// Per-date wake/bed from edges_daily.csv: the median over site groups, or
/// the city group's own value.
inline DailyEdgeSeries daily_edge_series(const fs::path& path, const std::string& kind, bool city_group) {
  std::map<DayNumber, std::vector<double>> wake, bed;
  bool any = false;
  for (const auto& row : read_table_csv(path, {"group_kind", "group_id", "date", "wake_min", "bed_min"})) {
    if (row.at("group_kind") != kind) continue;
    if ((row.at("group_id") == "all") != city_group) continue;
    any = true;
    auto day = parse_date(row.at("date"));
    if (!day) throw_validation(path.string() + ": invalid date");
    if (auto v = opt_number(row.at("wake_min"))) wake[*day].push_back(*v);
    if (auto v = opt_number(row.at("bed_min"))) bed[*day].push_back(*v);
  }
  if (!any)
    throw Error(ErrorKind::missing_prerequisite,
                "edges_daily.csv has no rows for grouping '" + kind + "'; run `chrono-cdr circadian` with it",
                "circadian");
  DailyEdgeSeries out;
  for (auto& [d, v] : wake) out.wake[d] = *lower_median(std::move(v));
  for (auto& [d, v] : bed) out.bed[d] = *lower_median(std::move(v));
  return out;
}

inline void run_correlate(const RunConfig& c, unsigned) {
  auto edges_path = c.artifact("edges_daily.csv");
  auto mob_path = c.artifact("mobility_city.csv");
  require_artifact(edges_path, "circadian");
  require_artifact(mob_path, "mobility");
  auto group = c.get<std::string>("correlate.group");
  if (group != "sites" && group != "all") throw_validation("correlate.group must be sites or all");
  auto kind = std::string(to_string(parse_mode(c.get<std::string>("correlate.mode"))));
  auto edges = daily_edge_series(edges_path, kind, group == "all");
  DailySeries entropy, gyration;
  for (const auto& d : read_city_mobility_csv(mob_path.string())) {
    entropy[d.day] = d.entropy;
    gyration[d.day] = d.radius_of_gyration_km;
  }
  auto nw = minmax_normalize(edges.wake), nb = minmax_normalize(edges.bed);
  auto ne = minmax_normalize(entropy), ng = minmax_normalize(gyration);
  auto safe_r = [](const DailySeries& a, const DailySeries& b) -> nlohmann::json {
    try {
      return pearson_r(a, b);
    } catch (const Error&) {
      return nullptr;
    }
  };
  nlohmann::json out{{"grouping", kind},
                     {"group", group},
                     {"days", nw.size()},
                     {"r_wake_entropy", safe_r(nw, ne)},
                     {"r_wake_gyration", safe_r(nw, ng)},
                     {"r_bed_entropy", safe_r(nb, ne)},
                     {"r_bed_gyration", safe_r(nb, ng)}};
  write_json_file(out, c.artifact("correlation.json").string());

  BufferedWriter w(c.artifact("correlate_daily.csv").string());
  auto o = std::back_inserter(w.buf());
  fmt::format_to(o, "date,wake_norm,bed_norm,entropy_norm,gyration_norm\n");
  std::set<DayNumber> days;
  for (const auto* s : {&nw, &nb, &ne, &ng})
    for (auto [d, v] : *s) days.insert(d);
  auto at = [](const DailySeries& s, DayNumber d) {
    auto it = s.find(d);
    return it == s.end() ? std::string() : fmt::format("{:.6f}", it->second);
  };
  for (auto d : days) fmt::format_to(o, "{},{},{},{},{}\n", format_date(d), at(nw, d), at(nb, d), at(ne, d), at(ng, d));
  w.close();
  log_line(fmt::format("correlate: r(wake, entropy) = {}, r(wake, gyration) = {}", out["r_wake_entropy"].dump(),
                       out["r_wake_gyration"].dump()));
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline void run_report(const RunConfig& c, unsigned) {
  struct Part {
    const char* file;
    const char* producer;
    const char* key;
  };
  const Part parts[] = {{"ingest_report.json", "ingest", "ingest"},
                        {"circadian_summary.json", "circadian", "circadian"},
                        {"working_hours_summary.json", "working-hours", "working_hours"},
                        {"correlation.json", "correlate", "correlation"},
                        {"ses_summary.json", "ses", "ses"}};
  for (const auto& p : parts) require_artifact(c.artifact(p.file), p.producer);
  nlohmann::json summary;
  for (const auto& p : parts) summary[p.key] = read_json_file(c.artifact(p.file));
  summary["effective_config"] = c.effective();
  write_json_file(summary, c.artifact("summary.json").string());
  log_line("report: wrote " + c.artifact("summary.json").string());
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"synth",   "ingest",        "tessellate", "locate",    "mobility",
                                              "circadian", "working-hours", "ses",        "correlate", "report"};
  return names;
}

inline void run_subcommand(const std::string& name, const RunConfig& c, unsigned threads) {
  threads = resolve_threads(threads);
  if (name == "synth") return run_synth(c, threads);
  if (name == "ingest") return run_ingest(c, threads);
  if (name == "tessellate") return run_tessellate(c, threads);
  if (name == "locate") return run_locate(c, threads);
  if (name == "mobility") return run_mobility(c, threads);
  if (name == "circadian") return run_circadian(c, threads);
  if (name == "working-hours") return run_working_hours(c, threads);
  if (name == "ses") return run_ses(c, threads);
  if (name == "correlate") return run_correlate(c, threads);
  if (name == "report") return run_report(c, threads);
  throw_validation("unknown subcommand '" + name + "'");
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::missing_prerequisite: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

}  // namespace chrono_cdr
