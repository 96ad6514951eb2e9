#pragma once

// Synthetic CDR scenarios with planted ground truth. Every SIM has a home
// cell, optionally a work cell, an individual wake-up and bedtime, a daily
// record rate and a device history. Records follow a day profile that is
// near-zero at night with logistic rise and fall around the planted times.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "chrono_cdr/common.hpp"
#include "chrono_cdr/geo.hpp"
#include "chrono_cdr/ingest.hpp"
#include "chrono_cdr/locations.hpp"
#include "chrono_cdr/ses.hpp"

namespace chrono_cdr {

struct GroupConfig {
  std::string name = "default";
  double share = 1.0;
  double wake_mean = 430;  // minutes since local midnight on workdays
  double wake_sd = 20;
  double bed_mean = 1190;
  double bed_sd = 20;
  double holiday_wake_shift = 60;
  double holiday_bed_shift = 40;
  double rate_per_day = 1.67;  // mean records per SIM and day
  double rate_sigma = 0.8;     // lognormal spread of per-SIM rates
  double worker_share = 0.6;
};

struct ShiftConfig {
  double start = 540;
  double end = 1020;
  double share = 1.0;
};

struct SesConfig {
  double price_min = 300e3;  // HUF per m² of the cheapest site
  double price_max = 1300e3;
  double wake_gradient = 30;  // minutes between the cheapest and the dearest site
  std::size_t ads_per_site = 40;
  double ad_sigma = 0.08;  // lognormal spread of ads around the site price
  double ads_outside_fraction = 0.01;
  std::size_t phone_models = 60;
  std::size_t non_phone_models = 6;
  double phone_noise = 0.15;  // spread of the phone price quantile around the site level
  double non_phone_fraction = 0.02;
  double uncataloged_fraction = 0.01;
  double multi_device_fraction = 0.04;
  double missing_attributes_fraction = 0.4;
};

struct ScenarioConfig {
  std::uint64_t seed = 20170401;
  std::size_t n_sims = 100000;
  std::size_t n_sites = 50;
  int days = 30;
  DayNumber first_day = make_day(2017, 4, 1);
  int tz_offset_minutes = 120;
  std::set<DayNumber> holidays{make_day(2017, 4, 14), make_day(2017, 4, 17)};
  std::set<DayNumber> workday_overrides;
  LatLon center{47.4979, 19.0402};
  double extent_km = 30;
  int min_cells_per_site = 1;
  int max_cells_per_site = 4;
  double cell_offset_km = 0.3;
  double rise_width = 30;      // minutes covering the 12%–88% part of a logistic ramp
  double night_level = 0.03;   // night intensity relative to the daytime plateau
  double home_site_sigma = 0.5;  // lognormal spread of site popularity
  double work_site_sigma = 1.0;
  bool epoch_timestamps = false;
  std::vector<GroupConfig> groups{GroupConfig{}};
  std::vector<ShiftConfig> shifts{ShiftConfig{}};
  SesConfig ses;

  Calendar calendar() const {
    return Calendar(TzOffset{tz_offset_minutes}, holidays, workday_overrides, first_day, first_day + days - 1);
  }
  int dataset_month() const {
    auto ymd = civil(first_day);
    return month_index(static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())));
  }
};

inline void validate(const ScenarioConfig& c) {
  auto fail = [](const std::string& msg) { throw_validation("scenario: " + msg); };
  if (c.n_sims == 0) fail("n_sims must be positive");
  if (c.n_sites < 2) fail("n_sites must be at least 2");
  if (c.days < 1) fail("days must be positive");
  if (c.min_cells_per_site < 1 || c.max_cells_per_site < c.min_cells_per_site) fail("invalid cells per site range");
  if (!(c.extent_km > 0) || !(c.rise_width > 0)) fail("extent_km and rise_width must be positive");
  if (c.night_level < 0 || c.night_level >= 1) fail("night_level must be in [0, 1)");
  if (c.groups.empty()) fail("at least one group is required");
  double share = 0;
  for (const auto& g : c.groups) {
    share += g.share;
    if (g.share < 0) fail("group " + g.name + ": negative share");
    if (!(g.rate_per_day > 0)) fail("group " + g.name + ": rate_per_day must be positive");
    if (g.wake_sd < 0 || g.bed_sd < 0 || g.rate_sigma < 0) fail("group " + g.name + ": negative spread");
    if (g.worker_share < 0 || g.worker_share > 1) fail("group " + g.name + ": worker_share outside [0, 1]");
    if (g.bed_mean <= g.wake_mean || g.bed_mean + g.holiday_bed_shift <= g.wake_mean + g.holiday_wake_shift)
      fail("group " + g.name + ": bedtime must follow wake-up");
    if (g.wake_mean < 0 || g.bed_mean + std::max(0.0, g.holiday_bed_shift) > kMinutesPerDay)
      fail("group " + g.name + ": planted times must lie within the day");
  }
  if (std::abs(share - 1.0) > 1e-9) fail("group shares must sum to 1");
  if (c.shifts.empty()) fail("at least one work shift is required");
  double shift_share = 0;
  for (const auto& s : c.shifts) {
    shift_share += s.share;
    if (!(s.end > s.start) || s.start < 0 || s.end > kMinutesPerDay) fail("work shift must satisfy 0 <= start < end <= 1440");
  }
  if (std::abs(shift_share - 1.0) > 1e-9) fail("shift shares must sum to 1");
  const auto& s = c.ses;
  if (!(s.price_max > s.price_min) || !(s.price_min > 0)) fail("ses price range invalid");
  if (s.phone_models == 0) fail("ses.phone_models must be positive");
  for (double f : {s.ads_outside_fraction, s.non_phone_fraction, s.uncataloged_fraction, s.multi_device_fraction,
                   s.missing_attributes_fraction})
    if (f < 0 || f > 1) fail("ses fractions must lie in [0, 1]");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

/// Reads `key` into `out` when present and removes it from `rest`, so
/// leftovers can be reported as unknown keys.
template <class T>
void take(nlohmann::json& rest, const char* key, T& out) {
  auto it = rest.find(key);
  if (it == rest.end()) return;
  out = it->template get<T>();
  rest.erase(it);
}

inline void reject_unknown(const nlohmann::json& rest, const std::string& where) {
  if (!rest.empty()) throw_validation(where + ": unknown key '" + rest.begin().key() + "'");
}

inline std::set<DayNumber> date_set(const nlohmann::json& arr, const char* what) {
  std::set<DayNumber> out;
  for (const auto& v : arr) {
    auto d = parse_date(v.get<std::string>());
    if (!d) throw_validation(std::string("scenario: invalid date in ") + what);
    out.insert(*d);
  }
  return out;
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(nlohmann::json j) {
  ScenarioConfig c;
  try {
    using detail::take;
    take(j, "seed", c.seed);
    take(j, "n_sims", c.n_sims);
    take(j, "n_sites", c.n_sites);
    take(j, "days", c.days);
    if (auto it = j.find("first_day"); it != j.end()) {
      auto d = parse_date(it->get<std::string>());
      if (!d) throw_validation("scenario: invalid first_day");
      c.first_day = *d;
      j.erase(it);
    }
    take(j, "tz_offset_minutes", c.tz_offset_minutes);
    if (auto it = j.find("holidays"); it != j.end()) {
      c.holidays = detail::date_set(*it, "holidays");
      j.erase(it);
    }
    if (auto it = j.find("workday_overrides"); it != j.end()) {
      c.workday_overrides = detail::date_set(*it, "workday_overrides");
      j.erase(it);
    }
    take(j, "center_lat", c.center.lat);
    take(j, "center_lon", c.center.lon);
    take(j, "extent_km", c.extent_km);
    take(j, "min_cells_per_site", c.min_cells_per_site);
    take(j, "max_cells_per_site", c.max_cells_per_site);
    take(j, "cell_offset_km", c.cell_offset_km);
    take(j, "rise_width", c.rise_width);
    take(j, "night_level", c.night_level);
    take(j, "home_site_sigma", c.home_site_sigma);
    take(j, "work_site_sigma", c.work_site_sigma);
    take(j, "epoch_timestamps", c.epoch_timestamps);
    if (auto it = j.find("groups"); it != j.end()) {
      c.groups.clear();
      for (auto g : *it) {
        GroupConfig gc;
        take(g, "name", gc.name);
        take(g, "share", gc.share);
        take(g, "wake_mean", gc.wake_mean);
        take(g, "wake_sd", gc.wake_sd);
        take(g, "bed_mean", gc.bed_mean);
        take(g, "bed_sd", gc.bed_sd);
        take(g, "holiday_wake_shift", gc.holiday_wake_shift);
        take(g, "holiday_bed_shift", gc.holiday_bed_shift);
        take(g, "rate_per_day", gc.rate_per_day);
        take(g, "rate_sigma", gc.rate_sigma);
        take(g, "worker_share", gc.worker_share);
        detail::reject_unknown(g, "scenario group");
        c.groups.push_back(gc);
      }
      j.erase(it);
    }
    if (auto it = j.find("shifts"); it != j.end()) {
      c.shifts.clear();
      for (auto s : *it) {
        ShiftConfig sc;
        take(s, "start", sc.start);
        take(s, "end", sc.end);
        take(s, "share", sc.share);
        detail::reject_unknown(s, "scenario shift");
        c.shifts.push_back(sc);
      }
      j.erase(it);
    }
    if (auto it = j.find("ses"); it != j.end()) {
      auto s = *it;
      auto& o = c.ses;
      take(s, "price_min", o.price_min);
      take(s, "price_max", o.price_max);
      take(s, "wake_gradient", o.wake_gradient);
      take(s, "ads_per_site", o.ads_per_site);
      take(s, "ad_sigma", o.ad_sigma);
      take(s, "ads_outside_fraction", o.ads_outside_fraction);
      take(s, "phone_models", o.phone_models);
      take(s, "non_phone_models", o.non_phone_models);
      take(s, "phone_noise", o.phone_noise);
      take(s, "non_phone_fraction", o.non_phone_fraction);
      take(s, "uncataloged_fraction", o.uncataloged_fraction);
      take(s, "multi_device_fraction", o.multi_device_fraction);
      take(s, "missing_attributes_fraction", o.missing_attributes_fraction);
      detail::reject_unknown(s, "scenario ses");
      j.erase(it);
    }
    detail::reject_unknown(j, "scenario");
  } catch (const nlohmann::json::exception& e) {
    throw_validation(std::string("scenario: ") + e.what());
  }
  validate(c);
  return c;
}

inline nlohmann::json to_json(const ScenarioConfig& c) {
  auto dates = [](const std::set<DayNumber>& s) {
    std::vector<std::string> out;
    for (auto d : s) out.push_back(format_date(d));
    return out;
  };
  nlohmann::json groups = nlohmann::json::array(), shifts = nlohmann::json::array();
  for (const auto& g : c.groups)
    groups.push_back({{"name", g.name},
                      {"share", g.share},
                      {"wake_mean", g.wake_mean},
                      {"wake_sd", g.wake_sd},
                      {"bed_mean", g.bed_mean},
                      {"bed_sd", g.bed_sd},
                      {"holiday_wake_shift", g.holiday_wake_shift},
                      {"holiday_bed_shift", g.holiday_bed_shift},
                      {"rate_per_day", g.rate_per_day},
                      {"rate_sigma", g.rate_sigma},
                      {"worker_share", g.worker_share}});
  for (const auto& s : c.shifts) shifts.push_back({{"start", s.start}, {"end", s.end}, {"share", s.share}});
  const auto& s = c.ses;
  return {{"seed", c.seed},
          {"n_sims", c.n_sims},
          {"n_sites", c.n_sites},
          {"days", c.days},
          {"first_day", format_date(c.first_day)},
          {"tz_offset_minutes", c.tz_offset_minutes},
          {"holidays", dates(c.holidays)},
          {"workday_overrides", dates(c.workday_overrides)},
          {"center_lat", c.center.lat},
          {"center_lon", c.center.lon},
          {"extent_km", c.extent_km},
          {"min_cells_per_site", c.min_cells_per_site},
          {"max_cells_per_site", c.max_cells_per_site},
          {"cell_offset_km", c.cell_offset_km},
          {"rise_width", c.rise_width},
          {"night_level", c.night_level},
          {"home_site_sigma", c.home_site_sigma},
          {"work_site_sigma", c.work_site_sigma},
          {"epoch_timestamps", c.epoch_timestamps},
          {"groups", groups},
          {"shifts", shifts},
          {"ses",
           {{"price_min", s.price_min},
            {"price_max", s.price_max},
            {"wake_gradient", s.wake_gradient},
            {"ads_per_site", s.ads_per_site},
            {"ad_sigma", s.ad_sigma},
            {"ads_outside_fraction", s.ads_outside_fraction},
            {"phone_models", s.phone_models},
            {"non_phone_models", s.non_phone_models},
            {"phone_noise", s.phone_noise},
            {"non_phone_fraction", s.non_phone_fraction},
            {"uncataloged_fraction", s.uncataloged_fraction},
            {"multi_device_fraction", s.multi_device_fraction},
            {"missing_attributes_fraction", s.missing_attributes_fraction}}}};
}

// ---------------------------------------------------------------------------
// Day profile
// ---------------------------------------------------------------------------

/// logistic((k + 0.5) / scale) for integer minute offsets k in [−1441, 2880].
class LogisticTable {
 public:
  explicit LogisticTable(double rise_width) {
    const double scale = rise_width / 4.0;
    for (int k = kMin; k <= kMax; ++k) values_.push_back(1.0 / (1.0 + std::exp(-(k + 0.5) / scale)));
  }
  double operator()(int k) const { return values_[static_cast<std::size_t>(std::clamp(k, kMin, kMax) - kMin)]; }

 private:
  static constexpr int kMin = -kMinutesPerDay - 1;
  static constexpr int kMax = 2 * kMinutesPerDay;
  std::vector<double> values_;
};

/// Record-time distribution over the 144 bins of one day:
/// night + (1 − night)·L(t − wake)·L(bed − t), L logistic with scale
/// rise_width / 4, averaged over each bin's minutes.
class DayProfile {
 public:
  DayProfile(int wake_min, int bed_min, double rise_width, double night_level)
      : DayProfile(wake_min, bed_min, LogisticTable(rise_width), night_level) {}

  DayProfile(int wake_min, int bed_min, const LogisticTable& logistic, double night_level) {
    double total = 0;
    for (int b = 0; b < kBins; ++b) {
      double acc = 0;
      // Minute m is evaluated at its middle, m + 0.5.
      for (int m = b * 10; m < b * 10 + 10; ++m)
        acc += night_level + (1.0 - night_level) * logistic(m - wake_min) * logistic(bed_min - m - 1);
      weight_[b] = acc;
      total += acc;
    }
    double run = 0;
    for (int b = 0; b < kBins; ++b) {
      weight_[b] /= total;
      run += weight_[b];
      cumulative_[b] = run;
    }
    cumulative_[kBins - 1] = 1.0;
  }

  /// Probability of each bin.
  const std::array<double, 144>& probabilities() const { return weight_; }

  template <class Rng>
  int sample_bin(Rng& rng) const {
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min(static_cast<int>(it - cumulative_.begin()), kBins - 1);
  }

 private:
  static constexpr int kBins = 144;
  std::array<double, kBins> weight_{};
  std::array<double, kBins> cumulative_{};
};

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct SyntheticSite {
  std::string site_id;  // smallest member cell id
  LatLon station;
  std::vector<std::uint32_t> cells;  // indices into SyntheticDataset::cells
  double ses_level = 0;              // u in [0, 1]
  double price_per_sqm = 0;
  double wake_offset = 0;
  std::uint32_t shift = 0;
  double home_weight = 1, work_weight = 1;
};

struct SyntheticSim {
  std::string sim_id;
  std::uint32_t group = 0;
  std::uint32_t home_site = 0, home_cell = 0;
  std::optional<std::uint32_t> work_site, work_cell;
  int wake = 0, bed = 0;  // planted workday times
  int holiday_wake = 0, holiday_bed = 0;
  double rate = 0;
  std::uint32_t primary_tac = 0;
  std::optional<std::uint32_t> secondary_tac;
  int switch_day = 0;  // day offset from which the secondary tac is used
  std::string attributes;  // pre-rendered customer_type,subscription_type,age,gender
};

struct SyntheticRecord {
  Epoch timestamp = 0;
  std::uint32_t sim = 0;
  std::uint32_t cell = 0;
  std::uint32_t tac = 0;

  friend bool operator<(const SyntheticRecord& a, const SyntheticRecord& b) {
    return std::tie(a.timestamp, a.sim, a.cell, a.tac) < std::tie(b.timestamp, b.sim, b.cell, b.tac);
  }
};

struct SyntheticDataset {
  ScenarioConfig config;
  std::vector<CellInfo> cells;
  std::vector<SyntheticSite> sites;  // sorted by site_id
  std::vector<SyntheticSim> sims;
  std::vector<std::string> tacs;     // tac strings referenced by records
  std::vector<DeviceCatalogEntry> catalog;
  std::vector<EstateAd> ads;
  std::vector<SyntheticRecord> records;  // sorted by time

  Calendar calendar() const { return config.calendar(); }
};

namespace detail {

/// Independent engine per (seed, stream, index).
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  // Seeding the engine from the whole sequence is slow; one mixed word suffices.
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return std::mt19937_64((std::uint64_t{words[0]} << 32) | words[1]);
}

inline LatLon offset_km(const LocalProjection& proj, LatLon p, double dx, double dy) {
  Point2 q = proj.forward(p);
  return proj.inverse({q.x + dx, q.y + dy});
}

template <class Rng>
std::size_t pick_weighted(const std::vector<double>& cumulative, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, cumulative.back())(rng);
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

inline std::string hex_id(char prefix, std::uint64_t v) { return fmt::format("{}{:016x}", prefix, v); }

}  // namespace detail

/// Sites, cells, device catalog and ads; no SIMs yet.
inline void generate_world(SyntheticDataset& ds) {
  const auto& c = ds.config;
  auto rng = detail::substream(c.seed, 1, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  LocalProjection proj(c.center);

  // Sites and cells.
  std::vector<double> shift_cum;
  double run = 0;
  for (const auto& s : c.shifts) shift_cum.push_back(run += s.share);
  std::vector<SyntheticSite> sites(c.n_sites);
  std::uniform_int_distribution<int> ncells(c.min_cells_per_site, c.max_cells_per_site);
  std::uint32_t next_cell = 0;
  for (std::size_t i = 0; i < c.n_sites; ++i) {
    auto& s = sites[i];
    s.station = detail::offset_km(proj, c.center, (unit(rng) - 0.5) * c.extent_km, (unit(rng) - 0.5) * c.extent_km);
    s.ses_level = unit(rng);
    s.price_per_sqm = c.ses.price_min + s.ses_level * (c.ses.price_max - c.ses.price_min);
    s.wake_offset = c.ses.wake_gradient * (s.ses_level - 0.5);
    s.shift = static_cast<std::uint32_t>(detail::pick_weighted(shift_cum, rng));
    s.home_weight = std::exp(c.home_site_sigma * normal(rng));
    s.work_weight = std::exp(c.work_site_sigma * normal(rng));
    int n = ncells(rng);
    for (int k = 0; k < n; ++k) {
      double angle = unit(rng) * 2 * std::numbers::pi;
      double r = c.cell_offset_km * (0.5 + unit(rng));
      CellInfo cell{fmt::format("c{:05}", next_cell), detail::offset_km(proj, s.station, r * std::cos(angle), r * std::sin(angle)),
                    s.station};
      s.cells.push_back(next_cell++);
      ds.cells.push_back(std::move(cell));
    }
    s.site_id = ds.cells[s.cells.front()].cell_id;
  }
  std::sort(sites.begin(), sites.end(), [](const auto& a, const auto& b) { return a.site_id < b.site_id; });
  ds.sites = std::move(sites);

  // Device catalog: phones get a release age and a price that falls with age.
  const int month = c.dataset_month();
  std::set<std::string> used;
  auto new_tac = [&] {
    for (;;) {
      auto t = fmt::format("35{:06}", std::uniform_int_distribution<int>(0, 999999)(rng));
      if (used.insert(t).second) return t;
    }
  };
  std::vector<DeviceCatalogEntry> phones;
  for (std::size_t i = 0; i < c.ses.phone_models; ++i) {
    double age_years = unit(rng) * 6.0;
    double price = std::clamp(720.0 - 90.0 * age_years + 60.0 * normal(rng), 30.0, 749.0);
    phones.push_back({new_tac(), fmt::format("Vendor{}", i % 7), fmt::format("Model{:03}", i),
                      month - static_cast<int>(age_years * 12.0), std::round(price * 100) / 100, true});
  }
  std::sort(phones.begin(), phones.end(), [](const auto& a, const auto& b) {
    return std::tie(a.price_eur, a.tac) < std::tie(b.price_eur, b.tac);
  });
  for (const auto& p : phones) ds.tacs.push_back(p.tac);  // tacs[0 .. phone_models) by price
  ds.catalog = phones;
  for (std::size_t i = 0; i < c.ses.non_phone_models; ++i) {
    DeviceCatalogEntry e{new_tac(), "ModemCo", fmt::format("Dongle{:02}", i), month - 12 * static_cast<int>(i % 4),
                         std::nullopt, false};
    if (i % 2) e.price_eur = 40.0 + 10.0 * static_cast<double>(i);
    ds.tacs.push_back(e.tac);
    ds.catalog.push_back(std::move(e));
  }
  for (int i = 0; i < 4; ++i) ds.tacs.push_back(new_tac());  // never cataloged

  // Estate ads around each station, plus a few far outside the area.
  for (const auto& s : ds.sites) {
    for (std::size_t k = 0; k < c.ses.ads_per_site; ++k) {
      double sqm = 30 + unit(rng) * 90;
      double ppsqm = s.price_per_sqm * std::exp(c.ses.ad_sigma * normal(rng));
      LatLon at = detail::offset_km(proj, s.station, 0.25 * normal(rng), 0.25 * normal(rng));
      ds.ads.push_back({at, std::round(sqm), std::round(ppsqm * std::round(sqm))});
      if (unit(rng) < c.ses.ads_outside_fraction)
        ds.ads.push_back({detail::offset_km(proj, c.center, 10 * c.extent_km, 0), 50, 25e6});
    }
  }
}

/// Planted attributes of SIM `index`.
inline SyntheticSim plant_sim(const SyntheticDataset& ds, std::size_t index, const std::vector<double>& group_cum,
                              const std::vector<double>& home_cum, const std::vector<double>& work_cum) {
  const auto& c = ds.config;
  auto rng = detail::substream(c.seed, 2, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticSim s;
  std::uint64_t mixed = std::uniform_int_distribution<std::uint64_t>()(rng);
  s.sim_id = detail::hex_id('s', (mixed << 32) | (index & 0xFFFFFFFFull));  // low half keeps ids unique
  s.group = static_cast<std::uint32_t>(detail::pick_weighted(group_cum, rng));
  const auto& g = c.groups[s.group];
  s.home_site = static_cast<std::uint32_t>(detail::pick_weighted(home_cum, rng));
  const auto& home = ds.sites[s.home_site];
  s.home_cell = home.cells[std::uniform_int_distribution<std::size_t>(0, home.cells.size() - 1)(rng)];
  if (unit(rng) < g.worker_share) {
    std::uint32_t w;
    do w = static_cast<std::uint32_t>(detail::pick_weighted(work_cum, rng));
    while (w == s.home_site);
    s.work_site = w;
    const auto& ws = ds.sites[w];
    s.work_cell = ws.cells[std::uniform_int_distribution<std::size_t>(0, ws.cells.size() - 1)(rng)];
  }
  s.wake = static_cast<int>(std::lround(g.wake_mean + home.wake_offset + g.wake_sd * normal(rng)));
  s.bed = static_cast<int>(std::lround(g.bed_mean + g.bed_sd * normal(rng)));
  s.wake = std::clamp(s.wake, 0, kMinutesPerDay - 1);
  s.bed = std::clamp(std::max(s.bed, s.wake + 120), 0, kMinutesPerDay);
  s.holiday_wake = std::clamp(static_cast<int>(std::lround(s.wake + g.holiday_wake_shift)), 0, kMinutesPerDay - 1);
  s.holiday_bed =
      std::clamp(std::max(static_cast<int>(std::lround(s.bed + g.holiday_bed_shift)), s.holiday_wake + 120), 0, kMinutesPerDay);
  s.rate = g.rate_per_day * std::exp(g.rate_sigma * normal(rng) - 0.5 * g.rate_sigma * g.rate_sigma);

  // Device: phone price quantile tracks the home site's level.
  const std::size_t phones = c.ses.phone_models;
  auto pick_phone = [&] {
    double q = std::clamp(home.ses_level + c.ses.phone_noise * normal(rng), 0.0, 0.999999);
    return static_cast<std::uint32_t>(q * static_cast<double>(phones));
  };
  double roll = unit(rng);
  if (roll < c.ses.non_phone_fraction && c.ses.non_phone_models > 0)
    s.primary_tac = static_cast<std::uint32_t>(phones + std::uniform_int_distribution<std::size_t>(0, c.ses.non_phone_models - 1)(rng));
  else if (roll < c.ses.non_phone_fraction + c.ses.uncataloged_fraction)
    s.primary_tac = static_cast<std::uint32_t>(phones + c.ses.non_phone_models + std::uniform_int_distribution<int>(0, 3)(rng));
  else
    s.primary_tac = pick_phone();
  if (unit(rng) < c.ses.multi_device_fraction && c.days >= 4) {
    std::uint32_t other = pick_phone();
    if (other == s.primary_tac) other = (other + 1) % static_cast<std::uint32_t>(phones);
    s.secondary_tac = other;
    // Switch early (secondary dominates) or late (primary dominates).
    double f = unit(rng) < 0.5 ? 0.15 + 0.15 * unit(rng) : 0.70 + 0.15 * unit(rng);
    s.switch_day = std::max(1, static_cast<int>(f * c.days));
  }

  // Subscriber attributes; a share of SIMs has none of them.
  if (unit(rng) < c.ses.missing_attributes_fraction) {
    s.attributes = ",,,";
  } else {
    const char* customer = unit(rng) < 0.1 ? "business" : "consumer";
    const char* subscription = unit(rng) < 0.3 ? "prepaid" : "postpaid";
    int age = std::uniform_int_distribution<int>(18, 80)(rng);
    const char* gender = unit(rng) < 0.5 ? "F" : "M";
    s.attributes = fmt::format("{},{},{},{}", customer, subscription, age, gender);
  }
  return s;
}

/// The tac a SIM uses for most of the observation period.
inline std::uint32_t planted_dominant_tac(const SyntheticSim& s, int days) {
  if (!s.secondary_tac) return s.primary_tac;
  return s.switch_day * 2 >= days ? s.primary_tac : *s.secondary_tac;
}

/// Records of one SIM over the whole period, in generation order.
inline void generate_sim_records(const SyntheticDataset& ds, std::size_t index, const LogisticTable& logistic,
                                 std::vector<SyntheticRecord>& out) {
  const auto& c = ds.config;
  const auto& s = ds.sims[index];
  auto rng = detail::substream(c.seed, 3, index);
  TzOffset tz{c.tz_offset_minutes};
  Calendar cal = ds.calendar();
  DayProfile workday(s.wake, s.bed, logistic, c.night_level);
  DayProfile holiday(s.holiday_wake, s.holiday_bed, logistic, c.night_level);
  std::poisson_distribution<int> count(s.rate);
  std::uniform_int_distribution<int> slot(0, 59);
  std::optional<ShiftConfig> shift;
  if (s.work_site) shift = c.shifts[ds.sites[*s.work_site].shift];
  for (int d = 0; d < c.days; ++d) {
    DayNumber day = c.first_day + d;
    bool is_workday = cal.classify(day) == DayClass::workday;
    const DayProfile& profile = is_workday ? workday : holiday;
    std::uint32_t tac = s.secondary_tac && d >= s.switch_day ? *s.secondary_tac : s.primary_tac;
    int k = count(rng);
    for (int i = 0; i < k; ++i) {
      int bin = profile.sample_bin(rng);
      int second = bin * 600 + slot(rng) * 10;
      std::uint32_t cell = s.home_cell;
      if (shift && is_workday && second >= shift->start * 60 && second < shift->end * 60) cell = *s.work_cell;
      out.push_back({tz.midnight(day) + second, static_cast<std::uint32_t>(index), cell, tac});
    }
  }
}

inline SyntheticDataset generate(const ScenarioConfig& config, unsigned threads = 1) {
  validate(config);
  SyntheticDataset ds;
  ds.config = config;
  generate_world(ds);
  std::vector<double> group_cum, home_cum, work_cum;
  double run = 0;
  for (const auto& g : config.groups) group_cum.push_back(run += g.share);
  run = 0;
  for (const auto& s : ds.sites) home_cum.push_back(run += s.home_weight);
  run = 0;
  for (const auto& s : ds.sites) work_cum.push_back(run += s.work_weight);

  const std::size_t n = config.n_sims;
  ds.sims.resize(n);
  parallel_chunks(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) ds.sims[i] = plant_sim(ds, i, group_cum, home_cum, work_cum);
  });
  LogisticTable logistic(config.rise_width);
  std::vector<std::vector<SyntheticRecord>> parts(chunk_count(n, threads));
  parallel_chunks(n, threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) generate_sim_records(ds, i, logistic, parts[chunk]);
    std::sort(parts[chunk].begin(), parts[chunk].end());
  });
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  ds.records.reserve(total);
  for (auto& p : parts) {
    auto mid = ds.records.size();
    ds.records.insert(ds.records.end(), p.begin(), p.end());
    std::inplace_merge(ds.records.begin(), ds.records.begin() + static_cast<std::ptrdiff_t>(mid), ds.records.end());
    std::vector<SyntheticRecord>().swap(p);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Lower-median planted times of each site's inhabitants, in minutes.
struct SitePlanted {
  std::optional<double> wake_workday, wake_holiday, bed_workday, bed_holiday;
  std::size_t inhabitants = 0;
  std::size_t workers = 0;
};

inline std::vector<SitePlanted> planted_site_times(const SyntheticDataset& ds) {
  std::vector<std::vector<double>> ww(ds.sites.size()), wh(ds.sites.size()), bw(ds.sites.size()), bh(ds.sites.size());
  std::vector<SitePlanted> out(ds.sites.size());
  for (const auto& s : ds.sims) {
    ww[s.home_site].push_back(s.wake);
    wh[s.home_site].push_back(s.holiday_wake);
    bw[s.home_site].push_back(s.bed);
    bh[s.home_site].push_back(s.holiday_bed);
    ++out[s.home_site].inhabitants;
    if (s.work_site) ++out[*s.work_site].workers;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].wake_workday = lower_median(std::move(ww[i]));
    out[i].wake_holiday = lower_median(std::move(wh[i]));
    out[i].bed_workday = lower_median(std::move(bw[i]));
    out[i].bed_holiday = lower_median(std::move(bh[i]));
  }
  return out;
}

inline nlohmann::json ground_truth_json(const SyntheticDataset& ds) {
  auto planted = planted_site_times(ds);
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json sites = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.sites.size(); ++i) {
    const auto& s = ds.sites[i];
    const auto& shift = ds.config.shifts[s.shift];
    std::vector<std::string> cells;
    for (auto c : s.cells) cells.push_back(ds.cells[c].cell_id);
    sites.push_back({{"site_id", s.site_id},
                     {"cells", cells},
                     {"ses_level", s.ses_level},
                     {"price_per_sqm", s.price_per_sqm},
                     {"wake_offset", s.wake_offset},
                     {"work_start", shift.start},
                     {"work_end", shift.end},
                     {"inhabitants", planted[i].inhabitants},
                     {"workers", planted[i].workers},
                     {"wake_workday", opt(planted[i].wake_workday)},
                     {"wake_holiday", opt(planted[i].wake_holiday)},
                     {"bed_workday", opt(planted[i].bed_workday)},
                     {"bed_holiday", opt(planted[i].bed_holiday)}});
  }
  // Per-SIM truth in columnar form.
  nlohmann::json sims;
  auto& id = sims["sim_id"] = nlohmann::json::array();
  auto& group = sims["group"] = nlohmann::json::array();
  auto& home = sims["home_site"] = nlohmann::json::array();
  auto& home_cell = sims["home_cell"] = nlohmann::json::array();
  auto& work = sims["work_site"] = nlohmann::json::array();
  auto& work_cell = sims["work_cell"] = nlohmann::json::array();
  auto& wake = sims["wake"] = nlohmann::json::array();
  auto& bed = sims["bed"] = nlohmann::json::array();
  auto& dominant = sims["dominant_tac"] = nlohmann::json::array();
  auto& multi = sims["multi_device"] = nlohmann::json::array();
  for (const auto& s : ds.sims) {
    id.push_back(s.sim_id);
    group.push_back(ds.config.groups[s.group].name);
    home.push_back(ds.sites[s.home_site].site_id);
    home_cell.push_back(ds.cells[s.home_cell].cell_id);
    work.push_back(s.work_site ? nlohmann::json(ds.sites[*s.work_site].site_id) : nlohmann::json(nullptr));
    work_cell.push_back(s.work_cell ? nlohmann::json(ds.cells[*s.work_cell].cell_id) : nlohmann::json(nullptr));
    wake.push_back(s.wake);
    bed.push_back(s.bed);
    dominant.push_back(ds.tacs[planted_dominant_tac(s, ds.config.days)]);
    multi.push_back(s.secondary_tac.has_value());
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : ds.config.groups)
    groups.push_back({{"name", g.name},
                      {"wake_workday", g.wake_mean},
                      {"wake_holiday", g.wake_mean + g.holiday_wake_shift},
                      {"bed_workday", g.bed_mean},
                      {"bed_holiday", g.bed_mean + g.holiday_bed_shift},
                      {"ses_wake_gradient", ds.config.ses.wake_gradient}});
  return {{"scenario", to_json(ds.config)},
          {"records", ds.records.size()},
          {"groups", groups},
          {"sites", sites},
          {"sims", sims}};
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline void write_cdr_wide_csv(const SyntheticDataset& ds, const std::string& path) {
  const auto& c = ds.config;
  TzOffset tz{c.tz_offset_minutes};
  std::vector<std::string> dates;
  for (int d = 0; d <= c.days + 1; ++d) dates.push_back(format_date(c.first_day + d - 1));
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "sim_id,timestamp,cell_id,customer_type,subscription_type,age,gender,tac\n");
  for (const auto& r : ds.records) {
    const auto& s = ds.sims[r.sim];
    if (c.epoch_timestamps) {
      fmt::format_to(out, "{},{},", s.sim_id, r.timestamp);
    } else {
      int sec = tz.second_of_day(r.timestamp);
      const auto& date = dates[static_cast<std::size_t>(tz.day_of(r.timestamp) - c.first_day + 1)];
      fmt::format_to(out, "{},{}T{:02}:{:02}:{:02},", s.sim_id, date, sec / 3600, sec / 60 % 60, sec % 60);
    }
    fmt::format_to(out, "{},{},{}\n", ds.cells[r.cell].cell_id, s.attributes, ds.tacs[r.tac]);
    w.flush_if_large();
  }
  w.close();
}

inline void write_estate_ads_csv(std::span<const EstateAd> ads, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "lat,lon,floor_sqm,price_huf\n");
  for (const auto& a : ads) fmt::format_to(out, "{:.7f},{:.7f},{},{}\n", a.location.lat, a.location.lon, a.floor_sqm, a.price_huf);
  w.close();
}

inline void write_json_file(const nlohmann::json& j, const std::string& path, int indent = 2) {
  BufferedWriter w(path);
  auto text = j.dump(indent);
  w.buf().append(text.data(), text.data() + text.size());
  w.buf().push_back('\n');
  w.close();
}

/// Writes cdr_wide.csv, cells.csv, calendar.json, estate_ads.csv,
/// device_catalog.csv and ground_truth.json into `dir`.
inline void write_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());
  write_cdr_wide_csv(ds, (dir / "cdr_wide.csv").string());
  write_cells_csv(ds.cells, (dir / "cells.csv").string());
  write_json_file(to_json(ds.calendar()), (dir / "calendar.json").string());
  write_estate_ads_csv(ds.ads, (dir / "estate_ads.csv").string());
  write_device_catalog_csv(ds.catalog, (dir / "device_catalog.csv").string());
  write_json_file(ground_truth_json(ds), (dir / "ground_truth.json").string(), -1);
}

/// Feeds the dataset's records straight into an ingest accumulator, as if
/// cdr_wide.csv had been parsed.
inline void feed(const SyntheticDataset& ds, IngestAccumulator& acc) {
  std::vector<std::optional<SubscriberInfo>> subs(ds.sims.size());
  for (std::size_t i = 0; i < ds.sims.size(); ++i) {
    const auto& a = ds.sims[i].attributes;
    if (a == ",,,") continue;
    std::vector<std::string_view> f;
    split_csv(a, f);
    SubscriberInfo info;
    info.customer_type = f[0] == "business" ? CustomerType::business : CustomerType::consumer;
    info.subscription_type = f[1] == "prepaid" ? SubscriptionType::prepaid : SubscriptionType::postpaid;
    info.age = parse_number<int>(f[2]);
    info.gender = f[3] == "F" ? Gender::female : Gender::male;
    subs[i] = info;
  }
  for (const auto& r : ds.records) {
    CdrRowView v;
    v.sim_id = ds.sims[r.sim].sim_id;
    v.timestamp = r.timestamp;
    v.cell_id = ds.cells[r.cell].cell_id;
    if (const auto& s = subs[r.sim]) {
      v.has_subscriber = true;
      v.customer_type = s->customer_type;
      v.subscription_type = s->subscription_type;
      v.age = s->age;
      v.gender = s->gender;
    }
    v.tac = ds.tacs[r.tac];
    acc.add(v);
  }
}

}  // namespace chrono_cdr
