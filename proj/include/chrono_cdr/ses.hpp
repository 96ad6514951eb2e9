#pragma once

// Socioeconomic indicators: home-site property price per m², price and
// relative age of the dominant phone, their categories and wake-up by
// category matrices.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chrono_cdr/common.hpp"
#include "chrono_cdr/geo.hpp"
#include "chrono_cdr/ingest.hpp"
#include "chrono_cdr/locations.hpp"

namespace chrono_cdr {

// ---------------------------------------------------------------------------
// Property prices
// ---------------------------------------------------------------------------

struct EstateAd {
  LatLon location;
  double floor_sqm = 0;
  double price_huf = 0;

  double price_per_sqm() const { return price_huf / floor_sqm; }
};

struct EstateAdsFile {
  std::vector<EstateAd> ads;
  std::uint64_t invalid = 0;  // non-positive area or price, bad coordinates
};

inline EstateAdsFile read_estate_ads_csv(const std::string& path) {
  EstateAdsFile out;
  read_csv(path, {"lat", "lon", "floor_sqm", "price_huf"}, [&](const auto& f, std::size_t) {
    EstateAd ad{{require_number<double>(f[0], "lat"), require_number<double>(f[1], "lon")},
                require_number<double>(f[2], "floor_sqm"), require_number<double>(f[3], "price_huf")};
    if (!valid(ad.location) || !(ad.floor_sqm > 0) || !(ad.price_huf > 0)) {
      ++out.invalid;
      return;
    }
    out.ads.push_back(ad);
  });
  return out;
}

struct SitePrices {
  std::vector<std::optional<double>> median_per_sqm;  // indexed like Tessellation::sites()
  std::vector<std::size_t> ads;
  std::uint64_t outside = 0;  // ads outside the bounding box
};

/// Lower median of price per m² over the ads located in each site.
inline SitePrices site_price(std::span<const EstateAd> ads, const Tessellation& tess) {
  std::vector<std::vector<double>> per_site(tess.size());
  SitePrices out;
  for (const auto& ad : ads) {
    auto s = tess.locate(ad.location);
    if (!s) {
      ++out.outside;
      continue;
    }
    per_site[*s].push_back(ad.price_per_sqm());
  }
  for (auto& v : per_site) {
    out.ads.push_back(v.size());
    out.median_per_sqm.push_back(lower_median(std::move(v)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Devices
// ---------------------------------------------------------------------------

/// Months since year 0, so differences are month counts.
using MonthIndex = int;

inline MonthIndex month_index(int year, int month) { return year * 12 + (month - 1); }

struct DeviceCatalogEntry {
  std::string tac;
  std::string vendor;
  std::string model;
  MonthIndex release = 0;
  std::optional<double> price_eur;
  bool is_phone = true;
};

/// Catalog sorted by tac.
class DeviceCatalog {
 public:
  DeviceCatalog() = default;
  explicit DeviceCatalog(std::vector<DeviceCatalogEntry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.tac < b.tac; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!detail::is_tac(entries_[i].tac)) throw_validation("device catalog: tac '" + entries_[i].tac + "' is not 8 digits");
      if (i && entries_[i].tac == entries_[i - 1].tac) throw_validation("device catalog: duplicate tac " + entries_[i].tac);
    }
  }

  const DeviceCatalogEntry* find(std::string_view tac) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), tac,
                               [](const DeviceCatalogEntry& e, std::string_view key) { return e.tac < key; });
    if (it == entries_.end() || it->tac != tac) return nullptr;
    return &*it;
  }

  std::span<const DeviceCatalogEntry> entries() const { return entries_; }

 private:
  std::vector<DeviceCatalogEntry> entries_;
};

inline std::optional<MonthIndex> parse_release(std::string_view s) {
  if (s.size() >= 7) {
    if (auto ym = parse_year_month(s.substr(0, 7)); ym && (s.size() == 7 || parse_date(s)))
      return month_index(ym->first, ym->second);
  }
  return std::nullopt;
}

inline DeviceCatalog read_device_catalog_csv(const std::string& path) {
  std::vector<DeviceCatalogEntry> entries;
  read_csv(path, {"tac", "vendor", "model", "release_date", "price_eur", "is_phone"},
           [&](const auto& f, std::size_t line) {
             DeviceCatalogEntry e{std::string(f[0]), std::string(f[1]), std::string(f[2]), 0, std::nullopt, true};
             auto release = parse_release(f[3]);
             if (!release) throw_validation(fmt::format("{}:{}: invalid release_date '{}'", path, line, f[3]));
             e.release = *release;
             if (!f[4].empty()) e.price_eur = require_number<double>(f[4], "price_eur");
             if (f[5] == "true" || f[5] == "1") e.is_phone = true;
             else if (f[5] == "false" || f[5] == "0") e.is_phone = false;
             else throw_validation(fmt::format("{}:{}: is_phone must be true/false", path, line));
             entries.push_back(std::move(e));
           });
  return DeviceCatalog(std::move(entries));
}

inline void write_device_catalog_csv(std::span<const DeviceCatalogEntry> entries, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "tac,vendor,model,release_date,price_eur,is_phone\n");
  for (const auto& e : entries)
    fmt::format_to(out, "{},{},{},{:04}-{:02},{},{}\n", e.tac, e.vendor, e.model, e.release / 12, e.release % 12 + 1,
                   e.price_eur ? fmt::format("{:.2f}", *e.price_eur) : "", e.is_phone ? "true" : "false");
  w.close();
}

enum class DeviceStatus : std::uint8_t { phone, non_phone, unresolved, no_device };

inline std::string_view to_string(DeviceStatus s) {
  switch (s) {
    case DeviceStatus::phone: return "phone";
    case DeviceStatus::non_phone: return "non_phone";
    case DeviceStatus::unresolved: return "unresolved";
    case DeviceStatus::no_device: return "no_device";
  }
  return "?";
}

struct DominantDevice {
  DeviceStatus status = DeviceStatus::no_device;
  std::string tac;
  const DeviceCatalogEntry* entry = nullptr;  // set for phone and non_phone
};

/// The tac with the longest total interval duration (ties to the smaller tac)
/// resolved against the catalog.
inline DominantDevice dominant_device(std::span<const DeviceInterval> intervals, const DeviceCatalog& catalog) {
  std::map<std::string_view, Epoch> duration;
  for (const auto& iv : intervals) duration[iv.tac] += iv.last_seen - iv.first_seen;
  DominantDevice out;
  if (duration.empty()) return out;
  auto best = duration.begin();
  for (auto it = duration.begin(); it != duration.end(); ++it)
    if (it->second > best->second) best = it;
  out.tac = std::string(best->first);
  out.entry = catalog.find(out.tac);
  out.status = !out.entry ? DeviceStatus::unresolved : out.entry->is_phone ? DeviceStatus::phone : DeviceStatus::non_phone;
  return out;
}

// ---------------------------------------------------------------------------
// Profiles and categories
// ---------------------------------------------------------------------------

struct SesProfile {
  std::uint32_t sim = 0;
  std::optional<std::size_t> home_site;
  std::optional<double> home_price_per_sqm;
  DeviceStatus device = DeviceStatus::no_device;
  std::string tac;
  std::optional<double> phone_price_eur;
  std::optional<double> phone_age_years;
};

struct ProfileInputs {
  const ActivityTable& table;
  std::span<const LocationAssignment> locations;
  const Tessellation& tessellation;
  const SitePrices& prices;
  std::span<const DeviceInterval> devices;  // sorted by sim_id
  const DeviceCatalog& catalog;
  MonthIndex dataset_month = 0;
  std::uint32_t min_support = 5;
};

struct ProfileResult {
  std::vector<SesProfile> profiles;  // index == SIM index
  std::uint64_t future_release = 0;  // phones released after the dataset month
};

inline ProfileResult build_profiles(const ProfileInputs& in) {
  ProfileResult out;
  out.profiles.resize(in.table.sim_count());
  for (std::size_t s = 0; s < out.profiles.size(); ++s) {
    auto& p = out.profiles[s];
    p.sim = static_cast<std::uint32_t>(s);
    if (s < in.locations.size())
      if (auto cell = accepted_home(in.locations[s], in.min_support)) {
        p.home_site = in.tessellation.site_of_cell(in.table.cell_ids[*cell]);
        if (p.home_site) p.home_price_per_sqm = in.prices.median_per_sqm[*p.home_site];
      }
  }
  std::size_t i = 0;
  while (i < in.devices.size()) {
    std::size_t j = i;
    while (j < in.devices.size() && in.devices[j].sim_id == in.devices[i].sim_id) ++j;
    if (auto sim = in.table.find_sim(in.devices[i].sim_id)) {
      auto dev = dominant_device(in.devices.subspan(i, j - i), in.catalog);
      auto& p = out.profiles[*sim];
      p.device = dev.status;
      p.tac = dev.tac;
      if (dev.status == DeviceStatus::phone) {
        p.phone_price_eur = dev.entry->price_eur;
        int months = in.dataset_month - dev.entry->release;
        if (months >= 0) p.phone_age_years = months / 12.0;
        else ++out.future_release;
      }
    }
    i = j;
  }
  return out;
}

/// Half-open bins [edges[k], edges[k+1]).
struct Bins {
  std::string name;
  std::vector<double> edges;
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
  std::optional<std::size_t> bin_of(double v) const {
    if (edges.size() < 2 || v < edges.front() || v >= edges.back()) return std::nullopt;
    auto it = std::upper_bound(edges.begin(), edges.end(), v);
    return static_cast<std::size_t>(it - edges.begin()) - 1;
  }
};

inline Bins make_bins(std::string name, std::vector<double> edges, std::vector<std::string> labels) {
  if (edges.size() < 2 || labels.size() + 1 != edges.size()) throw_validation("bins " + name + ": need n+1 edges for n labels");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw_validation("bins " + name + ": edges must be strictly increasing");
  return {std::move(name), std::move(edges), std::move(labels)};
}

inline Bins property_bins() {
  return make_bins("property_huf_per_sqm", {300e3, 500e3, 700e3, 900e3, 1300e3},
                   {"0.3-0.5", "0.5-0.7", "0.7-0.9", "0.9-1.3"});
}

inline Bins phone_price_bins() {
  return make_bins("phone_price_eur", {0, 150, 300, 450, 600, 750}, {"0-150", "150-300", "300-450", "450-600", "600-750"});
}

inline Bins phone_age_bins() {
  return make_bins("phone_age_years", {0, 1, 2, 3, 4, 5}, {"0-1", "1-2", "2-3", "3-4", "4-5"});
}

struct SesCategories {
  std::optional<std::size_t> property;
  std::optional<std::size_t> price;
  std::optional<std::size_t> age;
};

struct CategorizeResult {
  std::vector<SesCategories> categories;  // parallel to the profiles
  std::uint64_t property_uncategorized = 0;  // value present but outside every bin
  std::uint64_t price_uncategorized = 0;
  std::uint64_t age_uncategorized = 0;
};

inline CategorizeResult categorize(std::span<const SesProfile> profiles, const Bins& property, const Bins& price,
                                   const Bins& age) {
  CategorizeResult out;
  out.categories.reserve(profiles.size());
  auto place = [](const std::optional<double>& v, const Bins& bins, std::uint64_t& missed) {
    if (!v) return std::optional<std::size_t>{};
    auto b = bins.bin_of(*v);
    if (!b) ++missed;
    return b;
  };
  for (const auto& p : profiles)
    out.categories.push_back({place(p.home_price_per_sqm, property, out.property_uncategorized),
                              place(p.phone_price_eur, price, out.price_uncategorized),
                              place(p.phone_age_years, age, out.age_uncategorized)});
  return out;
}

struct CategoryMatrix {
  std::string row_name, col_name;
  std::vector<std::string> row_labels, col_labels;
  std::vector<std::vector<std::optional<double>>> median_wake;  // [row][col]
  std::vector<std::vector<std::uint64_t>> count;
  std::vector<std::optional<double>> row_median;  // over every categorized SIM of the row
  std::vector<std::optional<double>> col_median;

  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& r : count)
      for (auto c : r) n += c;
    return n;
  }
};

enum class ColumnIndicator { phone_price, phone_age };

/// Median wake-up per (property bin, phone bin). A SIM's wake-up is the value
/// of its home site taken from `site_wake` (indexed like the tessellation
/// sites); SIMs lacking any of the three are left out.
inline CategoryMatrix wakeup_by_category(std::span<const SesProfile> profiles, std::span<const SesCategories> cats,
                                         std::span<const std::optional<double>> site_wake, const Bins& rows,
                                         const Bins& cols, ColumnIndicator which) {
  if (profiles.size() != cats.size()) throw_validation("wakeup_by_category: profiles and categories differ in size");
  std::vector<std::vector<std::vector<double>>> cells(rows.size(), std::vector<std::vector<double>>(cols.size()));
  std::vector<std::vector<double>> by_row(rows.size()), by_col(cols.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    auto r = cats[i].property;
    auto c = which == ColumnIndicator::phone_price ? cats[i].price : cats[i].age;
    if (!r || !c || !p.home_site || *p.home_site >= site_wake.size() || !site_wake[*p.home_site]) continue;
    double w = *site_wake[*p.home_site];
    cells[*r][*c].push_back(w);
    by_row[*r].push_back(w);
    by_col[*c].push_back(w);
  }
  CategoryMatrix m;
  m.row_name = rows.name;
  m.col_name = cols.name;
  m.row_labels = rows.labels;
  m.col_labels = cols.labels;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    m.median_wake.emplace_back();
    m.count.emplace_back();
    for (std::size_t c = 0; c < cols.size(); ++c) {
      m.count.back().push_back(cells[r][c].size());
      m.median_wake.back().push_back(lower_median(std::move(cells[r][c])));
    }
    m.row_median.push_back(lower_median(std::move(by_row[r])));
  }
  for (auto& v : by_col) m.col_median.push_back(lower_median(std::move(v)));
  return m;
}

/// Kendall's τ-b between two equally long samples; nullopt when either
/// sample is constant or fewer than two pairs are given.
inline std::optional<double> kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw_validation("kendall_tau: sample sizes differ");
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) ++ties_x;
      else if (dy == 0) ++ties_y;
      else if ((dx > 0) == (dy > 0)) ++concordant;
      else ++discordant;
    }
  double n1 = static_cast<double>(concordant + discordant + ties_x);
  double n2 = static_cast<double>(concordant + discordant + ties_y);
  if (n1 == 0 || n2 == 0) return std::nullopt;
  return static_cast<double>(concordant - discordant) / std::sqrt(n1 * n2);
}

/// τ between bin index and the medians present in `medians`.
inline std::optional<double> trend_tau(std::span<const std::optional<double>> medians) {
  std::vector<double> idx, val;
  for (std::size_t i = 0; i < medians.size(); ++i)
    if (medians[i]) {
      idx.push_back(static_cast<double>(i));
      val.push_back(*medians[i]);
    }
  if (idx.size() < 2) return std::nullopt;
  return kendall_tau(idx, val);
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

inline std::string fmt_opt(const std::optional<double>& v, int precision = 3) {
  return v ? fmt::format("{:.{}f}", *v, precision) : std::string();
}

inline void write_ses_profiles_csv(const ActivityTable& table, const Tessellation& tess,
                                   std::span<const SesProfile> profiles, std::span<const SesCategories> cats,
                                   const Bins& property, const Bins& price, const Bins& age, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out,
                 "sim_id,home_site,home_price_per_sqm,device_status,tac,phone_price_eur,phone_age_years,"
                 "property_bin,price_bin,age_bin\n");
  auto label = [](const Bins& b, std::optional<std::size_t> i) { return i ? b.labels[*i] : std::string(); };
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    fmt::format_to(out, "{},{},{},{},{},{},{},{},{},{}\n", table.sim_ids[p.sim],
                   p.home_site ? tess.sites()[*p.home_site].site_id : "", fmt_opt(p.home_price_per_sqm, 1),
                   to_string(p.device), p.tac, fmt_opt(p.phone_price_eur, 2), fmt_opt(p.phone_age_years, 4),
                   label(property, cats[i].property), label(price, cats[i].price), label(age, cats[i].age));
    w.flush_if_large();
  }
  w.close();
}

inline void write_category_matrix_csv(const CategoryMatrix& m, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "row_bin,col_bin,median_wake_min,count\n");
  for (std::size_t r = 0; r < m.row_labels.size(); ++r)
    for (std::size_t c = 0; c < m.col_labels.size(); ++c)
      fmt::format_to(out, "{},{},{},{}\n", m.row_labels[r], m.col_labels[c], fmt_opt(m.median_wake[r][c]), m.count[r][c]);
  w.close();
}

inline nlohmann::json to_json(const CategoryMatrix& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"rows", m.row_name}, {"cols", m.col_name}, {"row_labels", m.row_labels}, {"col_labels", m.col_labels}};
  j["count"] = m.count;
  auto& med = j["median_wake_min"] = nlohmann::json::array();
  for (const auto& r : m.median_wake) {
    auto row = nlohmann::json::array();
    for (const auto& v : r) row.push_back(opt(v));
    med.push_back(row);
  }
  auto& rm = j["row_median_wake_min"] = nlohmann::json::array();
  for (const auto& v : m.row_median) rm.push_back(opt(v));
  auto& cm = j["col_median_wake_min"] = nlohmann::json::array();
  for (const auto& v : m.col_median) cm.push_back(opt(v));
  return j;
}

}  // namespace chrono_cdr
