#pragma once

// Cell → site merging, Voronoi tessellation over site locations, point
// location and geodesic distances.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "chrono_cdr/common.hpp"

namespace chrono_cdr {

inline constexpr double kEarthRadiusKm = 6371.0088;

struct LatLon {
  double lat = 0;
  double lon = 0;

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

/// Planar coordinates in km (x east, y north).
struct Point2 {
  double x = 0;
  double y = 0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline bool valid(LatLon p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90 && p.lat <= 90 &&
         p.lon >= -180 && p.lon <= 180;
}

inline double to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

/// Great-circle (haversine) distance.
inline double distance_km(LatLon a, LatLon b) {
  double phi1 = to_radians(a.lat), phi2 = to_radians(b.lat);
  double dphi = phi2 - phi1;
  double dlambda = to_radians(b.lon - a.lon);
  double s1 = std::sin(dphi / 2), s2 = std::sin(dlambda / 2);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2 * kEarthRadiusKm * std::asin(std::sqrt(std::min(1.0, h)));
}

/// Equirectangular projection around a fixed origin. Exact inverse; a
/// lat/lon box maps to an axis-aligned rectangle.
class LocalProjection {
 public:
  LocalProjection() = default;
  explicit LocalProjection(LatLon origin) : origin_(origin), cos_lat_(std::cos(to_radians(origin.lat))) {}

  LatLon origin() const { return origin_; }

  Point2 forward(LatLon p) const {
    return {kEarthRadiusKm * to_radians(p.lon - origin_.lon) * cos_lat_,
            kEarthRadiusKm * to_radians(p.lat - origin_.lat)};
  }

  LatLon inverse(Point2 p) const {
    constexpr double kDeg = 180.0 / std::numbers::pi;
    return {origin_.lat + p.y / kEarthRadiusKm * kDeg, origin_.lon + p.x / (kEarthRadiusKm * cos_lat_) * kDeg};
  }

 private:
  LatLon origin_{};
  double cos_lat_ = 1.0;
};

struct BoundingBox {
  double min_lat = 0, min_lon = 0, max_lat = 0, max_lon = 0;

  bool contains(LatLon p) const {
    return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
  }
  bool strictly_contains(LatLon p) const {
    return p.lat > min_lat && p.lat < max_lat && p.lon > min_lon && p.lon < max_lon;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Bounding box of `points` padded by `pad_km` on every side.
inline BoundingBox padded_box(std::span<const LatLon> points, double pad_km) {
  if (points.empty()) throw_validation("cannot build a bounding box from zero points");
  BoundingBox box{points[0].lat, points[0].lon, points[0].lat, points[0].lon};
  for (auto p : points) {
    box.min_lat = std::min(box.min_lat, p.lat);
    box.max_lat = std::max(box.max_lat, p.lat);
    box.min_lon = std::min(box.min_lon, p.lon);
    box.max_lon = std::max(box.max_lon, p.lon);
  }
  double pad_lat = pad_km / kEarthRadiusKm * 180.0 / std::numbers::pi;
  double mid = to_radians((box.min_lat + box.max_lat) / 2);
  double pad_lon = pad_lat / std::cos(mid);
  box.min_lat -= pad_lat;
  box.max_lat += pad_lat;
  box.min_lon -= pad_lon;
  box.max_lon += pad_lon;
  return box;
}

struct CellInfo {
  std::string cell_id;
  LatLon centroid;
  LatLon base_station;
};

struct SiteGeometry {
  std::string site_id;  // smallest member cell_id
  LatLon location;      // base station shared by the member cells
  std::vector<std::string> member_cells;  // sorted
  std::vector<LatLon> polygon;            // open ring, counter-clockwise; empty until tessellated
};

// ---------------------------------------------------------------------------
// merge_cells_to_sites
// ---------------------------------------------------------------------------

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Groups cells by base-station location. Two stations are identified when
/// they lie within `tolerance_m` of each other (transitively). The site takes
/// the id and station location of its lexicographically smallest cell.
inline std::vector<SiteGeometry> merge_cells_to_sites(std::span<const CellInfo> cells, double tolerance_m = 0.0) {
  if (cells.empty()) throw_validation("merge_cells_to_sites: no cells");
  if (tolerance_m < 0) throw_validation("merge_cells_to_sites: negative tolerance");
  for (const auto& c : cells)
    if (c.cell_id.empty() || !valid(c.base_station) || !valid(c.centroid))
      throw_validation("merge_cells_to_sites: invalid cell '" + c.cell_id + "'");

  const std::size_t n = cells.size();
  detail::DisjointSets sets(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    const auto& pa = cells[a].base_station;
    const auto& pb = cells[b].base_station;
    return pa.lat != pb.lat ? pa.lat < pb.lat : pa.lon < pb.lon;
  });
  if (tolerance_m == 0.0) {
    for (std::size_t i = 1; i < n; ++i)
      if (cells[order[i]].base_station == cells[order[i - 1]].base_station) sets.unite(order[i], order[i - 1]);
  } else {
    // Latitude sweep: only pairs within the tolerance band in latitude can
    // be within tolerance in distance.
    double band_deg = tolerance_m / 1000.0 / kEarthRadiusKm * 180.0 / std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto& a = cells[order[i]].base_station;
        const auto& b = cells[order[j]].base_station;
        if (b.lat - a.lat > band_deg) break;
        if (distance_km(a, b) * 1000.0 <= tolerance_m) sets.unite(order[i], order[j]);
      }
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[sets.find(i)].push_back(i);
  std::vector<SiteGeometry> sites;
  sites.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end(), [&](auto a, auto b) { return cells[a].cell_id < cells[b].cell_id; });
    SiteGeometry site;
    site.site_id = cells[members.front()].cell_id;
    site.location = cells[members.front()].base_station;
    for (auto m : members) site.member_cells.push_back(cells[m].cell_id);
    site.member_cells.erase(std::unique(site.member_cells.begin(), site.member_cells.end()), site.member_cells.end());
    sites.push_back(std::move(site));
  }
  std::sort(sites.begin(), sites.end(), [](const auto& a, const auto& b) { return a.site_id < b.site_id; });
  return sites;
}

// ---------------------------------------------------------------------------
// Planar polygon helpers
// ---------------------------------------------------------------------------

/// Keeps the part of convex `poly` where a·p <= b (Sutherland–Hodgman step).
inline std::vector<Point2> clip_half_plane(const std::vector<Point2>& poly, Point2 a, double b) {
  std::vector<Point2> out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 1);
  auto side = [&](Point2 p) { return a.x * p.x + a.y * p.y - b; };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    Point2 cur = poly[i];
    Point2 nxt = poly[(i + 1) % poly.size()];
    double sc = side(cur), sn = side(nxt);
    if (sc <= 0) out.push_back(cur);
    if ((sc < 0 && sn > 0) || (sc > 0 && sn < 0)) {
      double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

inline double polygon_area(std::span<const Point2> poly) {
  double twice = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return twice / 2;
}

/// Even-odd point-in-polygon test.
inline bool point_in_polygon(Point2 p, std::span<const Point2> poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

// ---------------------------------------------------------------------------
// Tessellation
// ---------------------------------------------------------------------------

/// Voronoi tessellation of sites clipped to a bounding box, built in a local
/// equirectangular projection centred on the mean site location. Immutable
/// after construction; concurrent queries are safe.
class Tessellation {
 public:
  Tessellation() = default;

  const std::vector<SiteGeometry>& sites() const { return sites_; }
  std::size_t size() const { return sites_.size(); }
  const BoundingBox& box() const { return box_; }
  const LocalProjection& projection() const { return projection_; }
  std::span<const Point2> planar_polygon(std::size_t site) const { return planar_[site]; }
  Point2 planar_location(std::size_t site) const { return seeds_[site]; }

  std::optional<std::size_t> site_of_cell(std::string_view cell_id) const {
    auto it = cell_to_site_.find(std::string(cell_id));
    if (it == cell_to_site_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_site(std::string_view site_id) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), site_id,
                               [](const SiteGeometry& s, std::string_view id) { return s.site_id < id; });
    if (it == sites_.end() || it->site_id != site_id) return std::nullopt;
    return static_cast<std::size_t>(it - sites_.begin());
  }

  /// Containing site of `p`; nullopt when p lies outside the box. Points
  /// equidistant from several sites resolve to the smallest site_id.
  std::optional<std::size_t> locate(LatLon p) const {
    if (!box_.contains(p)) return std::nullopt;
    Point2 q = projection_.forward(p);
    std::size_t gx = grid_coord(q.x, planar_box_min_.x, cell_w_);
    std::size_t gy = grid_coord(q.y, planar_box_min_.y, cell_h_);
    const auto& candidates = grid_[gy * grid_n_ + gx];
    std::optional<std::size_t> best;
    double best_d = 0;
    for (std::size_t s : candidates) {
      double dx = q.x - seeds_[s].x, dy = q.y - seeds_[s].y;
      double d = dx * dx + dy * dy;
      if (!best) {
        best = s;
        best_d = d;
        continue;
      }
      double tol = tie_tolerance(std::min(d, best_d));
      if (d < best_d - tol || (std::abs(d - best_d) <= tol && s < *best)) {
        best = s;
        best_d = d;
      }
    }
    return best;
  }

  friend Tessellation build_voronoi(std::vector<SiteGeometry> sites, const BoundingBox& box);

 private:
  static double tie_tolerance(double d) { return 1e-9 * std::max(d, 1e-12); }

  std::size_t grid_coord(double v, double lo, double w) const {
    double t = std::floor((v - lo) / w);
    if (t < 0) return 0;
    return std::min(static_cast<std::size_t>(t), grid_n_ - 1);
  }

  std::vector<SiteGeometry> sites_;
  BoundingBox box_{};
  LocalProjection projection_;
  std::vector<Point2> seeds_;
  std::vector<std::vector<Point2>> planar_;
  std::unordered_map<std::string, std::size_t> cell_to_site_;
  Point2 planar_box_min_{}, planar_box_max_{};
  std::size_t grid_n_ = 1;
  double cell_w_ = 1, cell_h_ = 1;
  std::vector<std::vector<std::size_t>> grid_;
};

/// Mean of the site locations; origin of the local projection.
inline LatLon projection_origin(std::span<const SiteGeometry> sites) {
  double lat = 0, lon = 0;
  for (const auto& s : sites) {
    lat += s.location.lat;
    lon += s.location.lon;
  }
  return {lat / static_cast<double>(sites.size()), lon / static_cast<double>(sites.size())};
}

/// Voronoi polygons of `sites` clipped to `box`. Sites are re-sorted by
/// site_id. Every site must lie strictly inside the box and no two may
/// share a location.
inline Tessellation build_voronoi(std::vector<SiteGeometry> sites, const BoundingBox& box) {
  if (sites.empty()) throw_validation("build_voronoi: no sites");
  if (!(box.min_lat < box.max_lat && box.min_lon < box.max_lon)) throw_validation("build_voronoi: empty bounding box");
  std::sort(sites.begin(), sites.end(), [](const auto& a, const auto& b) { return a.site_id < b.site_id; });
  for (std::size_t i = 1; i < sites.size(); ++i)
    if (sites[i].site_id == sites[i - 1].site_id) throw_validation("build_voronoi: duplicate site_id " + sites[i].site_id);
  for (const auto& s : sites)
    if (!box.strictly_contains(s.location))
      throw_validation("build_voronoi: site " + s.site_id + " is not strictly inside the bounding box");
  {
    std::vector<std::size_t> idx(sites.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
      const auto& pa = sites[a].location;
      const auto& pb = sites[b].location;
      return pa.lat != pb.lat ? pa.lat < pb.lat : pa.lon < pb.lon;
    });
    for (std::size_t i = 1; i < idx.size(); ++i)
      if (sites[idx[i]].location == sites[idx[i - 1]].location)
        throw_validation("build_voronoi: duplicate site location for " + sites[idx[i - 1]].site_id + " and " +
                         sites[idx[i]].site_id);
  }

  Tessellation t;
  t.box_ = box;
  t.projection_ = LocalProjection(projection_origin(sites));
  Point2 lo = t.projection_.forward({box.min_lat, box.min_lon});
  Point2 hi = t.projection_.forward({box.max_lat, box.max_lon});
  t.planar_box_min_ = lo;
  t.planar_box_max_ = hi;
  const std::vector<Point2> rect{{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}};

  const std::size_t n = sites.size();
  t.seeds_.reserve(n);
  for (const auto& s : sites) t.seeds_.push_back(t.projection_.forward(s.location));

  // Clip the box by the bisector half-plane of every other site, nearest
  // first so the polygon shrinks quickly; once a site is farther than twice
  // the polygon's circumradius it cannot cut the cell any more.
  t.planar_.resize(n);
  std::vector<std::size_t> others(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point2 s = t.seeds_[i];
    std::iota(others.begin(), others.end(), std::size_t{0});
    auto dist2 = [&](std::size_t j) {
      double dx = t.seeds_[j].x - s.x, dy = t.seeds_[j].y - s.y;
      return dx * dx + dy * dy;
    };
    std::sort(others.begin(), others.end(), [&](auto a, auto b) { return dist2(a) < dist2(b); });
    std::vector<Point2> poly = rect;
    for (std::size_t j : others) {
      if (j == i) continue;
      double radius2 = 0;
      for (auto p : poly) radius2 = std::max(radius2, (p.x - s.x) * (p.x - s.x) + (p.y - s.y) * (p.y - s.y));
      if (dist2(j) > 4 * radius2) break;
      Point2 q = t.seeds_[j];
      Point2 a{q.x - s.x, q.y - s.y};
      double b = (q.x * q.x + q.y * q.y - s.x * s.x - s.y * s.y) / 2;
      poly = clip_half_plane(poly, a, b);
    }
    t.planar_[i] = std::move(poly);
    sites[i].polygon.clear();
    for (auto p : t.planar_[i]) sites[i].polygon.push_back(t.projection_.inverse(p));
  }

  for (std::size_t i = 0; i < n; ++i)
    for (const auto& c : sites[i].member_cells) t.cell_to_site_[c] = i;

  // Uniform grid over the box; each bucket lists the sites whose polygon
  // bounding box (slightly padded) overlaps it.
  t.grid_n_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))) * 2);
  t.cell_w_ = (hi.x - lo.x) / static_cast<double>(t.grid_n_);
  t.cell_h_ = (hi.y - lo.y) / static_cast<double>(t.grid_n_);
  t.grid_.assign(t.grid_n_ * t.grid_n_, {});
  constexpr double kPad = 1e-6;
  for (std::size_t i = 0; i < n; ++i) {
    double x0 = hi.x, x1 = lo.x, y0 = hi.y, y1 = lo.y;
    for (auto p : t.planar_[i]) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    std::size_t gx0 = t.grid_coord(x0 - kPad, lo.x, t.cell_w_), gx1 = t.grid_coord(x1 + kPad, lo.x, t.cell_w_);
    std::size_t gy0 = t.grid_coord(y0 - kPad, lo.y, t.cell_h_), gy1 = t.grid_coord(y1 + kPad, lo.y, t.cell_h_);
    for (std::size_t gy = gy0; gy <= gy1; ++gy)
      for (std::size_t gx = gx0; gx <= gx1; ++gx) t.grid_[gy * t.grid_n_ + gx].push_back(i);
  }
  t.sites_ = std::move(sites);
  return t;
}

// ---------------------------------------------------------------------------
// I/O
// ---------------------------------------------------------------------------

inline std::vector<CellInfo> read_cells_csv(const std::string& path) {
  std::vector<CellInfo> cells;
  read_csv(path, {"cell_id", "centroid_lat", "centroid_lon", "station_lat", "station_lon"},
           [&](const auto& f, std::size_t line) {
             CellInfo c;
             c.cell_id = std::string(f[0]);
             c.centroid = {require_number<double>(f[1], "centroid_lat"), require_number<double>(f[2], "centroid_lon")};
             c.base_station = {require_number<double>(f[3], "station_lat"), require_number<double>(f[4], "station_lon")};
             if (c.cell_id.empty() || !valid(c.centroid) || !valid(c.base_station))
               throw_validation(fmt::format("{}:{}: invalid cell row", path, line));
             cells.push_back(std::move(c));
           });
  return cells;
}

inline void write_cells_csv(std::span<const CellInfo> cells, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "cell_id,centroid_lat,centroid_lon,station_lat,station_lon\n");
  for (const auto& c : cells)
    fmt::format_to(out, "{},{:.7f},{:.7f},{:.7f},{:.7f}\n", c.cell_id, c.centroid.lat, c.centroid.lon,
                   c.base_station.lat, c.base_station.lon);
  w.close();
}

/// GeoJSON FeatureCollection; coordinates are [lon, lat] and each ring is
/// closed. The collection-level bbox records the clipping box so the
/// tessellation can be rebuilt exactly.
inline nlohmann::json to_geojson(const Tessellation& t) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& s : t.sites()) {
    nlohmann::json ring = nlohmann::json::array();
    for (auto p : s.polygon) ring.push_back({p.lon, p.lat});
    if (!s.polygon.empty()) ring.push_back({s.polygon.front().lon, s.polygon.front().lat});
    features.push_back({{"type", "Feature"},
                        {"properties",
                         {{"site_id", s.site_id},
                          {"member_cells", s.member_cells},
                          {"station_lat", s.location.lat},
                          {"station_lon", s.location.lon}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
  }
  const auto& b = t.box();
  return {{"type", "FeatureCollection"},
          {"bbox", {b.min_lon, b.min_lat, b.max_lon, b.max_lat}},
          {"features", features}};
}

inline Tessellation tessellation_from_geojson(const nlohmann::json& j) {
  try {
    const auto& bb = j.at("bbox");
    BoundingBox box{bb.at(1).get<double>(), bb.at(0).get<double>(), bb.at(3).get<double>(), bb.at(2).get<double>()};
    std::vector<SiteGeometry> sites;
    for (const auto& f : j.at("features")) {
      const auto& p = f.at("properties");
      SiteGeometry s;
      s.site_id = p.at("site_id").get<std::string>();
      s.member_cells = p.at("member_cells").get<std::vector<std::string>>();
      s.location = {p.at("station_lat").get<double>(), p.at("station_lon").get<double>()};
      sites.push_back(std::move(s));
    }
    return build_voronoi(std::move(sites), box);
  } catch (const nlohmann::json::exception& e) {
    throw_validation(std::string("malformed sites.geojson: ") + e.what());
  }
}

}  // namespace chrono_cdr
