#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "chrono_cdr/circadian.hpp"
#include "chrono_cdr/synthgen.hpp"
#include "support.hpp"

using namespace chrono_cdr;
using chrono_cdr::testing::rng_for;
using chrono_cdr::testing::uniform;
using chrono_cdr::testing::uniform_int;

namespace {

const TzOffset kTz{120};

// Windowed mean written from the definition: even windows cover six bins
// before and five after; near the ends the window shrinks symmetrically.
std::vector<double> smooth_oracle(const std::vector<double>& x, int w) {
  int n = static_cast<int>(x.size());
  int left = w / 2, right = w - 1 - left;
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    int lo = i - left, hi = i + right;
    if (lo < 0 || hi >= n) {
      int h = std::min({i, n - 1 - i, right});
      lo = i - h;
      hi = i + h;
    }
    double s = 0;
    for (int j = lo; j <= hi; ++j) s += x[static_cast<std::size_t>(j)];
    out.push_back(s / (hi - lo + 1));
  }
  return out;
}

std::vector<double> step_day(int from_bin, double low, double high) {
  std::vector<double> d(kBinsPerDay, low);
  for (int i = from_bin; i < kBinsPerDay; ++i) d[static_cast<std::size_t>(i)] = high;
  return d;
}

/// Smooth plateau day with logistic rise at `wake` and fall at `bed`,
/// sampled at bin midpoints.
std::vector<double> plateau_day(double wake, double bed, double width = 30) {
  std::vector<double> d;
  for (int i = 0; i < kBinsPerDay; ++i) {
    double t = bin_midpoint(i);
    auto l = [&](double x) { return 1 / (1 + std::exp(-x / (width / 4))); };
    d.push_back(100 * l(t - wake) * l(bed - t) + 2);
  }
  return d;
}

BinnedActivity hand_binned(int groups, int days) {
  BinnedActivity b;
  b.mode = GroupingMode::workplace_based;
  b.level = GroupLevel::site;
  for (int g = 0; g < groups; ++g) b.group_ids.push_back(fmt::format("g{}", g));
  b.first_day = make_day(2017, 4, 3);  // Monday
  b.days = days;
  b.counts.assign(static_cast<std::size_t>(groups * days * kBinsPerDay), 0);
  return b;
}

void fill_block(BinnedActivity& b, int g, int day, int from_bin, int to_bin, std::uint32_t v) {
  for (int i = from_bin; i < to_bin; ++i)
    b.counts[static_cast<std::size_t>((g * b.days + day) * kBinsPerDay + i)] = v;
}

}  // namespace

TEST(Binning, RecordAtSevenOFiveFallsInBin42) {
  Epoch t = kTz.midnight(make_day(2017, 4, 3)) + 7 * 3600 + 5 * 60;
  EXPECT_EQ(bin_of(t, kTz), 42);
  auto table = chrono_cdr::testing::table_of({{"s", t, "c1"}});
  auto gi = make_group_index(table, GroupLevel::all);
  BinningOptions opt{GroupingMode::cell_based, kTz, make_day(2017, 4, 3), make_day(2017, 4, 3)};
  auto b = bin_activity(table, gi, {}, opt);
  EXPECT_EQ(b.day_bins(0, 0)[42], 1u);
  EXPECT_EQ(b.total(), 1u);
}

TEST(Binning, CellBasedTotalsAndThreadIndependence) {
  auto rng = rng_for(30);
  std::vector<chrono_cdr::testing::Row> rows;
  Epoch t0 = kTz.midnight(make_day(2017, 4, 3));
  for (int i = 0; i < 5000; ++i)
    rows.push_back({fmt::format("s{}", uniform_int(rng, 0, 99)), t0 + Epoch{uniform_int(rng, 0, 7 * 8640 - 1)} * 10,
                    fmt::format("c{}", uniform_int(rng, 0, 9))});
  auto table = chrono_cdr::testing::table_of(rows);
  auto gi = make_group_index(table, GroupLevel::cell);
  BinningOptions opt{GroupingMode::cell_based, kTz, make_day(2017, 4, 3), make_day(2017, 4, 9)};
  auto one = bin_activity(table, gi, {}, opt, 1);
  auto many = bin_activity(table, gi, {}, opt, 7);
  EXPECT_EQ(one.total(), 5000u);
  EXPECT_EQ(one.counts, many.counts);
}

TEST(Binning, InhabitantSeriesIncludesWorkplaceRecords) {
  Epoch d = kTz.midnight(make_day(2017, 4, 3));
  auto table = chrono_cdr::testing::table_of({{"s", d + 23 * 3600, "home"},
                                              {"s", d + 10 * 3600, "work"},
                                              {"s", d + 11 * 3600, "work"},
                                              {"t", d + 12 * 3600, "work"}});
  std::vector<LocationAssignment> locs{{0, CellSupport{0, 1}, CellSupport{1, 2}}, {1, std::nullopt, std::nullopt}};
  auto gi = make_group_index(table, GroupLevel::cell);
  BinningOptions opt{GroupingMode::inhabitant_based, kTz, make_day(2017, 4, 3), make_day(2017, 4, 3), 1};
  auto b = bin_activity(table, gi, locs, opt);
  std::uint64_t home_total = 0;
  for (auto c : b.group_bins(0)) home_total += c;
  EXPECT_EQ(home_total, 3u);
  EXPECT_EQ(b.day_bins(0, 0)[60], 1u);
  EXPECT_EQ(b.skipped_sims, 1u);

  opt.mode = GroupingMode::workplace_based;
  auto w = bin_activity(table, gi, locs, opt);
  EXPECT_EQ(w.day_bins(1, 0)[60], 1u);
  EXPECT_EQ(w.total(), 2u);
  EXPECT_THROW(bin_activity(table, gi, std::vector<LocationAssignment>{}, opt), Error);
}

TEST(Smoothing, ConstantImpulseAndOracle) {
  std::vector<double> c(50, 3.5);
  for (double v : smooth_series(c, 12)) EXPECT_NEAR(v, 3.5, 1e-15);

  std::vector<double> impulse(100, 0.0);
  impulse[50] = 1;
  auto s = smooth_series(impulse, 12);
  for (int i = 0; i < 100; ++i) {
    double expected = (i >= 45 && i <= 56) ? 1.0 / 12 : 0.0;
    EXPECT_NEAR(s[static_cast<std::size_t>(i)], expected, 1e-15) << i;
  }

  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto rng = rng_for(k, 31);
    std::vector<double> x(static_cast<std::size_t>(uniform_int(rng, 1, 300)));
    for (auto& v : x) v = uniform(rng, 0, 1000);
    int w = uniform_int(rng, 1, 24);
    auto got = smooth_series(x, w);
    auto want = smooth_oracle(x, w);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12 * std::max(1.0, want[i]));
  }
  EXPECT_THROW(smooth_series(c, 0), Error);
}

TEST(Threshold, ArithmeticAndScanOracle) {
  std::vector<double> s{10, 90, 40};
  EXPECT_EQ(edge_threshold(s).m, 50);
  std::vector<double> flat(144, 7.0);
  EXPECT_EQ(edge_threshold(flat).m, 7.0);
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto rng = rng_for(k, 32);
    std::vector<double> day(144);
    for (auto& v : day) v = uniform(rng, -50, 500);
    double lo = day[0], hi = day[0];
    for (double v : day) lo = std::min(lo, v), hi = std::max(hi, v);
    double f = uniform(rng, 0.1, 0.9);
    auto th = edge_threshold(day, f);
    ASSERT_EQ(th.a_min, lo);
    ASSERT_EQ(th.a_max, hi);
    ASSERT_NEAR(th.m, lo + f * (hi - lo), 1e-9);
  }
}

TEST(Edges, IdealStepGivesExactly420) {
  auto e = detect_daily_edges(step_day(42, 0, 100), {}, EdgeParams{});
  ASSERT_TRUE(e.rise_min);
  EXPECT_DOUBLE_EQ(*e.rise_min, 420.0);
}

TEST(Edges, LogisticRampWithinOneBin) {
  auto e = detect_daily_edges(plateau_day(410, 1200), {}, EdgeParams{});
  ASSERT_EQ(e.status, EdgeStatus::ok);
  EXPECT_NEAR(*e.rise_min, 410, 10);
  EXPECT_NEAR(*e.fall_min, 1200, 10);
  EXPECT_NEAR(*e.length_min(), 790, 10);
}

TEST(Edges, FlatDayHasNoEdges) {
  std::vector<double> day(144, 20.0);
  day[70] = 22;
  auto e = detect_daily_edges(day, {}, EdgeParams{}, 5.0);
  EXPECT_EQ(e.status, EdgeStatus::flat);
  EXPECT_FALSE(e.rise_min);
}

TEST(Edges, BedtimeAfterMidnightUsesNextDay) {
  auto day = plateau_day(430, 1500);  // falls at 01:00 the next day
  std::vector<double> next(144, 2.0);
  for (int i = 0; i < 6; ++i) next[static_cast<std::size_t>(i)] = 100;
  auto e = detect_daily_edges(day, next, EdgeParams{});
  ASSERT_TRUE(e.fall_min);
  EXPECT_GT(*e.fall_min, 1440);
  EXPECT_LT(*e.fall_min, 1510);
}

TEST(Edges, AffineInvariance) {
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto rng = rng_for(k, 33);
    auto day = plateau_day(uniform(rng, 300, 600), uniform(rng, 1080, 1400), uniform(rng, 10, 80));
    for (auto& v : day) v += uniform(rng, 0, 15);
    double a = uniform(rng, 0.01, 100), b = uniform(rng, -1000, 1000);
    std::vector<double> scaled;
    for (double v : day) scaled.push_back(a * v + b);
    auto e1 = detect_daily_edges(day, {}, EdgeParams{});
    auto e2 = detect_daily_edges(scaled, {}, EdgeParams{});
    ASSERT_EQ(e1.rise_min.has_value(), e2.rise_min.has_value());
    ASSERT_EQ(e1.fall_min.has_value(), e2.fall_min.has_value());
    if (e1.rise_min) ASSERT_NEAR(*e1.rise_min, *e2.rise_min, 1e-9);
    if (e1.fall_min) ASSERT_NEAR(*e1.fall_min, *e2.fall_min, 1e-9);
  }
}

TEST(Edges, CircularShiftMovesEdgesByWholeBins) {
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto rng = rng_for(k, 34);
    auto day = plateau_day(uniform(rng, 380, 480), uniform(rng, 1150, 1250));
    for (auto& v : day) v += uniform(rng, 0, 5);
    int delta = uniform_int(rng, -12, 12);
    std::vector<double> shifted(144);
    for (int i = 0; i < 144; ++i) shifted[static_cast<std::size_t>((i + delta + 144) % 144)] = day[static_cast<std::size_t>(i)];
    auto e1 = detect_daily_edges(day, {}, EdgeParams{});
    auto e2 = detect_daily_edges(shifted, {}, EdgeParams{});
    ASSERT_TRUE(e1.rise_min && e2.rise_min && e1.fall_min && e2.fall_min);
    ASSERT_NEAR(*e2.rise_min - *e1.rise_min, 10.0 * delta, 1e-9);
    ASSERT_NEAR(*e2.fall_min - *e1.fall_min, 10.0 * delta, 1e-9);
  }
}

TEST(Summary, LowerMedianPerDayClass) {
  Calendar cal(kTz, {}, {}, make_day(2017, 4, 3), make_day(2017, 4, 9));
  std::vector<GroupDayEdges> edges;
  double wakes[] = {420, 430, 450, 440, 460, 500, 520};
  for (int d = 0; d < 7; ++d) {
    DailyEdges e;
    e.rise_min = wakes[d];
    e.fall_min = 1200;
    e.status = EdgeStatus::ok;
    edges.push_back({0, make_day(2017, 4, 3) + d, e});
  }
  EXPECT_EQ(median_edges(edges, cal, DayClass::workday).rise_min, 440);
  EXPECT_EQ(median_edges(edges, cal, DayClass::holiday).rise_min, 500);
  EXPECT_EQ(median_edges(edges, cal, std::nullopt).rise_min, 450);
  EXPECT_EQ(median_edges(edges, cal, DayClass::holiday).length_min, 1200 - 520);
}

TEST(Periodicity, MatchesNaiveDft) {
  for (std::uint64_t k = 0; k < 50; ++k) {
    auto rng = rng_for(k, 35);
    std::size_t n = static_cast<std::size_t>(uniform_int(rng, 4, 200));
    std::vector<double> x(n);
    for (auto& v : x) v = uniform(rng, 0, 10);
    auto p = periodogram(x);
    double mean = 0;
    for (double v : x) mean += v / static_cast<double>(n);
    ASSERT_EQ(p.magnitude.size(), n / 2);
    for (std::size_t f = 1; f <= n / 2; ++f) {
      std::complex<double> acc = 0;
      for (std::size_t t = 0; t < n; ++t)
        acc += (x[t] - mean) * std::polar(1.0, -2 * std::numbers::pi * double(f) * double(t) / double(n));
      ASSERT_NEAR(p.magnitude[f - 1], std::abs(acc), 1e-9 * std::max(1.0, std::abs(acc)));
      ASSERT_NEAR(p.period_hours[f - 1], double(n) * 10 / 60 / double(f), 1e-12);
    }
  }
}

TEST(Periodicity, SinusoidsAndTooShortSeries) {
  std::vector<double> pure, harmonic;
  for (int i = 0; i < 30 * 144; ++i) {
    double ph = 2 * std::numbers::pi * i / 144.0;
    pure.push_back(std::sin(ph));
    harmonic.push_back(std::sin(ph) + 0.3 * std::sin(2 * ph));
  }
  EXPECT_DOUBLE_EQ(dominant_period(pure), 24.0);
  EXPECT_DOUBLE_EQ(dominant_period(harmonic), 24.0);
  EXPECT_THROW(dominant_period(std::span<const double>(pure).first(2 * 144)), Error);
}

TEST(Heatmap, SingleRecordAndConservation) {
  Epoch monday = kTz.midnight(make_day(2017, 4, 3)) + 9 * 3600 + 30 * 60;
  auto h = weekday_hour_heatmap(chrono_cdr::testing::table_of({{"s", monday, "c"}}), kTz);
  std::uint64_t total = 0;
  for (const auto& row : h)
    for (auto v : row) total += v;
  EXPECT_EQ(h[0][9], 1u);
  EXPECT_EQ(total, 1u);

  auto rng = rng_for(36);
  std::vector<chrono_cdr::testing::Row> rows;
  for (int i = 0; i < 3000; ++i) rows.push_back({"s", Epoch{uniform_int(rng, 0, 100000000)} * 10, "c"});
  auto big = weekday_hour_heatmap(chrono_cdr::testing::table_of(rows), kTz);
  total = 0;
  for (const auto& row : big)
    for (auto v : row) total += v;
  EXPECT_EQ(total, 3000u);
}

TEST(WorkingHours, BlockGivesStartEndAndLowVolumeFlag) {
  auto b = hand_binned(2, 7);
  for (int d = 0; d < 5; ++d) {
    fill_block(b, 0, d, 54, 102, 40);  // 09:00–17:00
    fill_block(b, 1, d, 54, 102, 1);
  }
  Calendar cal(kTz, {}, {}, b.first_day, b.first_day + 6);
  WorkParams params;
  params.edges.noise_floor_abs = 0;
  auto w = working_hours(b, 0, cal, params);
  EXPECT_FALSE(w.low_confidence);
  EXPECT_EQ(w.days.size(), 5u);
  EXPECT_DOUBLE_EQ(*w.start_min, 540);
  EXPECT_DOUBLE_EQ(*w.end_min, 1020);
  EXPECT_DOUBLE_EQ(*w.length_min, 480);
  EXPECT_DOUBLE_EQ(w.volume, 48 * 40);
  EXPECT_TRUE(working_hours(b, 1, cal, params).low_confidence);
}

TEST(WorkingHours, ShiftedSitesOrderedByStart) {
  auto b = hand_binned(2, 5);
  for (int d = 0; d < 5; ++d) {
    fill_block(b, 0, d, 48, 96, 30);  // 08:00–16:00
    fill_block(b, 1, d, 60, 108, 30);  // 10:00–18:00
  }
  Calendar cal(kTz, {}, {}, b.first_day, b.first_day + 4);
  auto a = working_hours(b, 0, cal), c = working_hours(b, 1, cal);
  EXPECT_LT(*a.start_min, *c.start_min);
  EXPECT_NEAR(*c.start_min - *a.start_min, 120, 1e-9);
}

TEST(Pairing, SingleShiftAndTopKCount) {
  std::vector<WorkingHours> sites(4);
  for (auto& s : sites) s.start_min = 541, s.end_min = 1019;
  auto p = start_end_pairing(sites, 5, 30);
  ASSERT_EQ(p.start_bins, std::vector<int>{540});
  ASSERT_EQ(p.end_bins, std::vector<int>{1020});
  EXPECT_EQ(p.pair_counts[0][0], 4u);

  sites.push_back({});
  sites.back().start_min = 600;
  sites.back().end_min = 1080;
  sites.push_back({});
  sites.back().start_min = 700;
  sites.back().end_min = 1080;
  auto q = start_end_pairing(sites, 1, 30);
  EXPECT_EQ(q.pair_counts[0][0], 4u);  // only sites inside both top-1 bins
}

TEST(Pairing, PlantedThreeShiftCity) {
  ScenarioConfig cfg;
  cfg.n_sims = 30000;
  cfg.n_sites = 30;
  cfg.days = 14;
  cfg.work_site_sigma = 0.3;
  cfg.shifts = {{480, 960, 0.34}, {540, 1020, 0.33}, {600, 1080, 0.33}};
  auto ds = generate(cfg, 2);
  IngestAccumulator acc;
  feed(ds, acc);
  auto table = std::move(acc).finish().activity;
  auto cal = ds.calendar();
  auto locs = infer_locations(table, cal, {}, 2);
  std::vector<CellInfo> cells = ds.cells;
  std::vector<SiteGeometry> geo_sites = merge_cells_to_sites(cells);
  std::vector<LatLon> st;
  for (const auto& s : geo_sites) st.push_back(s.location);
  auto tess = build_voronoi(geo_sites, padded_box(st, 5));
  auto gi = make_group_index(table, GroupLevel::site, &tess);
  BinningOptions opt{GroupingMode::workplace_based, cal.tz(), *cal.first_day(), *cal.last_day()};
  auto binned = bin_activity(table, gi, locs, opt, 2);
  std::vector<WorkingHours> wh;
  for (std::size_t g = 0; g < binned.groups(); ++g) {
    auto w = working_hours(binned, g, cal);
    if (!w.low_confidence) wh.push_back(w);
  }
  ASSERT_GE(wh.size(), 15u);
  auto p = start_end_pairing(wh, 3, 60);
  std::set<std::pair<int, int>> heaviest;
  for (std::size_t i = 0; i < p.start_bins.size(); ++i)
    for (std::size_t j = 0; j < p.end_bins.size(); ++j)
      if (p.pair_counts[i][j] > 0) heaviest.insert({p.start_bins[i], p.end_bins[j]});
  std::set<std::pair<int, int>> planted{{480, 960}, {540, 1020}, {600, 1080}};
  EXPECT_EQ(heaviest, planted);
}
