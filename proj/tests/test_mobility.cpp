#include <gtest/gtest.h>

#include <cmath>

#include "chrono_cdr/mobility.hpp"
#include "support.hpp"

using namespace chrono_cdr;
using chrono_cdr::testing::rng_for;
using chrono_cdr::testing::uniform;
using chrono_cdr::testing::uniform_int;

namespace {

// Direct evaluation over the expanded list of visits, one entry per record.
double gyration_oracle(const std::vector<Point2>& visits) {
  double cx = 0, cy = 0;
  for (auto p : visits) cx += p.x, cy += p.y;
  cx /= static_cast<double>(visits.size());
  cy /= static_cast<double>(visits.size());
  double s = 0;
  for (auto p : visits) s += (p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy);
  return std::sqrt(s / static_cast<double>(visits.size()));
}

double entropy_oracle(const std::vector<std::uint64_t>& counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  if (n <= 1) return 0;
  double h = 0;
  for (auto c : counts)
    if (c) h += -(static_cast<double>(c) / n) * std::log(static_cast<double>(c) / n);
  return h / std::log(n);
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return (sxy / n) / (std::sqrt(sxx / n) * std::sqrt(syy / n));
}

}  // namespace

TEST(Gyration, SingleLocationIsZero) {
  VisitSet v;
  v.add(0, {3, 4}, 17);
  EXPECT_EQ(radius_of_gyration(v), 0.0);
}

TEST(Gyration, TwoPointsTwoKmApart) {
  VisitSet v;
  v.add(0, {0, 0}, 6);
  v.add(1, {2, 0}, 6);
  EXPECT_NEAR(radius_of_gyration(v), 1.0, 1e-15);
}

TEST(Gyration, MatchesDirectFormula) {
  for (std::uint64_t c = 0; c < 1000; ++c) {
    auto rng = rng_for(c, 20);
    VisitSet v;
    std::vector<Point2> expanded;
    int k = uniform_int(rng, 1, 5);
    for (int i = 0; i < k; ++i) {
      Point2 p{uniform(rng, -20, 20), uniform(rng, -20, 20)};
      auto n = static_cast<std::uint64_t>(uniform_int(rng, 1, 30));
      v.add(static_cast<std::uint32_t>(i), p, n);
      for (std::uint64_t j = 0; j < n; ++j) expanded.push_back(p);
    }
    ASSERT_NEAR(radius_of_gyration(v), gyration_oracle(expanded), 1e-9);
  }
}

TEST(Entropy, HandValues) {
  VisitSet one;
  one.add(0, {0, 0}, 50);
  EXPECT_EQ(location_entropy(one), 0.0);
  VisitSet two;
  two.add(0, {0, 0}, 5);
  two.add(1, {1, 0}, 5);
  EXPECT_NEAR(location_entropy(two), std::log(2.0) / std::log(10.0), 1e-15);
  EXPECT_NEAR(location_entropy(two), 0.30103, 1e-5);
  VisitSet uniform_set;
  for (std::uint32_t i = 0; i < 7; ++i) uniform_set.add(i, {double(i), 0}, 1);
  EXPECT_NEAR(location_entropy(uniform_set), 1.0, 1e-15);
}

TEST(Entropy, MatchesDirectFormula) {
  for (std::uint64_t c = 0; c < 1000; ++c) {
    auto rng = rng_for(c, 21);
    VisitSet v;
    std::vector<std::uint64_t> counts;
    int k = uniform_int(rng, 1, 8);
    for (int i = 0; i < k; ++i) {
      auto n = static_cast<std::uint64_t>(uniform_int(rng, 1, 20));
      v.add(static_cast<std::uint32_t>(i), {0, 0}, n);
      counts.push_back(n);
    }
    ASSERT_NEAR(location_entropy(v), entropy_oracle(counts), 1e-9);
  }
}

TEST(Daily, PerDayRowsFromCellCentroids) {
  const TzOffset tz{120};
  Epoch d0 = tz.midnight(make_day(2017, 4, 3));
  auto t = chrono_cdr::testing::table_of({{"a", d0 + 3600, "c1"},
                                          {"a", d0 + 7200, "c1"},
                                          {"b", d0 + 8 * 3600, "c1"},
                                          {"b", d0 + 12 * 3600, "c2"},
                                          {"b", d0 + 86400 + 3600, "c3"}});
  std::vector<std::optional<Point2>> pts{Point2{0, 0}, Point2{4, 0}, std::nullopt};
  auto r = daily_mobility(t, pts, tz, 2);
  ASSERT_EQ(r.rows.size(), 2u);  // b's second day only has an unknown cell
  EXPECT_EQ(r.rows[0].radius_of_gyration_km, 0.0);
  EXPECT_EQ(r.rows[0].entropy, 0.0);
  EXPECT_NEAR(r.rows[1].radius_of_gyration_km, 2.0, 1e-15);
  EXPECT_NEAR(r.rows[1].entropy, 1.0, 1e-15);
  EXPECT_EQ(r.skipped_unknown_cell, 1u);
}

TEST(Normalize, HandCasesAndAffineInvariance) {
  std::vector<double> x{2, 4, 6};
  EXPECT_EQ(minmax_normalize(x), (std::vector<double>{0, 0.5, 1}));
  std::vector<double> c{5, 5};
  EXPECT_EQ(minmax_normalize(c), (std::vector<double>{0, 0}));
  for (std::uint64_t k = 0; k < 200; ++k) {
    auto rng = rng_for(k, 22);
    std::vector<double> s(30), t(30);
    double a = uniform(rng, 0.1, 10), b = uniform(rng, -100, 100);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = uniform(rng, -5, 5);
      t[i] = a * s[i] + b;
    }
    auto ns = minmax_normalize(s), nt = minmax_normalize(t);
    for (std::size_t i = 0; i < s.size(); ++i) ASSERT_NEAR(ns[i], nt[i], 1e-12);
  }
}

TEST(Pearson, IdentityAndAntiCorrelation) {
  std::vector<double> x{1, 2, 3, 5, 8}, y, z;
  for (double v : x) y.push_back(v), z.push_back(-v);
  EXPECT_NEAR(pearson_r(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson_r(x, z), -1.0, 1e-15);
  std::vector<double> flat{1, 1, 1, 1, 1};
  EXPECT_THROW(pearson_r(x, flat), Error);
  EXPECT_THROW(pearson_r(std::vector<double>{1}, std::vector<double>{2}), Error);
}

TEST(Pearson, MatchesDirectFormula) {
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto rng = rng_for(k, 23);
    std::vector<double> x(30), y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      x[i] = uniform(rng, -1, 1);
      y[i] = 0.5 * x[i] + uniform(rng, -1, 1);
    }
    ASSERT_NEAR(pearson_r(x, y), pearson_oracle(x, y), 1e-12);
  }
}

TEST(Pearson, DailySeriesJoinOnCommonDates) {
  DailySeries a{{1, 1.0}, {2, 2.0}, {3, 3.0}, {4, 10.0}}, b{{1, 2.0}, {2, 4.0}, {3, 6.0}};
  EXPECT_NEAR(pearson_r(a, b), 1.0, 1e-15);
}

TEST(CityDaily, MeanAndMedian) {
  std::vector<MobilityDaily> rows{{0, 5, 1.0, 0.2, 3}, {1, 5, 3.0, 0.4, 3}, {2, 5, 8.0, 0.9, 3}, {0, 6, 2.0, 0.0, 1}};
  auto mean = city_daily(rows, Aggregate::mean);
  ASSERT_EQ(mean.size(), 2u);
  EXPECT_NEAR(mean[0].radius_of_gyration_km, 4.0, 1e-15);
  EXPECT_EQ(mean[0].sims, 3u);
  auto median = city_daily(rows, Aggregate::median);
  EXPECT_EQ(median[0].radius_of_gyration_km, 3.0);
  EXPECT_EQ(median[0].entropy, 0.4);
}
