#include <gtest/gtest.h>

#include <algorithm>
#include <unordered_map>

#include "chrono_cdr/locations.hpp"
#include "chrono_cdr/synthgen.hpp"
#include "support.hpp"

using namespace chrono_cdr;
using chrono_cdr::testing::Row;
using chrono_cdr::testing::table_of;

namespace {

const TzOffset kTz{120};
const Calendar kApril(kTz, {make_day(2017, 4, 14), make_day(2017, 4, 17)}, {}, make_day(2017, 4, 1),
                      make_day(2017, 4, 30));

Epoch at(unsigned day, int hh, int mm = 0) { return kTz.midnight(make_day(2017, 4, day)) + hh * 3600 + mm * 60; }

}  // namespace

TEST(Calendar, ClassifiesWeekdaysWeekendsAndHolidays) {
  EXPECT_EQ(kApril.classify(make_day(2017, 4, 5)), DayClass::workday);
  EXPECT_EQ(kApril.classify(make_day(2017, 4, 16)), DayClass::holiday);
  EXPECT_EQ(kApril.classify(make_day(2017, 4, 17)), DayClass::holiday);
  Calendar swapped(kTz, {}, {make_day(2017, 4, 22)});
  EXPECT_EQ(swapped.classify(make_day(2017, 4, 22)), DayClass::workday);
  EXPECT_THROW(kApril.classify(make_day(2017, 5, 2)), Error);
}

TEST(Calendar, JsonRoundTrip) {
  auto j = to_json(kApril);
  auto back = calendar_from_json(j);
  EXPECT_EQ(back.holidays(), kApril.holidays());
  EXPECT_EQ(back.first_day(), kApril.first_day());
  EXPECT_EQ(back.last_day(), kApril.last_day());
  EXPECT_THROW(calendar_from_json({{"holidays", {"2017-13-01"}}}), Error);
}

TEST(Work, AllQualifyingRecordsInOneCell) {
  auto t = table_of({{"s", at(3, 10), "c3"}, {"s", at(4, 11), "c3"}, {"s", at(4, 23), "c1"}, {"s", at(8, 12), "c1"}});
  auto w = infer_work(t.of_sim(0), kApril);
  ASSERT_TRUE(w);
  EXPECT_EQ(t.cell_ids[w->cell], "c3");
  EXPECT_EQ(w->support, 2u);
}

TEST(Work, TieGoesToLargerAllDayCount) {
  std::vector<Row> rows;
  for (int i = 0; i < 5; ++i) {
    rows.push_back({"s", at(3 + i, 10), "c1"});
    rows.push_back({"s", at(3 + i, 11), "c2"});
  }
  rows.push_back({"s", at(3, 20), "c1"});
  rows.push_back({"s", at(3, 21), "c1"});
  for (int i = 0; i < 4; ++i) rows.push_back({"s", at(4, 19, i), "c2"});
  auto t = table_of(rows);  // qualifying {c1: 5, c2: 5}, all-day {c1: 7, c2: 9}
  auto w = infer_work(t.of_sim(0), kApril);
  ASSERT_TRUE(w);
  EXPECT_EQ(t.cell_ids[w->cell], "c2");
}

TEST(Home, NightOnlySimAndAbsentHome) {
  auto night = table_of({{"s", at(4, 23), "c7"}, {"s", at(5, 2), "c7"}, {"s", at(5, 12), "c1"}});
  auto h = infer_home(night.of_sim(0), kApril);
  ASSERT_TRUE(h);
  EXPECT_EQ(night.cell_ids[h->cell], "c7");
  auto daytime = table_of({{"s", at(4, 12), "c1"}, {"s", at(5, 15), "c2"}});
  EXPECT_FALSE(infer_home(daytime.of_sim(0), kApril));
}

TEST(Home, HolidaysCountAllDay) {
  auto t = table_of({{"s", at(15, 13), "c4"}, {"s", at(17, 12), "c4"}, {"s", at(4, 23), "c1"}});
  EXPECT_EQ(t.cell_ids[infer_home(t.of_sim(0), kApril)->cell], "c4");
}

TEST(Support, ThresholdGatesAcceptance) {
  LocationAssignment a{0, CellSupport{2, 4}, CellSupport{3, 5}};
  EXPECT_FALSE(accepted_home(a, 5));
  EXPECT_EQ(accepted_work(a, 5), 3u);
}

TEST(Recovery, PlantedPopulationHomesAndWorkplaces) {
  ScenarioConfig cfg;
  cfg.n_sims = 1000;
  cfg.n_sites = 12;
  cfg.groups[0].rate_per_day = 6;
  auto ds = generate(cfg, 2);
  IngestAccumulator acc;
  feed(ds, acc);
  auto table = std::move(acc).finish().activity;
  auto locs = infer_locations(table, ds.calendar(), {}, 3);
  std::unordered_map<std::string, std::uint32_t> site_of_cell;
  for (std::uint32_t s = 0; s < ds.sites.size(); ++s)
    for (auto c : ds.sites[s].cells) site_of_cell[ds.cells[c].cell_id] = s;

  std::size_t homes = 0, homes_ok = 0, works = 0, works_ok = 0;
  for (const auto& sim : ds.sims) {
    auto idx = table.find_sim(sim.sim_id);
    if (!idx) continue;
    const auto& a = locs[*idx];
    ++homes;
    if (a.home && site_of_cell.at(table.cell_ids[a.home->cell]) == sim.home_site) ++homes_ok;
    if (sim.work_site) {
      ++works;
      if (a.work && site_of_cell.at(table.cell_ids[a.work->cell]) == *sim.work_site) ++works_ok;
    }
  }
  EXPECT_GE(homes_ok, 0.99 * static_cast<double>(homes));
  EXPECT_GE(works_ok, 0.99 * static_cast<double>(works));

  // Same result from a table rebuilt out of shuffled rows.
  std::vector<Row> rows;
  for (std::size_t s = 0; s < table.sim_count(); ++s)
    for (const auto& r : table.of_sim(s)) rows.push_back({table.sim_ids[s], r.timestamp, table.cell_ids[r.cell]});
  auto rng = chrono_cdr::testing::rng_for(99);
  std::shuffle(rows.begin(), rows.end(), rng);
  auto again = infer_locations(table_of(rows), ds.calendar(), {}, 1);
  EXPECT_EQ(again, locs);
}

TEST(LocationsCsv, RoundTrip) {
  auto dir = chrono_cdr::testing::temp_dir("locations_csv");
  auto t = table_of({{"a", at(3, 23), "c1"}, {"b", at(3, 10), "c2"}, {"c", at(3, 12), "c1"}});
  std::vector<LocationAssignment> locs{{0, CellSupport{0, 1}, std::nullopt},
                                       {1, std::nullopt, CellSupport{1, 1}},
                                       {2, std::nullopt, std::nullopt}};
  write_locations_csv(t, locs, (dir / "l.csv").string());
  EXPECT_EQ(read_locations_csv((dir / "l.csv").string(), t), locs);
}
