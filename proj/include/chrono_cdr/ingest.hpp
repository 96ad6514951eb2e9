#pragma once

// CDR ingestion: wide-format parsing, normalization into activity /
// subscriber / device tables, activity-based cleaning filters and the
// descriptive SIM histograms.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "chrono_cdr/common.hpp"

namespace chrono_cdr {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class CustomerType : std::uint8_t { unknown, business, consumer };
enum class SubscriptionType : std::uint8_t { unknown, prepaid, postpaid };
enum class Gender : std::uint8_t { female, male };

inline std::string_view to_string(CustomerType t) {
  switch (t) {
    case CustomerType::business: return "business";
    case CustomerType::consumer: return "consumer";
    default: return "unknown";
  }
}

inline std::string_view to_string(SubscriptionType t) {
  switch (t) {
    case SubscriptionType::prepaid: return "prepaid";
    case SubscriptionType::postpaid: return "postpaid";
    default: return "unknown";
  }
}

inline std::string_view to_string(Gender g) { return g == Gender::female ? "F" : "M"; }

struct CdrRecord {
  std::string sim_id;
  Epoch timestamp = 0;  // multiple of 10
  std::string cell_id;

  friend bool operator==(const CdrRecord&, const CdrRecord&) = default;
};

struct SubscriberInfo {
  std::string sim_id;
  CustomerType customer_type = CustomerType::unknown;
  SubscriptionType subscription_type = SubscriptionType::unknown;
  std::optional<int> age;  // [0, 120]
  std::optional<Gender> gender;

  friend bool operator==(const SubscriberInfo&, const SubscriberInfo&) = default;
};

struct DeviceInterval {
  std::string sim_id;
  std::string tac;  // 8 digits
  Epoch first_seen = 0;
  Epoch last_seen = 0;

  friend bool operator==(const DeviceInterval&, const DeviceInterval&) = default;
};

/// Column names of the wide CDR dump. Any column order is accepted; the
/// subscriber and tac columns are optional.
struct CdrSchema {
  std::string sim_id = "sim_id";
  std::string timestamp = "timestamp";
  std::string cell_id = "cell_id";
  std::string customer_type = "customer_type";
  std::string subscription_type = "subscription_type";
  std::string age = "age";
  std::string gender = "gender";
  std::string tac = "tac";
  /// Offset applied to ISO timestamps without an explicit zone.
  TzOffset tz{120};
};

/// One parsed line; views point into the reader's buffer and are only valid
/// for the duration of the callback.
struct CdrRowView {
  std::string_view sim_id;
  Epoch timestamp = 0;
  std::string_view cell_id;
  bool has_subscriber = false;
  CustomerType customer_type = CustomerType::unknown;
  SubscriptionType subscription_type = SubscriptionType::unknown;
  std::optional<int> age;
  std::optional<Gender> gender;
  std::string_view tac;  // empty when absent
};

/// Owning form of CdrRowView.
struct ParsedRow {
  CdrRecord record;
  std::optional<SubscriberInfo> subscriber;
  std::optional<std::string> tac;
};

inline ParsedRow to_owned(const CdrRowView& v) {
  ParsedRow row{{std::string(v.sim_id), v.timestamp, std::string(v.cell_id)}, std::nullopt, std::nullopt};
  if (v.has_subscriber)
    row.subscriber = SubscriberInfo{row.record.sim_id, v.customer_type, v.subscription_type, v.age, v.gender};
  if (!v.tac.empty()) row.tac = std::string(v.tac);
  return row;
}

enum class TimestampFormat { undetected, epoch, iso };

struct ParseStats {
  std::uint64_t lines_in = 0;  // including the header
  std::uint64_t records_out = 0;
  std::uint64_t malformed = 0;
  std::map<std::string, std::uint64_t> malformed_by_reason;
  std::uint64_t invalid_attributes = 0;
  std::uint64_t truncated_timestamps = 0;
  TimestampFormat timestamp_format = TimestampFormat::undetected;
};

// ---------------------------------------------------------------------------
// Line reading
// ---------------------------------------------------------------------------

/// Calls fn(line) for every '\n'-terminated line (the last line may lack a
/// terminator). Reads in large blocks; much faster than std::getline.
template <class Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  constexpr std::size_t kBlock = 1 << 22;
  std::string buffer;
  std::string carry;
  buffer.resize(kBlock);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(kBlock));
    std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    std::string_view chunk(buffer.data(), got);
    std::size_t start = 0;
    while (true) {
      std::size_t nl = chunk.find('\n', start);
      if (nl == std::string_view::npos) break;
      if (!carry.empty()) {
        carry.append(chunk.substr(start, nl - start));
        fn(std::string_view(carry));
        carry.clear();
      } else {
        fn(chunk.substr(start, nl - start));
      }
      start = nl + 1;
    }
    carry.append(chunk.substr(start));
  }
  if (in.bad()) throw_io("stream read error");
  if (!carry.empty()) fn(std::string_view(carry));
}

// ---------------------------------------------------------------------------
// parse_cdr_stream
// ---------------------------------------------------------------------------

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    char x = a[i], y = b[i];
    if (x >= 'A' && x <= 'Z') x = static_cast<char>(x - 'A' + 'a');
    if (y >= 'A' && y <= 'Z') y = static_cast<char>(y - 'A' + 'a');
    if (x != y) return false;
  }
  return true;
}

inline bool is_integer_text(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

inline bool is_tac(std::string_view s) {
  return s.size() == 8 && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

/// Parses a line-delimited wide CDR dump with a header row. Each valid line
/// is handed to `on_row` in file order; malformed lines are counted and
/// skipped. Timestamps are truncated down to 10 s. The timestamp format
/// (integer epoch or ISO-8601) is detected from the first non-empty value of
/// the column and enforced for the rest of it.
template <class Fn>
ParseStats parse_cdr_stream(std::istream& in, const CdrSchema& schema, Fn&& on_row) {
  ParseStats stats;
  bool have_header = false;
  std::optional<std::size_t> c_sim, c_ts, c_cell, c_cust, c_sub, c_age, c_gender, c_tac;
  std::size_t required_fields = 0;
  std::vector<std::string_view> fields;
  std::string header_copy;

  auto malformed = [&stats](const char* reason) {
    ++stats.malformed;
    ++stats.malformed_by_reason[reason];
  };

  for_each_line(in, [&](std::string_view line) {
    ++stats.lines_in;
    if (!have_header) {
      header_copy.assign(line);
      split_csv(header_copy, fields);
      c_sim = find_column(fields, schema.sim_id);
      c_ts = find_column(fields, schema.timestamp);
      c_cell = find_column(fields, schema.cell_id);
      if (!c_sim || !c_ts || !c_cell) {
        std::string missing = !c_sim ? schema.sim_id : !c_ts ? schema.timestamp : schema.cell_id;
        throw_validation(fmt::format("CDR schema error: missing required column '{}'", missing));
      }
      c_cust = find_column(fields, schema.customer_type);
      c_sub = find_column(fields, schema.subscription_type);
      c_age = find_column(fields, schema.age);
      c_gender = find_column(fields, schema.gender);
      c_tac = find_column(fields, schema.tac);
      required_fields = std::max({*c_sim, *c_ts, *c_cell}) + 1;
      have_header = true;
      return;
    }
    if (line.empty() || line == "\r") {
      malformed("blank_line");
      return;
    }
    split_csv(line, fields);
    if (fields.size() < required_fields) {
      malformed("field_count");
      return;
    }
    CdrRowView row;
    row.sim_id = fields[*c_sim];
    row.cell_id = fields[*c_cell];
    if (row.sim_id.empty()) {
      malformed("empty_sim_id");
      return;
    }
    if (row.cell_id.empty()) {
      malformed("empty_cell_id");
      return;
    }
    std::string_view ts_text = fields[*c_ts];
    if (stats.timestamp_format == TimestampFormat::undetected && !ts_text.empty())
      stats.timestamp_format =
          detail::is_integer_text(ts_text) ? TimestampFormat::epoch : TimestampFormat::iso;
    std::optional<Epoch> ts;
    if (stats.timestamp_format == TimestampFormat::epoch) {
      if (detail::is_integer_text(ts_text)) ts = parse_number<Epoch>(ts_text);
    } else if (stats.timestamp_format == TimestampFormat::iso) {
      ts = parse_iso_timestamp(ts_text, schema.tz);
    }
    if (!ts) {
      malformed("timestamp");
      return;
    }
    Epoch aligned = floor_div(*ts, 10) * 10;
    if (aligned != *ts) ++stats.truncated_timestamps;
    row.timestamp = aligned;

    auto field = [&](const std::optional<std::size_t>& c) -> std::string_view {
      return (c && *c < fields.size()) ? fields[*c] : std::string_view{};
    };
    row.has_subscriber = c_cust || c_sub || c_age || c_gender;
    if (auto v = field(c_cust); !v.empty()) {
      if (detail::iequals(v, "business")) row.customer_type = CustomerType::business;
      else if (detail::iequals(v, "consumer")) row.customer_type = CustomerType::consumer;
      else if (!detail::iequals(v, "unknown")) ++stats.invalid_attributes;
    }
    if (auto v = field(c_sub); !v.empty()) {
      if (detail::iequals(v, "prepaid")) row.subscription_type = SubscriptionType::prepaid;
      else if (detail::iequals(v, "postpaid")) row.subscription_type = SubscriptionType::postpaid;
      else if (!detail::iequals(v, "unknown")) ++stats.invalid_attributes;
    }
    if (auto v = field(c_age); !v.empty()) {
      auto age = parse_number<int>(v);
      if (age && *age >= 0 && *age <= 120) row.age = *age;
      else ++stats.invalid_attributes;
    }
    if (auto v = field(c_gender); !v.empty()) {
      if (detail::iequals(v, "f") || detail::iequals(v, "female")) row.gender = Gender::female;
      else if (detail::iequals(v, "m") || detail::iequals(v, "male")) row.gender = Gender::male;
      else ++stats.invalid_attributes;
    }
    if (auto v = field(c_tac); !v.empty()) {
      if (detail::is_tac(v)) row.tac = v;
      else ++stats.invalid_attributes;
    }
    ++stats.records_out;
    on_row(row);
  });
  if (!have_header) throw_validation("CDR schema error: empty input, header row expected");
  return stats;
}

template <class Fn>
ParseStats parse_cdr_file(const std::string& path, const CdrSchema& schema, Fn&& on_row) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open CDR source " + path);
  return parse_cdr_stream(in, schema, std::forward<Fn>(on_row));
}

// ---------------------------------------------------------------------------
// Normalized tables
// ---------------------------------------------------------------------------

/// One activity record with interned ids.
struct Activity {
  std::uint32_t sim = 0;
  std::uint32_t cell = 0;
  Epoch timestamp = 0;

  friend bool operator==(const Activity&, const Activity&) = default;
};

/// Activity records grouped per SIM. `sim_ids` and `cell_ids` are sorted, so
/// index order equals lexicographic id order. Records are sorted by
/// (sim, timestamp, cell); `offsets` is the per-SIM CSR index.
struct ActivityTable {
  std::vector<std::string> sim_ids;
  std::vector<std::string> cell_ids;
  std::vector<Activity> records;
  std::vector<std::size_t> offsets{0};

  std::size_t sim_count() const { return sim_ids.size(); }
  std::size_t size() const { return records.size(); }
  std::span<const Activity> of_sim(std::size_t sim) const {
    return std::span<const Activity>(records).subspan(offsets[sim], offsets[sim + 1] - offsets[sim]);
  }
  std::optional<std::uint32_t> find_cell(std::string_view id) const {
    auto it = std::lower_bound(cell_ids.begin(), cell_ids.end(), id);
    if (it == cell_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - cell_ids.begin());
  }
  std::optional<std::uint32_t> find_sim(std::string_view id) const {
    auto it = std::lower_bound(sim_ids.begin(), sim_ids.end(), id);
    if (it == sim_ids.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - sim_ids.begin());
  }
};

struct NormalizedTables {
  ActivityTable activity;
  std::vector<SubscriberInfo> subscribers;  // sorted by sim_id
  std::vector<DeviceInterval> devices;      // sorted by (sim_id, first_seen)
  std::uint64_t subscriber_conflicts = 0;
};

/// Mergeable partial state of normalize_tables. Feed rows with add(); states
/// built from disjoint partitions combine with merge(); finish() produces
/// canonical tables that do not depend on input order or partitioning.
class IngestAccumulator {
 public:
  void add(const CdrRowView& row) {
    std::uint32_t sim = intern(sim_index_, sim_names_, row.sim_id);
    if (sim == sims_.size()) sims_.emplace_back();
    SimState& state = sims_[sim];
    std::uint32_t cell = intern(cell_index_, cell_names_, row.cell_id);
    std::uint32_t tac = row.tac.empty() ? kNoTac : intern(tac_index_, tac_names_, row.tac);
    state.entries.push_back({row.timestamp, cell, tac});
    if (row.has_subscriber) {
      state.has_subscriber = true;
      absorb(state.customer, row.customer_type, CustomerType::unknown, state.conflicts);
      absorb(state.subscription, row.subscription_type, SubscriptionType::unknown, state.conflicts);
      absorb_optional(state.age, row.age, state.conflicts);
      absorb_optional(state.gender, row.gender, state.conflicts);
    }
  }

  void add(const ParsedRow& row) {
    CdrRowView v;
    v.sim_id = row.record.sim_id;
    v.timestamp = row.record.timestamp;
    v.cell_id = row.record.cell_id;
    if (row.subscriber) {
      v.has_subscriber = true;
      v.customer_type = row.subscriber->customer_type;
      v.subscription_type = row.subscriber->subscription_type;
      v.age = row.subscriber->age;
      v.gender = row.subscriber->gender;
    }
    if (row.tac) v.tac = *row.tac;
    add(v);
  }

  /// Absorbs another partial state. For a SIM present in both, attribute
  /// values already held here take precedence.
  void merge(IngestAccumulator&& other) {
    std::vector<std::uint32_t> cell_map(other.cell_names_.size());
    for (std::size_t i = 0; i < other.cell_names_.size(); ++i)
      cell_map[i] = intern(cell_index_, cell_names_, other.cell_names_[i]);
    std::vector<std::uint32_t> tac_map(other.tac_names_.size());
    for (std::size_t i = 0; i < other.tac_names_.size(); ++i)
      tac_map[i] = intern(tac_index_, tac_names_, other.tac_names_[i]);
    for (std::size_t s = 0; s < other.sim_names_.size(); ++s) {
      std::uint32_t sim = intern(sim_index_, sim_names_, other.sim_names_[s]);
      if (sim == sims_.size()) sims_.emplace_back();
      SimState& dst = sims_[sim];
      SimState& src = other.sims_[s];
      for (auto& e : src.entries)
        dst.entries.push_back({e.timestamp, cell_map[e.cell], e.tac == kNoTac ? kNoTac : tac_map[e.tac]});
      if (src.has_subscriber) {
        dst.has_subscriber = true;
        absorb(dst.customer, src.customer, CustomerType::unknown, dst.conflicts);
        absorb(dst.subscription, src.subscription, SubscriptionType::unknown, dst.conflicts);
        absorb_optional(dst.age, src.age, dst.conflicts);
        absorb_optional(dst.gender, src.gender, dst.conflicts);
      }
      dst.conflicts += src.conflicts;
    }
    other = IngestAccumulator{};
  }

  std::size_t record_count() const {
    std::size_t n = 0;
    for (auto& s : sims_) n += s.entries.size();
    return n;
  }

  NormalizedTables finish(unsigned threads = 1) && {
    NormalizedTables out;
    const std::size_t n_sims = sim_names_.size();

    auto sim_order = sorted_order(sim_names_);
    auto cell_order = sorted_order(cell_names_);
    std::vector<std::uint32_t> cell_rank(cell_names_.size());
    for (std::size_t r = 0; r < cell_order.size(); ++r) cell_rank[cell_order[r]] = static_cast<std::uint32_t>(r);

    ActivityTable& table = out.activity;
    table.sim_ids.reserve(n_sims);
    for (auto idx : sim_order) table.sim_ids.push_back(sim_names_[idx]);
    table.cell_ids.reserve(cell_names_.size());
    for (auto idx : cell_order) table.cell_ids.push_back(cell_names_[idx]);
    table.offsets.assign(n_sims + 1, 0);
    for (std::size_t r = 0; r < n_sims; ++r)
      table.offsets[r + 1] = table.offsets[r] + sims_[sim_order[r]].entries.size();
    table.records.resize(table.offsets.back());

    std::vector<std::vector<DeviceInterval>> devices(n_sims);
    parallel_chunks(n_sims, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t r = begin; r < end; ++r) {
        SimState& state = sims_[sim_order[r]];
        for (auto& e : state.entries) e.cell = cell_rank[e.cell];
        std::sort(state.entries.begin(), state.entries.end(), [this](const Entry& a, const Entry& b) {
          if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
          if (a.cell != b.cell) return a.cell < b.cell;
          return tac_less(a.tac, b.tac);
        });
        std::size_t base = table.offsets[r];
        for (std::size_t i = 0; i < state.entries.size(); ++i) {
          const Entry& e = state.entries[i];
          table.records[base + i] = {static_cast<std::uint32_t>(r), e.cell, e.timestamp};
        }
        // Consecutive records with the same tac collapse into one interval;
        // records without a tac neither extend nor break an interval.
        auto& out_devices = devices[r];
        for (const Entry& e : state.entries) {
          if (e.tac == kNoTac) continue;
          if (!out_devices.empty() && out_devices.back().tac == tac_names_[e.tac]) {
            out_devices.back().last_seen = e.timestamp;
          } else {
            out_devices.push_back({table.sim_ids[r], tac_names_[e.tac], e.timestamp, e.timestamp});
          }
        }
        std::vector<Entry>().swap(state.entries);
      }
    });

    for (std::size_t r = 0; r < n_sims; ++r) {
      const SimState& state = sims_[sim_order[r]];
      out.subscriber_conflicts += state.conflicts;
      if (state.has_subscriber)
        out.subscribers.push_back({table.sim_ids[r], state.customer, state.subscription, state.age, state.gender});
      for (auto& d : devices[r]) out.devices.push_back(std::move(d));
    }
    return out;
  }

 private:
  static constexpr std::uint32_t kNoTac = 0xffffffffu;

  struct Entry {
    Epoch timestamp;
    std::uint32_t cell;
    std::uint32_t tac;
  };

  struct SimState {
    std::vector<Entry> entries;
    bool has_subscriber = false;
    CustomerType customer = CustomerType::unknown;
    SubscriptionType subscription = SubscriptionType::unknown;
    std::optional<int> age;
    std::optional<Gender> gender;
    std::uint64_t conflicts = 0;
  };

  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  using Index = std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>>;

  static std::uint32_t intern(Index& index, std::vector<std::string>& names, std::string_view key) {
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    auto id = static_cast<std::uint32_t>(names.size());
    names.emplace_back(key);
    index.emplace(names.back(), id);
    return id;
  }

  static std::vector<std::uint32_t> sorted_order(const std::vector<std::string>& names) {
    std::vector<std::uint32_t> order(names.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return names[a] < names[b]; });
    return order;
  }

  bool tac_less(std::uint32_t a, std::uint32_t b) const {
    if (a == b) return false;
    if (a == kNoTac) return false;
    if (b == kNoTac) return true;
    return tac_names_[a] < tac_names_[b];
  }

  template <class T>
  static void absorb(T& held, T incoming, T unknown, std::uint64_t& conflicts) {
    if (incoming == unknown) return;
    if (held == unknown) held = incoming;
    else if (held != incoming) ++conflicts;
  }
  template <class T>
  static void absorb_optional(std::optional<T>& held, const std::optional<T>& incoming,
                              std::uint64_t& conflicts) {
    if (!incoming) return;
    if (!held) held = incoming;
    else if (*held != *incoming) ++conflicts;
  }

  Index sim_index_, cell_index_, tac_index_;
  std::vector<std::string> sim_names_, cell_names_, tac_names_;
  std::vector<SimState> sims_;
};

/// Restructures parsed rows into the three normalized tables.
template <class Range>
NormalizedTables normalize_tables(const Range& rows, unsigned threads = 1) {
  IngestAccumulator acc;
  for (const auto& row : rows) acc.add(row);
  return std::move(acc).finish(threads);
}

// ---------------------------------------------------------------------------
// Cleaning filter
// ---------------------------------------------------------------------------

inline std::size_t count_active_days(std::span<const Activity> sim_records, TzOffset tz) {
  std::size_t days = 0;
  std::optional<DayNumber> last;
  for (const auto& a : sim_records) {
    DayNumber d = tz.day_of(a.timestamp);
    if (!last || d != *last) {
      ++days;
      last = d;
    }
  }
  return days;
}

struct ExclusionReport {
  std::uint64_t input_sims = 0;
  std::uint64_t kept_sims = 0;
  std::uint64_t excluded_min_records = 0;      // failing the record-count rule
  std::uint64_t excluded_min_active_days = 0;  // failing the active-days rule
  std::uint64_t excluded_total = 0;
};

struct FilterResult {
  ActivityTable table;
  ExclusionReport report;
};

/// Keeps SIMs with at least `min_records` records and `min_active_days`
/// distinct local days. A SIM failing both rules counts under both reasons
/// and once in excluded_total.
inline FilterResult filter_sims(const ActivityTable& table, TzOffset tz, std::size_t min_records,
                                std::size_t min_active_days) {
  FilterResult out;
  out.table.cell_ids = table.cell_ids;
  out.report.input_sims = table.sim_count();
  for (std::size_t s = 0; s < table.sim_count(); ++s) {
    auto recs = table.of_sim(s);
    bool few_records = recs.size() < min_records;
    bool few_days = min_active_days > 0 && count_active_days(recs, tz) < min_active_days;
    if (few_records) ++out.report.excluded_min_records;
    if (few_days) ++out.report.excluded_min_active_days;
    if (few_records || few_days) {
      ++out.report.excluded_total;
      continue;
    }
    auto new_id = static_cast<std::uint32_t>(out.table.sim_ids.size());
    out.table.sim_ids.push_back(table.sim_ids[s]);
    for (auto a : recs) {
      a.sim = new_id;
      out.table.records.push_back(a);
    }
    out.table.offsets.push_back(out.table.records.size());
  }
  out.report.kept_sims = out.table.sim_count();
  return out;
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

/// SIMs bucketed by record count. Bucket i holds counts in
/// (edges[i-1], edges[i]]; the last bucket holds counts above edges.back().
struct ActivityHistogram {
  std::vector<std::uint64_t> bucket_edges;
  std::vector<std::uint64_t> sim_counts;
  std::vector<double> activity_share;
  std::uint64_t total_sims = 0;
  std::uint64_t total_records = 0;
};

struct HistogramResult {
  ActivityHistogram activity;
  std::map<std::size_t, std::uint64_t> active_days;  // days → SIM count
};

class HistogramAccumulator {
 public:
  explicit HistogramAccumulator(std::vector<std::uint64_t> edges) : edges_(std::move(edges)) {
    for (std::size_t i = 1; i < edges_.size(); ++i)
      if (edges_[i] <= edges_[i - 1]) throw_validation("histogram bucket edges must be strictly increasing");
    sims_.assign(edges_.size() + 1, 0);
    records_.assign(edges_.size() + 1, 0);
  }

  void add_sim(std::uint64_t record_count, std::size_t active_days) {
    auto bucket = static_cast<std::size_t>(std::lower_bound(edges_.begin(), edges_.end(), record_count) - edges_.begin());
    ++sims_[bucket];
    records_[bucket] += record_count;
    ++active_days_[active_days];
  }

  void merge(const HistogramAccumulator& other) {
    if (other.edges_ != edges_) throw_validation("cannot merge histograms with different edges");
    for (std::size_t i = 0; i < sims_.size(); ++i) {
      sims_[i] += other.sims_[i];
      records_[i] += other.records_[i];
    }
    for (auto [d, n] : other.active_days_) active_days_[d] += n;
  }

  HistogramResult finish() const {
    HistogramResult out;
    out.activity.bucket_edges = edges_;
    out.activity.sim_counts = sims_;
    out.activity.total_sims = std::accumulate(sims_.begin(), sims_.end(), std::uint64_t{0});
    out.activity.total_records = std::accumulate(records_.begin(), records_.end(), std::uint64_t{0});
    out.activity.activity_share.assign(records_.size(), 0.0);
    if (out.activity.total_records > 0)
      for (std::size_t i = 0; i < records_.size(); ++i)
        out.activity.activity_share[i] =
            static_cast<double>(records_[i]) / static_cast<double>(out.activity.total_records);
    out.active_days = active_days_;
    return out;
  }

 private:
  std::vector<std::uint64_t> edges_;
  std::vector<std::uint64_t> sims_;
  std::vector<std::uint64_t> records_;
  std::map<std::size_t, std::uint64_t> active_days_;
};

inline HistogramResult activity_histograms(const ActivityTable& table, TzOffset tz,
                                           std::vector<std::uint64_t> bucket_edges) {
  HistogramAccumulator acc(std::move(bucket_edges));
  for (std::size_t s = 0; s < table.sim_count(); ++s) {
    auto recs = table.of_sim(s);
    acc.add_sim(recs.size(), count_active_days(recs, tz));
  }
  return acc.finish();
}

// ---------------------------------------------------------------------------
// Table I/O
// ---------------------------------------------------------------------------


inline void write_activity_csv(const ActivityTable& table, const std::string& path) {
  BufferedWriter w(path);
  fmt::format_to(std::back_inserter(w.buf()), "sim_id,timestamp,cell_id\n");
  for (const auto& a : table.records) {
    fmt::format_to(std::back_inserter(w.buf()), "{},{},{}\n", table.sim_ids[a.sim], a.timestamp,
                   table.cell_ids[a.cell]);
    w.flush_if_large();
  }
  w.close();
}

/// Loads activity.csv back into canonical form.
inline ActivityTable read_activity_csv(const std::string& path, unsigned threads = 1) {
  CdrSchema schema;
  IngestAccumulator acc;
  auto stats = parse_cdr_file(path, schema, [&](const CdrRowView& row) { acc.add(row); });
  if (stats.malformed > 0)
    throw_validation(fmt::format("{}: {} malformed lines", path, stats.malformed));
  return std::move(acc).finish(threads).activity;
}

inline void write_subscribers_csv(const std::vector<SubscriberInfo>& subs, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "sim_id,customer_type,subscription_type,age,gender\n");
  for (const auto& s : subs) {
    fmt::format_to(out, "{},{},{},{},{}\n", s.sim_id, to_string(s.customer_type),
                   to_string(s.subscription_type), s.age ? std::to_string(*s.age) : std::string{},
                   s.gender ? std::string(to_string(*s.gender)) : std::string{});
    w.flush_if_large();
  }
  w.close();
}

inline void write_devices_csv(const std::vector<DeviceInterval>& devices, const std::string& path) {
  BufferedWriter w(path);
  auto out = std::back_inserter(w.buf());
  fmt::format_to(out, "sim_id,tac,first_seen,last_seen\n");
  for (const auto& d : devices) {
    fmt::format_to(out, "{},{},{},{}\n", d.sim_id, d.tac, d.first_seen, d.last_seen);
    w.flush_if_large();
  }
  w.close();
}

inline std::vector<DeviceInterval> read_devices_csv(const std::string& path) {
  std::vector<DeviceInterval> out;
  read_csv(path, {"sim_id", "tac", "first_seen", "last_seen"}, [&](const auto& f, std::size_t) {
    out.push_back({std::string(f[0]), std::string(f[1]), require_number<Epoch>(f[2], "first_seen"),
                   require_number<Epoch>(f[3], "last_seen")});
  });
  return out;
}

inline nlohmann::json to_json(const ParseStats& s) {
  nlohmann::json j;
  j["lines_in"] = s.lines_in;
  j["records_out"] = s.records_out;
  j["malformed"] = s.malformed;
  j["malformed_by_reason"] = s.malformed_by_reason;
  j["invalid_attributes"] = s.invalid_attributes;
  j["truncated_timestamps"] = s.truncated_timestamps;
  j["timestamp_format"] = s.timestamp_format == TimestampFormat::epoch ? "epoch"
                          : s.timestamp_format == TimestampFormat::iso ? "iso8601"
                                                                       : "undetected";
  return j;
}

inline nlohmann::json to_json(const HistogramResult& h) {
  nlohmann::json j;
  j["bucket_edges"] = h.activity.bucket_edges;
  j["sim_counts"] = h.activity.sim_counts;
  j["activity_share"] = h.activity.activity_share;
  j["total_sims"] = h.activity.total_sims;
  j["total_records"] = h.activity.total_records;
  nlohmann::json days = nlohmann::json::object();
  for (auto [d, n] : h.active_days) days[std::to_string(d)] = n;
  j["active_days"] = days;
  return j;
}

inline nlohmann::json to_json(const ExclusionReport& r) {
  return {{"input_sims", r.input_sims},
          {"kept_sims", r.kept_sims},
          {"excluded_min_records", r.excluded_min_records},
          {"excluded_min_active_days", r.excluded_min_active_days},
          {"excluded_total", r.excluded_total}};
}

}  // namespace chrono_cdr
