#pragma once

// Shared vocabulary for the chrono_cdr pipeline: error types, civil-time
// helpers, a minimal CSV splitter, deterministic parallel loops and the
// lower-median used across every module.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include <fmt/format.h>

namespace chrono_cdr {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind { validation, missing_prerequisite, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string producer = {})
      : std::runtime_error(message), kind_(kind), producer_(std::move(producer)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// For missing_prerequisite: the subcommand that produces the artifact.
  const std::string& producer() const noexcept { return producer_; }

 private:
  ErrorKind kind_;
  std::string producer_;
};

[[noreturn]] inline void throw_validation(const std::string& message) {
  throw Error(ErrorKind::validation, message);
}

[[noreturn]] inline void throw_io(const std::string& message) {
  throw Error(ErrorKind::io, message);
}

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::missing_prerequisite: return "missing_prerequisite";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

/// Seconds since 1970-01-01T00:00:00Z.
using Epoch = std::int64_t;
/// Days since 1970-01-01 in local civil time.
using DayNumber = std::int32_t;

inline constexpr int kSecondsPerDay = 86400;
inline constexpr int kMinutesPerDay = 1440;

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  return a - floor_div(a, b) * b;
}

/// Fixed offset of local civil time from UTC.
struct TzOffset {
  int minutes = 0;

  constexpr std::int64_t seconds() const { return std::int64_t{minutes} * 60; }
  constexpr DayNumber day_of(Epoch t) const {
    return static_cast<DayNumber>(floor_div(t + seconds(), kSecondsPerDay));
  }
  constexpr int second_of_day(Epoch t) const {
    return static_cast<int>(floor_mod(t + seconds(), kSecondsPerDay));
  }
  /// UTC epoch of local midnight that starts `day`.
  constexpr Epoch midnight(DayNumber day) const {
    return std::int64_t{day} * kSecondsPerDay - seconds();
  }
};

/// ISO weekday with Monday == 0.
constexpr int iso_weekday(DayNumber day) {
  // 1970-01-01 was a Thursday.
  return static_cast<int>(floor_mod(std::int64_t{day} + 3, 7));
}

inline DayNumber make_day(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  return static_cast<DayNumber>(
      sys_days{year{y} / month{m} / day{d}}.time_since_epoch().count());
}

inline std::chrono::year_month_day civil(DayNumber day) {
  return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{day}}};
}

inline std::string format_date(DayNumber day) {
  auto ymd = civil(day);
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

namespace detail {

inline bool parse_fixed_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

/// Parses "YYYY-MM-DD".
inline std::optional<DayNumber> parse_date(std::string_view s) {
  int y, m, d;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  if (!detail::parse_fixed_digits(s, 0, 4, y) || !detail::parse_fixed_digits(s, 5, 2, m) ||
      !detail::parse_fixed_digits(s, 8, 2, d))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                  std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return static_cast<DayNumber>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

/// Parses "YYYY-MM" into (year, month).
inline std::optional<std::pair<int, int>> parse_year_month(std::string_view s) {
  int y, m;
  if (s.size() < 7 || s[4] != '-') return std::nullopt;
  if (!detail::parse_fixed_digits(s, 0, 4, y) || !detail::parse_fixed_digits(s, 5, 2, m))
    return std::nullopt;
  if (m < 1 || m > 12) return std::nullopt;
  if (s.size() > 7 && !parse_date(s.substr(0, 10))) return std::nullopt;
  return std::pair{y, m};
}

/// Parses an ISO-8601 timestamp "YYYY-MM-DD[T ]HH:MM:SS[.fff][Z|+HH:MM|-HH:MM]".
/// Without an explicit offset the value is local civil time at `tz`.
/// Fractional seconds are dropped.
inline std::optional<Epoch> parse_iso_timestamp(std::string_view s, TzOffset tz) {
  if (s.size() < 19) return std::nullopt;
  auto day = parse_date(s.substr(0, 10));
  if (!day || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') return std::nullopt;
  int hh, mm, ss;
  if (!detail::parse_fixed_digits(s, 11, 2, hh) || !detail::parse_fixed_digits(s, 14, 2, mm) ||
      !detail::parse_fixed_digits(s, 17, 2, ss) || hh > 23 || mm > 59 || ss > 60)
    return std::nullopt;
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
  }
  std::int64_t offset_seconds = tz.seconds();
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      offset_seconds = 0;
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      int oh, om;
      if (!detail::parse_fixed_digits(s, pos + 1, 2, oh) ||
          !detail::parse_fixed_digits(s, pos + 4, 2, om))
        return std::nullopt;
      offset_seconds = (oh * 3600 + om * 60) * (s[pos] == '-' ? -1 : 1);
    } else {
      return std::nullopt;
    }
  }
  return std::int64_t{*day} * kSecondsPerDay + hh * 3600 + mm * 60 + ss - offset_seconds;
}

/// "YYYY-MM-DDTHH:MM:SS" in local civil time.
inline std::string format_local_timestamp(Epoch t, TzOffset tz) {
  int sod = tz.second_of_day(t);
  return fmt::format("{}T{:02d}:{:02d}:{:02d}", format_date(tz.day_of(t)), sod / 3600,
                     (sod / 60) % 60, sod % 60);
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

/// Splits one CSV line on commas. Quoting is not supported; none of the
/// pipeline's formats contain embedded commas.
inline void split_csv(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

/// Column lookup by header name.
inline std::optional<std::size_t> find_column(const std::vector<std::string_view>& header,
                                              std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}

/// Reads a headered CSV and hands each data row (already split) to `fn`.
/// Throws io errors for unreadable files and validation errors when a
/// required column is missing.
template <class Fn>
void read_csv(const std::string& path, const std::vector<std::string_view>& required, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw_io("cannot open " + path);
  std::string line;
  std::vector<std::string_view> header_fields;
  if (!std::getline(in, line)) throw_validation(path + ": empty file, header expected");
  std::string header_line = line;
  split_csv(header_line, header_fields);
  std::vector<std::size_t> index;
  for (auto name : required) {
    auto col = find_column(header_fields, name);
    if (!col) throw_validation(fmt::format("{}: missing column '{}'", path, name));
    index.push_back(*col);
  }
  std::vector<std::string_view> fields;
  std::vector<std::string_view> picked(required.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    split_csv(line, fields);
    bool ok = true;
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= fields.size()) {
        ok = false;
        break;
      }
      picked[i] = fields[index[i]];
    }
    if (!ok) throw_validation(fmt::format("{}:{}: too few fields", path, line_no));
    fn(picked, line_no);
  }
  if (in.bad()) throw_io("read error on " + path);
}

template <class T>
T require_number(std::string_view s, const char* what) {
  auto v = parse_number<T>(s);
  if (!v) throw_validation(fmt::format("invalid {} '{}'", what, s));
  return *v;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Output file with an fmt buffer; close() reports write failures.
class BufferedWriter {
 public:
  explicit BufferedWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw_io("cannot write " + path);
  }
  ~BufferedWriter() {
    try {
      close();
    } catch (...) {
    }
  }
  fmt::memory_buffer& buf() { return mbuf_; }
  void flush_if_large() {
    if (mbuf_.size() > (1u << 20)) flush();
  }
  void flush() {
    out_.write(mbuf_.data(), static_cast<std::streamsize>(mbuf_.size()));
    mbuf_.clear();
  }
  void close() {
    if (!out_.is_open()) return;
    flush();
    out_.close();
    if (out_.fail()) throw_io("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
  fmt::memory_buffer mbuf_;
};


// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Lower median: element (n-1)/2 of the sorted values. Empty input → nullopt.
template <class T>
std::optional<T> lower_median(std::vector<T> values) {
  if (values.empty()) return std::nullopt;
  auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

// ---------------------------------------------------------------------------
// Parallel loops
// ---------------------------------------------------------------------------

/// Effective worker count; 0 means hardware concurrency.
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(chunk, begin, end) over `threads` contiguous slices of [0, n).
/// Slices depend only on (n, threads); callers that need thread-count
/// independent output must reduce per-item results, not per-chunk ones,
/// unless the reduction is exact (integer sums).
template <class Fn>
void parallel_chunks(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::size_t chunks = std::min<std::size_t>(threads, n);
  std::vector<std::thread> workers;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  workers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t begin = n * c / chunks;
    std::size_t end = n * (c + 1) / chunks;
    workers.emplace_back([&, c, begin, end] {
      try {
        fn(c, begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline std::size_t chunk_count(std::size_t n, unsigned threads) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2) return 1;
  return std::min<std::size_t>(threads, n);
}

}  // namespace chrono_cdr
