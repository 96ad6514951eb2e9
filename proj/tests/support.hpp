#pragma once

// Shared helpers for the test binaries: seeded generators, temp dirs and
// small builders for activity tables.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chrono_cdr/ingest.hpp"

namespace chrono_cdr::testing {

inline std::mt19937_64 rng_for(std::uint64_t case_index, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(case_index), static_cast<std::uint32_t>(case_index >> 32),
                    static_cast<std::uint32_t>(salt), 0x5eedu};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("chrono_cdr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Row {
  std::string sim;
  Epoch t;
  std::string cell;
};

/// Activity table built from (sim, time, cell) rows through the ingest path.
inline ActivityTable table_of(const std::vector<Row>& rows) {
  IngestAccumulator acc;
  for (const auto& r : rows) {
    CdrRowView v;
    v.sim_id = r.sim;
    v.timestamp = r.t;
    v.cell_id = r.cell;
    acc.add(v);
  }
  return std::move(acc).finish().activity;
}

}  // namespace chrono_cdr::testing
