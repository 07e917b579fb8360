#pragma once

#include "mixinv_app/io.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mixinv::app {

/// Moments of (a, b, d, log10C) over the selected records.
struct SummaryReport {
  std::optional<int> stage;  ///< stage filter; all records when unset
  long records = 0;
  std::array<double, 4> mean{};
  std::array<double, 4> std{};  ///< sqrt of the sample covariance diagonal (divisor count - 1)
  double expected_sigma_max = 0.0;
  // Run metadata; not recoverable from the chain file.
  std::optional<std::array<double, 3>> acceptance;
  std::optional<double> wall_seconds;
  std::string config_digest;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_par;
};

inline constexpr std::array<const char*, 4> kCoordinateNames{"a", "b", "d", "log10C"};

/// Throws DataError when no record matches the filter.
SummaryReport summarize(const std::vector<ChainRecord>& records, std::optional<int> stage);

std::string render_report(const SummaryReport& report);
void write_report_file(const std::filesystem::path& path, const SummaryReport& report);
SummaryReport read_report_file(const std::filesystem::path& path);

/// "(a, b, d) = (...) +- (...)" plus log10 C and the sigma estimate.
std::string describe(const SummaryReport& report);

}  // namespace mixinv::app
