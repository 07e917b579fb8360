#pragma once

#include "mixinv/models.hpp"
#include "mixinv_app/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mixinv::app {

/// Contents of truth.yaml written by `generate`.
struct TruthRecord {
  Vector m;
  double d = 0.0;  ///< physical depth offset, m(2) * depth_scale
  double sigma = 0.0;
  double noise_ratio_requested = 0.0;
  double noise_ratio_realized = 0.0;
  double u_norm = 0.0;
  std::uint64_t seed = 0;
};

struct StationDatum {
  Point2 position;
  double u = 0.0;
};

/// Fixed-width decimal rendering with 17 significant digits (exact round trip).
std::string format_double(double v);

/// Strict parse of a full field; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(const std::string& field);

void write_observation_csv(const std::filesystem::path& path, const std::vector<Point2>& stations, const Vector& u);
std::vector<StationDatum> read_observation_csv(const std::filesystem::path& path);

void write_slip_csv(const std::filesystem::path& path, const SourceGrid& grid, const Vector& g);
void write_truth_yaml(const std::filesystem::path& path, const TruthRecord& truth);
TruthRecord read_truth_yaml(const std::filesystem::path& path);
void write_model_yaml(const std::filesystem::path& path, const RunConfig& config, const PlanarSourceModel& model);

/// Observation for the configured model; stations must match the configuration.
Observation load_observation(const std::filesystem::path& data_dir, const PlanarSourceModel& model);

/// One chain record. d is the physical depth offset.
struct ChainRecord {
  long index = 0;
  long iteration = 0;
  int stage = 0;
  double a = 0.0;
  double b = 0.0;
  double d = 0.0;
  double log10C = 0.0;
  double log_density = 0.0;
  double sigma_max_sq = 0.0;
};

inline constexpr const char* kChainHeader = "index,iteration,stage,a,b,d,log10C,log_density,sigma_max_sq";

void write_chain(std::ostream& out, const std::vector<ChainRecord>& records);
void write_chain_file(const std::filesystem::path& path, const std::vector<ChainRecord>& records);

/// Throws DataError naming the first malformed record (1-based, header excluded).
std::vector<ChainRecord> read_chain(std::istream& in, const std::string& origin);
std::vector<ChainRecord> read_chain_file(const std::filesystem::path& path);

/// Running mean/std of a, b, d/100 and log10C after every iteration of stages 2 and 3.
void write_series_csv(const std::filesystem::path& path, const std::vector<ChainRecord>& records);

}  // namespace mixinv::app
