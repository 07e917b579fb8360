#pragma once

#include "mixinv/models.hpp"
#include "mixinv/posterior.hpp"
#include "mixinv/sampler.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixinv::app {

/// Malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, malformed or inconsistent data files (exit code 3).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StationLayout {
  int count = 51;
  Point2 lo{-10.0, -10.0};
  Point2 hi{50.0, 50.0};
  std::uint64_t seed = 17;
  /// Explicit coordinates; when non-empty they replace the scattered layout.
  std::vector<Point2> explicit_points;
};

struct TruthSpec {
  Vector m{{-0.12, -0.26, -0.14}};
  double noise_ratio = 0.05;
  std::vector<Bump> bumps{{{12.0, 14.0}, 9.0, 1.0}, {{28.0, 26.0}, 8.0, 0.7}};
};

struct ProblemSpec {
  SourceGrid grid;
  StationLayout stations;
  double eps0 = 1e-2;
  double depth_scale = 100.0;
  std::vector<std::pair<double, double>> m_bounds{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
  TruthSpec truth;
};

enum class BaselineMethod { GcvPointwise, GcvGlobal, ClsPointwise, ClsGlobal };

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::ClsGlobal;
  double C_lo = 1e-8;
  double C_hi = 1e2;
  int C_count = 100;
  int m_grid_per_axis = 9;
  /// Box for the m grid and the local searches; the problem bounds when empty.
  std::vector<std::pair<double, double>> m_grid_box;
  std::vector<double> err_ratios{0.2, 0.1, 0.05, 0.01};
  int starts = 8;
  int budget = 200;
  /// Noise level for pointwise discrepancy; the generated truth is used when unset.
  std::optional<double> sigma;
};

struct RunConfig {
  ProblemSpec problem;
  PriorSpec prior = PriorSpec::unit_box(3);
  SamplerConfig sampler;
  BaselineSpec baseline;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  /// Source text of the file; kept for the digest.
  std::string source;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");

/// Canonical YAML rendering of the resolved configuration.
std::string render_config(const RunConfig& config);

/// FNV-1a 64-bit hash of the canonical rendering, as 16 hex digits.
std::string config_digest(const RunConfig& config);

PlanarSourceModel build_model(const ProblemSpec& problem);

std::string to_string(BaselineMethod method);
BaselineMethod parse_baseline_method(const std::string& name);

}  // namespace mixinv::app
