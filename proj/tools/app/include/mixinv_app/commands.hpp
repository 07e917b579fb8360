#pragma once

#include "mixinv_app/config.hpp"
#include "mixinv_app/report.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mixinv::app {

/// Command-line overrides applied on top of the configuration file.
struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> n_par;
  std::optional<std::string> method;
};

RunConfig resolve_config(const std::filesystem::path& path, const Overrides& overrides);

/// Writes observation.csv, truth.yaml, slip.csv and model.yaml into out_dir.
TruthRecord cmd_generate(const RunConfig& config, std::ostream& log);

struct InvertOutcome {
  SummaryReport report;
  std::filesystem::path chain_path;
};

/// Reads the data from data_dir (out_dir when unset) and writes chain.csv,
/// series.csv and report.yaml into out_dir.
InvertOutcome cmd_invert(const RunConfig& config, std::ostream& log);

struct BaselineRow {
  double err_ratio = 0.0;
  double C = 0.0;
  Vector m;  ///< empty when no C qualified
  double d = 0.0;
  double objective = 0.0;
  std::string status;
};

struct BaselineOutcome {
  BaselineMethod method = BaselineMethod::ClsGlobal;
  std::vector<BaselineRow> rows;
  std::filesystem::path table_path;
};

/// cls-global writes table.csv with columns Err/|u|,C,a,b,d. The other
/// methods write the local minima found by the multistart search.
BaselineOutcome cmd_baseline(const RunConfig& config, std::ostream& log);

SummaryReport cmd_diagnose(const std::filesystem::path& chain_path, std::optional<int> stage);

}  // namespace mixinv::app
