#include "mixinv_app/report.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mixinv::app {

namespace {

std::array<double, 4> coordinates(const ChainRecord& r) { return {r.a, r.b, r.d, r.log10C}; }

}  // namespace

SummaryReport summarize(const std::vector<ChainRecord>& records, std::optional<int> stage) {
  SummaryReport report;
  report.stage = stage;
  std::array<double, 4> sum{};
  double sigma_sum = 0.0;
  for (const ChainRecord& r : records) {
    if (stage && r.stage != *stage) continue;
    ++report.records;
    const auto x = coordinates(r);
    for (int k = 0; k < 4; ++k) sum[k] += x[k];
    sigma_sum += std::sqrt(std::max(r.sigma_max_sq, 0.0));
  }
  if (report.records == 0) {
    throw DataError(stage ? "no chain records in stage " + std::to_string(*stage) : "no chain records");
  }
  const double n = static_cast<double>(report.records);
  for (int k = 0; k < 4; ++k) report.mean[k] = sum[k] / n;
  report.expected_sigma_max = sigma_sum / n;
  // Second pass about the mean.
  std::array<double, 4> sq{};
  for (const ChainRecord& r : records) {
    if (stage && r.stage != *stage) continue;
    const auto x = coordinates(r);
    for (int k = 0; k < 4; ++k) sq[k] += (x[k] - report.mean[k]) * (x[k] - report.mean[k]);
  }
  for (int k = 0; k < 4; ++k) report.std[k] = report.records > 1 ? std::sqrt(sq[k] / (n - 1.0)) : 0.0;
  return report;
}

std::string render_report(const SummaryReport& r) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "stage" << YAML::Value;
  if (r.stage) e << *r.stage; else e << "all";
  e << YAML::Key << "records" << YAML::Value << r.records;
  e << YAML::Key << "mean" << YAML::Value << YAML::BeginMap;
  for (int k = 0; k < 4; ++k) e << YAML::Key << kCoordinateNames[k] << YAML::Value << r.mean[k];
  e << YAML::EndMap;
  e << YAML::Key << "std" << YAML::Value << YAML::BeginMap;
  for (int k = 0; k < 4; ++k) e << YAML::Key << kCoordinateNames[k] << YAML::Value << r.std[k];
  e << YAML::EndMap;
  e << YAML::Key << "expected_sigma_max" << YAML::Value << r.expected_sigma_max;
  if (r.acceptance) {
    e << YAML::Key << "acceptance" << YAML::Value << YAML::BeginMap;
    for (int s = 0; s < 3; ++s) e << YAML::Key << "stage" + std::to_string(s + 1) << YAML::Value << (*r.acceptance)[s];
    e << YAML::EndMap;
  }
  if (r.wall_seconds) e << YAML::Key << "wall_seconds" << YAML::Value << *r.wall_seconds;
  if (!r.config_digest.empty()) e << YAML::Key << "config_digest" << YAML::Value << r.config_digest;
  if (r.seed) e << YAML::Key << "seed" << YAML::Value << *r.seed;
  if (r.n_par) e << YAML::Key << "n_par" << YAML::Value << *r.n_par;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

void write_report_file(const std::filesystem::path& path, const SummaryReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << render_report(report);
}

SummaryReport read_report_file(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  SummaryReport r;
  try {
    const std::string stage = root["stage"].as<std::string>();
    if (stage != "all") r.stage = std::stoi(stage);
    r.records = root["records"].as<long>();
    for (int k = 0; k < 4; ++k) {
      r.mean[k] = root["mean"][kCoordinateNames[k]].as<double>();
      r.std[k] = root["std"][kCoordinateNames[k]].as<double>();
    }
    r.expected_sigma_max = root["expected_sigma_max"].as<double>();
    if (root["acceptance"]) {
      std::array<double, 3> acc{};
      for (int s = 0; s < 3; ++s) acc[s] = root["acceptance"]["stage" + std::to_string(s + 1)].as<double>();
      r.acceptance = acc;
    }
    if (root["wall_seconds"]) r.wall_seconds = root["wall_seconds"].as<double>();
    if (root["config_digest"]) r.config_digest = root["config_digest"].as<std::string>();
    if (root["seed"]) r.seed = root["seed"].as<std::uint64_t>();
    if (root["n_par"]) r.n_par = root["n_par"].as<int>();
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": malformed report (" + e.what() + ")");
  }
  return r;
}

std::string describe(const SummaryReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "(a, b, d) = (%.4g, %.4g, %.4g) +- (%.2g, %.2g, %.2g); log10 C = %.3g +- %.2g; "
                "E[sigma_max] = %.4g (%ld records)",
                r.mean[0], r.mean[1], r.mean[2], r.std[0], r.std[1], r.std[2], r.mean[3], r.std[3],
                r.expected_sigma_max, r.records);
  return buf;
}

}  // namespace mixinv::app
