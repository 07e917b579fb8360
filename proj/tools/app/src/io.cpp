#include "mixinv_app/io.hpp"

#include "mixinv/sampler.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mixinv::app {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

YAML::Node load_yaml(const fs::path& path) {
  try {
    return YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw DataError(path.string() + ": cannot open for reading");
  } catch (const YAML::Exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <class T>
T yaml_field(const YAML::Node& root, const char* key, const fs::path& path) {
  if (!root[key]) throw DataError(path.string() + ": missing field '" + key + "'");
  try {
    return root[key].as<T>();
  } catch (const YAML::Exception&) {
    throw DataError(path.string() + ": malformed field '" + key + "'");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<double> parse_double(const std::string& field) {
  if (field.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

void write_observation_csv(const fs::path& path, const std::vector<Point2>& stations, const Vector& u) {
  std::ofstream out = open_out(path);
  out << "station,x1,x2,u\n";
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out << i << ',' << format_double(stations[i].x1) << ',' << format_double(stations[i].x2) << ','
        << format_double(u(static_cast<Eigen::Index>(i))) << '\n';
  }
}

std::vector<StationDatum> read_observation_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  strip_cr(line);
  if (line != "station,x1,x2,u") throw DataError(path.string() + ": unexpected header '" + line + "'");
  std::vector<StationDatum> data;
  long row = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++row;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    std::optional<double> x1, x2, u;
    if (f.size() == 4) {
      x1 = parse_double(f[1]);
      x2 = parse_double(f[2]);
      u = parse_double(f[3]);
    }
    if (!x1 || !x2 || !u || !std::isfinite(*u)) {
      throw DataError(path.string() + ": malformed record " + std::to_string(row));
    }
    data.push_back({{*x1, *x2}, *u});
  }
  if (data.empty()) throw DataError(path.string() + ": no measurements");
  return data;
}

void write_slip_csv(const fs::path& path, const SourceGrid& grid, const Vector& g) {
  std::ofstream out = open_out(path);
  out << "node,x1,x2,g\n";
  for (int j = 0; j < grid.size(); ++j) {
    const Point2 p = grid.node(j);
    out << j << ',' << format_double(p.x1) << ',' << format_double(p.x2) << ',' << format_double(g(j)) << '\n';
  }
}

void write_truth_yaml(const fs::path& path, const TruthRecord& t) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "m" << YAML::Value << YAML::Flow << std::vector<double>(t.m.data(), t.m.data() + t.m.size());
  e << YAML::Key << "d" << YAML::Value << t.d;
  e << YAML::Key << "sigma" << YAML::Value << t.sigma;
  e << YAML::Key << "noise_ratio_requested" << YAML::Value << t.noise_ratio_requested;
  e << YAML::Key << "noise_ratio_realized" << YAML::Value << t.noise_ratio_realized;
  e << YAML::Key << "u_norm" << YAML::Value << t.u_norm;
  e << YAML::Key << "seed" << YAML::Value << t.seed;
  e << YAML::EndMap;
  std::ofstream out = open_out(path);
  out << e.c_str() << '\n';
}

TruthRecord read_truth_yaml(const fs::path& path) {
  const YAML::Node root = load_yaml(path);
  TruthRecord t;
  const auto m = yaml_field<std::vector<double>>(root, "m", path);
  t.m = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  t.d = yaml_field<double>(root, "d", path);
  t.sigma = yaml_field<double>(root, "sigma", path);
  t.noise_ratio_requested = yaml_field<double>(root, "noise_ratio_requested", path);
  t.noise_ratio_realized = yaml_field<double>(root, "noise_ratio_realized", path);
  t.u_norm = yaml_field<double>(root, "u_norm", path);
  t.seed = yaml_field<std::uint64_t>(root, "seed", path);
  return t;
}

void write_model_yaml(const fs::path& path, const RunConfig& config, const PlanarSourceModel& model) {
  const auto& o = model.options();
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "kernel" << YAML::Value << "area / (4 pi r^2), source on x3 = a x1 + b x2 + d";
  e << YAML::Key << "parameters" << YAML::Value << YAML::Flow << std::vector<std::string>{"a", "b", "d / depth_scale"};
  e << YAML::Key << "depth_scale" << YAML::Value << o.depth_scale;
  e << YAML::Key << "grid" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "nx1" << YAML::Value
    << o.grid.nx1 << YAML::Key << "nx2" << YAML::Value << o.grid.nx2 << YAML::Key << "x1" << YAML::Value
    << YAML::Flow << std::vector<double>{o.grid.lo1, o.grid.hi1} << YAML::Key << "x2" << YAML::Value << YAML::Flow
    << std::vector<double>{o.grid.lo2, o.grid.hi2} << YAML::EndMap;
  e << YAML::Key << "measurements" << YAML::Value << model.measurement_count();
  e << YAML::Key << "sources" << YAML::Value << model.source_count();
  e << YAML::Key << "regularizer" << YAML::Value << "eps0 I + grid Laplacian";
  e << YAML::Key << "eps0" << YAML::Value << o.eps0;
  e << YAML::Key << "config_digest" << YAML::Value << config_digest(config);
  e << YAML::EndMap;
  std::ofstream out = open_out(path);
  out << e.c_str() << '\n';
}

Observation load_observation(const fs::path& data_dir, const PlanarSourceModel& model) {
  const fs::path path = data_dir / "observation.csv";
  const std::vector<StationDatum> data = read_observation_csv(path);
  const auto& stations = model.options().stations;
  if (data.size() != stations.size()) {
    throw DataError(path.string() + ": " + std::to_string(data.size()) + " measurements, configuration has " +
                    std::to_string(stations.size()) + " stations");
  }
  Observation obs;
  obs.u.resize(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double scale = 1.0 + std::abs(stations[i].x1) + std::abs(stations[i].x2);
    if (std::abs(data[i].position.x1 - stations[i].x1) > 1e-9 * scale ||
        std::abs(data[i].position.x2 - stations[i].x2) > 1e-9 * scale) {
      throw DataError(path.string() + ": station " + std::to_string(i) + " does not match the configured layout");
    }
    obs.u(static_cast<Eigen::Index>(i)) = data[i].u;
  }
  obs.provenance = path.string();
  const fs::path truth = data_dir / "truth.yaml";
  if (fs::exists(truth)) obs.sigma_known = read_truth_yaml(truth).sigma;
  return obs;
}

void write_chain(std::ostream& out, const std::vector<ChainRecord>& records) {
  out << kChainHeader << '\n';
  for (const ChainRecord& r : records) {
    out << r.index << ',' << r.iteration << ',' << r.stage << ',' << format_double(r.a) << ','
        << format_double(r.b) << ',' << format_double(r.d) << ',' << format_double(r.log10C) << ','
        << format_double(r.log_density) << ',' << format_double(r.sigma_max_sq) << '\n';
  }
}

void write_chain_file(const fs::path& path, const std::vector<ChainRecord>& records) {
  std::ofstream out = open_out(path);
  write_chain(out, records);
  if (!out) throw DataError(path.string() + ": write failed");
}

std::vector<ChainRecord> read_chain(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty chain file");
  strip_cr(line);
  if (line != kChainHeader) throw DataError(origin + ": unexpected header '" + line + "'");
  std::vector<ChainRecord> records;
  long number = 0;
  const auto bad = [&](const std::string& why) {
    throw DataError(origin + ": corrupt record " + std::to_string(number) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++number;
    // A final line without its newline is a truncated write.
    if (in.eof()) bad("truncated (no line terminator)");
    strip_cr(line);
    const auto f = split(line, ',');
    if (f.size() != 9) bad("expected 9 fields, found " + std::to_string(f.size()));
    ChainRecord r;
    long* ints[] = {&r.index, &r.iteration};
    for (int k = 0; k < 2; ++k) {
      const auto [ptr, ec] = std::from_chars(f[k].data(), f[k].data() + f[k].size(), *ints[k]);
      if (ec != std::errc() || ptr != f[k].data() + f[k].size()) bad("malformed integer '" + f[k] + "'");
    }
    {
      const auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), r.stage);
      if (ec != std::errc() || ptr != f[2].data() + f[2].size() || r.stage < 1 || r.stage > 3) {
        bad("malformed stage '" + f[2] + "'");
      }
    }
    double* values[] = {&r.a, &r.b, &r.d, &r.log10C, &r.log_density, &r.sigma_max_sq};
    for (int k = 0; k < 6; ++k) {
      const auto v = parse_double(f[static_cast<std::size_t>(k) + 3]);
      if (!v) bad("malformed number '" + f[static_cast<std::size_t>(k) + 3] + "'");
      *values[k] = *v;
    }
    if (r.index != number - 1) bad("index " + std::to_string(r.index) + " out of sequence");
    records.push_back(r);
  }
  if (records.empty()) throw DataError(origin + ": no records");
  return records;
}

std::vector<ChainRecord> read_chain_file(const fs::path& path) {
  std::ifstream in = open_in(path);
  return read_chain(in, path.string());
}

void write_series_csv(const fs::path& path, const std::vector<ChainRecord>& records) {
  std::ofstream out = open_out(path);
  out << "iteration,stage,mean_a,std_a,mean_b,std_b,mean_d_over_100,std_d_over_100,mean_log10C,std_log10C,"
         "max_log_density\n";
  RunningMoments moments(4);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ChainRecord& r = records[i];
    if (r.stage < 2) continue;
    moments.update(Vector{{r.a, r.b, r.d / 100.0, r.log10C}});
    best = std::max(best, r.log_density);
    const bool last_of_iteration = i + 1 == records.size() || records[i + 1].iteration != r.iteration;
    if (!last_of_iteration) continue;
    const Vector sd = moments.covariance().diagonal().cwiseMax(0.0).cwiseSqrt();
    out << r.iteration << ',' << r.stage;
    for (Eigen::Index k = 0; k < 4; ++k) out << ',' << format_double(moments.mean()(k)) << ',' << format_double(sd(k));
    out << ',' << format_double(best) << '\n';
  }
}

}  // namespace mixinv::app
