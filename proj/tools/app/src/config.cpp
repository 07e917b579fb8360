#include "mixinv_app/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mixinv::app {

namespace {

// Wraps yaml-cpp nodes so every error names the origin, line and dotted field.
class Reader {
 public:
  explicit Reader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& field, const std::string& what) const {
    std::ostringstream msg;
    msg << origin_;
    if (node.IsDefined() && node.Mark().line >= 0) {
      msg << ":" << node.Mark().line + 1 << ":" << node.Mark().column + 1;
    }
    msg << ": field '" << field << "': " << what;
    throw ConfigError(msg.str());
  }

  void expect_map(const YAML::Node& node, const std::string& field, const std::set<std::string>& allowed) const {
    if (!node.IsMap()) fail(node, field, "expected a mapping");
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(kv.first, join(field, key), "unknown key");
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& field, const char* kind) const {
    if (!node.IsScalar()) fail(node, field, std::string("expected ") + kind);
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, field, std::string("expected ") + kind + ", got '" + node.Scalar() + "'");
    }
  }

  double number(const YAML::Node& node, const std::string& field) const {
    return scalar<double>(node, field, "a number");
  }
  int integer(const YAML::Node& node, const std::string& field) const {
    return scalar<int>(node, field, "an integer");
  }
  std::uint64_t unsigned_integer(const YAML::Node& node, const std::string& field) const {
    if (node.IsScalar() && !node.Scalar().empty() && node.Scalar().front() == '-') {
      fail(node, field, "expected a non-negative integer");
    }
    return scalar<std::uint64_t>(node, field, "a non-negative integer");
  }
  std::string text(const YAML::Node& node, const std::string& field) const {
    return scalar<std::string>(node, field, "a string");
  }

  std::vector<double> numbers(const YAML::Node& node, const std::string& field, std::size_t size = 0) const {
    if (!node.IsSequence()) fail(node, field, "expected a list of numbers");
    if (size != 0 && node.size() != size) {
      fail(node, field, "expected " + std::to_string(size) + " entries, got " + std::to_string(node.size()));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < node.size(); ++i) {
      out.push_back(number(node[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  std::pair<double, double> interval(const YAML::Node& node, const std::string& field) const {
    const std::vector<double> v = numbers(node, field, 2);
    if (!(v[0] < v[1])) fail(node, field, "lower bound must be below upper bound");
    return {v[0], v[1]};
  }

  std::vector<std::pair<double, double>> intervals(const YAML::Node& node, const std::string& field) const {
    if (!node.IsSequence()) fail(node, field, "expected a list of [lower, upper] pairs");
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < node.size(); ++i) {
      out.push_back(interval(node[i], field + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  Point2 point(const YAML::Node& node, const std::string& field) const {
    const std::vector<double> v = numbers(node, field, 2);
    return {v[0], v[1]};
  }

  static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

 private:
  std::string origin_;
};

void read_grid(const Reader& r, const YAML::Node& node, SourceGrid& grid) {
  r.expect_map(node, "problem.grid", {"nx1", "nx2", "x1", "x2"});
  if (node["nx1"]) grid.nx1 = r.integer(node["nx1"], "problem.grid.nx1");
  if (node["nx2"]) grid.nx2 = r.integer(node["nx2"], "problem.grid.nx2");
  if (grid.nx1 < 1) r.fail(node["nx1"], "problem.grid.nx1", "must be at least 1");
  if (grid.nx2 < 1) r.fail(node["nx2"], "problem.grid.nx2", "must be at least 1");
  if (node["x1"]) std::tie(grid.lo1, grid.hi1) = r.interval(node["x1"], "problem.grid.x1");
  if (node["x2"]) std::tie(grid.lo2, grid.hi2) = r.interval(node["x2"], "problem.grid.x2");
}

void read_stations(const Reader& r, const YAML::Node& node, StationLayout& s) {
  r.expect_map(node, "problem.stations", {"count", "lo", "hi", "seed", "points"});
  if (node["count"]) s.count = r.integer(node["count"], "problem.stations.count");
  if (s.count < 1) r.fail(node["count"], "problem.stations.count", "must be at least 1");
  if (node["lo"]) s.lo = r.point(node["lo"], "problem.stations.lo");
  if (node["hi"]) s.hi = r.point(node["hi"], "problem.stations.hi");
  if (node["seed"]) s.seed = r.unsigned_integer(node["seed"], "problem.stations.seed");
  if (node["points"]) {
    const YAML::Node pts = node["points"];
    if (!pts.IsSequence() || pts.size() == 0) r.fail(pts, "problem.stations.points", "expected a non-empty list");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s.explicit_points.push_back(r.point(pts[i], "problem.stations.points[" + std::to_string(i) + "]"));
    }
    s.count = static_cast<int>(s.explicit_points.size());
  }
}

void read_truth(const Reader& r, const YAML::Node& node, TruthSpec& t) {
  r.expect_map(node, "problem.truth", {"m", "noise_ratio", "bumps"});
  if (node["m"]) {
    const std::vector<double> m = r.numbers(node["m"], "problem.truth.m", 3);
    t.m = Eigen::Map<const Vector>(m.data(), 3);
  }
  if (node["noise_ratio"]) t.noise_ratio = r.number(node["noise_ratio"], "problem.truth.noise_ratio");
  if (t.noise_ratio < 0.0) r.fail(node["noise_ratio"], "problem.truth.noise_ratio", "must be non-negative");
  if (node["bumps"]) {
    const YAML::Node list = node["bumps"];
    if (!list.IsSequence()) r.fail(list, "problem.truth.bumps", "expected a list");
    t.bumps.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string f = "problem.truth.bumps[" + std::to_string(i) + "]";
      r.expect_map(list[i], f, {"center", "radius", "amplitude"});
      Bump b;
      if (!list[i]["center"]) r.fail(list[i], f + ".center", "missing");
      b.center = r.point(list[i]["center"], f + ".center");
      if (list[i]["radius"]) b.radius = r.number(list[i]["radius"], f + ".radius");
      if (list[i]["amplitude"]) b.amplitude = r.number(list[i]["amplitude"], f + ".amplitude");
      if (!(b.radius > 0.0)) r.fail(list[i]["radius"], f + ".radius", "must be positive");
      t.bumps.push_back(b);
    }
  }
}

void read_problem(const Reader& r, const YAML::Node& node, ProblemSpec& p) {
  r.expect_map(node, "problem", {"grid", "stations", "eps0", "depth_scale", "m_bounds", "truth"});
  if (node["grid"]) read_grid(r, node["grid"], p.grid);
  if (node["stations"]) read_stations(r, node["stations"], p.stations);
  if (node["eps0"]) p.eps0 = r.number(node["eps0"], "problem.eps0");
  if (!(p.eps0 > 0.0)) r.fail(node["eps0"], "problem.eps0", "must be positive");
  if (node["depth_scale"]) p.depth_scale = r.number(node["depth_scale"], "problem.depth_scale");
  if (!(p.depth_scale > 0.0)) r.fail(node["depth_scale"], "problem.depth_scale", "must be positive");
  if (node["m_bounds"]) {
    p.m_bounds = r.intervals(node["m_bounds"], "problem.m_bounds");
    if (p.m_bounds.size() != 3) r.fail(node["m_bounds"], "problem.m_bounds", "expected three intervals (a, b, d)");
  }
  if (node["truth"]) read_truth(r, node["truth"], p.truth);
}

void read_prior(const Reader& r, const YAML::Node& node, PriorSpec& prior) {
  r.expect_map(node, "prior", {"m_box", "log10C"});
  if (node["m_box"]) {
    prior.m_box = r.intervals(node["m_box"], "prior.m_box");
    if (prior.m_box.size() != 3) r.fail(node["m_box"], "prior.m_box", "expected three intervals (a, b, d)");
  }
  if (node["log10C"]) prior.logC_range = r.interval(node["log10C"], "prior.log10C");
}

void read_sampler(const Reader& r, const YAML::Node& node, SamplerConfig& s) {
  r.expect_map(node, "sampler",
               {"N1", "N2", "N3", "n_par", "beta", "scale", "jitter", "jitter_floor", "transition", "centering",
                "threads", "min_stage1_ess"});
  if (node["N1"]) s.N1 = r.integer(node["N1"], "sampler.N1");
  if (node["N2"]) s.N2 = r.integer(node["N2"], "sampler.N2");
  if (node["N3"]) s.N3 = r.integer(node["N3"], "sampler.N3");
  if (node["n_par"]) s.n_par = r.integer(node["n_par"], "sampler.n_par");
  if (node["beta"]) s.beta = r.number(node["beta"], "sampler.beta");
  if (node["scale"]) s.scale = r.number(node["scale"], "sampler.scale");
  if (node["jitter"]) s.jitter = r.number(node["jitter"], "sampler.jitter");
  if (node["jitter_floor"]) s.jitter_floor = r.number(node["jitter_floor"], "sampler.jitter_floor");
  if (node["threads"]) s.threads = r.integer(node["threads"], "sampler.threads");
  if (node["min_stage1_ess"]) s.min_stage1_ess = r.number(node["min_stage1_ess"], "sampler.min_stage1_ess");
  if (node["transition"]) {
    const std::string v = r.text(node["transition"], "sampler.transition");
    if (v == "index-chain") s.transition = TransitionMode::IndexChain;
    else if (v == "per-row") s.transition = TransitionMode::PerRow;
    else r.fail(node["transition"], "sampler.transition", "expected index-chain or per-row");
  }
  if (node["centering"]) {
    const std::string v = r.text(node["centering"], "sampler.centering");
    if (v == "auxiliary") s.centering = ProposalCentering::Auxiliary;
    else if (v == "per-column") s.centering = ProposalCentering::PerColumn;
    else r.fail(node["centering"], "sampler.centering", "expected auxiliary or per-column");
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(node, "sampler", e.what());
  }
}

void read_baseline(const Reader& r, const YAML::Node& node, BaselineSpec& b) {
  r.expect_map(node, "baseline",
               {"method", "C_grid", "m_grid_per_axis", "m_grid_box", "err_ratios", "starts", "budget", "sigma"});
  if (node["method"]) {
    try {
      b.method = parse_baseline_method(r.text(node["method"], "baseline.method"));
    } catch (const ConfigError& e) {
      r.fail(node["method"], "baseline.method", e.what());
    }
  }
  if (node["C_grid"]) {
    const YAML::Node g = node["C_grid"];
    r.expect_map(g, "baseline.C_grid", {"lo", "hi", "count"});
    if (g["lo"]) b.C_lo = r.number(g["lo"], "baseline.C_grid.lo");
    if (g["hi"]) b.C_hi = r.number(g["hi"], "baseline.C_grid.hi");
    if (g["count"]) b.C_count = r.integer(g["count"], "baseline.C_grid.count");
    if (!(b.C_lo > 0.0 && b.C_hi > b.C_lo && b.C_count >= 2)) {
      r.fail(g, "baseline.C_grid", "need 0 < lo < hi and count >= 2");
    }
  }
  if (node["m_grid_per_axis"]) b.m_grid_per_axis = r.integer(node["m_grid_per_axis"], "baseline.m_grid_per_axis");
  if (b.m_grid_per_axis < 1) r.fail(node["m_grid_per_axis"], "baseline.m_grid_per_axis", "must be at least 1");
  if (node["m_grid_box"]) {
    b.m_grid_box = r.intervals(node["m_grid_box"], "baseline.m_grid_box");
    if (b.m_grid_box.size() != 3) r.fail(node["m_grid_box"], "baseline.m_grid_box", "expected three intervals");
  }
  if (node["err_ratios"]) {
    b.err_ratios = r.numbers(node["err_ratios"], "baseline.err_ratios");
    for (double v : b.err_ratios)
      if (!(v >= 0.0)) r.fail(node["err_ratios"], "baseline.err_ratios", "ratios must be non-negative");
  }
  if (node["starts"]) b.starts = r.integer(node["starts"], "baseline.starts");
  if (b.starts < 1) r.fail(node["starts"], "baseline.starts", "must be at least 1");
  if (node["budget"]) b.budget = r.integer(node["budget"], "baseline.budget");
  if (b.budget < 1) r.fail(node["budget"], "baseline.budget", "must be at least 1");
  if (node["sigma"]) {
    b.sigma = r.number(node["sigma"], "baseline.sigma");
    if (!(*b.sigma > 0.0)) r.fail(node["sigma"], "baseline.sigma", "must be positive");
  }
}

void emit_pair_list(YAML::Emitter& out, const std::vector<std::pair<double, double>>& v) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const auto& [lo, hi] : v) out << YAML::Flow << YAML::BeginSeq << lo << hi << YAML::EndSeq;
  out << YAML::EndSeq;
}

}  // namespace

std::string to_string(BaselineMethod method) {
  switch (method) {
    case BaselineMethod::GcvPointwise: return "gcv-pointwise";
    case BaselineMethod::GcvGlobal: return "gcv-global";
    case BaselineMethod::ClsPointwise: return "cls-pointwise";
    case BaselineMethod::ClsGlobal: return "cls-global";
  }
  return "?";
}

BaselineMethod parse_baseline_method(const std::string& name) {
  for (BaselineMethod m : {BaselineMethod::GcvPointwise, BaselineMethod::GcvGlobal, BaselineMethod::ClsPointwise,
                           BaselineMethod::ClsGlobal}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown baseline method '" + name +
                    "' (expected gcv-pointwise, gcv-global, cls-pointwise or cls-global)");
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  const Reader r(origin);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(origin + ": expected a mapping at the top level");
  r.expect_map(root, "", {"seed", "io", "problem", "prior", "sampler", "baseline"});

  RunConfig config;
  config.source = text;
  if (!root["seed"]) throw ConfigError(origin + ": field 'seed': missing (a seed is mandatory)");
  config.seed = r.unsigned_integer(root["seed"], "seed");
  if (const YAML::Node io = root["io"]) {
    r.expect_map(io, "io", {"data_dir", "out_dir"});
    if (io["data_dir"]) config.data_dir = r.text(io["data_dir"], "io.data_dir");
    if (io["out_dir"]) config.out_dir = r.text(io["out_dir"], "io.out_dir");
  }
  if (root["problem"]) read_problem(r, root["problem"], config.problem);
  if (root["prior"]) read_prior(r, root["prior"], config.prior);
  if (root["sampler"]) read_sampler(r, root["sampler"], config.sampler);
  if (root["baseline"]) read_baseline(r, root["baseline"], config.baseline);
  config.sampler.seed = config.seed;
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  RunConfig config = parse_config(buffer.str(), path.string());
  // Relative data/output paths are taken relative to the working directory.
  return config;
}

std::string render_config(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  const ProblemSpec& p = c.problem;
  const SamplerConfig& s = c.sampler;
  const BaselineSpec& b = c.baseline;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "problem" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "grid" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "nx1" << YAML::Value
      << p.grid.nx1 << YAML::Key << "nx2" << YAML::Value << p.grid.nx2 << YAML::Key << "x1" << YAML::Value
      << YAML::Flow << YAML::BeginSeq << p.grid.lo1 << p.grid.hi1 << YAML::EndSeq << YAML::Key << "x2"
      << YAML::Value << YAML::Flow << YAML::BeginSeq << p.grid.lo2 << p.grid.hi2 << YAML::EndSeq << YAML::EndMap;
  out << YAML::Key << "stations" << YAML::Value << YAML::BeginMap;
  if (p.stations.explicit_points.empty()) {
    out << YAML::Key << "count" << YAML::Value << p.stations.count;
    out << YAML::Key << "lo" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.stations.lo.x1 << p.stations.lo.x2
        << YAML::EndSeq;
    out << YAML::Key << "hi" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.stations.hi.x1 << p.stations.hi.x2
        << YAML::EndSeq;
    out << YAML::Key << "seed" << YAML::Value << p.stations.seed;
  } else {
    out << YAML::Key << "points" << YAML::Value << YAML::BeginSeq;
    for (const Point2& q : p.stations.explicit_points)
      out << YAML::Flow << YAML::BeginSeq << q.x1 << q.x2 << YAML::EndSeq;
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  out << YAML::Key << "eps0" << YAML::Value << p.eps0;
  out << YAML::Key << "depth_scale" << YAML::Value << p.depth_scale;
  out << YAML::Key << "m_bounds" << YAML::Value;
  emit_pair_list(out, p.m_bounds);
  out << YAML::Key << "truth" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "m" << YAML::Value << YAML::Flow << YAML::BeginSeq << p.truth.m(0) << p.truth.m(1)
      << p.truth.m(2) << YAML::EndSeq;
  out << YAML::Key << "noise_ratio" << YAML::Value << p.truth.noise_ratio;
  out << YAML::Key << "bumps" << YAML::Value << YAML::BeginSeq;
  for (const Bump& bump : p.truth.bumps) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "center" << YAML::Value << YAML::Flow << YAML::BeginSeq
        << bump.center.x1 << bump.center.x2 << YAML::EndSeq << YAML::Key << "radius" << YAML::Value << bump.radius
        << YAML::Key << "amplitude" << YAML::Value << bump.amplitude << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "prior" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "m_box" << YAML::Value;
  emit_pair_list(out, c.prior.m_box);
  out << YAML::Key << "log10C" << YAML::Value << YAML::Flow << YAML::BeginSeq << c.prior.logC_range.first
      << c.prior.logC_range.second << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "N1" << YAML::Value << s.N1 << YAML::Key << "N2" << YAML::Value << s.N2;
  out << YAML::Key << "N3" << YAML::Value << s.N3 << YAML::Key << "n_par" << YAML::Value << s.n_par;
  out << YAML::Key << "beta" << YAML::Value << s.beta;
  if (s.scale) out << YAML::Key << "scale" << YAML::Value << *s.scale;
  out << YAML::Key << "jitter" << YAML::Value << s.jitter;
  out << YAML::Key << "jitter_floor" << YAML::Value << s.jitter_floor;
  out << YAML::Key << "transition" << YAML::Value
      << (s.transition == TransitionMode::IndexChain ? "index-chain" : "per-row");
  out << YAML::Key << "centering" << YAML::Value
      << (s.centering == ProposalCentering::Auxiliary ? "auxiliary" : "per-column");
  out << YAML::Key << "min_stage1_ess" << YAML::Value << s.min_stage1_ess;
  out << YAML::EndMap;

  out << YAML::Key << "baseline" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value << to_string(b.method);
  out << YAML::Key << "C_grid" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "lo" << YAML::Value
      << b.C_lo << YAML::Key << "hi" << YAML::Value << b.C_hi << YAML::Key << "count" << YAML::Value << b.C_count
      << YAML::EndMap;
  out << YAML::Key << "m_grid_per_axis" << YAML::Value << b.m_grid_per_axis;
  if (!b.m_grid_box.empty()) {
    out << YAML::Key << "m_grid_box" << YAML::Value;
    emit_pair_list(out, b.m_grid_box);
  }
  out << YAML::Key << "err_ratios" << YAML::Value << YAML::Flow << b.err_ratios;
  out << YAML::Key << "starts" << YAML::Value << b.starts;
  out << YAML::Key << "budget" << YAML::Value << b.budget;
  if (b.sigma) out << YAML::Key << "sigma" << YAML::Value << *b.sigma;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_digest(const RunConfig& config) {
  const std::string text = render_config(config);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PlanarSourceModel build_model(const ProblemSpec& problem) {
  PlanarSourceModel::Options o;
  o.grid = problem.grid;
  o.stations = problem.stations.explicit_points.empty()
                   ? scatter_stations(problem.stations.count, problem.stations.lo, problem.stations.hi,
                                      problem.stations.seed)
                   : problem.stations.explicit_points;
  o.eps0 = problem.eps0;
  o.depth_scale = problem.depth_scale;
  o.bounds = problem.m_bounds;
  return PlanarSourceModel(o);
}

}  // namespace mixinv::app
