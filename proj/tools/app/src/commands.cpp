#include "mixinv_app/commands.hpp"

#include "mixinv/errors.hpp"
#include "mixinv/posterior.hpp"
#include "mixinv/regselect.hpp"
#include "mixinv/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

namespace mixinv::app {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PlanarSourceModel checked_model(const ProblemSpec& problem) {
  try {
    return build_model(problem);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem: ") + e.what());
  }
}

fs::path data_dir_of(const RunConfig& config) {
  return config.data_dir.empty() ? config.out_dir : config.data_dir;
}

std::ofstream open_table(const fs::path& path) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  return out;
}

/// The `count` grid points with the smallest finite objective, in grid order on ties.
std::vector<Vector> best_grid_points(const Objective& f, const std::vector<Vector>& grid, int count) {
  std::vector<double> values;
  values.reserve(grid.size());
  for (const Vector& m : grid) values.push_back(f(m));
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<Vector> starts;
  for (std::size_t i : order) {
    if (static_cast<int>(starts.size()) == count || !std::isfinite(values[i])) break;
    starts.push_back(grid[i]);
  }
  return starts;
}

void write_minima(const fs::path& path, const MultiStartResult& result, double depth_scale) {
  std::ofstream out = open_table(path);
  out << "rank,objective,a,b,d,evaluations,converged\n";
  for (std::size_t i = 0; i < result.local_minima.size(); ++i) {
    const LocalMinimum& lm = result.local_minima[i];
    out << i << ',' << format_double(lm.value) << ',' << format_double(lm.x(0)) << ',' << format_double(lm.x(1))
        << ',' << format_double(lm.x(2) * depth_scale) << ',' << lm.evaluations << ','
        << (lm.converged ? "yes" : "no") << '\n';
  }
}

}  // namespace

RunConfig resolve_config(const fs::path& path, const Overrides& o) {
  RunConfig config = load_config(path);
  if (o.out_dir) config.out_dir = *o.out_dir;
  if (o.data_dir) config.data_dir = *o.data_dir;
  if (o.seed) {
    config.seed = *o.seed;
    config.sampler.seed = *o.seed;
  }
  if (o.n_par) {
    config.sampler.n_par = *o.n_par;
    try {
      config.sampler.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--n-par: ") + e.what());
    }
  }
  if (o.method) config.baseline.method = parse_baseline_method(*o.method);
  return config;
}

TruthRecord cmd_generate(const RunConfig& config, std::ostream& log) {
  const PlanarSourceModel model = checked_model(config.problem);
  const TruthSpec& spec = config.problem.truth;
  Vector g;
  std::pair<Observation, GroundTruth> generated;
  try {
    g = synth_slip(config.problem.grid, spec.bumps);
    Rng rng(config.seed);
    generated = generate_observations(model, spec.m, g, spec.noise_ratio, rng);
  } catch (const GeometryError& e) {
    throw ConfigError(std::string("problem.truth.m: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("problem.truth: ") + e.what());
  }
  const auto& [obs, truth] = generated;

  TruthRecord record;
  record.m = truth.m_true;
  record.d = truth.m_true(2) * config.problem.depth_scale;
  record.sigma = truth.sigma_true;
  record.noise_ratio_requested = spec.noise_ratio;
  record.noise_ratio_realized = (obs.u - truth.u_clean).norm() / truth.u_clean.norm();
  record.u_norm = obs.u.norm();
  record.seed = config.seed;

  const fs::path dir = config.out_dir;
  write_observation_csv(dir / "observation.csv", model.options().stations, obs.u);
  write_slip_csv(dir / "slip.csv", config.problem.grid, g);
  write_truth_yaml(dir / "truth.yaml", record);
  write_model_yaml(dir / "model.yaml", config, model);
  log << "generated " << obs.u.size() << " measurements in " << dir.string() << "\n"
      << "noise ratio: requested " << spec.noise_ratio << ", realized " << record.noise_ratio_realized << "\n";
  return record;
}

InvertOutcome cmd_invert(const RunConfig& config, std::ostream& log) {
  const PlanarSourceModel model = checked_model(config.problem);
  const Observation obs = load_observation(data_dir_of(config), model);
  if (obs.u.isZero(0.0)) throw DataError("observation is identically zero");
  const PriorSpec& prior = config.prior;
  if (static_cast<Eigen::Index>(prior.m_box.size()) != model.parameter_count()) {
    throw ConfigError("prior.m_box: expected " + std::to_string(model.parameter_count()) + " intervals");
  }

  const LogDensityFn density = [&](const Vector& x) {
    const DensityEval e = log_unnormalized_posterior(AugmentedState::unpack(x), obs, model, prior);
    return Evaluation{e.log_density, e.sigma_max_sq};
  };
  const PriorSamplerFn draw = [&](Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector x(prior.dimension());
    for (std::size_t k = 0; k < prior.m_box.size(); ++k) {
      const auto [lo, hi] = prior.m_box[k];
      x(static_cast<Eigen::Index>(k)) = lo + (hi - lo) * unit(rng);
    }
    x(x.size() - 1) = prior.logC_range.first + (prior.logC_range.second - prior.logC_range.first) * unit(rng);
    return x;
  };

  const auto start = std::chrono::steady_clock::now();
  Rng rng(config.seed);
  const ChainResult chain = config.sampler.n_par == 1 ? run_single_chain(config.sampler, density, draw, rng)
                                                      : run_parallel_chain(config.sampler, density, draw, rng);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::vector<ChainRecord> records;
  records.reserve(chain.samples.size());
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    const ChainSample& s = chain.samples[i];
    ChainRecord r;
    r.index = static_cast<long>(i);
    r.iteration = static_cast<long>(i) / chain.n_par + 1;
    r.stage = s.stage;
    r.a = s.x(0);
    r.b = s.x(1);
    r.d = s.x(2) * config.problem.depth_scale;
    r.log10C = s.x(3);
    r.log_density = s.log_density;
    r.sigma_max_sq = s.aux;
    records.push_back(r);
  }

  const fs::path dir = config.out_dir;
  InvertOutcome outcome;
  outcome.chain_path = dir / "chain.csv";
  write_chain_file(outcome.chain_path, records);
  write_series_csv(dir / "series.csv", records);

  outcome.report = summarize(records, 3);
  outcome.report.acceptance = chain.acceptance_rate;
  outcome.report.wall_seconds = wall;
  outcome.report.config_digest = config_digest(config);
  outcome.report.seed = config.seed;
  outcome.report.n_par = chain.n_par;
  write_report_file(dir / "report.yaml", outcome.report);
  log << describe(outcome.report) << "\n"
      << "acceptance: stage 2 " << chain.acceptance_rate[1] << ", stage 3 " << chain.acceptance_rate[2] << "\n"
      << "wall time " << wall << " s; chain written to " << outcome.chain_path.string() << "\n";
  return outcome;
}

BaselineOutcome cmd_baseline(const RunConfig& config, std::ostream& log) {
  const PlanarSourceModel model = checked_model(config.problem);
  Observation obs = load_observation(data_dir_of(config), model);
  if (obs.u.isZero(0.0)) throw DataError("observation is identically zero");
  if (config.baseline.sigma) obs.sigma_known = config.baseline.sigma;

  const BaselineSpec& spec = config.baseline;
  const double depth_scale = config.problem.depth_scale;
  const Bounds box = spec.m_grid_box.empty() ? model.parameter_bounds() : spec.m_grid_box;
  const std::vector<Vector> grid = box_grid(box, spec.m_grid_per_axis);
  SelectionGrids grids;
  grids.C_grid = log_grid(spec.C_lo, spec.C_hi, spec.C_count);
  NelderMeadOptions options;
  options.max_evaluations = spec.budget;

  BaselineOutcome outcome;
  outcome.method = spec.method;
  const fs::path dir = config.out_dir;
  outcome.table_path = dir / "table.csv";

  if (spec.method == BaselineMethod::ClsGlobal) {
    const double u_norm = obs.u.norm();
    for (double ratio : spec.err_ratios) {
      BaselineRow row;
      row.err_ratio = ratio;
      const GlobalDiscrepancyResult gd = global_discrepancy(model, obs, ratio * u_norm, grid, grids.C_grid);
      row.C = gd.C_bold;
      if (!(gd.C_bold > 0.0)) {
        row.status = "no-root";
        row.d = kNaN;
        row.objective = kNaN;
        log << "Err/|u| = " << ratio << ": no grid C meets the threshold\n";
        outcome.rows.push_back(row);
        continue;
      }
      const Objective f = [&](const Vector& m) { return tikhonov_objective(model, obs, m, gd.C_bold); };
      const std::vector<Vector> starts = best_grid_points(f, grid, spec.starts);
      if (starts.empty()) {
        row.status = "no-admissible-start";
        row.d = kNaN;
        row.objective = kNaN;
        outcome.rows.push_back(row);
        continue;
      }
      const MultiStartResult best = minimize_f_C(model, obs, gd.C_bold, starts, spec.budget);
      row.m = best.best;
      row.d = best.best(2) * depth_scale;
      row.objective = best.best_value;
      row.status = best.budget_exhausted ? "budget" : "ok";
      outcome.rows.push_back(row);
      log << "Err/|u| = " << ratio << ": C = " << row.C << ", (a, b, d) = (" << row.m(0) << ", " << row.m(1)
          << ", " << row.d << ")\n";
    }
    std::ofstream out = open_table(outcome.table_path);
    out << "Err/|u|,C,a,b,d\n";
    for (const BaselineRow& row : outcome.rows) {
      const bool ok = row.m.size() == 3;
      out << format_double(row.err_ratio) << ',' << format_double(row.C) << ','
          << format_double(ok ? row.m(0) : kNaN) << ',' << format_double(ok ? row.m(1) : kNaN) << ','
          << format_double(row.d) << '\n';
    }
    return outcome;
  }

  Objective f;
  if (spec.method == BaselineMethod::GcvGlobal) {
    f = [&](const Vector& m) { return global_gcv_objective(m, model, obs, grids); };
  } else {
    const PointwiseMethod pm = spec.method == BaselineMethod::GcvPointwise ? PointwiseMethod::GCV : PointwiseMethod::CLS;
    if (pm == PointwiseMethod::CLS && !obs.sigma_known) {
      throw DataError("cls-pointwise needs a noise level: set baseline.sigma or provide truth.yaml");
    }
    f = [&, pm](const Vector& m) { return pointwise_objective(m, pm, model, obs, grids); };
  }
  const std::vector<Vector> starts = best_grid_points(f, grid, spec.starts);
  BaselineRow row;
  row.err_ratio = kNaN;
  if (starts.empty()) {
    // No grid point admits a C (for cls-pointwise: no discrepancy root anywhere).
    row.C = kNaN;
    row.d = kNaN;
    row.objective = kNaN;
    row.status = "no-root";
    outcome.rows.push_back(row);
    std::ofstream out = open_table(outcome.table_path);
    out << "method,C,a,b,d,objective\n"
        << to_string(spec.method) << ",nan,nan,nan,nan,nan\n";
    log << to_string(spec.method) << ": objective is infinite on the whole m grid\n";
    return outcome;
  }
  const MultiStartResult best = multistart_minimize(f, starts, model.parameter_bounds(), options);

  row.m = best.best;
  row.d = best.best(2) * depth_scale;
  row.objective = best.best_value;
  row.status = best.budget_exhausted ? "budget" : "ok";
  {
    // C selected at the best m by the same rule the objective used.
    const WhitenedOperator B = whiten_operator(model.assemble(best.best), model.regularizer());
    const SpectralSummary spectrum = truncated_singular_values(B);
    if (spec.method == BaselineMethod::ClsPointwise) {
      try {
        row.C = cls_select(B, spectrum, obs.u, *obs.sigma_known, {grids.C_grid.front(), grids.C_grid.back()}).C_star;
      } catch (const NoRootError&) {
        row.C = kNaN;
      }
    } else {
      row.C = gcv_select(B, spectrum, obs.u, grids.C_grid).C_star;
    }
  }
  outcome.rows.push_back(row);
  {
    std::ofstream out = open_table(outcome.table_path);
    out << "method,C,a,b,d,objective\n";
    out << to_string(spec.method) << ',' << format_double(row.C) << ',' << format_double(row.m(0)) << ','
        << format_double(row.m(1)) << ',' << format_double(row.d) << ',' << format_double(row.objective) << '\n';
  }
  write_minima(dir / "minima.csv", best, depth_scale);
  log << to_string(spec.method) << ": C = " << row.C << ", (a, b, d) = (" << row.m(0) << ", " << row.m(1) << ", "
      << row.d << "), objective " << row.objective << "\n";
  return outcome;
}

SummaryReport cmd_diagnose(const fs::path& chain_path, std::optional<int> stage) {
  return summarize(read_chain_file(chain_path), stage);
}

}  // namespace mixinv::app
