#include "mixinv/errors.hpp"
#include "mixinv_app/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace mixinv::app;

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

void add_common(CLI::App* cmd, std::string& config, Overrides& o) {
  cmd->add_option("--config", config, "configuration file (YAML)")->required()->check(CLI::ExistingFile);
  cmd->add_option_function<std::string>("--out", [&o](const std::string& v) { o.out_dir = v; }, "output directory");
  cmd->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o.seed = v; }, "overrides the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inversion with a random regularization constant"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;

  CLI::App* generate = app.add_subcommand("generate", "write synthetic observations and ground truth");
  add_common(generate, config_path, overrides);

  CLI::App* invert = app.add_subcommand("invert", "sample the posterior of (m, log10 C)");
  add_common(invert, config_path, overrides);
  invert->add_option_function<int>("--n-par", [&](int v) { overrides.n_par = v; }, "parallel proposals");
  invert->add_option_function<std::string>("--data", [&](const std::string& v) { overrides.data_dir = v; },
                                           "directory holding observation.csv");

  CLI::App* baseline = app.add_subcommand("baseline", "deterministic regularization-selection baselines");
  add_common(baseline, config_path, overrides);
  baseline->add_option_function<std::string>("--method", [&](const std::string& v) { overrides.method = v; },
                                             "gcv-pointwise, gcv-global, cls-pointwise or cls-global");
  baseline->add_option_function<std::string>("--data", [&](const std::string& v) { overrides.data_dir = v; },
                                             "directory holding observation.csv");

  CLI::App* diagnose = app.add_subcommand("diagnose", "recompute the summary from a chain file");
  std::string chain_path;
  std::optional<int> stage;
  std::string out_dir;
  diagnose->add_option("chain", chain_path, "chain.csv written by invert")->required();
  diagnose->add_option_function<int>("--stage", [&](int v) { stage = v; }, "restrict to one stage (1, 2 or 3)")
      ->check(CLI::Range(1, 3));
  diagnose->add_option("--out", out_dir, "also write diagnose.yaml into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*diagnose) {
      const SummaryReport report = cmd_diagnose(chain_path, stage);
      std::cout << render_report(report);
      if (!out_dir.empty()) write_report_file(std::filesystem::path(out_dir) / "diagnose.yaml", report);
      return kOk;
    }
    const RunConfig config = resolve_config(config_path, overrides);
    if (*generate) {
      cmd_generate(config, std::cout);
    } else if (*invert) {
      cmd_invert(config, std::cout);
    } else if (*baseline) {
      cmd_baseline(config, std::cout);
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const mixinv::DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
