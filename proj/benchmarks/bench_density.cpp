#include "mixinv/models.hpp"
#include "mixinv/posterior.hpp"
#include "mixinv/regselect.hpp"
#include "mixinv/sampler.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace mixinv;

struct Fixture {
  PlanarSourceModel model{default_planar_options()};
  Observation obs;
  PriorSpec prior = PriorSpec::unit_box(3);
  Vector m_true{{-0.12, -0.26, -0.14}};

  Fixture() {
    Rng rng(7);
    const Vector g = synth_slip(model.options().grid, {{{12.0, 14.0}, 9.0, 1.0}, {{28.0, 26.0}, 8.0, 0.7}});
    obs = generate_observations(model, m_true, g, 0.05, rng).first;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

void BM_Assemble(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.assemble(f.m_true));
}
BENCHMARK(BM_Assemble)->Unit(benchmark::kMillisecond);

void BM_LogPosterior(benchmark::State& state) {
  Fixture& f = fixture();
  const AugmentedState x{f.m_true, -3.0};
  for (auto _ : state) benchmark::DoNotOptimize(log_unnormalized_posterior(x, f.obs, f.model, f.prior).log_density);
}
BENCHMARK(BM_LogPosterior)->Unit(benchmark::kMillisecond);

void BM_TikhonovObjective(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(tikhonov_objective(f.model, f.obs, f.m_true, 1e-3));
}
BENCHMARK(BM_TikhonovObjective)->Unit(benchmark::kMillisecond);

void BM_TransitionMatrix(benchmark::State& state) {
  Rng rng(3);
  std::normal_distribution<double> normal;
  Vector log_w(state.range(0));
  for (Eigen::Index k = 0; k < log_w.size(); ++k) log_w(k) = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(build_transition_matrix_log(log_w).T.sum());
}
BENCHMARK(BM_TransitionMatrix)->Arg(8)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
