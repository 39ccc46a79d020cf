// Serial reference vs OpenMP kernels on the engine model.
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <memory>

#include "spe/likelihood.hpp"
#include "spe/replacement.hpp"
#include "spe/soft_bellman.hpp"

using namespace spe;

namespace {

struct Fixture {
  EngineParams params;
  PomdpModel model;
  std::shared_ptr<const BeliefGrid> grid;
  BellmanOperator op;
  QTable q;
  Dataset data;

  Fixture()
      : model(build_engine_model(params, 0.95)),
        grid(std::make_shared<const BeliefGrid>(2, 101)),
        op(model, grid),
        q(solve(op).q) {
    SimConfig sc;
    sc.n_histories = 200;
    sc.horizon = 100;
    sc.seed = 1;
    data = simulate(model, q, sc).data;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_BellmanReference(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(bellman_apply_reference(f.q, f.model));
}

void BM_BellmanApply(benchmark::State& state) {
  const auto& f = fixture();
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  QTable out = f.op.zeros();
  for (auto _ : state) {
    f.op.apply(f.q, out, exec);
    benchmark::DoNotOptimize(out.values().data());
  }
}

void BM_Solve(benchmark::State& state) {
  const auto& f = fixture();
  SolveOptions opt;
  opt.exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  for (auto _ : state) benchmark::DoNotOptimize(solve(f.op, opt).iterations);
}

void BM_LogLikelihood(benchmark::State& state) {
  const auto& f = fixture();
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(f.model, f.q, f.data, exec).obs);
}

void BM_GradQ(benchmark::State& state) {
  const auto& f = fixture();
  const auto features = engine_reward(f.params.z_max).node_features(*f.grid);
  GradQOptions opt;
  opt.exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  for (auto _ : state)
    benchmark::DoNotOptimize(grad_q(f.op.transitions(), f.q, features, 3, opt).iterations);
}

}  // namespace

BENCHMARK(BM_BellmanReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BellmanApply)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Solve)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogLikelihood)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradQ)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
