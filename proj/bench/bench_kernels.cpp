// Serial vs OpenMP timings of the parallel kernels. Arg 0 = serial, 1 = parallel.
#include <benchmark/benchmark.h>

#include "platoon/disturbance.hpp"
#include "platoon/lyapunov.hpp"
#include "platoon/macro.hpp"
#include "platoon/micro_sim.hpp"

using namespace platoon;

namespace {

Exec mode(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_Sweep(benchmark::State& st) {
  const SweepGrid grid{{0.25, 0.5}, {5, 10}, {Controller::inviscid, Controller::ftl}, -2.5};
  SweepSettings settings;
  settings.horizon_scale = 0.1;
  const auto base = ModelParams::disturbance_setup(2);
  for (auto _ : st) benchmark::DoNotOptimize(sweep(grid, base, FtLParams{}, settings, mode(st)));
}

void BM_CharacteristicField(benchmark::State& st) {
  const auto rho0 = SmoothProfile::example3_density();
  const auto v0 = SmoothProfile::example3_speed();
  const auto params = MacroParams::example3();
  const auto x = uniform_grid(-2.0, 8.0, 2001);
  for (auto _ : st) {
    benchmark::DoNotOptimize(
        characteristic_field(rho0, v0, params, x, {0, 1, 2, 3, 4, 5}, mode(st)));
  }
}

void BM_FdSolver(benchmark::State& st) {
  const auto rho0 = SmoothProfile::example3_density();
  const auto v0 = SmoothProfile::example3_speed();
  const auto params = MacroParams::example3();
  FdConfig cfg;
  cfg.dx = 5e-3;
  cfg.output_times = {0, 1};
  for (auto _ : st) benchmark::DoNotOptimize(fd_solver(rho0, v0, params, cfg, mode(st)));
}

void BM_AuditTrajectory(benchmark::State& st) {
  const auto p = ModelParams::example1();
  const Model m(p);
  const CertificateTables tables(m, LyapunovConfig{});
  const auto traj = integrate(m, example1_initial_state(p, 1), IntegratorConfig{1e-3, 20.0, 1});
  for (auto _ : st) benchmark::DoNotOptimize(audit_trajectory(traj, tables, mode(st)));
}

void BM_CheckClaims(benchmark::State& st) {
  const auto p = ModelParams::example1();
  const Model m(p);
  const CertificateTables tables(m, LyapunovConfig{});
  const auto states = random_omega_states(p, 20000, 1);
  for (auto _ : st) benchmark::DoNotOptimize(check_claims(tables, states, mode(st)));
}

}  // namespace

BENCHMARK(BM_Sweep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CharacteristicField)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FdSolver)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AuditTrajectory)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CheckClaims)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
