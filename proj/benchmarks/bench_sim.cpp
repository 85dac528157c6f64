#include <benchmark/benchmark.h>

#include "mixtraffic/controllers.hpp"
#include "mixtraffic/mdp.hpp"
#include "mixtraffic/netmodel.hpp"
#include "mixtraffic/simcore.hpp"

namespace mt = mixtraffic;

namespace {

std::shared_ptr<const mt::RoadNetwork> grid(int n) {
  return std::make_shared<const mt::RoadNetwork>(mt::generate_grid(n, n, 200.0));
}

// One dynamics step on a loaded network (world pre-run for 600 s).
void BM_SimStep(benchmark::State& state) {
  const auto net = grid(static_cast<int>(state.range(0)));
  mt::WorldState world(net, mt::DemandConfig::uniform(*net, 0.08, 0.0), 11);
  const auto ctl = mt::ControllerSet::all_way_stop(*net);
  while (world.time < 600.0) mt::step(world, {}, ctl);
  for (auto _ : state) {
    mt::step(world, {}, ctl);
    benchmark::DoNotOptimize(world.time);
  }
  state.counters["vehicles"] = static_cast<double>(world.vehicles.size());
}
BENCHMARK(BM_SimStep)->Arg(2)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_BuildObservation(benchmark::State& state) {
  const auto net = grid(2);
  mt::EnvConfig cfg;
  cfg.net = net;
  cfg.demand = mt::DemandConfig::uniform(*net, 0.08, 0.6);
  cfg.controllers = mt::ControllerSet::rv_controlled(*net);
  mt::Environment env(cfg);
  auto decisions = env.reset(5);
  while (decisions.empty() || env.world().time < 300.0) {
    mt::CommandMap go;
    for (const auto& d : decisions) go.emplace(d.point.rv, mt::Action::Go);
    decisions = env.step(go).decisions;
  }
  const auto rv = decisions.front().point.rv;
  for (auto _ : state) benchmark::DoNotOptimize(mt::build_observation(env.world(), rv, cfg.reward));
}
BENCHMARK(BM_BuildObservation);

}  // namespace
