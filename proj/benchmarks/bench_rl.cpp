#include <benchmark/benchmark.h>

#include "mixtraffic/rl/agent.hpp"

namespace mt = mixtraffic;
namespace rl = mixtraffic::rl;

namespace {

mt::Observation random_obs(mt::Rng& rng) {
  mt::Observation o{};
  for (auto& v : o) v = rng.uniform();
  return o;
}

void BM_QForward(benchmark::State& state) {
  rl::NetworkShape shape;
  rl::QNetwork net(shape, 1);
  mt::Rng rng(2);
  std::vector<mt::Observation> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back(random_obs(rng));
  const auto x = rl::to_matrix(batch);
  for (auto _ : state) benchmark::DoNotOptimize(net.q_values(x));
}
BENCHMARK(BM_QForward)->Arg(1)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  rl::AgentConfig cfg;
  cfg.warmup_transitions = 0;
  rl::Agent agent(cfg, 3);
  mt::Rng rng(4);
  for (int i = 0; i < 1024; ++i) {
    rl::ReplayEntry e;
    e.observation = random_obs(rng);
    e.bootstrap = random_obs(rng);
    e.action = rng.bernoulli(0.5) ? mt::Action::Go : mt::Action::Stop;
    e.n_step_return = rng.uniform() * 10.0 - 5.0;
    e.discount = 0.970299;
    agent.remember(e);
  }
  for (auto _ : state) {
    const auto batch = agent.replay().sample(static_cast<std::size_t>(cfg.batch_size), 0.4, rng);
    benchmark::DoNotOptimize(agent.train_step(batch));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_SumTreeSample(benchmark::State& state) {
  rl::PrioritizedReplay replay(100'000, 0.5);
  mt::Rng rng(5);
  for (int i = 0; i < 100'000; ++i) replay.add(rl::ReplayEntry{}, 0.1 + rng.uniform());
  for (auto _ : state) benchmark::DoNotOptimize(replay.sample_index(rng));
}
BENCHMARK(BM_SumTreeSample);

}  // namespace
