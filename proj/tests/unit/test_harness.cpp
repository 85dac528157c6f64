#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixtraffic/harness.hpp"
#include "support/scenario.hpp"

namespace mt = mixtraffic;
namespace fs = std::filesystem;
using namespace mixtraffic::testing;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mixtraffic_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

mt::ExperimentConfig tiny_training(double alpha = 1.0) {
  mt::ExperimentConfig c;
  c.name = "smoke";
  c.grid = mt::GridSpec{1, 1, 200.0};
  c.default_rate = 0.1;
  c.horizon = 120.0;
  c.window = {20.0, 120.0};
  c.episodes = 2;
  c.eval_every = 1;
  c.eval_runs = 2;
  c.reward.alpha = alpha;
  c.controller = alpha == 0.0 ? mt::ControllerKind::LocalRl : mt::ControllerKind::NeighborAware;
  c.agent.hidden = {16};
  c.agent.warmup_transitions = 16;
  c.agent.batch_size = 8;
  c.agent.buffer_capacity = 1000;
  return c;
}

}  // namespace

TEST(Config, ParsesFullDocumentAndRejectsUnknownKeys) {
  const auto c = mt::parse_experiment_config(R"({
    "name": "x",
    "network": {"grid": {"rows": 2, "cols": 3, "block_length": 150}},
    "demand": {"default_rate": 0.05, "entries": [{"intersection_id": 6, "rate": 0.2}], "rv_penetration": 0.5},
    "reward": {"alpha": 0.0, "p_target": 0.5},
    "agent": {"learning_rate": 0.001},
    "controller": "local_rl",
    "horizon": 900,
    "metric_window": [300, 900],
    "eval_runs": 4,
    "seed": 9,
    "training": {"episodes": 10, "eval_every": 5}
  })");
  EXPECT_EQ(c.grid->cols, 3);
  EXPECT_EQ(c.entry_rates.size(), 1u);
  EXPECT_EQ(c.agent.learning_rate, 0.001);
  EXPECT_EQ(c.controller, mt::ControllerKind::LocalRl);
  EXPECT_EQ(c.window.start, 300.0);
  EXPECT_EQ(mt::parse_experiment_config(mt::to_json(c)).agent, c.agent);
  EXPECT_EQ(mt::to_json(mt::parse_experiment_config(mt::to_json(c))), mt::to_json(c));

  EXPECT_THROW(mt::parse_experiment_config(R"({"network": {"grid": {}}, "colour": 1})"), mt::ConfigError);
  EXPECT_THROW(mt::parse_experiment_config(R"({"network": {"grid": {}}, "agent": {"lr": 1}})"), mt::ConfigError);
  EXPECT_THROW(mt::parse_experiment_config(R"({"network": {"grid": {}}, "controller": "magic"})"),
               std::invalid_argument);
  EXPECT_THROW(mt::parse_experiment_config(R"({"network": {"grid": {}}, "metric_window": [0, 2000]})"),
               mt::ConfigError);
  EXPECT_THROW(mt::parse_experiment_config(R"({"network": {"grid": {}}, "eval_runs": 0})"), mt::ConfigError);
  EXPECT_THROW(mt::parse_experiment_config("{"), mt::ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  for (const auto* name : {"grid22.json", "grid33.json", "grid33_local.json", "net17.json"}) {
    const auto c = mt::load_experiment_config(fs::path(MIXTRAFFIC_CONFIG_DIR) / name);
    EXPECT_NO_THROW(mt::build_network(c)) << name;
  }
}

TEST(Config, BaselinesRunHumanOnlyAndLocalRlDropsAlpha) {
  mt::ExperimentConfig c;
  c.grid = mt::GridSpec{};
  const auto net = mt::build_network(c);
  c.controller = mt::ControllerKind::Signalized;
  EXPECT_EQ(mt::make_env_config(c, net).demand.rv_penetration, 0.0);
  c.controller = mt::ControllerKind::LocalRl;
  EXPECT_EQ(mt::make_env_config(c, net).reward.alpha, 0.0);
  c.controller = mt::ControllerKind::NeighborAware;
  EXPECT_EQ(mt::make_env_config(c, net).reward.alpha, 1.0);
  EXPECT_EQ(mt::make_env_config(c, net).demand.rv_penetration, 0.6);
}

TEST(Compare, PublishedReductions) {
  EXPECT_EQ(mt::format_percent(mt::reduction_percent(3.52, 2.14)), "39.2%");
  EXPECT_EQ(mt::format_percent(mt::reduction_percent(10.60, 2.14)), "79.8%");
  EXPECT_EQ(mt::format_percent(mt::reduction_percent(5.0, 5.0)), "0.0%");
}

TEST(Compare, TableAndErrors) {
  const auto t = mt::run_compare({{"A", 10.0, "n1"}, {"B", 5.0, "n1"}}, "B");
  ASSERT_EQ(t.reductions.size(), 1u);
  EXPECT_EQ(t.reductions[0].second, 50.0);
  EXPECT_NE(t.text().find("B vs A: 50.0% reduction"), std::string::npos);
  EXPECT_THROW(mt::run_compare({{"A", 1.0, ""}}, "A"), mt::ConfigError);
  EXPECT_THROW(mt::run_compare({{"A", 1.0, "n1"}, {"B", 2.0, "n2"}}, "B"), mt::ConfigError);
  EXPECT_THROW(mt::run_compare({{"A", 1.0, ""}, {"B", 2.0, ""}}, "C"), mt::ConfigError);
}

TEST(Eval, ZeroDemandGivesZeroWait) {
  mt::ExperimentConfig c;
  c.grid = mt::GridSpec{1, 1, 200.0};
  c.default_rate = 0.0;
  c.horizon = 600.0;
  c.controller = mt::ControllerKind::Unsignalized;
  const auto r = mt::run_eval(c);
  EXPECT_EQ(r.average_wait, 0.0);
  EXPECT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs[0].seed, 2u);
  EXPECT_EQ(r.runs[2].seed, 4u);
}

TEST(Eval, SingleScriptedVehicleHeldFiveSeconds) {
  auto w = empty_world(grid(1, 1), {500.0, 1500.0});
  const auto& net = w.network();
  const auto c = internal(net, 0);
  const auto in = approach(net, c, mixtraffic::Direction::North);
  const auto id = w.inject(vehicle({in, exit_to(net, c, mixtraffic::Direction::South)},
                                   mt::stop_line_of(net.segment(in)), 0.0, mt::VehicleClass::RV));
  w.time = 600.0;
  const auto ctl = mt::ControllerSet::rv_controlled(net);
  for (int k = 0; k < 10; ++k) mt::step(w, {{id, mt::Action::Stop}}, ctl);
  EXPECT_EQ(w.metrics.average_wait(), 5.0);
}

TEST(Eval, ReportAggregatesAndRoundTrips) {
  mt::ExperimentConfig c;
  c.grid = mt::GridSpec{1, 2, 200.0};
  c.horizon = 300.0;
  c.window = {100.0, 300.0};
  c.controller = mt::ControllerKind::Random;
  const auto r = mt::run_eval(c);
  double sum = 0.0;
  for (const auto& run : r.runs) sum += run.average_wait;
  EXPECT_EQ(r.average_wait, sum / static_cast<double>(r.runs.size()));
  const auto back = mt::parse_report(r.json());
  EXPECT_EQ(back.average_wait, r.average_wait);
  EXPECT_EQ(back.label, "Random stop/go");
  EXPECT_EQ(back.network_fingerprint, r.network_fingerprint);
  ASSERT_EQ(back.runs.size(), r.runs.size());
  for (std::size_t i = 0; i < r.runs.size(); ++i) EXPECT_EQ(back.runs[i].average_wait, r.runs[i].average_wait);

  const auto dir = scratch("report");
  mt::write_report(r, dir);
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  for (const auto id : r.intersections) {
    EXPECT_TRUE(fs::exists(dir / ("intersection_" + std::to_string(mt::to_int(id)) + ".csv")));
  }
  fs::remove_all(dir);
}

TEST(Eval, LearnedControllerNeedsMatchingCheckpoint) {
  auto c = tiny_training();
  EXPECT_THROW(mt::run_eval(c), mt::ConfigError);
  const auto dir = scratch("mismatch");
  mt::rl::AgentConfig other = c.agent;
  other.hidden = {4};
  mt::rl::save_checkpoint(dir / "p.ckpt", other, mt::rl::QNetwork(other.shape(), 1), "{}");
  c.checkpoint = (dir / "p.ckpt").string();
  EXPECT_THROW(mt::run_eval(c), mt::ConfigError);
  fs::remove_all(dir);
}

TEST(Train, SmokeRunWritesLoadableCheckpoint) {
  const auto cfg = tiny_training();
  const auto dir = scratch("train");
  const auto r = mt::run_train(cfg, dir);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_TRUE(r.rows[1].eval_average_wait.has_value());
  const auto ck = mt::rl::load_checkpoint(r.checkpoint);
  EXPECT_EQ(ck.config, cfg.agent);
  auto eval_cfg = cfg;
  eval_cfg.checkpoint = r.checkpoint.string();
  EXPECT_NO_THROW(mt::run_eval(eval_cfg));
  fs::remove_all(dir);
}

TEST(Train, IdenticalSeedsGiveIdenticalLogs) {
  const auto cfg = tiny_training();
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  mt::run_train(cfg, a);
  mt::run_train(cfg, b);
  EXPECT_EQ(slurp(a / "training_log.csv"), slurp(b / "training_log.csv"));
  EXPECT_EQ(slurp(a / "policy.ckpt"), slurp(b / "policy.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Train, LocalRlHeaderRecordsAlphaZero) {
  const auto cfg = tiny_training(0.0);
  const auto dir = scratch("local");
  mt::run_train(cfg, dir);
  EXPECT_NE(slurp(dir / "training_log.csv").find("# reward.alpha = 0\n"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Train, BaselinesAreNotLearnable) {
  auto cfg = tiny_training();
  cfg.controller = mt::ControllerKind::Signalized;
  EXPECT_THROW(mt::run_train(cfg, scratch("nolearn")), mt::ConfigError);
}

TEST(Fingerprint, StableHex) {
  EXPECT_EQ(mt::fingerprint(""), "cbf29ce484222325");
  EXPECT_EQ(mt::fingerprint("a"), "af63dc4c8601ec8c");
}
