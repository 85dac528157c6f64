#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mixtraffic/mdp.hpp"
#include "mixtraffic/rl/agent.hpp"

namespace mixtraffic {

inline constexpr std::string_view kVersion = "0.1.0";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ControllerKind : std::uint8_t { Signalized, Unsignalized, LocalRl, NeighborAware, Random };

std::string_view name_of(ControllerKind kind);
// Human-facing strategy label, e.g. "HV-Signalized".
std::string_view label_of(ControllerKind kind);
ControllerKind parse_controller(std::string_view text);
bool is_learnable(ControllerKind kind);

struct GridSpec {
  int rows = 2;
  int cols = 2;
  double block_length = 200.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<GridSpec> grid;              // exactly one of grid / network_path
  std::optional<std::string> network_path;   // resolved against the config's directory
  double default_rate = 0.08;                // veh/s at every entry without an override
  std::vector<EntryDemand> entry_rates;      // per-entry overrides
  double rv_penetration = 0.6;
  RewardConfig reward;
  rl::AgentConfig agent;
  ControllerKind controller = ControllerKind::NeighborAware;
  double horizon = 1500.0;
  MetricsWindow window;
  int eval_runs = 3;
  std::uint64_t seed = 1;
  int episodes = 1000;
  int eval_every = 50;
  std::optional<std::string> checkpoint;  // policy for eval of learnable controllers

  void validate() const;
};

// Parses a JSON experiment document. Unknown keys are rejected. Relative
// paths are resolved against `base_dir`.
ExperimentConfig parse_experiment_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Canonical JSON form (sorted keys); used for config echo and fingerprints.
std::string to_json(const ExperimentConfig& cfg);

std::shared_ptr<const RoadNetwork> build_network(const ExperimentConfig& cfg);
// Environment settings for the configured controller: HV baselines run with
// every vehicle human-driven, Local-RL forces alpha = 0.
EnvConfig make_env_config(const ExperimentConfig& cfg, std::shared_ptr<const RoadNetwork> net);

// FNV-1a 64-bit, lower-case hex.
std::string fingerprint(std::string_view text);

// Chooses one action per decision, in the order given.
using Policy = std::function<std::vector<Action>(const std::vector<ObservedDecision>&)>;

Policy random_policy(std::uint64_t seed);
Policy greedy_policy(const rl::QNetwork& network);

struct EpisodeStats {
  std::uint64_t seed = 0;
  double average_wait = 0.0;
  double total_window_wait = 0.0;
  std::uint64_t vehicles_counted = 0;
  std::uint64_t conflicts_in_window = 0;
  std::uint64_t conflicts_total = 0;
  std::uint64_t spawned = 0;
  std::uint64_t exited = 0;
  std::uint64_t decisions = 0;
  double reward_sum = 0.0;
  std::vector<double> wait_at;      // per non-boundary intersection
  std::vector<double> rv_share_at;  // mean sampled share inside the window
  std::vector<std::vector<IntersectionSample>> samples;
};

EpisodeStats run_episode(Environment& env, std::uint64_t seed, const Policy& policy,
                         const std::function<void(const EnvStep&)>& on_step = {});

struct TrainingLogRow {
  int episode = 0;
  double episode_return = 0.0;
  double mean_loss = 0.0;  // 0 when no gradient step ran
  double epsilon = 0.0;
  long gradient_steps = 0;
  std::uint64_t decisions = 0;
  double average_wait = 0.0;  // of the training episode itself
  std::optional<double> eval_average_wait;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::vector<TrainingLogRow> rows;
};

// Trains the configured learnable controller for cfg.episodes episodes and
// writes policy.ckpt and training_log.csv into `out_dir`. Progress lines go
// to `progress` when given.
TrainResult run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                      std::ostream* progress = nullptr);

struct EvalReport {
  std::string strategy;  // controller name
  std::string label;
  std::string agent_variant;  // empty for non-learned strategies
  std::string config_json;
  std::string fingerprint;          // config + version
  std::string network_fingerprint;  // serialized network
  std::vector<IntersectionId> intersections;
  std::vector<EpisodeStats> runs;
  double average_wait = 0.0;  // mean over runs
  std::vector<double> wait_at;
  double conflicts_in_window = 0.0;

  std::string text() const;
  std::string json() const;
};

// Runs cfg.eval_runs episodes (seeds seed+1 .. seed+eval_runs) in parallel.
// Learnable controllers need `network` (or cfg.checkpoint).
EvalReport run_eval(const ExperimentConfig& cfg, const rl::QNetwork* network = nullptr);
EvalReport parse_report(std::string_view json_text);

// Writes report.txt, report.json and one CSV series per intersection into
// `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
// results_root / "<name>-<strategy>-<YYYYmmdd-HHMMSS>", created.
std::filesystem::path timestamped_dir(const std::filesystem::path& results_root, std::string_view stem);

struct StrategyResult {
  std::string label;
  double average_wait = 0.0;
  std::string network_fingerprint;  // empty skips the consistency check
};

// Percentage reduction (base - ours) / base * 100.
double reduction_percent(double base, double ours);
std::string format_percent(double value);

struct ComparisonTable {
  std::vector<StrategyResult> rows;
  std::string reference;  // the strategy the reductions are credited to
  std::vector<std::pair<std::string, double>> reductions;  // vs each other row

  std::string text() const;
};

// Throws ConfigError with fewer than two strategies, an unknown reference or
// mismatched networks.
ComparisonTable run_compare(const std::vector<StrategyResult>& results, std::string_view reference);

}  // namespace mixtraffic
