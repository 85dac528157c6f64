#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mixtraffic/rl/qnetwork.hpp"
#include "mixtraffic/rl/replay.hpp"

namespace mixtraffic::rl {

struct AgentConfig {
  std::vector<int> hidden{512, 512, 512};
  double learning_rate = 0.0005;
  double gamma = 0.99;
  int n_step = 3;
  int batch_size = 64;
  std::size_t buffer_capacity = 100'000;
  int target_sync_interval = 1'000;  // gradient steps
  double per_priority_exponent = 0.5;
  double per_is_exponent_start = 0.4;
  double per_is_exponent_end = 1.0;
  double priority_epsilon = 1e-6;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.3;  // of all training episodes
  int warmup_transitions = 5'000;
  int train_every = 4;  // decisions between gradient steps
  double huber_delta = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip_norm = 10.0;  // global L2 norm; 0 disables
  bool noisy = false;
  double noisy_sigma0 = 0.5;
  bool distributional = false;
  int atoms = 51;
  double v_min = -100.0;
  double v_max = 100.0;
  bool single_precision = true;  // float arithmetic for forward/backward

  void validate() const;
  NetworkShape shape() const;
  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

// JSON object text <-> config. Unknown keys are rejected; missing keys keep
// their defaults.
AgentConfig parse_agent_config(std::string_view json_text);
std::string to_json(const AgentConfig& cfg);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Double-Q targets for the scalar head: the stored n-step return plus
// discount * Q_target(s', argmax_a Q_online(s', a)); terminal entries keep
// the return alone.
std::vector<double> td_target(const std::vector<ReplayEntry>& batch, const QNetwork& online, const QNetwork& target);

// Distributional analogue: the target net's distribution for the online
// argmax action, shifted by the return and projected onto the support.
// Returns atoms x batch.
Matrix projected_target(const std::vector<ReplayEntry>& batch, const QNetwork& online, const QNetwork& target);

struct LossResult {
  double loss = 0.0;
  std::vector<double> td_errors;  // |TD error| (KL divergence for the distributional head)
  std::vector<double> targets;    // scalar targets (expected value for the distributional head)
};

// Importance-weighted batch loss: Huber on Q(s,a) - target for the scalar
// head, cross-entropy to the projected target otherwise; mean over the batch.
// When `grads` is non-null it receives dL/dparams (accumulated).
LossResult evaluate_loss(const QNetwork& online, const QNetwork& target, const std::vector<ReplayEntry>& batch,
                         const std::vector<double>& weights, double huber_delta, ParamSet* grads);

class Adam {
 public:
  Adam() = default;
  Adam(const QNetwork& net, double lr, double beta1, double beta2, double eps);
  void step(QNetwork& net, const ParamSet& grads);
  long steps() const { return t_; }

 private:
  double lr_ = 0.0, beta1_ = 0.0, beta2_ = 0.0, eps_ = 0.0;
  long t_ = 0;
  ParamSet m_, v_;
};

double global_norm(const ParamSet& grads);

// One shared policy for every RV. Transitions arrive as per-RV outcomes and
// are assembled into n-step entries; a gradient step runs every train_every
// outcomes once warmup_transitions entries are stored.
class Agent {
 public:
  Agent(AgentConfig config, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  const QNetwork& online() const { return online_; }
  QNetwork& mutable_online() { return online_; }
  const QNetwork& target() const { return target_; }
  const PrioritizedReplay& replay() const { return replay_; }
  long gradient_steps() const { return gradient_steps_; }

  // Training progress in [0, 1]; drives the epsilon and IS-exponent schedules.
  void set_progress(double fraction);
  double epsilon() const;
  double is_exponent() const;

  // Epsilon-greedy (or noisy-net) actions for a batch of observations.
  std::vector<Action> act(const std::vector<Observation>& observations);
  std::vector<Action> greedy(const std::vector<Observation>& observations) const;

  // Returns the loss when a gradient step ran.
  std::optional<double> observe(const RvOutcome& outcome);
  // Inserts an assembled entry at the current maximum priority.
  void remember(ReplayEntry entry) { replay_.add(std::move(entry)); }
  // Ends an episode: drops unfinished per-vehicle windows.
  void end_episode() { assembler_.clear(); }

  // `batch` must come from replay().
  double train_step(const SampledBatch& batch);

 private:
  AgentConfig config_;
  QNetwork online_;
  QNetwork target_;
  Adam adam_;
  PrioritizedReplay replay_;
  NStepAssembler assembler_;
  Rng rng_;
  double progress_ = 0.0;
  long gradient_steps_ = 0;
  long outcomes_seen_ = 0;
};

struct Checkpoint {
  AgentConfig config;
  std::string metadata_json;  // caller-provided config echo
  QNetwork network;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Versioned little-endian binary: magic, version, agent-config JSON,
// metadata JSON, then each layer's parameter arrays.
void save_checkpoint(const std::filesystem::path& path, const AgentConfig& config, const QNetwork& network,
                     const std::string& metadata_json);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mixtraffic::rl
