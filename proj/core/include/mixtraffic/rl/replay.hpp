#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mixtraffic/action.hpp"
#include "mixtraffic/mdp.hpp"
#include "mixtraffic/random.hpp"

namespace mixtraffic::rl {

struct ReplayEntry {
  Observation observation{};
  Action action = Action::Stop;
  double n_step_return = 0.0;
  Observation bootstrap{};  // meaningless when done
  double discount = 0.0;    // gamma^len, applied to the bootstrap value
  bool done = false;
  double priority = 1.0;
};

// Σ_{k<len} γ^k r_k + γ^len · bootstrap. Throws on an empty reward list.
double n_step_return(const std::vector<double>& rewards, double gamma, double bootstrap);

class ReplayError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Binary sum tree over a fixed number of leaves; prefix-sum search is
// O(log N). Parents are recomputed from children on every update, so the
// root does not drift.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity);
  void set(std::size_t index, double value);
  double get(std::size_t index) const { return nodes_[leaves_ + index]; }
  double total() const { return nodes_[1]; }
  // Smallest index whose inclusive prefix sum exceeds `mass`, for mass in
  // [0, total). Only leaves with positive value are ever returned.
  std::size_t find(double mass) const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t leaves_;
  std::vector<double> nodes_;
};

struct SampledBatch {
  std::vector<std::size_t> indices;
  std::vector<ReplayEntry> entries;
  std::vector<double> weights;  // importance weights, max-normalized
};

// Prioritized ring buffer. Entry i is drawn with probability p_i^ω / Σ p_j^ω
// (independent draws, with replacement); new entries get the running maximum
// priority.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, double priority_exponent);

  void add(ReplayEntry entry);
  void add(ReplayEntry entry, double priority);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return entries_.size(); }
  const ReplayEntry& at(std::size_t index) const { return entries_.at(index); }

  // Throws ReplayError when size() < batch_size or batch_size == 0.
  SampledBatch sample(std::size_t batch_size, double is_exponent, Rng& rng) const;
  // Draws a single index; exposed for sampling-frequency checks.
  std::size_t sample_index(Rng& rng) const;
  double probability(std::size_t index) const;
  void update_priority(std::size_t index, double priority);
  double max_priority() const { return max_priority_; }

 private:
  std::vector<ReplayEntry> entries_;
  SumTree tree_;
  double exponent_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
  double max_priority_ = 1.0;
};

// Per-vehicle accumulation of one-step outcomes into n-step entries. A window
// is emitted once n rewards are known; when a vehicle leaves the network the
// remaining windows end as terminal; at the horizon windows with a later
// observation are emitted as shortened non-terminal windows and the final
// transition, lacking a successor observation, is dropped.
class NStepAssembler {
 public:
  NStepAssembler(int n, double gamma);
  std::vector<ReplayEntry> push(const RvOutcome& outcome);
  std::size_t open_vehicles() const { return open_.size(); }
  void clear() { open_.clear(); }

 private:
  struct Step {
    Observation observation{};
    Action action = Action::Stop;
    double reward = 0.0;
  };
  ReplayEntry window(const std::deque<Step>& steps, std::size_t len, const Observation* bootstrap) const;

  int n_;
  double gamma_;
  std::map<VehicleId, std::deque<Step>> open_;
};

}  // namespace mixtraffic::rl
