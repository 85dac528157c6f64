#include "mixtraffic/rl/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace mixtraffic::rl {

double n_step_return(const std::vector<double>& rewards, double gamma, double bootstrap) {
  if (rewards.empty()) throw std::invalid_argument("n_step_return needs at least one reward");
  double g = 0.0;
  double discount = 1.0;
  for (const double r : rewards) {
    g += discount * r;
    discount *= gamma;
  }
  return g + discount * bootstrap;
}

SumTree::SumTree(std::size_t capacity)
    : capacity_(capacity), leaves_(std::bit_ceil(std::max<std::size_t>(capacity, 1))), nodes_(2 * leaves_, 0.0) {
  if (capacity == 0) throw std::invalid_argument("SumTree capacity must be positive");
}

void SumTree::set(std::size_t index, double value) {
  if (index >= capacity_) throw std::out_of_range("SumTree index " + std::to_string(index));
  if (!(value >= 0.0) || !std::isfinite(value)) throw std::invalid_argument("SumTree values must be finite and >= 0");
  std::size_t node = leaves_ + index;
  nodes_[node] = value;
  for (node /= 2; node >= 1; node /= 2) nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < leaves_) {
    const std::size_t left = 2 * node;
    if (mass < nodes_[left]) {
      node = left;
    } else {
      mass -= nodes_[left];
      node = left + 1;
    }
  }
  std::size_t index = node - leaves_;
  // Rounding at the right edge can land on an empty leaf.
  while (index > 0 && (index >= capacity_ || nodes_[leaves_ + index] <= 0.0)) --index;
  return index;
}

PrioritizedReplay::PrioritizedReplay(std::size_t capacity, double priority_exponent)
    : entries_(capacity), tree_(capacity), exponent_(priority_exponent) {
  if (!(priority_exponent >= 0.0)) throw std::invalid_argument("priority exponent must be >= 0");
}

void PrioritizedReplay::add(ReplayEntry entry) { add(std::move(entry), max_priority_); }

void PrioritizedReplay::add(ReplayEntry entry, double priority) {
  if (!(priority > 0.0)) throw std::invalid_argument("replay priorities must be > 0");
  entry.priority = priority;
  entries_[next_] = std::move(entry);
  tree_.set(next_, std::pow(priority, exponent_));
  max_priority_ = std::max(max_priority_, priority);
  next_ = (next_ + 1) % entries_.size();
  size_ = std::min(size_ + 1, entries_.size());
}

std::size_t PrioritizedReplay::sample_index(Rng& rng) const {
  if (size_ == 0) throw ReplayError("cannot sample from an empty replay buffer");
  return tree_.find(rng.uniform() * tree_.total());
}

double PrioritizedReplay::probability(std::size_t index) const { return tree_.get(index) / tree_.total(); }

SampledBatch PrioritizedReplay::sample(std::size_t batch_size, double is_exponent, Rng& rng) const {
  if (batch_size == 0 || size_ < batch_size) {
    throw ReplayError("replay buffer holds " + std::to_string(size_) + " entries, batch needs " +
                      std::to_string(batch_size));
  }
  SampledBatch batch;
  batch.indices.reserve(batch_size);
  batch.entries.reserve(batch_size);
  batch.weights.reserve(batch_size);
  const double n = static_cast<double>(size_);
  double max_w = 0.0;
  for (std::size_t k = 0; k < batch_size; ++k) {
    const auto idx = sample_index(rng);
    const double w = std::pow(n * probability(idx), -is_exponent);
    batch.indices.push_back(idx);
    batch.entries.push_back(entries_[idx]);
    batch.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  for (auto& w : batch.weights) w /= max_w;
  return batch;
}

void PrioritizedReplay::update_priority(std::size_t index, double priority) {
  if (index >= size_) throw std::out_of_range("replay index " + std::to_string(index));
  if (!(priority > 0.0) || !std::isfinite(priority)) throw std::invalid_argument("replay priorities must be finite and > 0");
  entries_[index].priority = priority;
  tree_.set(index, std::pow(priority, exponent_));
  max_priority_ = std::max(max_priority_, priority);
}

NStepAssembler::NStepAssembler(int n, double gamma) : n_(n), gamma_(gamma) {
  if (n < 1) throw std::invalid_argument("n_step must be >= 1");
}

ReplayEntry NStepAssembler::window(const std::deque<Step>& steps, std::size_t len, const Observation* bootstrap) const {
  std::vector<double> rewards;
  rewards.reserve(len);
  for (std::size_t k = 0; k < len; ++k) rewards.push_back(steps[k].reward);
  ReplayEntry e;
  e.observation = steps.front().observation;
  e.action = steps.front().action;
  e.n_step_return = n_step_return(rewards, gamma_, 0.0);
  e.discount = bootstrap ? std::pow(gamma_, static_cast<double>(len)) : 0.0;
  e.done = bootstrap == nullptr;
  if (bootstrap) e.bootstrap = *bootstrap;
  return e;
}

std::vector<ReplayEntry> NStepAssembler::push(const RvOutcome& outcome) {
  std::vector<ReplayEntry> out;
  auto& steps = open_[outcome.rv];
  steps.push_back({outcome.observation, outcome.action, outcome.reward.total});

  if (!outcome.done) {
    if (!outcome.next_observation) throw std::invalid_argument("non-terminal outcome without a next observation");
    if (steps.size() == static_cast<std::size_t>(n_)) {
      out.push_back(window(steps, steps.size(), &*outcome.next_observation));
      steps.pop_front();
    }
    return out;
  }

  if (outcome.truncated) {
    const Observation last = steps.back().observation;
    while (steps.size() > 1) {
      out.push_back(window(steps, steps.size() - 1, &last));
      steps.pop_front();
    }
  } else {
    while (!steps.empty()) {
      out.push_back(window(steps, steps.size(), nullptr));
      steps.pop_front();
    }
  }
  open_.erase(outcome.rv);
  return out;
}

}  // namespace mixtraffic::rl
