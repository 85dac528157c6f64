#include "mixtraffic/rl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#if defined(__SSE3__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace mixtraffic::rl {

namespace {

using nlohmann::json;

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("agent config: ") + what);
}

// Adam's second moments decay into subnormal range, where x86 arithmetic is
// two orders of magnitude slower. Flushed for the duration of a step.
class FlushDenormals {
 public:
#if defined(__SSE3__)
  FlushDenormals() : saved_(_mm_getcsr()) {
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
  }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void AgentConfig::validate() const {
  check(!hidden.empty(), "hidden must list at least one layer width");
  for (const auto h : hidden) check(h > 0, "hidden widths must be positive");
  check(learning_rate > 0.0, "learning_rate must be > 0");
  check(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  check(n_step >= 1, "n_step must be >= 1");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(buffer_capacity >= static_cast<std::size_t>(batch_size), "buffer_capacity must hold a batch");
  check(target_sync_interval >= 1, "target_sync_interval must be >= 1");
  check(per_priority_exponent >= 0.0, "per_priority_exponent must be >= 0");
  check(per_is_exponent_start >= 0.0 && per_is_exponent_end >= 0.0, "IS exponents must be >= 0");
  check(priority_epsilon > 0.0, "priority_epsilon must be > 0");
  check(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0,
        "epsilon bounds must lie in [0, 1]");
  check(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0, "epsilon_decay_fraction must lie in (0, 1]");
  check(warmup_transitions >= 0, "warmup_transitions must be >= 0");
  check(train_every >= 1, "train_every must be >= 1");
  check(huber_delta > 0.0, "huber_delta must be > 0");
  check(adam_epsilon > 0.0 && adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
        "invalid Adam constants");
  check(grad_clip_norm >= 0.0, "grad_clip_norm must be >= 0");
  check(!noisy || noisy_sigma0 > 0.0, "noisy_sigma0 must be > 0");
  check(!distributional || (atoms >= 2 && v_max > v_min), "distributional head needs atoms >= 2 and v_max > v_min");
}

NetworkShape AgentConfig::shape() const {
  NetworkShape s;
  s.hidden = hidden;
  s.atoms = distributional ? atoms : 1;
  s.noisy = noisy;
  s.noisy_sigma0 = noisy_sigma0;
  s.single_precision = single_precision;
  return s;
}

AgentConfig parse_agent_config(std::string_view json_text) {
  const json j = json::parse(json_text);
  if (!j.is_object()) throw std::invalid_argument("agent config must be a JSON object");
  static const char* kKeys[] = {"hidden", "learning_rate", "gamma", "n_step", "batch_size", "buffer_capacity",
                                "target_sync_interval", "per_priority_exponent", "per_is_exponent_start",
                                "per_is_exponent_end", "priority_epsilon", "epsilon_start", "epsilon_end",
                                "epsilon_decay_fraction", "warmup_transitions", "train_every", "huber_delta",
                                "adam_beta1", "adam_beta2", "adam_epsilon", "grad_clip_norm", "noisy",
                                "noisy_sigma0", "distributional", "atoms", "v_min", "v_max",
                                "single_precision"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw std::invalid_argument("agent config: unknown key '" + key + "'");
    }
  }
  AgentConfig c;
  read_key(j, "hidden", c.hidden);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "gamma", c.gamma);
  read_key(j, "n_step", c.n_step);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "buffer_capacity", c.buffer_capacity);
  read_key(j, "target_sync_interval", c.target_sync_interval);
  read_key(j, "per_priority_exponent", c.per_priority_exponent);
  read_key(j, "per_is_exponent_start", c.per_is_exponent_start);
  read_key(j, "per_is_exponent_end", c.per_is_exponent_end);
  read_key(j, "priority_epsilon", c.priority_epsilon);
  read_key(j, "epsilon_start", c.epsilon_start);
  read_key(j, "epsilon_end", c.epsilon_end);
  read_key(j, "epsilon_decay_fraction", c.epsilon_decay_fraction);
  read_key(j, "warmup_transitions", c.warmup_transitions);
  read_key(j, "train_every", c.train_every);
  read_key(j, "huber_delta", c.huber_delta);
  read_key(j, "adam_beta1", c.adam_beta1);
  read_key(j, "adam_beta2", c.adam_beta2);
  read_key(j, "adam_epsilon", c.adam_epsilon);
  read_key(j, "grad_clip_norm", c.grad_clip_norm);
  read_key(j, "noisy", c.noisy);
  read_key(j, "noisy_sigma0", c.noisy_sigma0);
  read_key(j, "distributional", c.distributional);
  read_key(j, "atoms", c.atoms);
  read_key(j, "v_min", c.v_min);
  read_key(j, "v_max", c.v_max);
  read_key(j, "single_precision", c.single_precision);
  c.validate();
  return c;
}

std::string to_json(const AgentConfig& c) {
  json j;
  j["hidden"] = c.hidden;
  j["learning_rate"] = c.learning_rate;
  j["gamma"] = c.gamma;
  j["n_step"] = c.n_step;
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["target_sync_interval"] = c.target_sync_interval;
  j["per_priority_exponent"] = c.per_priority_exponent;
  j["per_is_exponent_start"] = c.per_is_exponent_start;
  j["per_is_exponent_end"] = c.per_is_exponent_end;
  j["priority_epsilon"] = c.priority_epsilon;
  j["epsilon_start"] = c.epsilon_start;
  j["epsilon_end"] = c.epsilon_end;
  j["epsilon_decay_fraction"] = c.epsilon_decay_fraction;
  j["warmup_transitions"] = c.warmup_transitions;
  j["train_every"] = c.train_every;
  j["huber_delta"] = c.huber_delta;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["noisy"] = c.noisy;
  j["noisy_sigma0"] = c.noisy_sigma0;
  j["distributional"] = c.distributional;
  j["atoms"] = c.atoms;
  j["v_min"] = c.v_min;
  j["v_max"] = c.v_max;
  j["single_precision"] = c.single_precision;
  return j.dump();
}

namespace {

std::vector<Observation> bootstraps(const std::vector<ReplayEntry>& batch) {
  std::vector<Observation> obs;
  obs.reserve(batch.size());
  for (const auto& e : batch) obs.push_back(e.bootstrap);
  return obs;
}

std::vector<Observation> observations(const std::vector<ReplayEntry>& batch) {
  std::vector<Observation> obs;
  obs.reserve(batch.size());
  for (const auto& e : batch) obs.push_back(e.observation);
  return obs;
}

Eigen::Index argmax_col(const Matrix& q, Eigen::Index c) {
  Eigen::Index best = 0;
  for (Eigen::Index r = 1; r < q.rows(); ++r) {
    if (q(r, c) > q(best, c)) best = r;
  }
  return best;
}

}  // namespace

std::vector<double> td_target(const std::vector<ReplayEntry>& batch, const QNetwork& online, const QNetwork& target) {
  std::vector<double> y(batch.size());
  const Matrix x = to_matrix(bootstraps(batch));
  const Matrix q_online = online.q_values(x);
  const Matrix q_target = target.q_values(x);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    if (e.done) {
      y[i] = e.n_step_return;
      continue;
    }
    const auto c = static_cast<Eigen::Index>(i);
    y[i] = e.n_step_return + e.discount * q_target(argmax_col(q_online, c), c);
  }
  return y;
}

Matrix projected_target(const std::vector<ReplayEntry>& batch, const QNetwork& online, const QNetwork& target) {
  const int k = target.shape().atoms;
  const auto& z = target.support();
  const double v_min = z.front();
  const double v_max = z.back();
  const double dz = (v_max - v_min) / (k - 1);
  const Matrix x = to_matrix(bootstraps(batch));
  const Matrix q_online = online.q_values(x);
  const Matrix p_target = atom_softmax(target.forward(x), target.shape().actions, k);

  Matrix m = Matrix::Zero(k, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    const auto& e = batch[i];
    const auto a = argmax_col(q_online, c);
    for (int j = 0; j < k; ++j) {
      // Terminal entries collapse every atom onto the return.
      const double p = e.done ? (j == 0 ? 1.0 : 0.0) : p_target(a * k + j, c);
      if (p == 0.0) continue;
      const double tz = std::clamp(e.n_step_return + (e.done ? 0.0 : e.discount * z[static_cast<std::size_t>(j)]),
                                   v_min, v_max);
      const double b = (tz - v_min) / dz;
      const auto lo = static_cast<Eigen::Index>(std::floor(b));
      const auto hi = static_cast<Eigen::Index>(std::ceil(b));
      if (lo == hi) {
        m(lo, c) += p;
      } else {
        m(lo, c) += p * (static_cast<double>(hi) - b);
        m(hi, c) += p * (b - static_cast<double>(lo));
      }
    }
  }
  return m;
}

LossResult evaluate_loss(const QNetwork& online, const QNetwork& target, const std::vector<ReplayEntry>& batch,
                         const std::vector<double>& weights, double huber_delta, ParamSet* grads) {
  if (weights.size() != batch.size()) throw std::invalid_argument("weights and batch differ in size");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const int k = online.shape().atoms;

  QNetwork::Cache cache;
  const Matrix out = online.forward(to_matrix(observations(batch)), cache);
  Matrix d_out = Matrix::Zero(out.rows(), out.cols());
  LossResult r;
  r.td_errors.resize(batch.size());
  r.targets.resize(batch.size());

  if (k == 1) {
    r.targets = td_target(batch, online, target);
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto i = static_cast<std::size_t>(c);
      const auto a = static_cast<Eigen::Index>(batch[i].action);
      const double diff = out(a, c) - r.targets[i];
      const double ad = std::abs(diff);
      const double h = ad <= huber_delta ? 0.5 * diff * diff : huber_delta * (ad - 0.5 * huber_delta);
      r.loss += weights[i] * h * inv_n;
      r.td_errors[i] = ad;
      d_out(a, c) = weights[i] * std::clamp(diff, -huber_delta, huber_delta) * inv_n;
    }
  } else {
    const Matrix m = projected_target(batch, online, target);
    const Matrix p = atom_softmax(out, online.shape().actions, k);
    const auto& z = online.support();
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto i = static_cast<std::size_t>(c);
      const auto a = static_cast<Eigen::Index>(batch[i].action);
      double ce = 0.0, kl = 0.0, expected = 0.0;
      for (int j = 0; j < k; ++j) {
        const double mj = m(j, c);
        const double pj = std::max(p(a * k + j, c), std::numeric_limits<double>::min());
        ce -= mj * std::log(pj);
        if (mj > 0.0) kl += mj * (std::log(mj) - std::log(pj));
        expected += mj * z[static_cast<std::size_t>(j)];
        d_out(a * k + j, c) = weights[i] * (p(a * k + j, c) - mj) * inv_n;
      }
      r.loss += weights[i] * ce * inv_n;
      r.td_errors[i] = std::max(0.0, kl);
      r.targets[i] = expected;
    }
  }
  if (grads) online.backward(cache, d_out, *grads);
  return r;
}

Adam::Adam(const QNetwork& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zeros_like()), v_(net.zeros_like()) {}

namespace {

template <class P>
void adam_update(P& param, const P& g, P& m, P& v, double lr, double b1, double b2, double eps, double c1,
                 double c2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

}  // namespace

void Adam::step(QNetwork& net, const ParamSet& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const auto& g = grads.layers[i];
    adam_update(l.w, g.w, m_.layers[i].w, v_.layers[i].w, lr_, beta1_, beta2_, eps_, c1, c2);
    adam_update(l.b, g.b, m_.layers[i].b, v_.layers[i].b, lr_, beta1_, beta2_, eps_, c1, c2);
    if (l.noisy()) {
      adam_update(l.sigma_w, g.sigma_w, m_.layers[i].sigma_w, v_.layers[i].sigma_w, lr_, beta1_, beta2_, eps_, c1, c2);
      adam_update(l.sigma_b, g.sigma_b, m_.layers[i].sigma_b, v_.layers[i].sigma_b, lr_, beta1_, beta2_, eps_, c1, c2);
    }
  }
}

double global_norm(const ParamSet& grads) {
  double s = 0.0;
  for (const auto& l : grads.layers) {
    s += l.w.squaredNorm() + l.b.squaredNorm() + l.sigma_w.squaredNorm() + l.sigma_b.squaredNorm();
  }
  return std::sqrt(s);
}

Agent::Agent(AgentConfig config, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      online_(config_.shape(), Rng::derive(seed, 1)),
      target_(online_),
      adam_(online_, config_.learning_rate, config_.adam_beta1, config_.adam_beta2, config_.adam_epsilon),
      replay_(config_.buffer_capacity, config_.per_priority_exponent),
      assembler_(config_.n_step, config_.gamma),
      rng_(Rng::derive(seed, 2)) {
  if (config_.distributional) {
    online_.set_support(config_.v_min, config_.v_max);
    target_.set_support(config_.v_min, config_.v_max);
  }
}

void Agent::set_progress(double fraction) { progress_ = std::clamp(fraction, 0.0, 1.0); }

double Agent::epsilon() const {
  if (config_.noisy) return 0.0;
  const double f = std::min(1.0, progress_ / config_.epsilon_decay_fraction);
  return std::lerp(config_.epsilon_start, config_.epsilon_end, f);
}

double Agent::is_exponent() const {
  return std::lerp(config_.per_is_exponent_start, config_.per_is_exponent_end, progress_);
}

std::vector<Action> Agent::act(const std::vector<Observation>& observations) {
  if (observations.empty()) return {};
  if (config_.noisy) online_.resample_noise(rng_);
  const Matrix q = online_.q_values(to_matrix(observations));
  const double eps = epsilon();
  std::vector<Action> actions;
  actions.reserve(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    // Always draw, so the stream does not depend on epsilon.
    const double u = rng_.uniform();
    const auto random_action = static_cast<Action>(rng_.below(kActionCount));
    if (u < eps) {
      actions.push_back(random_action);
    } else {
      actions.push_back(static_cast<Action>(argmax_col(q, static_cast<Eigen::Index>(i))));
    }
  }
  return actions;
}

std::vector<Action> Agent::greedy(const std::vector<Observation>& observations) const {
  if (observations.empty()) return {};
  QNetwork net = online_;
  net.clear_noise();
  const Matrix q = net.q_values(to_matrix(observations));
  std::vector<Action> actions;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    actions.push_back(static_cast<Action>(argmax_col(q, static_cast<Eigen::Index>(i))));
  }
  return actions;
}

std::optional<double> Agent::observe(const RvOutcome& outcome) {
  for (auto& e : assembler_.push(outcome)) replay_.add(std::move(e));
  ++outcomes_seen_;
  const auto ready = std::max<std::size_t>(static_cast<std::size_t>(config_.warmup_transitions),
                                           static_cast<std::size_t>(config_.batch_size));
  if (replay_.size() < ready || outcomes_seen_ % config_.train_every != 0) return std::nullopt;
  return train_step(replay_.sample(static_cast<std::size_t>(config_.batch_size), is_exponent(), rng_));
}

double Agent::train_step(const SampledBatch& batch) {
  const FlushDenormals ftz;
  if (config_.noisy) {
    online_.resample_noise(rng_);
    target_.resample_noise(rng_);
  }
  ParamSet grads = online_.zeros_like();
  const auto r = evaluate_loss(online_, target_, batch.entries, batch.weights, config_.huber_delta, &grads);
  if (!std::isfinite(r.loss)) {
    std::ostringstream dump;
    dump << "non-finite loss " << r.loss << " at gradient step " << gradient_steps_ << "; batch:";
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
      const auto& e = batch.entries[i];
      dump << "\n  [" << batch.indices[i] << "] action=" << name_of(e.action) << " return=" << e.n_step_return
           << " discount=" << e.discount << " done=" << e.done << " weight=" << batch.weights[i] << " obs=";
      for (const double v : e.observation) dump << v << ' ';
    }
    throw NonFiniteLoss(dump.str());
  }
  if (config_.grad_clip_norm > 0.0) {
    const double norm = global_norm(grads);
    if (norm > config_.grad_clip_norm) {
      const double s = config_.grad_clip_norm / norm;
      for (auto& l : grads.layers) {
        l.w *= s;
        l.b *= s;
        l.sigma_w *= s;
        l.sigma_b *= s;
      }
    }
  }
  adam_.step(online_, grads);
  for (std::size_t i = 0; i < batch.indices.size(); ++i) {
    replay_.update_priority(batch.indices[i], r.td_errors[i] + config_.priority_epsilon);
  }
  ++gradient_steps_;
  if (gradient_steps_ % config_.target_sync_interval == 0) target_ = online_;
  return r.loss;
}

namespace {

constexpr char kMagic[8] = {'M', 'X', 'T', 'Q', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T take(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in) {
  const auto n = take<std::uint64_t>(in);
  if (n > (std::uint64_t{1} << 30)) throw std::runtime_error("checkpoint string length is implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

template <class M>
void put_array(std::ostream& out, const M& m) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

template <class M>
void take_array(std::istream& in, M& m, const char* what) {
  const auto rows = take<std::uint64_t>(in);
  const auto cols = take<std::uint64_t>(in);
  if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
    throw std::runtime_error(std::string("checkpoint ") + what + " shape does not match the configured network");
  }
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AgentConfig& config, const QNetwork& network,
                     const std::string& metadata_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put_string(out, to_json(config));
  put_string(out, metadata_json);
  put<std::uint64_t>(out, network.layers().size());
  for (const auto& l : network.layers()) {
    put_array(out, l.w);
    put_array(out, l.b);
    put_array(out, l.sigma_w);
    put_array(out, l.sigma_b);
  }
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + " is not a mixtraffic checkpoint");
  }
  const auto version = take<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version " + std::to_string(version) + " is not supported");
  }
  Checkpoint ck;
  ck.config = parse_agent_config(take_string(in));
  ck.metadata_json = take_string(in);
  ck.network = QNetwork(ck.config.shape(), 0);
  if (ck.config.distributional) ck.network.set_support(ck.config.v_min, ck.config.v_max);
  const auto count = take<std::uint64_t>(in);
  if (count != ck.network.layers().size()) throw std::runtime_error("checkpoint layer count mismatch");
  for (auto& l : ck.network.layers()) {
    take_array(in, l.w, "weight");
    take_array(in, l.b, "bias");
    take_array(in, l.sigma_w, "noise scale");
    take_array(in, l.sigma_b, "noise scale");
  }
  return ck;
}

}  // namespace mixtraffic::rl
