#include "mixtraffic/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace mixtraffic {

using nlohmann::json;

std::string_view name_of(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Signalized: return "signalized";
    case ControllerKind::Unsignalized: return "unsignalized";
    case ControllerKind::LocalRl: return "local_rl";
    case ControllerKind::NeighborAware: return "neighbor_aware";
    case ControllerKind::Random: return "random";
  }
  return "?";
}

std::string_view label_of(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Signalized: return "HV-Signalized";
    case ControllerKind::Unsignalized: return "HV-Unsignalized";
    case ControllerKind::LocalRl: return "Local-RL";
    case ControllerKind::NeighborAware: return "Neighbor-aware RL";
    case ControllerKind::Random: return "Random stop/go";
  }
  return "?";
}

ControllerKind parse_controller(std::string_view text) {
  for (const auto k : {ControllerKind::Signalized, ControllerKind::Unsignalized, ControllerKind::LocalRl,
                       ControllerKind::NeighborAware, ControllerKind::Random}) {
    if (name_of(k) == text) return k;
  }
  throw ConfigError("unknown controller '" + std::string(text) +
                    "' (expected signalized, unsignalized, local_rl, neighbor_aware or random)");
}

bool is_learnable(ControllerKind kind) {
  return kind == ControllerKind::LocalRl || kind == ControllerKind::NeighborAware;
}

void ExperimentConfig::validate() const {
  if (grid.has_value() == network_path.has_value()) {
    throw ConfigError("network: give exactly one of 'grid' or 'path'");
  }
  if (grid && (grid->rows < 1 || grid->cols < 1 || !(grid->block_length > 0.0))) {
    throw ConfigError("network.grid: rows, cols and block_length must be positive");
  }
  if (!(default_rate >= 0.0)) throw ConfigError("demand.default_rate must be >= 0");
  for (const auto& e : entry_rates) {
    if (!(e.rate >= 0.0)) throw ConfigError("demand.entries: rates must be >= 0");
  }
  if (!(rv_penetration >= 0.0 && rv_penetration <= 1.0)) throw ConfigError("demand.rv_penetration must lie in [0, 1]");
  try {
    reward.validate();
    agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(horizon > 0.0)) throw ConfigError("horizon must be > 0");
  if (!(window.start >= 0.0 && window.start < window.end && window.end <= horizon)) {
    throw ConfigError("metric_window must lie inside [0, horizon) with start < end");
  }
  if (eval_runs < 1) throw ConfigError("eval_runs must be >= 1");
  if (episodes < 1) throw ConfigError("training.episodes must be >= 1");
  if (eval_every < 0) throw ConfigError("training.eval_every must be >= 0");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"name", "network", "demand", "reward", "agent", "controller", "horizon", "metric_window",
                  "eval_runs", "seed", "training", "checkpoint"},
                 "config");
  ExperimentConfig c;
  read(j, "name", c.name, "config");

  if (!j.contains("network")) throw ConfigError("config: 'network' is required");
  const auto& net = j.at("network");
  reject_unknown(net, {"grid", "path"}, "network");
  if (net.contains("grid")) {
    const auto& g = net.at("grid");
    reject_unknown(g, {"rows", "cols", "block_length"}, "network.grid");
    GridSpec spec;
    read(g, "rows", spec.rows, "network.grid");
    read(g, "cols", spec.cols, "network.grid");
    read(g, "block_length", spec.block_length, "network.grid");
    c.grid = spec;
  }
  if (net.contains("path")) {
    std::string p;
    read(net, "path", p, "network");
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    c.network_path = path.lexically_normal().string();
  }

  if (j.contains("demand")) {
    const auto& d = j.at("demand");
    reject_unknown(d, {"default_rate", "entries", "rv_penetration"}, "demand");
    read(d, "default_rate", c.default_rate, "demand");
    read(d, "rv_penetration", c.rv_penetration, "demand");
    if (d.contains("entries")) {
      for (const auto& e : d.at("entries")) {
        reject_unknown(e, {"intersection_id", "rate"}, "demand.entries[]");
        int id = 0;
        double rate = 0.0;
        if (!e.contains("intersection_id") || !e.contains("rate")) {
          throw ConfigError("demand.entries[]: 'intersection_id' and 'rate' are required");
        }
        read(e, "intersection_id", id, "demand.entries[]");
        read(e, "rate", rate, "demand.entries[]");
        c.entry_rates.push_back({IntersectionId{id}, rate});
      }
    }
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    reject_unknown(r, {"alpha", "p_target"}, "reward");
    read(r, "alpha", c.reward.alpha, "reward");
    read(r, "p_target", c.reward.p_target, "reward");
  }
  if (j.contains("agent")) {
    try {
      c.agent = rl::parse_agent_config(j.at("agent").dump());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("controller")) {
    std::string name;
    read(j, "controller", name, "config");
    c.controller = parse_controller(name);
  }
  read(j, "horizon", c.horizon, "config");
  if (j.contains("metric_window")) {
    const auto& w = j.at("metric_window");
    if (!w.is_array() || w.size() != 2) throw ConfigError("metric_window must be [start, end]");
    c.window.start = w[0].get<double>();
    c.window.end = w[1].get<double>();
  }
  read(j, "eval_runs", c.eval_runs, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("training")) {
    const auto& t = j.at("training");
    reject_unknown(t, {"episodes", "eval_every"}, "training");
    read(t, "episodes", c.episodes, "training");
    read(t, "eval_every", c.eval_every, "training");
  }
  if (j.contains("checkpoint")) {
    std::string p;
    read(j, "checkpoint", p, "config");
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    c.checkpoint = path.lexically_normal().string();
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  if (c.grid) {
    j["network"]["grid"] = {{"rows", c.grid->rows}, {"cols", c.grid->cols}, {"block_length", c.grid->block_length}};
  } else {
    j["network"]["path"] = *c.network_path;
  }
  j["demand"]["default_rate"] = c.default_rate;
  j["demand"]["rv_penetration"] = c.rv_penetration;
  j["demand"]["entries"] = json::array();
  for (const auto& e : c.entry_rates) {
    j["demand"]["entries"].push_back({{"intersection_id", to_int(e.intersection)}, {"rate", e.rate}});
  }
  j["reward"] = {{"alpha", c.reward.alpha}, {"p_target", c.reward.p_target}};
  j["agent"] = json::parse(rl::to_json(c.agent));
  j["controller"] = std::string(name_of(c.controller));
  j["horizon"] = c.horizon;
  j["metric_window"] = {c.window.start, c.window.end};
  j["eval_runs"] = c.eval_runs;
  j["seed"] = c.seed;
  j["training"] = {{"episodes", c.episodes}, {"eval_every", c.eval_every}};
  if (c.checkpoint) j["checkpoint"] = *c.checkpoint;
  return j.dump();
}

std::shared_ptr<const RoadNetwork> build_network(const ExperimentConfig& cfg) {
  if (cfg.grid) {
    return std::make_shared<const RoadNetwork>(generate_grid(cfg.grid->rows, cfg.grid->cols, cfg.grid->block_length));
  }
  return std::make_shared<const RoadNetwork>(load_network_file(*cfg.network_path));
}

EnvConfig make_env_config(const ExperimentConfig& cfg, std::shared_ptr<const RoadNetwork> net) {
  EnvConfig env;
  env.net = net;
  const bool hv_only = cfg.controller == ControllerKind::Signalized || cfg.controller == ControllerKind::Unsignalized;
  env.demand = DemandConfig::uniform(*net, cfg.default_rate, hv_only ? 0.0 : cfg.rv_penetration, cfg.seed);
  for (const auto& over : cfg.entry_rates) {
    auto it = std::find_if(env.demand.entries.begin(), env.demand.entries.end(),
                           [&](const EntryDemand& e) { return e.intersection == over.intersection; });
    if (it == env.demand.entries.end()) {
      throw ConfigError("demand.entries: intersection " + std::to_string(to_int(over.intersection)) +
                        " is not an entry of the network");
    }
    it->rate = over.rate;
  }
  env.reward = cfg.reward;
  if (cfg.controller == ControllerKind::LocalRl) env.reward.alpha = 0.0;
  switch (cfg.controller) {
    case ControllerKind::Signalized: env.controllers = ControllerSet::signalized(*net); break;
    case ControllerKind::Unsignalized: env.controllers = ControllerSet::all_way_stop(*net); break;
    default: env.controllers = ControllerSet::rv_controlled(*net); break;
  }
  env.horizon = cfg.horizon;
  env.window = cfg.window;
  return env;
}

std::string fingerprint(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Policy random_policy(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [rng](const std::vector<ObservedDecision>& decisions) {
    std::vector<Action> actions;
    actions.reserve(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) actions.push_back(random_rv_policy(*rng));
    return actions;
  };
}

Policy greedy_policy(const rl::QNetwork& network) {
  auto net = std::make_shared<rl::QNetwork>(network);
  net->clear_noise();
  return [net](const std::vector<ObservedDecision>& decisions) {
    std::vector<Action> actions;
    if (decisions.empty()) return actions;
    std::vector<Observation> obs;
    obs.reserve(decisions.size());
    for (const auto& d : decisions) obs.push_back(d.observation);
    const auto q = net->q_values(rl::to_matrix(obs));
    for (Eigen::Index c = 0; c < q.cols(); ++c) {
      actions.push_back(q(1, c) > q(0, c) ? Action::Go : Action::Stop);
    }
    return actions;
  };
}

EpisodeStats run_episode(Environment& env, std::uint64_t seed, const Policy& policy,
                         const std::function<void(const EnvStep&)>& on_step) {
  EpisodeStats stats;
  stats.seed = seed;
  auto decisions = env.reset(seed);
  while (!env.done()) {
    CommandMap commands;
    if (!decisions.empty()) {
      const auto actions = policy(decisions);
      if (actions.size() != decisions.size()) throw std::logic_error("policy returned the wrong number of actions");
      for (std::size_t i = 0; i < decisions.size(); ++i) commands.emplace(decisions[i].point.rv, actions[i]);
      stats.decisions += decisions.size();
    }
    auto step = env.step(commands);
    for (const auto& o : step.outcomes) stats.reward_sum += o.reward.total;
    if (on_step) on_step(step);
    decisions = std::move(step.decisions);
  }
  const auto& world = env.world();
  const auto& net = world.network();
  const auto& m = world.metrics;
  stats.average_wait = m.average_wait();
  stats.total_window_wait = m.total_window_wait();
  stats.vehicles_counted = m.vehicles_counted();
  stats.conflicts_in_window = m.conflicts_in_window();
  stats.conflicts_total = m.conflicts_total();
  stats.spawned = world.spawned_total();
  stats.exited = world.exited;
  for (std::size_t i = 0; i < net.intersections().size(); ++i) {
    if (net.intersections()[i].is_boundary()) continue;
    stats.wait_at.push_back(m.average_wait_at(i));
    stats.rv_share_at.push_back(m.mean_rv_share(i));
    stats.samples.push_back(m.samples()[i]);
  }
  return stats;
}

namespace {

std::string agent_variant(const rl::AgentConfig& a) {
  std::string s = "dueling double DQN, prioritized replay, " + std::to_string(a.n_step) + "-step";
  if (a.noisy) s += ", noisy layers";
  if (a.distributional) s += ", distributional (" + std::to_string(a.atoms) + " atoms)";
  return s;
}

std::string fmt(double v, int precision = 10) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

}  // namespace

TrainResult run_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream* progress) {
  if (!is_learnable(cfg.controller)) {
    throw ConfigError("controller '" + std::string(name_of(cfg.controller)) + "' is not learnable");
  }
  std::filesystem::create_directories(out_dir);
  const auto net = build_network(cfg);
  const auto env_cfg = make_env_config(cfg, net);
  Environment env(env_cfg);
  Environment eval_env(env_cfg);
  rl::Agent agent(cfg.agent, Rng::derive(cfg.seed, 17));

  TrainResult result;
  result.checkpoint = out_dir / "policy.ckpt";
  result.log = out_dir / "training_log.csv";
  std::ofstream log(result.log);
  if (!log) throw std::runtime_error("cannot write " + result.log.string());
  log << "# mixtraffic training log v1\n";
  log << "# config: " << to_json(cfg) << "\n";
  log << "# reward.alpha = " << fmt(env_cfg.reward.alpha) << "\n";
  log << "# agent: " << agent_variant(cfg.agent) << "\n";
  log << "episode,return,mean_loss,epsilon,gradient_steps,decisions,avg_wait,eval_avg_wait\n";

  const Policy explore = [&agent](const std::vector<ObservedDecision>& decisions) {
    std::vector<Observation> obs;
    obs.reserve(decisions.size());
    for (const auto& d : decisions) obs.push_back(d.observation);
    return agent.act(obs);
  };

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    agent.set_progress(static_cast<double>(ep) / cfg.episodes);
    double loss_sum = 0.0;
    long losses = 0;
    const auto stats = run_episode(env, Rng::derive(cfg.seed, 1'000'000 + static_cast<std::uint64_t>(ep)), explore,
                                   [&](const EnvStep& step) {
                                     for (const auto& o : step.outcomes) {
                                       if (const auto loss = agent.observe(o)) {
                                         loss_sum += *loss;
                                         ++losses;
                                       }
                                     }
                                   });
    agent.end_episode();

    TrainingLogRow row;
    row.episode = ep + 1;
    row.episode_return = stats.reward_sum;
    row.mean_loss = losses > 0 ? loss_sum / static_cast<double>(losses) : 0.0;
    row.epsilon = agent.epsilon();
    row.gradient_steps = agent.gradient_steps();
    row.decisions = stats.decisions;
    row.average_wait = stats.average_wait;
    if (cfg.eval_every > 0 && ((ep + 1) % cfg.eval_every == 0 || ep + 1 == cfg.episodes)) {
      const auto snap = run_episode(eval_env, Rng::derive(cfg.seed, 2'000'000 + static_cast<std::uint64_t>(ep)),
                                    greedy_policy(agent.online()));
      row.eval_average_wait = snap.average_wait;
    }
    log << row.episode << ',' << fmt(row.episode_return) << ',' << fmt(row.mean_loss) << ',' << fmt(row.epsilon) << ','
        << row.gradient_steps << ',' << row.decisions << ',' << fmt(row.average_wait) << ','
        << (row.eval_average_wait ? fmt(*row.eval_average_wait) : std::string()) << '\n';
    log.flush();
    if (progress) {
      *progress << "episode " << row.episode << "/" << cfg.episodes << " return " << fmt(row.episode_return, 6)
                << " loss " << fmt(row.mean_loss, 4) << " eps " << fmt(row.epsilon, 3) << " wait "
                << fmt(row.average_wait, 4);
      if (row.eval_average_wait) *progress << " eval_wait " << fmt(*row.eval_average_wait, 4);
      *progress << '\n' << std::flush;
    }
    result.rows.push_back(row);
  }
  rl::save_checkpoint(result.checkpoint, cfg.agent, agent.online(), to_json(cfg));
  return result;
}

EvalReport run_eval(const ExperimentConfig& cfg, const rl::QNetwork* network) {
  const auto net = build_network(cfg);
  const auto env_cfg = make_env_config(cfg, net);

  std::optional<rl::QNetwork> loaded;
  if (is_learnable(cfg.controller) && !network) {
    if (!cfg.checkpoint) throw ConfigError("eval of a learned controller needs a checkpoint");
    auto ck = rl::load_checkpoint(*cfg.checkpoint);
    if (!(ck.config.shape() == cfg.agent.shape())) {
      throw ConfigError("checkpoint architecture does not match the configured agent");
    }
    loaded = std::move(ck.network);
    network = &*loaded;
  }

  EvalReport report;
  report.strategy = std::string(name_of(cfg.controller));
  report.label = std::string(label_of(cfg.controller));
  if (is_learnable(cfg.controller)) report.agent_variant = agent_variant(cfg.agent);
  report.config_json = to_json(cfg);
  report.fingerprint = fingerprint(report.config_json + "|" + std::string(kVersion));
  report.network_fingerprint = fingerprint(serialize_network(*net));
  for (const auto& node : net->intersections()) {
    if (!node.is_boundary()) report.intersections.push_back(node.id);
  }

  std::vector<std::future<EpisodeStats>> futures;
  for (int r = 1; r <= cfg.eval_runs; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    Policy policy;
    if (is_learnable(cfg.controller)) {
      policy = greedy_policy(*network);
    } else if (cfg.controller == ControllerKind::Random) {
      policy = random_policy(Rng::derive(seed, 7));
    } else {
      policy = [](const std::vector<ObservedDecision>& d) { return std::vector<Action>(d.size(), Action::Stop); };
    }
    futures.push_back(std::async(std::launch::async, [env_cfg, seed, policy]() {
      Environment env(env_cfg);
      return run_episode(env, seed, policy);
    }));
  }
  for (auto& f : futures) report.runs.push_back(f.get());

  const double n = static_cast<double>(report.runs.size());
  report.wait_at.assign(report.intersections.size(), 0.0);
  for (const auto& run : report.runs) {
    report.average_wait += run.average_wait;
    report.conflicts_in_window += static_cast<double>(run.conflicts_in_window);
    for (std::size_t i = 0; i < run.wait_at.size(); ++i) report.wait_at[i] += run.wait_at[i];
  }
  report.average_wait /= n;
  report.conflicts_in_window /= n;
  for (auto& w : report.wait_at) w /= n;
  return report;
}

std::string EvalReport::text() const {
  std::ostringstream out;
  out << "strategy: " << label << " (" << strategy << ")\n";
  if (!agent_variant.empty()) out << "agent: " << agent_variant << "\n";
  out << "config fingerprint: " << fingerprint << "\n";
  out << "network fingerprint: " << network_fingerprint << "\n";
  out << "config: " << config_json << "\n\n";
  out << std::left << std::setw(6) << "run" << std::setw(22) << "seed" << std::setw(14) << "avg_wait_s"
      << std::setw(10) << "vehicles" << std::setw(11) << "conflicts" << "spawned\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    out << std::left << std::setw(6) << r + 1 << std::setw(22) << run.seed << std::setw(14) << fmt(run.average_wait, 6)
        << std::setw(10) << run.vehicles_counted << std::setw(11) << run.conflicts_in_window << run.spawned << "\n";
  }
  out << "\naverage waiting time: " << std::fixed << std::setprecision(2) << average_wait << " s (mean of "
      << runs.size() << " runs)\n";
  out << "conflicts in window: " << std::setprecision(1) << conflicts_in_window << " per run\n\n";
  out << "per-intersection average waiting time (s):\n";
  for (std::size_t i = 0; i < intersections.size(); ++i) {
    out << "  " << std::setw(6) << to_int(intersections[i]) << std::setprecision(2) << wait_at[i] << "\n";
  }
  return out.str();
}

std::string EvalReport::json() const {
  nlohmann::json j;
  j["format"] = "mixtraffic-report v1";
  j["version"] = std::string(kVersion);
  j["strategy"] = strategy;
  j["label"] = label;
  j["agent_variant"] = agent_variant;
  j["config"] = nlohmann::json::parse(config_json);
  j["fingerprint"] = fingerprint;
  j["network_fingerprint"] = network_fingerprint;
  j["average_wait"] = average_wait;
  j["conflicts_in_window"] = conflicts_in_window;
  j["intersections"] = nlohmann::json::array();
  for (std::size_t i = 0; i < intersections.size(); ++i) {
    j["intersections"].push_back({{"id", to_int(intersections[i])}, {"average_wait", wait_at[i]}});
  }
  j["runs"] = nlohmann::json::array();
  for (const auto& run : runs) {
    nlohmann::json r;
    r["seed"] = run.seed;
    r["average_wait"] = run.average_wait;
    r["total_window_wait"] = run.total_window_wait;
    r["vehicles_counted"] = run.vehicles_counted;
    r["conflicts_in_window"] = run.conflicts_in_window;
    r["conflicts_total"] = run.conflicts_total;
    r["spawned"] = run.spawned;
    r["exited"] = run.exited;
    r["decisions"] = run.decisions;
    r["wait_at"] = run.wait_at;
    r["rv_share_at"] = run.rv_share_at;
    j["runs"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

EvalReport parse_report(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
    EvalReport r;
    if (j.at("format").get<std::string>() != "mixtraffic-report v1") throw ConfigError("unsupported report format");
    r.strategy = j.at("strategy").get<std::string>();
    r.label = j.at("label").get<std::string>();
    r.agent_variant = j.at("agent_variant").get<std::string>();
    r.config_json = j.at("config").dump();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.network_fingerprint = j.at("network_fingerprint").get<std::string>();
    r.average_wait = j.at("average_wait").get<double>();
    r.conflicts_in_window = j.at("conflicts_in_window").get<double>();
    for (const auto& i : j.at("intersections")) {
      r.intersections.push_back(IntersectionId{i.at("id").get<int>()});
      r.wait_at.push_back(i.at("average_wait").get<double>());
    }
    for (const auto& run : j.at("runs")) {
      EpisodeStats s;
      s.seed = run.at("seed").get<std::uint64_t>();
      s.average_wait = run.at("average_wait").get<double>();
      s.total_window_wait = run.at("total_window_wait").get<double>();
      s.vehicles_counted = run.at("vehicles_counted").get<std::uint64_t>();
      s.conflicts_in_window = run.at("conflicts_in_window").get<std::uint64_t>();
      s.conflicts_total = run.at("conflicts_total").get<std::uint64_t>();
      s.spawned = run.at("spawned").get<std::uint64_t>();
      s.exited = run.at("exited").get<std::uint64_t>();
      s.decisions = run.at("decisions").get<std::uint64_t>();
      s.wait_at = run.at("wait_at").get<std::vector<double>>();
      s.rv_share_at = run.at("rv_share_at").get<std::vector<double>>();
      r.runs.push_back(std::move(s));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw std::runtime_error("write to " + p.string() + " failed");
  };
  write(dir / "report.txt", report.text());
  write(dir / "report.json", report.json());
  for (std::size_t i = 0; i < report.intersections.size(); ++i) {
    std::ostringstream csv;
    csv << "run,seed,t,rv_share,vehicles,q_N,q_E,q_S,q_W,w_N,w_E,w_S,w_W\n";
    for (std::size_t r = 0; r < report.runs.size(); ++r) {
      const auto& run = report.runs[r];
      if (i >= run.samples.size()) continue;
      for (const auto& s : run.samples[i]) {
        csv << r + 1 << ',' << run.seed << ',' << fmt(s.time) << ',' << fmt(s.rv_share) << ',' << s.vehicles;
        for (const auto q : s.queue) csv << ',' << q;
        for (const auto w : s.avg_wait) csv << ',' << fmt(w);
        csv << '\n';
      }
    }
    write(dir / ("intersection_" + std::to_string(to_int(report.intersections[i])) + ".csv"), csv.str());
  }
}

std::filesystem::path timestamped_dir(const std::filesystem::path& results_root, std::string_view stem) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stem) + "-" + stamp;
  auto dir = results_root / base;
  for (int k = 2; std::filesystem::exists(dir); ++k) dir = results_root / (base + "-" + std::to_string(k));
  std::filesystem::create_directories(dir);
  return dir;
}

double reduction_percent(double base, double ours) {
  if (!(base > 0.0)) throw ConfigError("reduction needs a positive baseline");
  return (base - ours) / base * 100.0;
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", value);
  return buf;
}

ComparisonTable run_compare(const std::vector<StrategyResult>& results, std::string_view reference) {
  if (results.size() < 2) throw ConfigError("compare needs at least two strategies");
  std::string fp;
  for (const auto& r : results) {
    if (r.network_fingerprint.empty()) continue;
    if (fp.empty()) {
      fp = r.network_fingerprint;
    } else if (fp != r.network_fingerprint) {
      throw ConfigError("strategies were evaluated on different networks");
    }
  }
  const auto ref = std::find_if(results.begin(), results.end(), [&](const auto& r) { return r.label == reference; });
  if (ref == results.end()) throw ConfigError("reference strategy '" + std::string(reference) + "' not among inputs");
  ComparisonTable table;
  table.rows = results;
  table.reference = ref->label;
  for (const auto& r : results) {
    if (&r == &*ref) continue;
    table.reductions.emplace_back(r.label, reduction_percent(r.average_wait, ref->average_wait));
  }
  return table;
}

std::string ComparisonTable::text() const {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width + 2)) << "Strategy" << "Average Waiting Time (s)\n";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", r.average_wait);
    out << std::left << std::setw(static_cast<int>(width + 2)) << r.label << buf << "\n";
  }
  out << "\n";
  for (const auto& [label, pct] : reductions) {
    out << reference << " vs " << label << ": " << format_percent(pct) << " reduction\n";
  }
  return out.str();
}

}  // namespace mixtraffic
