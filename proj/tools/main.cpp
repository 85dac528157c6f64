// mixtraffic command-line front end.
//
// Exit codes: 0 ok, 1 usage, 3 bad config, 4 bad network, 5 checkpoint or
// file error, 6 runtime failure (e.g. non-finite loss).

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixtraffic/harness.hpp"
#include "mixtraffic/netmodel.hpp"
#include "mixtraffic/simcore.hpp"

namespace mt = mixtraffic;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 3, kNetwork = 4, kFile = 5, kRuntime = 6 };

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_generate(int rows, int cols, double block, const std::string& out) {
  const auto net = mt::generate_grid(rows, cols, block);
  const auto text = mt::serialize_network(net);
  if (out.empty() || out == "-") {
    std::cout << text << "\n";
  } else {
    std::ofstream f(out);
    f << text << "\n";
    if (!f) throw std::ios_base::failure("cannot write " + out);
    std::cerr << "wrote " << out << " (" << net.internal_count() << " intersections, " << net.segments().size()
              << " segments)\n";
  }
  return kOk;
}

int cmd_train(const std::string& config_path, const std::string& results, int episodes, bool quiet) {
  auto cfg = mt::load_experiment_config(config_path);
  if (episodes > 0) cfg.episodes = episodes;
  const auto dir = mt::timestamped_dir(results, cfg.name + "-train-" + std::string(mt::name_of(cfg.controller)));
  const auto r = mt::run_train(cfg, dir, quiet ? nullptr : &std::cerr);
  std::cout << "checkpoint: " << r.checkpoint.string() << "\n" << "log: " << r.log.string() << "\n";
  return kOk;
}

int cmd_eval(const std::string& config_path, const std::string& results, const std::string& checkpoint,
             const std::string& controller) {
  auto cfg = mt::load_experiment_config(config_path);
  if (!controller.empty()) cfg.controller = mt::parse_controller(controller);
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  const auto report = mt::run_eval(cfg);
  const auto dir = mt::timestamped_dir(results, cfg.name + "-eval-" + report.strategy);
  mt::write_report(report, dir);
  std::cout << report.text() << "\nreport written to " << dir.string() << "\n";
  return kOk;
}

int cmd_compare(const std::vector<std::string>& reports, const std::vector<std::string>& values,
                const std::string& reference) {
  std::vector<mt::StrategyResult> rows;
  for (const auto& path : reports) {
    const auto r = mt::parse_report(slurp(path));
    rows.push_back({r.label, r.average_wait, r.network_fingerprint});
  }
  for (const auto& v : values) {
    const auto eq = v.rfind('=');
    if (eq == std::string::npos) throw mt::ConfigError("--value expects LABEL=SECONDS, got '" + v + "'");
    rows.push_back({v.substr(0, eq), std::stod(v.substr(eq + 1)), ""});
  }
  const auto ref = reference.empty() && !rows.empty() ? rows.back().label : reference;
  std::cout << mt::run_compare(rows, ref).text();
  return kOk;
}

int cmd_trace(const std::string& config_path, const std::string& out, std::uint64_t seed,
              const std::string& checkpoint) {
  auto cfg = mt::load_experiment_config(config_path);
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  const auto net = mt::build_network(cfg);
  mt::Environment env(mt::make_env_config(cfg, net));
  mt::Policy policy;
  std::optional<mt::rl::Checkpoint> ck;
  if (mt::is_learnable(cfg.controller)) {
    if (!cfg.checkpoint) throw mt::ConfigError("trace of a learned controller needs --checkpoint");
    ck = mt::rl::load_checkpoint(*cfg.checkpoint);
    policy = mt::greedy_policy(ck->network);
  } else {
    policy = mt::random_policy(mt::Rng::derive(seed, 7));
  }
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty() && out != "-") {
    file.open(out);
    if (!file) throw std::ios_base::failure("cannot write " + out);
    os = &file;
  }
  mt::TraceWriter writer(*os);
  env.set_observer([&](const mt::WorldState& w) { writer.write(w); });
  const auto stats = mt::run_episode(env, seed, policy);
  std::cerr << "trace done: " << stats.spawned << " vehicles, average wait " << stats.average_wait << " s\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-traffic intersection simulator and RL trainer"};
  app.require_subcommand(1);

  int rows = 2, cols = 2;
  double block = 200.0;
  std::string out;
  auto* gen = app.add_subcommand("generate-net", "Write a rows x cols grid network as JSON");
  gen->add_option("--rows", rows, "Grid rows")->check(CLI::PositiveNumber);
  gen->add_option("--cols", cols, "Grid columns")->check(CLI::PositiveNumber);
  gen->add_option("--block-length", block, "Distance between neighbouring intersections (m)");
  gen->add_option("-o,--out", out, "Output file (default stdout)");

  std::string config, results = "results", checkpoint, controller;
  int episodes = 0;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a learned controller and write a checkpoint");
  train->add_option("-c,--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("-r,--results", results, "Results root; a timestamped subfolder is created");
  train->add_option("-e,--episodes", episodes, "Override training.episodes");
  train->add_flag("-q,--quiet", quiet, "No per-episode progress on stderr");

  auto* eval = app.add_subcommand("eval", "Evaluate a controller over eval_runs seeds and write a report");
  eval->add_option("-c,--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("-r,--results", results, "Results root; a timestamped subfolder is created");
  eval->add_option("--checkpoint", checkpoint, "Policy checkpoint for learned controllers");
  eval->add_option("--controller", controller, "Override the configured controller");

  std::vector<std::string> reports, values;
  std::string reference;
  auto* compare = app.add_subcommand("compare", "Tabulate strategies and percentage reductions");
  compare->add_option("reports", reports, "report.json files from eval");
  compare->add_option("--value", values, "Extra row as LABEL=SECONDS (repeatable)");
  compare->add_option("--reference", reference, "Label of the strategy reductions are credited to (default: last)");

  std::uint64_t seed = 1;
  auto* trace = app.add_subcommand("trace", "Run one episode and write the per-step vehicle trace");
  trace->add_option("-c,--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  trace->add_option("-o,--out", out, "Trace file (default stdout)");
  trace->add_option("--seed", seed, "Episode seed");
  trace->add_option("--checkpoint", checkpoint, "Policy checkpoint for learned controllers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(rows, cols, block, out);
    if (*train) return cmd_train(config, results, episodes, quiet);
    if (*eval) return cmd_eval(config, results, checkpoint, controller);
    if (*compare) return cmd_compare(reports, values, reference);
    if (*trace) return cmd_trace(config, out, seed, checkpoint);
  } catch (const mt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const mt::NetworkParseError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return kNetwork;
  } catch (const mt::NetworkValidationError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return kNetwork;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kFile;
  } catch (const mt::rl::NonFiniteLoss& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
