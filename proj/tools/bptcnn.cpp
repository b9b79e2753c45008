// bptcnn: command-line front end for training runs, the strategy matrix,
// gradient checks and partition-plan inspection.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "bpt/cluster/runtime.hpp"
#include "bpt/common/error.hpp"
#include "bpt/experiments/config.hpp"
#include "bpt/experiments/experiments.hpp"
#include "bpt/nn/checkpoint.hpp"
#include "bpt/nn/presets.hpp"

namespace fs = std::filesystem;
using namespace bpt;
using namespace bpt::experiments;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;
constexpr int kGradcheck = 3;

struct KeyFlags {
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "flat key = value configuration file");
    for (const auto& key : config_keys()) {
      std::string flag(key.name);
      for (char& ch : flag) {
        if (ch == '_') ch = '-';
      }
      options[std::string(key.name)] =
          app.add_option("--" + flag, values[std::string(key.name)], std::string(key.help));
    }
  }

  ExperimentConfig parse(const std::map<std::string, std::string>& forced = {}) const {
    ConfigValues file = config.empty() ? ConfigValues{} : read_config_file(config);
    ConfigValues overrides;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) overrides[key] = values.at(key);
    }
    for (const auto& [key, value] : forced) {
      if (!file.count(key) && !overrides.count(key)) overrides[key] = value;
    }
    return parse_config(file, overrides);
  }
};

void print_epochs(const cluster::RunReport& r) {
  for (const auto& e : r.epochs) {
    std::cout << "epoch " << e.epoch << "  accuracy " << e.accuracy << "  auc " << e.auc << "  makespan "
              << e.makespan << "s  sync_wait " << e.sync_wait << "s  comm " << e.comm_units << "  balance "
              << e.balance << '\n';
  }
}

void save_config(const ExperimentConfig& c, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream(out / "config.txt") << render_config(c);
}

int run_single(const ExperimentConfig& c) {
  const nn::Network net(c.network());
  const auto data = load_data(c);
  const fs::path out = c.out;
  save_config(c, out);
  const Combination combo{c.cluster.strategy, c.cluster.partition, c.cluster.workers};
  const auto outcome = run_combination(c, combo, net, data, out);
  std::ofstream summary(out / "summary.csv");
  write_summary_csv(summary, std::span<const RunOutcome>(&outcome, 1));
  if (!outcome.ok) {
    std::cerr << "run failed: " << outcome.error << '\n';
    return kRuntime;
  }
  print_epochs(*outcome.report);
  nn::save_checkpoint(out / "final.bptw", outcome.report->final_params);
  std::cout << "iterations " << outcome.report->iterations << ", versions " << outcome.report->versions
            << ", transfers " << outcome.report->transfers << "; metrics in " << outcome.metrics.string()
            << '\n';
  return kOk;
}

int run_matrix(const ExperimentConfig& c) {
  const nn::Network net(c.network());
  const auto data = load_data(c);
  const fs::path out = c.out;
  save_config(c, out);
  const auto outcomes = run_experiment_matrix(c, net, data, out);
  int failed = 0;
  for (const auto& o : outcomes) {
    std::cout << o.combination.tag() << ": ";
    if (!o.ok) {
      std::cout << "FAILED " << o.error << '\n';
      ++failed;
      continue;
    }
    const auto& r = *o.report;
    std::cout << "accuracy " << r.epochs.back().accuracy << "  makespan " << r.makespan << "s  sync_wait "
              << r.sync_wait << "s  transfers " << r.transfers << "  balance " << r.balance << '\n';
  }
  std::cout << "summary in " << (out / "summary.csv").string() << '\n';
  return failed ? kRuntime : kOk;
}

int run_inspect(const ExperimentConfig& c) {
  const nn::Network net(c.network());
  const auto data = load_data(c);
  const fs::path out = c.out;
  fs::create_directories(out);
  const auto inspection = inspect_plan(c, net, data.train.size());
  std::ofstream plan(out / "plan.csv");
  partition::write_plan_csv(plan, inspection.plan);
  std::ofstream fwd(out / "timeline_forward.csv");
  std::ofstream bwd(out / "timeline_backward.csv");
  write_task_timelines(net, c.cluster.pool_size, fwd, bwd);
  std::cout << "network " << net.descriptor() << " (" << net.parameter_count() << " parameters)\n"
            << "samples " << data.train.size() << ", total iterations " << inspection.total_iterations << '\n';
  const auto cum = inspection.plan.cumulative();
  for (std::size_t j = 0; j < cum.size(); ++j) {
    std::cout << "worker " << j + 1 << ": " << cum[j] << " samples\n";
  }
  std::cout << "plan in " << (out / "plan.csv").string() << ", task timelines in " << out.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-layered parallel CNN training"};
  app.require_subcommand(1);

  KeyFlags train_flags, sim_flags, matrix_flags, inspect_flags, worker_flags;
  auto* train = app.add_subcommand("train", "one training run (wall-clock time unless time= is set)");
  train_flags.attach(*train);
  auto* simulate = app.add_subcommand("simulate", "one training run on the simulated clock");
  sim_flags.attach(*simulate);
  auto* matrix = app.add_subcommand("matrix", "strategy x partitioning x scale matrix");
  matrix_flags.attach(*matrix);
  auto* inspect = app.add_subcommand("inspect-plan", "partition plan and task timelines without training");
  inspect_flags.attach(*inspect);
  auto* worker = app.add_subcommand("worker", "worker process for a socket coordinator");
  worker_flags.attach(*worker);
  std::size_t worker_id = 0;
  worker->add_option("--worker-id", worker_id, "0-based worker index")->required();

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check of a down-scaled preset");
  std::string preset = "case1";
  std::uint64_t seed = 1;
  GradcheckOptions gopts;
  std::size_t corrupt = 0;
  grad->add_option("--preset", preset, "network preset");
  grad->add_option("--seed", seed, "seed for parameters and samples");
  grad->add_option("--samples", gopts.samples, "random samples");
  auto* corrupt_opt = grad->add_option("--corrupt", corrupt, "perturb the analytic derivative of this parameter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (train->parsed()) return run_single(train_flags.parse({{"time", "wall"}}));
    if (simulate->parsed()) {
      auto c = sim_flags.parse();
      c.cluster.time = cluster::TimeMode::simulated;
      return run_single(c);
    }
    if (matrix->parsed()) return run_matrix(matrix_flags.parse());
    if (inspect->parsed()) return run_inspect(inspect_flags.parse());
    if (worker->parsed()) {
      const auto c = worker_flags.parse();
      if (worker_id >= c.cluster.workers) throw ValidationError("worker-id: out of range");
      const nn::Network net(c.network());
      const auto data = load_data(c);
      auto link = cluster::connect_socket(c.cluster.address, c.cluster.port, c.cluster.connect_timeout);
      cluster::run_worker(c.cluster, net, data.train, worker_id, *link);
      return kOk;
    }
    if (grad->parsed()) {
      gopts.seed = seed;
      if (corrupt_opt->count()) gopts.corrupt_parameter = corrupt;
      const auto o = gradcheck_command(gradcheck_network(preset), gopts);
      std::cout << preset << " (" << o.parameters << " parameters): " << o.message << '\n'
                << (o.passed ? "PASS" : "FAIL") << '\n';
      return o.passed ? kOk : kGradcheck;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}
