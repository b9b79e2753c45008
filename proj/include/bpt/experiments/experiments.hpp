#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bpt/cluster/runtime.hpp"
#include "bpt/experiments/config.hpp"
#include "bpt/nn/gradcheck.hpp"

namespace bpt::experiments {

struct LoadedData {
  nn::Dataset train;
  std::optional<nn::Dataset> test;
};

/// Reads the configured training and (if named) held-out sets.
LoadedData load_data(const ExperimentConfig& config);

struct Combination {
  cluster::Strategy strategy = cluster::Strategy::agwu;
  cluster::Partitioning partition = cluster::Partitioning::idpa;
  std::size_t workers = 1;
  /// e.g. "agwu_idpa_m4"
  std::string tag() const;
};

struct RunOutcome {
  Combination combination;
  bool ok = false;
  std::string error;
  std::optional<cluster::RunReport> report;
  std::filesystem::path metrics;
};

/// strategies x partitions x scales, in that nesting order.
std::vector<Combination> matrix_combinations(const ExperimentConfig& config);

cluster::ClusterConfig combination_config(const ExperimentConfig& config, const Combination& combo);

/// A "run" header line, update and epoch records in processing order.
void write_metrics_jsonl(std::ostream& out, const Combination& combo, const cluster::RunReport& report);

inline constexpr const char* kSummaryHeader =
    "epoch,strategy,partition,makespan,sync_wait,comm_units,balance,accuracy,auc,workers,comm_bytes,status";

/// One row per epoch of every successful run, one row per failed run.
void write_summary_csv(std::ostream& out, std::span<const RunOutcome> outcomes);

/// Runs one combination and writes <out>/<tag>.jsonl. Failures are caught
/// and returned in the outcome.
RunOutcome run_combination(const ExperimentConfig& config, const Combination& combo,
                           const nn::Network& net, const LoadedData& data,
                           const std::filesystem::path& out);

/// Every combination plus <out>/summary.csv.
std::vector<RunOutcome> run_experiment_matrix(const ExperimentConfig& config, const nn::Network& net,
                                              const LoadedData& data, const std::filesystem::path& out);

struct GradcheckOptions {
  std::uint64_t seed = 1;
  std::size_t samples = 4;
  double h = 1e-5;
  double tolerance = 1e-6;
  /// Adds 1e-3 to the analytic derivative of this parameter.
  std::optional<std::size_t> corrupt_parameter;
};

struct GradcheckOutcome {
  nn::GradcheckReport report;
  std::size_t parameters = 0;
  bool passed = false;
  std::string message;
};

/// Down-scaled preset used by the gradcheck command: 12x12 inputs.
nn::NetworkSpec gradcheck_network(std::string_view preset);

/// Checks every parameter on seeded random samples.
GradcheckOutcome gradcheck_command(const nn::NetworkSpec& spec, const GradcheckOptions& options = {});

struct PlanInspection {
  partition::PartitionPlan plan;
  std::size_t total_iterations = 0;
  /// Per-batch simulated compute times used to plan the next batch.
  std::vector<std::vector<double>> batch_times;
};

/// Plans the configured partitioning on the simulated clock without training.
PlanInspection inspect_plan(const ExperimentConfig& config, const nn::Network& net, std::size_t samples);

/// Static schedules of the network's forward and backward task DAGs as
/// timeline CSV (cost units as nanoseconds).
void write_task_timelines(const nn::Network& net, std::size_t threads, std::ostream& forward,
                          std::ostream& backward);

}  // namespace bpt::experiments
