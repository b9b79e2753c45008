#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpt/cluster/transport.hpp"
#include "bpt/inner/trainer.hpp"
#include "bpt/nn/dataset.hpp"
#include "bpt/nn/network.hpp"
#include "bpt/nn/parameters.hpp"
#include "bpt/partition/partition.hpp"
#include "bpt/sync/sync.hpp"

namespace bpt::cluster {

enum class Strategy { sgwu, agwu };
enum class Partitioning { idpa, udpa };
enum class TimeMode { simulated, wall };
enum class TransportKind { in_process, socket };

std::string_view to_string(Strategy s);
std::string_view to_string(Partitioning p);
std::string_view to_string(TimeMode t);
std::string_view to_string(TransportKind t);
Strategy parse_strategy(std::string_view s);
Partitioning parse_partitioning(std::string_view s);
TimeMode parse_time_mode(std::string_view s);
TransportKind parse_transport(std::string_view s);

struct ClusterConfig {
  std::size_t workers = 4;
  Strategy strategy = Strategy::agwu;
  Partitioning partition = Partitioning::idpa;
  std::size_t batches = 4;
  std::size_t iterations = 10;
  /// Multiplies each worker's compute time; empty means all 1.
  std::vector<double> slowdown;
  /// Nominal worker frequencies for the first IDPA batch; empty means all 1.
  std::vector<double> frequency;
  std::size_t pool_size = 1;
  std::uint64_t seed = 1;
  double unit_cost = 1.0;
  partition::Predictor predictor = partition::Predictor::equal_finish;
  TimeMode time = TimeMode::simulated;
  TransportKind transport = TransportKind::in_process;
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;
  /// Socket transport: wait for separately started worker processes instead
  /// of spawning worker threads.
  bool external_workers = false;
  double connect_timeout = 30.0;
  /// Stored global versions; 0 means 4 m.
  std::size_t version_capacity = 0;
  std::size_t validation_cap = 1000;
  /// Simulated seconds per multiply-accumulate.
  double seconds_per_mac = 1e-9;
  /// At most this many evaluation samples per epoch record; 0 means all.
  std::size_t eval_limit = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  double slowdown_of(std::size_t worker) const;
  double frequency_of(std::size_t worker) const;
  std::size_t capacity() const { return version_capacity ? version_capacity : 4 * workers; }
  /// K' = A + dK with IDPA, K otherwise.
  std::size_t total_iterations(std::size_t samples) const;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  /// Time at which the last worker finished this epoch (cumulative).
  double makespan = 0.0;
  /// Idle time of all workers attributed to this epoch.
  double sync_wait = 0.0;
  /// Cumulative weight-set transfers, their cost c_w * transfers, and all frame bytes.
  std::uint64_t transfers = 0;
  double comm_units = 0.0;
  std::uint64_t comm_bytes = 0;
  double balance = 1.0;
  double accuracy = 0.0;
  double auc = 0.0;
  std::uint64_t version = 0;
  /// Update records produced up to the end of this epoch.
  std::size_t updates = 0;
};

/// {"record":"epoch",...}
std::string to_json_line(const MetricsRecord& record);

struct RunReport {
  ClusterConfig config;
  std::size_t iterations = 0;
  std::vector<MetricsRecord> epochs;
  /// t[i][j]: compute time of worker j in iteration i.
  std::vector<std::vector<double>> iteration_times;
  std::vector<sync::UpdateRecord> updates;
  partition::PartitionPlan plan;
  nn::ParameterSet final_params;
  std::uint64_t versions = 0;
  std::uint64_t rejected = 0;
  std::uint64_t transfers = 0;
  double comm_units = 0.0;
  std::uint64_t comm_bytes = 0;
  double makespan = 0.0;
  double sync_wait = 0.0;
  /// Per-worker total compute time and its mean/max.
  std::vector<double> compute_time;
  double balance = 1.0;
};

/// mean(t) / max(t); throws on an empty list or a nonpositive entry.
double workload_balance(std::span<const double> t);

/// The dense K' x m matrix of a finished run; throws if a report is missing.
const std::vector<std::vector<double>>& measure_iteration_times(const RunReport& run);

/// Simulated compute time for training `samples` samples.
double simulated_seconds(const nn::Network& net, std::size_t samples, double slowdown,
                         double seconds_per_mac = 1e-9);

/// Shuffled position -> dataset index.
std::vector<std::size_t> sample_order(std::size_t samples, std::uint64_t seed);

/// Visiting order of a worker's positions in one local iteration.
std::vector<std::size_t> local_order(std::vector<std::size_t> positions, std::uint64_t seed,
                                     std::size_t worker, std::size_t iteration);

struct EpochResult {
  nn::ParameterSet params;
  double accuracy = 0.0;
  double seconds = 0.0;
  double loss = 0.0;
};

/// Sequential SGD over `samples` starting from `global`, then validation
/// accuracy. Throws RuntimeFailure on a non-finite loss.
EpochResult worker_epoch(inner::InnerTrainer& trainer, std::span<const nn::Sample* const> samples,
                         const nn::ParameterSet& global,
                         std::span<const nn::Sample* const> validation, double slowdown,
                         TimeMode mode, double seconds_per_mac = 1e-9);

/// Worker actor: registers, trains K' local iterations and exits on Shutdown.
void run_worker(const ClusterConfig& config, const nn::Network& net, const nn::Dataset& train,
                std::size_t worker, WorkerLink& link);

/// Full pipeline. Epoch records evaluate the global weights on `eval`, or on
/// the validation slice of `train` when eval is null.
RunReport run_training(const ClusterConfig& config, const nn::Network& net,
                       const nn::Dataset& train, const nn::Dataset* eval = nullptr);

}  // namespace bpt::cluster
