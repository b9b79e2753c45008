#include <cmath>
#include <iomanip>
#include <sstream>

#include "bpt/cluster/runtime.hpp"
#include "bpt/common/error.hpp"

namespace bpt::cluster {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const char* what, const std::pair<std::string_view, E> (&names)[N]) {
  for (const auto& [name, value] : names) {
    if (s == name) return value;
  }
  std::string all;
  for (const auto& [name, value] : names) all += (all.empty() ? "" : ", ") + std::string(name);
  throw ValidationError(std::string("unknown ") + what + " '" + std::string(s) + "' (expected " + all + ")");
}

constexpr std::pair<std::string_view, Strategy> kStrategies[] = {{"sgwu", Strategy::sgwu},
                                                                 {"agwu", Strategy::agwu}};
constexpr std::pair<std::string_view, Partitioning> kPartitions[] = {{"idpa", Partitioning::idpa},
                                                                     {"udpa", Partitioning::udpa}};
constexpr std::pair<std::string_view, TimeMode> kTimes[] = {{"simulated", TimeMode::simulated},
                                                            {"wall", TimeMode::wall}};
constexpr std::pair<std::string_view, TransportKind> kTransports[] = {
    {"inprocess", TransportKind::in_process}, {"socket", TransportKind::socket}};

}  // namespace

std::string_view to_string(Strategy s) { return s == Strategy::sgwu ? "sgwu" : "agwu"; }
std::string_view to_string(Partitioning p) { return p == Partitioning::idpa ? "idpa" : "udpa"; }
std::string_view to_string(TimeMode t) { return t == TimeMode::simulated ? "simulated" : "wall"; }
std::string_view to_string(TransportKind t) {
  return t == TransportKind::in_process ? "inprocess" : "socket";
}

Strategy parse_strategy(std::string_view s) { return parse_enum(s, "strategy", kStrategies); }
Partitioning parse_partitioning(std::string_view s) { return parse_enum(s, "partition", kPartitions); }
TimeMode parse_time_mode(std::string_view s) { return parse_enum(s, "time mode", kTimes); }
TransportKind parse_transport(std::string_view s) { return parse_enum(s, "transport", kTransports); }

void ClusterConfig::validate() const {
  if (workers == 0) throw ValidationError("workers must be at least 1");
  if (iterations == 0) throw ValidationError("iterations must be at least 1");
  if (batches == 0) throw ValidationError("batches must be at least 1");
  if (partition == Partitioning::idpa && batches >= iterations) {
    throw ValidationError("IDPA needs batches < iterations (got batches=" + std::to_string(batches) +
                          ", iterations=" + std::to_string(iterations) + ")");
  }
  if (batches > 65535) throw ValidationError("batches must fit in 16 bits");
  if (!slowdown.empty() && slowdown.size() != workers) {
    throw ValidationError("slowdown needs one factor per worker");
  }
  for (double s : slowdown) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("slowdown factors must be positive");
  }
  if (!frequency.empty() && frequency.size() != workers) {
    throw ValidationError("frequency needs one value per worker");
  }
  for (double f : frequency) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ValidationError("frequencies must be positive");
  }
  if (pool_size == 0) throw ValidationError("pool_size must be at least 1");
  if (!(unit_cost >= 0.0) || !std::isfinite(unit_cost)) throw ValidationError("unit_cost must be nonnegative");
  if (!(seconds_per_mac > 0.0)) throw ValidationError("seconds_per_mac must be positive");
  if (validation_cap == 0) throw ValidationError("validation_cap must be at least 1");
  if (external_workers && transport != TransportKind::socket) {
    throw ValidationError("external workers need the socket transport");
  }
}

double ClusterConfig::slowdown_of(std::size_t worker) const {
  return slowdown.empty() ? 1.0 : slowdown.at(worker);
}

double ClusterConfig::frequency_of(std::size_t worker) const {
  return frequency.empty() ? 1.0 : frequency.at(worker);
}

std::size_t ClusterConfig::total_iterations(std::size_t samples) const {
  if (partition == Partitioning::udpa) return iterations;
  return partition::remaining_iterations(iterations, batches, samples).total;
}

double workload_balance(std::span<const double> t) {
  if (t.empty()) throw ValidationError("workload_balance: no durations");
  double sum = 0.0;
  double hi = 0.0;
  for (double v : t) {
    if (!(v > 0.0)) throw ValidationError("workload_balance: durations must be positive");
    sum += v;
    hi = std::max(hi, v);
  }
  return sum / static_cast<double>(t.size()) / hi;
}

const std::vector<std::vector<double>>& measure_iteration_times(const RunReport& run) {
  if (run.iteration_times.size() != run.iterations) {
    throw ValidationError("run has " + std::to_string(run.iteration_times.size()) + " of " +
                          std::to_string(run.iterations) + " iteration reports");
  }
  for (std::size_t i = 0; i < run.iteration_times.size(); ++i) {
    if (run.iteration_times[i].size() != run.config.workers) {
      throw ValidationError("iteration " + std::to_string(i + 1) + " is missing worker reports");
    }
  }
  return run.iteration_times;
}

}  // namespace bpt::cluster
