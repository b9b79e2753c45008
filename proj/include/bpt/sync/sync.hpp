#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpt/nn/dataset.hpp"
#include "bpt/nn/network.hpp"
#include "bpt/nn/parameters.hpp"

namespace bpt::sync {

struct VersionedWeights {
  std::uint64_t version = 0;
  std::shared_ptr<const nn::ParameterSet> params;
};

struct UpdateMessage {
  std::size_t worker = 0;
  std::uint64_t base_version = 0;
  nn::ParameterSet params;
  double accuracy = 0.0;
  std::uint64_t iteration = 0;
};

/// W = sum_j W_j * Q_j / sum Q. All-zero accuracies average uniformly.
nn::ParameterSet sgwu_update(std::span<const nn::ParameterSet> locals,
                             std::span<const double> accuracy);

/// sum_i sum_j (max_j' t[i][j'] - t[i][j]) over a K x m matrix.
double sync_wait_time(const std::vector<std::vector<double>>& t);

/// gamma = e^(k/latest) / sum over peers e^(k'/latest); 1 when latest = 0 or
/// there are no peers.
double attenuation_factor(std::uint64_t base, std::uint64_t latest,
                          std::span<const std::uint64_t> peers);

/// W^(i-1) + gamma * Q * (W_j - W^k), element-wise.
nn::ParameterSet agwu_step(const nn::ParameterSet& latest, const nn::ParameterSet& local,
                           const nn::ParameterSet& base, double gamma, double accuracy);

/// 2 * c_w * m * K
double comm_cost(std::size_t workers, std::size_t iterations, double unit_cost = 1.0);

/// Ring of the most recent global versions plus each worker's last base version.
class VersionStore {
 public:
  VersionStore(std::size_t capacity, nn::ParameterSet initial);

  std::size_t capacity() const { return capacity_; }
  VersionedWeights latest() const { return ring_.back(); }
  std::uint64_t latest_version() const { return ring_.back().version; }
  /// nullptr once the version has left the ring (or never existed).
  std::shared_ptr<const nn::ParameterSet> get(std::uint64_t version) const;
  std::uint64_t push(nn::ParameterSet params);

  void set_base(std::size_t worker, std::uint64_t version) { base_[worker] = version; }
  /// Last-known base versions of all workers other than `worker` that have submitted.
  std::vector<std::uint64_t> peers(std::size_t worker) const;

 private:
  std::size_t capacity_;
  std::vector<VersionedWeights> ring_;
  std::map<std::size_t, std::uint64_t> base_;
};

struct UpdateRecord {
  bool accepted = false;
  std::uint64_t version = 0;
  std::size_t worker = 0;
  std::uint64_t base_version = 0;
  double gamma = 0.0;
  double accuracy = 0.0;
  double delta_norm = 0.0;
  double wall_time = 0.0;
};

/// {"record":"update","version":..,"worker":..,"base_version":..,"gamma":..,"Q":..,"delta_norm":..,"wall_time":..}
std::string to_json_line(const UpdateRecord& record);

/// Global weight state behind a single-writer lock. latest() may be called
/// from any thread and always sees a complete version.
class ParameterServer {
 public:
  ParameterServer(nn::ParameterSet initial, std::size_t capacity);

  VersionedWeights latest() const;

  /// AGWU step W^i = W^(i-1) + gamma Q (W_j - W^k). Rejects (accepted =
  /// false, global unchanged) when W^k is no longer stored.
  UpdateRecord submit(const UpdateMessage& msg);

  /// SGWU step: replaces the global set by the accuracy-weighted average of
  /// all locals and advances the version.
  UpdateRecord merge(std::span<const nn::ParameterSet> locals, std::span<const double> accuracy);

  std::uint64_t accepted() const;
  std::uint64_t rejected() const;

 private:
  mutable std::mutex mutex_;
  VersionStore store_;
  std::uint64_t accepted_ = 0;
  std::uint64_t rejected_ = 0;
};

/// Positions of the shared validation slice: min(1000, max(1, N/10)) indices
/// drawn without replacement from a seeded permutation of [0, N).
std::vector<std::size_t> validation_slice(std::size_t dataset_size, std::uint64_t seed,
                                          std::size_t cap = 1000);

/// Accuracy of `params` on the validation samples.
double evaluate_local_accuracy(const nn::Network& net, const nn::ParameterSet& params,
                               std::span<const nn::Sample* const> validation);

}  // namespace bpt::sync
