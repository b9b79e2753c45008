#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "bpt/inner/dag.hpp"
#include "bpt/inner/executor.hpp"
#include "bpt/nn/ops.hpp"

namespace bpt::inner {

/// Runs forward passes and SGD steps of one network through the task DAGs
/// on an executor pool. Results are bit-identical to the sequential passes.
class InnerTrainer {
 public:
  InnerTrainer(const nn::Network& net, std::size_t threads, const DagOptions& options = {},
               const RunOptions& run = {});

  const nn::Network& network() const { return net_; }
  std::size_t threads() const { return pool_.size(); }
  const TaskDag& forward_dag() const { return forward_; }
  const TaskDag& backward_dag() const { return backward_; }

  /// Forward pass into the trainer's trace; returns it.
  const nn::ForwardTrace& forward(std::span<const double> params, const nn::Tensor3& x);

  /// Forward, backward, gradients and in-place update for one sample;
  /// returns the loss before the update.
  double train_sample(std::span<double> params, const nn::Tensor3& x, std::span<const double> target);
  /// Deltas of the most recent train_sample, computed with the pre-update weights.
  const std::vector<nn::Tensor3>& last_deltas() const { return deltas_; }

  /// Timelines of the most recent forward and backward runs (only when recording).
  const std::vector<TimelineEntry>& last_forward_timeline() const { return forward_timeline_; }
  const std::vector<TimelineEntry>& last_backward_timeline() const { return backward_timeline_; }

 private:
  nn::Network net_;
  TaskDag forward_;
  TaskDag backward_;
  RunOptions run_;
  ExecutorPool pool_;
  nn::ForwardTrace trace_;
  std::vector<nn::Tensor3> deltas_;
  std::vector<double> grads_;
  std::vector<TimelineEntry> forward_timeline_;
  std::vector<TimelineEntry> backward_timeline_;
};

}  // namespace bpt::inner
