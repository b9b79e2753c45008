#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

#include "bpt/nn/network.hpp"

namespace bpt::inner {

enum class TaskKind { conv_tile, pool, dense, loss, delta, gradient, update };
std::string_view to_string(TaskKind kind);

enum class Phase { forward, backward };

/// One schedulable unit. `layer` and the half-open unit range [begin, end)
/// say which slice of the layer the task computes (output rows for conv and
/// pool layers, neurons for dense layers, filters or neurons for gradients).
struct TaskNode {
  std::size_t id = 0;
  TaskKind kind = TaskKind::conv_tile;
  std::size_t layer = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<std::size_t> deps;
  std::size_t level = 0;
  std::size_t priority = 0;
  double cost = 0.0;
};

struct TaskDag {
  Phase phase = Phase::forward;
  std::vector<TaskNode> nodes;
  std::size_t max_level = 0;

  std::size_t size() const { return nodes.size(); }
  /// Successor lists derived from the dependency lists.
  std::vector<std::vector<std::size_t>> successors() const;
};

struct DagOptions {
  /// Output rows per conv or pool tile.
  std::size_t rows_per_tile = 1;
  /// Neurons per dense tile and per dense gradient task.
  std::size_t dense_chunk = 32;
};

/// Forward: every tile depends on the previous-layer tiles inside its
/// receptive field (all of them after a dense layer). Backward: a loss node
/// produces the output deltas, each delta tile depends on the next-layer
/// delta tiles that reach it, gradient tasks depend on their layer's deltas
/// and the update of layer l waits for its gradients and for the deltas of
/// layer l-1 (which read the old weights). Levels and priorities are filled in.
TaskDag build_task_dag(const nn::Network& net, Phase phase, const DagOptions& options = {});

/// level = longest path from an entrance node; priority = max_level - level + 1.
/// Throws ValidationError on a cycle or a dangling dependency.
void assign_priorities(TaskDag& dag);

/// Static list schedule over `pool_size` simulated executors.
struct TaskAssignment {
  std::vector<std::size_t> executor;
  std::vector<std::vector<std::size_t>> queues;
  std::vector<double> start;
  std::vector<double> finish;
  std::vector<double> load;
  double makespan = 0.0;
};

/// Tasks are taken in descending priority (lowest id on ties); each goes to
/// the executor with the least accumulated cost and starts once both that
/// executor and all of its dependencies are done.
TaskAssignment schedule_tasks(const TaskDag& dag, std::size_t pool_size);

struct TimelineEntry {
  std::size_t executor = 0;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

std::vector<TimelineEntry> to_timeline(const TaskAssignment& assignment, double ns_per_cost = 1.0);

/// CSV: task_id,level,priority,executor,start_ns,end_ns
void write_timeline_csv(std::ostream& out, const TaskDag& dag,
                        const std::vector<TimelineEntry>& timeline);

}  // namespace bpt::inner
