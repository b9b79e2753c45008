#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace bpt::partition {

/// Half-open range of positions in the shuffled sample order.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const SampleRange&) const = default;
};

struct WorkerProfile {
  std::size_t id = 0;
  double frequency = 1.0;
  /// Cumulative measured compute time and samples processed.
  double measured_time = 0.0;
  std::size_t samples = 0;
  /// Mean per-sample time, or nullopt before the first measurement.
  std::optional<double> mean_time() const;
};

/// alloc[a][j] = samples of worker j in batch a (0-based a), ranges[a][j] the
/// matching positions in the shuffled order.
struct PartitionPlan {
  std::size_t total = 0;
  std::size_t workers = 0;
  std::size_t batches = 0;
  std::vector<std::vector<std::size_t>> alloc;
  std::vector<std::vector<SampleRange>> ranges;

  std::size_t batch_size() const { return batches == 0 ? 0 : total / batches; }
  /// Planned batches so far.
  std::size_t planned() const { return alloc.size(); }
  std::vector<std::size_t> cumulative() const;
};

std::vector<std::size_t> initial_allocation(std::size_t total, std::size_t batches,
                                            std::size_t workers, std::span<const double> frequency);

/// T_a = floor(N/A) * a * mean(t) / m
double predict_iteration_time(std::size_t total, std::size_t batches, std::size_t a,
                              std::size_t workers, std::span<const double> mean_time);

/// Finish time at which all workers together have processed floor(N/A) * a
/// samples when each runs at its own rate: floor(N/A) * a / sum(1 / t_j).
double predict_equal_finish_time(std::size_t total, std::size_t batches, std::size_t a,
                                 std::span<const double> mean_time);

/// Increment for batch a >= 2 from a predicted time T_a. Targets for workers
/// j < m are floor(T_a / t_j); increments over `prior` (cumulative samples)
/// are clamped at 0 and the last worker gets the rest of `batch_size`. A
/// negative rest is clamped to 0 and the batch is instead handed out to the
/// fastest workers first, each up to its increment.
std::vector<std::size_t> batch_allocation(std::size_t batch_size, double predicted_time,
                                          std::span<const double> mean_time,
                                          std::span<const std::size_t> prior);

enum class Predictor { equal_finish, mean_rate };

/// Incremental planner: batch 1 from frequencies, later batches from the
/// measured compute times of the batches before.
class IdpaPlanner {
 public:
  IdpaPlanner(std::size_t total, std::size_t batches, std::vector<double> frequency,
              Predictor predictor = Predictor::equal_finish);

  const PartitionPlan& plan() const { return plan_; }
  const std::vector<WorkerProfile>& profiles() const { return profiles_; }
  bool finished() const { return plan_.planned() == plan_.batches; }

  /// Records measured compute time for the samples of batch `a` (1-based).
  void record(std::size_t a, std::span<const double> seconds);
  /// Same, for iterations that processed `processed[j]` samples (e.g. all
  /// samples allocated so far rather than only those of batch a).
  void record(std::size_t a, std::span<const double> seconds,
              std::span<const std::size_t> processed);

  /// Plans batch a (1-based, in order). For a >= 2, batch a - 1 must have
  /// been recorded. Returns the allocation of the new batch.
  const std::vector<std::size_t>& plan_next();

  /// Per-sample time estimates used to plan the next batch.
  std::vector<double> estimated_mean_times() const;

 private:
  PartitionPlan plan_;
  std::vector<WorkerProfile> profiles_;
  std::vector<bool> recorded_;
  Predictor predictor_;
};

/// Plans batch a (1-based) with a fresh planner state; `measured[a'][j]` are
/// the compute times of batches 1..a-1.
PartitionPlan idpa_plan(std::size_t total, std::size_t batches, std::span<const double> frequency,
                        const std::vector<std::vector<double>>& measured,
                        Predictor predictor = Predictor::equal_finish);

struct IterationBudget {
  std::size_t nominal = 0;
  std::size_t batches = 0;
  std::size_t remaining = 0;
  std::size_t total = 0;
};

/// delta K = floor(K - (A+1)/2), K' = A + delta K. Requires 1 <= A < K and N >= 1.
IterationBudget remaining_iterations(std::size_t k, std::size_t batches, std::size_t total);

std::vector<std::size_t> udpa_allocation(std::size_t total, std::size_t workers);
/// UDPA as a one-batch plan.
PartitionPlan udpa_plan(std::size_t total, std::size_t workers);

/// CSV: batch,worker,n_j_a,range_start,range_end (batch and worker 1-based)
void write_plan_csv(std::ostream& out, const PartitionPlan& plan);

}  // namespace bpt::partition
