#include "bpt/partition/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bpt/common/error.hpp"

namespace bpt::partition {

namespace {

void check_counts(std::size_t total, std::size_t batches, std::size_t workers) {
  if (workers == 0) throw ValidationError("need at least one worker");
  if (batches == 0) throw ValidationError("need at least one batch");
  if (batches > total) {
    throw ValidationError("more batches (" + std::to_string(batches) + ") than samples (" +
                          std::to_string(total) + ")");
  }
}

void check_times(std::span<const double> t) {
  for (double v : t) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("per-sample times must be positive");
  }
}

// Appends the ranges of one batch: consecutive positions in worker order.
void append_ranges(PartitionPlan& plan, std::size_t start, const std::vector<std::size_t>& alloc) {
  std::vector<SampleRange> r;
  r.reserve(alloc.size());
  std::size_t pos = start;
  for (std::size_t n : alloc) {
    r.push_back({pos, pos + n});
    pos += n;
  }
  plan.ranges.push_back(std::move(r));
  plan.alloc.push_back(alloc);
}

}  // namespace

std::optional<double> WorkerProfile::mean_time() const {
  if (samples == 0) return std::nullopt;
  return measured_time / static_cast<double>(samples);
}

std::vector<std::size_t> PartitionPlan::cumulative() const {
  std::vector<std::size_t> c(workers, 0);
  for (const auto& row : alloc)
    for (std::size_t j = 0; j < row.size(); ++j) c[j] += row[j];
  return c;
}

std::vector<std::size_t> initial_allocation(std::size_t total, std::size_t batches,
                                            std::size_t workers, std::span<const double> frequency) {
  check_counts(total, batches, workers);
  if (frequency.size() != workers) throw ValidationError("one frequency per worker required");
  for (double mu : frequency) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("frequencies must be positive");
  }
  const std::size_t b = total / batches;
  const double sum = std::accumulate(frequency.begin(), frequency.end(), 0.0);
  std::vector<std::size_t> n(workers, 0);
  std::size_t used = 0;
  for (std::size_t j = 0; j + 1 < workers; ++j) {
    n[j] = static_cast<std::size_t>(std::floor(static_cast<double>(b) * frequency[j] / sum));
    used += n[j];
  }
  n[workers - 1] = b - used;
  return n;
}

double predict_iteration_time(std::size_t total, std::size_t batches, std::size_t a,
                              std::size_t workers, std::span<const double> mean_time) {
  if (batches == 0 || workers == 0) throw ValidationError("need at least one batch and worker");
  if (mean_time.size() != workers) throw ValidationError("one measured time per worker required");
  if (a < 2) throw ValidationError("prediction starts at the second batch");
  check_times(mean_time);
  const double mean = std::accumulate(mean_time.begin(), mean_time.end(), 0.0) / double(workers);
  return static_cast<double>(total / batches) * static_cast<double>(a) * mean /
         static_cast<double>(workers);
}

double predict_equal_finish_time(std::size_t total, std::size_t batches, std::size_t a,
                                 std::span<const double> mean_time) {
  if (batches == 0 || mean_time.empty()) throw ValidationError("need at least one batch and worker");
  if (a < 2) throw ValidationError("prediction starts at the second batch");
  check_times(mean_time);
  double rate = 0.0;
  for (double t : mean_time) rate += 1.0 / t;
  return static_cast<double>(total / batches) * static_cast<double>(a) / rate;
}

std::vector<std::size_t> batch_allocation(std::size_t batch_size, double predicted_time,
                                          std::span<const double> mean_time,
                                          std::span<const std::size_t> prior) {
  const std::size_t m = mean_time.size();
  if (m == 0 || prior.size() != m) throw ValidationError("times and prior allocations must match");
  check_times(mean_time);
  if (!(predicted_time >= 0.0)) throw ValidationError("predicted time must be nonnegative");
  std::vector<std::size_t> inc(m, 0);
  std::size_t used = 0;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double target = std::floor(predicted_time / mean_time[j]);
    const double d = target - static_cast<double>(prior[j]);
    inc[j] = d > 0.0 ? static_cast<std::size_t>(d) : 0;
    used += inc[j];
  }
  if (used <= batch_size) {
    inc[m - 1] = batch_size - used;
    return inc;
  }
  std::vector<std::size_t> order(m - 1);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return mean_time[x] < mean_time[y]; });
  std::vector<std::size_t> out(m, 0);
  std::size_t left = batch_size;
  for (std::size_t j : order) {
    out[j] = std::min(inc[j], left);
    left -= out[j];
  }
  return out;
}

IdpaPlanner::IdpaPlanner(std::size_t total, std::size_t batches, std::vector<double> frequency,
                         Predictor predictor)
    : predictor_(predictor) {
  check_counts(total, batches, frequency.size());
  plan_.total = total;
  plan_.workers = frequency.size();
  plan_.batches = batches;
  for (std::size_t j = 0; j < frequency.size(); ++j) {
    if (!(frequency[j] > 0.0)) throw ValidationError("frequencies must be positive");
    profiles_.push_back({j, frequency[j], 0.0, 0});
  }
  recorded_.assign(batches, false);
}

void IdpaPlanner::record(std::size_t a, std::span<const double> seconds) {
  if (a == 0 || a > plan_.planned()) throw ValidationError("batch " + std::to_string(a) + " is not planned");
  record(a, seconds, plan_.alloc[a - 1]);
}

void IdpaPlanner::record(std::size_t a, std::span<const double> seconds,
                         std::span<const std::size_t> processed) {
  if (a == 0 || a > plan_.planned()) throw ValidationError("batch " + std::to_string(a) + " is not planned");
  if (recorded_[a - 1]) throw ValidationError("batch " + std::to_string(a) + " already recorded");
  if (seconds.size() != plan_.workers || processed.size() != plan_.workers) {
    throw ValidationError("one measured time per worker required");
  }
  for (std::size_t j = 0; j < plan_.workers; ++j) {
    if (!(seconds[j] >= 0.0) || !std::isfinite(seconds[j])) {
      throw ValidationError("measured times must be finite and nonnegative");
    }
    const std::size_t n = processed[j];
    if (n == 0) continue;
    profiles_[j].measured_time += seconds[j];
    profiles_[j].samples += n;
  }
  recorded_[a - 1] = true;
}

std::vector<double> IdpaPlanner::estimated_mean_times() const {
  // Workers without samples so far are estimated from their frequency,
  // assuming time * frequency is the same as for the measured workers.
  double scale = 0.0;
  std::size_t measured = 0;
  for (const auto& p : profiles_) {
    if (auto t = p.mean_time(); t && *t > 0.0) {
      scale += *t * p.frequency;
      ++measured;
    }
  }
  if (measured == 0) throw ValidationError("no measured compute times to plan from");
  scale /= static_cast<double>(measured);
  std::vector<double> t(profiles_.size());
  for (std::size_t j = 0; j < profiles_.size(); ++j) {
    const auto mt = profiles_[j].mean_time();
    t[j] = mt && *mt > 0.0 ? *mt : scale / profiles_[j].frequency;
  }
  return t;
}

const std::vector<std::size_t>& IdpaPlanner::plan_next() {
  if (finished()) throw ValidationError("all batches are already planned");
  const std::size_t a = plan_.planned() + 1;
  const std::size_t b = plan_.batch_size();
  std::vector<std::size_t> alloc;
  if (a == 1) {
    std::vector<double> mu;
    for (const auto& p : profiles_) mu.push_back(p.frequency);
    alloc = initial_allocation(plan_.total, plan_.batches, plan_.workers, mu);
  } else {
    if (!recorded_[a - 2]) {
      throw ValidationError("batch " + std::to_string(a - 1) + " has no measured times");
    }
    const auto t = estimated_mean_times();
    const double predicted =
        predictor_ == Predictor::mean_rate
            ? predict_iteration_time(plan_.total, plan_.batches, a, plan_.workers, t)
            : predict_equal_finish_time(plan_.total, plan_.batches, a, t);
    alloc = batch_allocation(b, predicted, t, plan_.cumulative());
  }
  if (a == plan_.batches) alloc.back() += plan_.total % plan_.batches;
  append_ranges(plan_, (a - 1) * b, alloc);
  return plan_.alloc.back();
}

PartitionPlan idpa_plan(std::size_t total, std::size_t batches, std::span<const double> frequency,
                        const std::vector<std::vector<double>>& measured, Predictor predictor) {
  IdpaPlanner planner(total, batches, std::vector<double>(frequency.begin(), frequency.end()),
                      predictor);
  planner.plan_next();
  for (std::size_t a = 1; a < batches && a <= measured.size(); ++a) {
    planner.record(a, measured[a - 1]);
    planner.plan_next();
  }
  return planner.plan();
}

IterationBudget remaining_iterations(std::size_t k, std::size_t batches, std::size_t total) {
  if (total == 0) throw ValidationError("need at least one sample");
  if (batches == 0 || batches >= k) {
    throw ValidationError("batch count A must satisfy 1 <= A < K (A=" + std::to_string(batches) +
                          ", K=" + std::to_string(k) + ")");
  }
  IterationBudget b;
  b.nominal = k;
  b.batches = batches;
  // floor(K - (A+1)/2) in integers.
  b.remaining = k - (batches + 2) / 2;
  b.total = batches + b.remaining;
  return b;
}

std::vector<std::size_t> udpa_allocation(std::size_t total, std::size_t workers) {
  if (workers == 0) throw ValidationError("need at least one worker");
  std::vector<std::size_t> n(workers, total / workers);
  n.back() += total % workers;
  return n;
}

PartitionPlan udpa_plan(std::size_t total, std::size_t workers) {
  PartitionPlan plan;
  plan.total = total;
  plan.workers = workers;
  plan.batches = 1;
  append_ranges(plan, 0, udpa_allocation(total, workers));
  return plan;
}

void write_plan_csv(std::ostream& out, const PartitionPlan& plan) {
  out << "batch,worker,n_j_a,range_start,range_end\n";
  for (std::size_t a = 0; a < plan.alloc.size(); ++a) {
    for (std::size_t j = 0; j < plan.workers; ++j) {
      out << a + 1 << ',' << j + 1 << ',' << plan.alloc[a][j] << ',' << plan.ranges[a][j].begin
          << ',' << plan.ranges[a][j].end << '\n';
    }
  }
}

}  // namespace bpt::partition
