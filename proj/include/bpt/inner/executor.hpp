#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "bpt/inner/dag.hpp"

namespace bpt::inner {

struct RunOptions {
  /// Hold back every task until all tasks of lower levels have finished.
  bool level_barrier = true;
  bool record_timeline = false;
};

/// Persistent pool of executors that runs task DAGs. Ready tasks are taken
/// by priority, lowest id first on ties; a task becomes ready when its
/// dependency counter reaches zero. A pool of size 1 runs tasks on the
/// calling thread. If a task throws, no further tasks are started and the
/// first exception is rethrown from run() once the running ones finish.
class ExecutorPool {
 public:
  explicit ExecutorPool(std::size_t size);
  ~ExecutorPool();
  ExecutorPool(const ExecutorPool&) = delete;
  ExecutorPool& operator=(const ExecutorPool&) = delete;

  std::size_t size() const { return size_; }

  /// Returns per-task timeline entries when options.record_timeline is set.
  std::vector<TimelineEntry> run(const TaskDag& dag,
                                 const std::function<void(const TaskNode&)>& work,
                                 const RunOptions& options = {});

  /// Runs work(0..count-1) as independent tasks.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& work);

 private:
  struct Job;
  void worker_loop(std::size_t index);
  void drain(Job& job, std::size_t executor, std::unique_lock<std::mutex>& lock);

  std::size_t size_;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  Job* job_ = nullptr;
  std::size_t generation_ = 0;
  bool stopping_ = false;
};

}  // namespace bpt::inner
