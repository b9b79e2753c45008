#include "bpt/inner/executor.hpp"

#include <chrono>
#include <queue>

#include "bpt/common/error.hpp"

namespace bpt::inner {

namespace {

struct ReadyOrder {
  const TaskDag* dag;
  // std::priority_queue pops the largest element: highest priority, then lowest id.
  bool operator()(std::size_t a, std::size_t b) const {
    const auto& x = dag->nodes[a];
    const auto& y = dag->nodes[b];
    if (x.priority != y.priority) return x.priority < y.priority;
    return a > b;
  }
};

}  // namespace

struct ExecutorPool::Job {
  const TaskDag* dag = nullptr;
  const std::function<void(const TaskNode&)>* work = nullptr;
  RunOptions options;
  std::vector<std::vector<std::size_t>> successors;
  std::vector<std::size_t> pending;
  std::priority_queue<std::size_t, std::vector<std::size_t>, ReadyOrder> ready;
  std::vector<std::vector<std::size_t>> held;  // per level, waiting on the barrier
  std::vector<std::size_t> level_left;
  std::size_t current_level = 0;
  std::size_t finished = 0;
  std::size_t running = 0;
  std::size_t attached = 0;
  std::exception_ptr error;
  std::vector<TimelineEntry> timeline;
  std::chrono::steady_clock::time_point t0;

  explicit Job(const TaskDag& d) : dag(&d), ready(ReadyOrder{&d}) {}

  bool complete() const { return running == 0 && (error || finished == dag->size()); }

  void make_ready(std::size_t id) {
    const std::size_t level = dag->nodes[id].level;
    if (options.level_barrier && level > current_level) {
      held[level].push_back(id);
    } else {
      ready.push(id);
    }
  }

  void finish(std::size_t id) {
    ++finished;
    for (std::size_t s : successors[id]) {
      if (--pending[s] == 0) make_ready(s);
    }
    if (options.level_barrier) {
      --level_left[dag->nodes[id].level];
      while (current_level < level_left.size() && level_left[current_level] == 0) {
        ++current_level;
        if (current_level < held.size()) {
          for (std::size_t h : held[current_level]) ready.push(h);
          held[current_level].clear();
        }
      }
    }
  }
};

ExecutorPool::ExecutorPool(std::size_t size) : size_(size) {
  if (size == 0) throw ValidationError("executor pool needs at least one executor");
  if (size > 1) {
    threads_.reserve(size);
    for (std::size_t i = 0; i < size; ++i) threads_.emplace_back([this, i] { worker_loop(i); });
  }
}

ExecutorPool::~ExecutorPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void ExecutorPool::drain(Job& job, std::size_t executor, std::unique_lock<std::mutex>& lock) {
  while (true) {
    if (job.complete()) return;
    if (job.error || job.ready.empty()) {
      if (threads_.empty()) {
        // Inline mode cannot wait for anyone else.
        if (job.ready.empty() && !job.error) {
          throw RuntimeFailure("task graph stalled with unfinished tasks");
        }
        return;
      }
      done_.wait(lock);
      continue;
    }
    const std::size_t id = job.ready.top();
    job.ready.pop();
    ++job.running;
    lock.unlock();
    const auto started = std::chrono::steady_clock::now();
    std::exception_ptr failure;
    try {
      (*job.work)(job.dag->nodes[id]);
    } catch (...) {
      failure = std::current_exception();
    }
    const auto ended = std::chrono::steady_clock::now();
    lock.lock();
    --job.running;
    if (failure) {
      if (!job.error) job.error = failure;
    } else {
      job.finish(id);
    }
    if (job.options.record_timeline) {
      using std::chrono::duration_cast;
      using std::chrono::nanoseconds;
      job.timeline[id] = {executor, duration_cast<nanoseconds>(started - job.t0).count(),
                          duration_cast<nanoseconds>(ended - job.t0).count()};
    }
    done_.notify_all();
  }
}

void ExecutorPool::worker_loop(std::size_t index) {
  std::unique_lock lock(mutex_);
  std::size_t seen = 0;
  while (true) {
    wake_.wait(lock, [&] { return stopping_ || (job_ && generation_ != seen); });
    if (stopping_) return;
    seen = generation_;
    Job& job = *job_;
    ++job.attached;
    drain(job, index, lock);
    --job.attached;
    done_.notify_all();
  }
}

std::vector<TimelineEntry> ExecutorPool::run(const TaskDag& dag,
                                             const std::function<void(const TaskNode&)>& work,
                                             const RunOptions& options) {
  Job job(dag);
  job.work = &work;
  job.options = options;
  job.successors = dag.successors();
  job.pending.resize(dag.size());
  job.held.assign(dag.max_level + 1, {});
  job.level_left.assign(dag.max_level + 1, 0);
  if (options.record_timeline) job.timeline.assign(dag.size(), {});
  for (const auto& n : dag.nodes) {
    if (n.level > dag.max_level) throw ValidationError("task levels are not assigned");
    job.pending[n.id] = n.deps.size();
    ++job.level_left[n.level];
  }
  for (const auto& n : dag.nodes) {
    if (n.deps.empty()) job.make_ready(n.id);
  }
  job.t0 = std::chrono::steady_clock::now();

  std::unique_lock lock(mutex_);
  if (threads_.empty()) {
    drain(job, 0, lock);
  } else {
    job_ = &job;
    ++generation_;
    wake_.notify_all();
    done_.wait(lock, [&] {
      if (!job.complete()) return false;
      if (job.error) return job.attached == 0;
      return true;
    });
    // Every worker must leave drain() before the job goes out of scope.
    done_.wait(lock, [&] { return job.attached == 0; });
    job_ = nullptr;
  }
  if (job.error) std::rethrow_exception(job.error);
  if (job.finished != dag.size()) throw RuntimeFailure("task graph did not run to completion");
  return std::move(job.timeline);
}

void ExecutorPool::parallel_for(std::size_t count, const std::function<void(std::size_t)>& work) {
  TaskDag dag;
  dag.nodes.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    dag.nodes[i].id = i;
    dag.nodes[i].priority = 1;
  }
  run(dag, [&](const TaskNode& n) { work(n.id); }, RunOptions{false, false});
}

}  // namespace bpt::inner
