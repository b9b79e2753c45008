#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <thread>

#include "json.hpp"

#include "bpt/cluster/runtime.hpp"
#include "bpt/common/error.hpp"
#include "bpt/nn/evaluate.hpp"

namespace bpt::cluster {

namespace {

enum class State { waiting, computing, submitted, done };

struct WorkerState {
  State state = State::waiting;
  std::size_t next = 1;  // iteration to run next (1-based)
  bool fresh = true;     // holds the global version for `next`
  std::size_t batches = 0;
  std::size_t samples = 0;
  double expected = 0.0;
  double finish = 0.0;
  double last_end = 0.0;
  std::optional<IterTime> time;
  std::optional<LocalSubmit> submit;
  std::uint64_t pending_bytes = 0;
};

double balance_score(std::span<const double> t) {
  double sum = 0.0;
  double hi = 0.0;
  for (double v : t) {
    sum += v;
    hi = std::max(hi, v);
  }
  return hi > 0.0 ? sum / static_cast<double>(t.size()) / hi : 1.0;
}

// Main server and parameter server, co-located on the calling thread.
class Coordinator {
 public:
  Coordinator(const ClusterConfig& config, const nn::Network& net, std::size_t samples,
              std::span<const nn::Sample* const> eval, CoordinatorLinks& links)
      : config_(config),
        net_(net),
        eval_(eval),
        links_(links),
        m_(config.workers),
        total_(config.total_iterations(samples)),
        batches_(config.partition == Partitioning::idpa ? config.batches : 1),
        samples_(samples),
        server_(nn::init_parameters(net, config.seed), config.capacity()),
        ws_(m_),
        idle_(total_, std::vector<double>(m_, 0.0)),
        completions_(total_, 0),
        reported_(batches_, 0),
        report_times_(batches_, std::vector<double>(m_, 0.0)),
        report_samples_(batches_, std::vector<std::size_t>(m_, 0)),
        locals_(m_),
        accuracy_(m_, 0.0) {
    report_.config = config;
    report_.iterations = total_;
    report_.iteration_times.assign(total_, std::vector<double>(m_, 0.0));
    report_.compute_time.assign(m_, 0.0);
    if (config.partition == Partitioning::idpa) {
      std::vector<double> mu;
      for (std::size_t j = 0; j < m_; ++j) mu.push_back(config.frequency_of(j));
      planner_.emplace(samples, config.batches, mu, config.predictor);
    }
  }

  RunReport run() {
    clock_start_ = std::chrono::steady_clock::now();
    try {
      loop();
    } catch (...) {
      stop_all();
      throw;
    }
    stop_all();
    finish_report();
    return std::move(report_);
  }

 private:
  double now_wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start_).count();
  }

  bool simulated() const { return config_.time == TimeMode::simulated; }

  void send(std::size_t j, const Message& msg) {
    bytes_ += encode_message(msg).size();
    links_.send(j, msg);
  }

  void stop_all() {
    if (stopped_) return;
    stopped_ = true;
    for (std::size_t j = 0; j < m_; ++j) {
      try {
        send(j, Shutdown{});
      } catch (const std::exception&) {
        // link already gone
      }
    }
  }

  void send_allocation(const std::vector<std::size_t>& alloc,
                       const std::vector<partition::SampleRange>& ranges, std::size_t batch) {
    for (std::size_t j = 0; j < m_; ++j) {
      AllocBatch msg{static_cast<std::uint16_t>(batch), static_cast<std::uint32_t>(alloc[j]), {}};
      if (ranges[j].size() > 0) msg.ranges.push_back(ranges[j]);
      send(j, msg);
      ws_[j].batches += 1;
      ws_[j].samples += alloc[j];
    }
  }

  void send_weights(std::size_t j) {
    const auto latest = server_.latest();
    send(j, GlobalWeights{static_cast<std::uint32_t>(latest.version), latest.params->values});
    ++transfers_;
    ws_[j].fresh = true;
  }

  bool ready(std::size_t j) const {
    const auto& w = ws_[j];
    return w.state == State::waiting && w.next <= total_ && w.fresh &&
           w.batches >= std::min(w.next, batches_);
  }

  void start_ready(double now) {
    for (std::size_t j = 0; j < m_; ++j) {
      auto& w = ws_[j];
      if (w.state == State::waiting && w.next > total_ && w.fresh) {
        idle_[total_ - 1][j] += now - w.last_end;
        w.state = State::done;
        ++done_;
        continue;
      }
      if (!ready(j)) continue;
      if (w.next > 1) idle_[w.next - 2][j] += now - w.last_end;
      w.state = State::computing;
      w.expected = simulated_seconds(net_, w.samples, config_.slowdown_of(j), config_.seconds_per_mac);
      w.finish = now + w.expected;
    }
  }

  void abort_worker(std::size_t j, const std::string& why) {
    throw RuntimeFailure("worker " + std::to_string(j) + " failed; run aborted: " + why);
  }

  // Files an inbound frame; returns the worker whose submission is complete.
  std::optional<std::size_t> absorb(Inbound in) {
    const std::size_t j = in.worker;
    if (j >= m_) throw ValidationError("frame from unknown worker " + std::to_string(j));
    if (!in.frame) abort_worker(j, in.error.empty() ? "link closed" : in.error);
    Message msg = decode_message(*in.frame);
    auto& w = ws_[j];
    if (auto* reg = std::get_if<Register>(&msg)) {
      if (reg->worker != j) throw ValidationError("worker registered under another id");
      bytes_ += in.frame->size();
      return std::nullopt;
    }
    if (w.state != State::computing) {
      throw ValidationError("worker " + std::to_string(j) + " reported while not computing");
    }
    if (auto* t = std::get_if<IterTime>(&msg)) {
      if (t->worker != j || t->iteration != w.next) {
        throw ValidationError("iteration report out of sequence from worker " + std::to_string(j));
      }
      w.time = *t;
      w.pending_bytes += in.frame->size();
      return std::nullopt;
    }
    if (auto* s = std::get_if<LocalSubmit>(&msg)) {
      if (!w.time) throw ValidationError("submission before iteration report from worker " + std::to_string(j));
      if (s->worker != j) throw ValidationError("submission under another worker id");
      if (s->values.size() != net_.parameter_count()) {
        throw ValidationError("submitted parameters do not match the network");
      }
      if (simulated() && s->seconds != w.expected) {
        throw ValidationError("worker " + std::to_string(j) + " reported a time off the simulated clock");
      }
      w.submit = std::move(*s);
      w.pending_bytes += in.frame->size();
      w.state = State::submitted;
      if (!simulated()) w.finish = now_wall();
      return j;
    }
    throw ValidationError("unexpected message type at the coordinator");
  }

  void loop() {
    if (planner_) {
      const auto& alloc = planner_->plan_next();
      send_allocation(alloc, planner_->plan().ranges.back(), 1);
    } else {
      report_.plan = partition::udpa_plan(samples_, m_);
      send_allocation(report_.plan.alloc[0], report_.plan.ranges[0], 1);
    }
    start_ready(0.0);
    while (done_ < m_) {
      if (!simulated()) {
        if (auto j = absorb(links_.receive())) process(*j, ws_[*j].finish);
        continue;
      }
      // Earliest submission on the simulated clock, ties by worker id; it
      // may only be handled once no computing worker could finish before it.
      std::optional<std::size_t> best;
      for (std::size_t j = 0; j < m_; ++j) {
        if (ws_[j].state == State::submitted && (!best || ws_[j].finish < ws_[*best].finish)) best = j;
      }
      bool blocked = false;
      bool computing = false;
      for (std::size_t j = 0; j < m_; ++j) {
        if (ws_[j].state != State::computing) continue;
        computing = true;
        if (best && (ws_[j].finish < ws_[*best].finish || (ws_[j].finish == ws_[*best].finish && j < *best))) {
          blocked = true;
        }
      }
      if (best && !blocked) {
        process(*best, ws_[*best].finish);
        continue;
      }
      if (!computing) throw RuntimeFailure("coordinator stalled with no worker computing");
      absorb(links_.receive());
    }
  }

  void process(std::size_t j, double now) {
    auto& w = ws_[j];
    const std::size_t i = w.next;
    LocalSubmit s = std::move(*w.submit);
    w.submit.reset();
    w.time.reset();
    const double t = s.seconds;
    report_.iteration_times[i - 1][j] = t;
    report_.compute_time[j] += t;
    bytes_ += w.pending_bytes;
    w.pending_bytes = 0;
    ++transfers_;
    w.last_end = now;
    w.next = i + 1;
    w.fresh = false;
    w.state = State::waiting;
    last_event_ = std::max(last_event_, now);

    // Main server: the next IDPA batch once every worker reported this one.
    if (planner_ && i < batches_) {
      report_times_[i - 1][j] = t;
      report_samples_[i - 1][j] = w.samples;
      if (++reported_[i - 1] == m_) {
        planner_->record(i, report_times_[i - 1], report_samples_[i - 1]);
        const auto& alloc = planner_->plan_next();
        send_allocation(alloc, planner_->plan().ranges.back(), i + 1);
      }
    }

    // Parameter server.
    nn::ParameterSet local{net_.descriptor(), std::move(s.values)};
    if (config_.strategy == Strategy::sgwu) {
      locals_[j] = std::move(local);
      accuracy_[j] = s.accuracy;
      if (++buffered_ == m_) {
        auto rec = server_.merge(locals_, accuracy_);
        rec.wall_time = now;
        report_.updates.push_back(rec);
        buffered_ = 0;
        for (std::size_t k = 0; k < m_; ++k) send_weights(k);
      }
    } else {
      sync::UpdateMessage msg{j, s.base_version, std::move(local), s.accuracy, i};
      auto rec = server_.submit(msg);
      rec.wall_time = now;
      report_.updates.push_back(rec);
      send_weights(j);  // a rejected submission gets the latest version to resync
    }

    start_ready(now);
    if (++completions_[i - 1] == m_) complete_epoch(i, now);
  }

  void complete_epoch(std::size_t i, double now) {
    MetricsRecord rec;
    rec.epoch = i;
    rec.makespan = now;
    for (double v : idle_[i - 1]) rec.sync_wait += v;
    rec.transfers = transfers_;
    rec.comm_units = config_.unit_cost * static_cast<double>(transfers_);
    rec.comm_bytes = bytes_;
    rec.balance = balance_score(report_.iteration_times[i - 1]);
    const auto latest = server_.latest();
    const auto e = nn::evaluate(net_, *latest.params, eval_, net_.output_size());
    rec.accuracy = e.accuracy;
    rec.auc = e.auc;
    rec.version = latest.version;
    rec.updates = report_.updates.size();
    report_.epochs.push_back(rec);
  }

  void finish_report() {
    if (planner_) report_.plan = planner_->plan();
    const auto latest = server_.latest();
    report_.final_params = *latest.params;
    report_.versions = latest.version;
    report_.rejected = server_.rejected();
    report_.transfers = transfers_;
    report_.comm_units = config_.unit_cost * static_cast<double>(transfers_);
    report_.comm_bytes = bytes_;
    report_.makespan = last_event_;
    for (const auto& e : report_.epochs) report_.sync_wait += e.sync_wait;
    report_.balance = balance_score(report_.compute_time);
  }

  const ClusterConfig& config_;
  const nn::Network& net_;
  std::span<const nn::Sample* const> eval_;
  CoordinatorLinks& links_;
  std::size_t m_;
  std::size_t total_;
  std::size_t batches_;
  std::size_t samples_;
  sync::ParameterServer server_;
  std::optional<partition::IdpaPlanner> planner_;
  std::vector<WorkerState> ws_;
  std::vector<std::vector<double>> idle_;
  std::vector<std::size_t> completions_;
  std::vector<std::size_t> reported_;
  std::vector<std::vector<double>> report_times_;
  std::vector<std::vector<std::size_t>> report_samples_;
  std::vector<nn::ParameterSet> locals_;
  std::vector<double> accuracy_;
  std::size_t buffered_ = 0;
  std::size_t done_ = 0;
  std::uint64_t transfers_ = 0;
  std::uint64_t bytes_ = 0;
  double last_event_ = 0.0;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point clock_start_;
  RunReport report_;
};

}  // namespace

std::string to_json_line(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["record"] = "epoch";
  j["epoch"] = r.epoch;
  j["makespan"] = r.makespan;
  j["sync_wait"] = r.sync_wait;
  j["transfers"] = r.transfers;
  j["comm_units"] = r.comm_units;
  j["comm_bytes"] = r.comm_bytes;
  j["balance"] = r.balance;
  j["accuracy"] = r.accuracy;
  j["auc"] = r.auc;
  j["version"] = r.version;
  j["updates"] = r.updates;
  return j.dump();
}

RunReport run_training(const ClusterConfig& config, const nn::Network& net,
                       const nn::Dataset& train, const nn::Dataset* eval) {
  config.validate();
  if (train.size() < config.workers) {
    throw ValidationError("dataset has " + std::to_string(train.size()) + " samples for " +
                          std::to_string(config.workers) + " workers");
  }
  if (train.classes != 0 && train.classes != net.output_size()) {
    throw ValidationError("dataset has " + std::to_string(train.classes) +
                          " classes, network output has " + std::to_string(net.output_size()));
  }
  for (const auto& s : train.samples) {
    if (s.x.shape() != net.input_shape()) throw ShapeError("sample shape does not match the network input");
  }

  std::vector<const nn::Sample*> eval_samples;
  if (eval) {
    const std::size_t n = config.eval_limit ? std::min(config.eval_limit, eval->size()) : eval->size();
    for (std::size_t k = 0; k < n; ++k) eval_samples.push_back(&eval->samples[k]);
  } else {
    for (std::size_t idx : sync::validation_slice(train.size(), config.seed, config.validation_cap)) {
      eval_samples.push_back(&train.samples[idx]);
    }
  }

  const std::size_t m = config.workers;
  std::vector<std::thread> threads;
  std::vector<std::string> errors(m);
  auto spawn = [&](std::size_t j, std::unique_ptr<WorkerLink> link_in) {
    threads.emplace_back([&, j, link = std::move(link_in)]() mutable {
      try {
        run_worker(config, net, train, j, *link);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    });
  };
  auto join = [&] {
    for (auto& t : threads) t.join();
    threads.clear();
  };
  auto with_worker_errors = [&](const std::string& what) {
    std::string msg = what;
    for (std::size_t j = 0; j < m; ++j) {
      if (!errors[j].empty() && what.find(errors[j]) == std::string::npos) msg += "; " + errors[j];
    }
    return msg;
  };

  auto drive = [&](CoordinatorLinks& links) {
    RunReport report;
    try {
      Coordinator coordinator(config, net, train.size(), eval_samples, links);
      report = coordinator.run();
    } catch (const RuntimeFailure& e) {
      join();
      throw RuntimeFailure(with_worker_errors(e.what()));
    } catch (...) {
      join();
      throw;
    }
    join();
    return report;
  };

  if (config.transport == TransportKind::in_process) {
    InProcessHub hub(m);
    for (std::size_t j = 0; j < m; ++j) spawn(j, hub.connect(j));
    return drive(hub);
  }

  auto hub = std::make_unique<SocketHub>(m, config.address, config.port);
  ClusterConfig local = config;
  local.port = hub->port();
  if (!config.external_workers) {
    for (std::size_t j = 0; j < m; ++j) {
      threads.emplace_back([&, j] {
        try {
          auto link = connect_socket(local.address, local.port, local.connect_timeout);
          run_worker(local, net, train, j, *link);
        } catch (const std::exception& e) {
          errors[j] = e.what();
        }
      });
    }
  }
  try {
    hub->accept_all(config.connect_timeout);
  } catch (...) {
    // Workers that did connect are blocked waiting; closing the hub frees them.
    hub.reset();
    join();
    throw;
  }
  return drive(*hub);
}

}  // namespace bpt::cluster
