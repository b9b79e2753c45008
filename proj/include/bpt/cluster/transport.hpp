#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bpt/cluster/wire.hpp"

namespace bpt::cluster {

template <typename T>
class BlockingQueue {
 public:
  void push(T value) {
    {
      std::lock_guard lock(mutex_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  /// Blocks until an item is available; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

/// A frame arriving at the coordinator. `frame` is empty when the worker's
/// link closed; `error` then carries whatever the link knows about why.
struct Inbound {
  std::size_t worker = 0;
  std::optional<std::vector<std::uint8_t>> frame;
  std::string error;
};

/// Worker end of a link. receive() blocks; it throws RuntimeFailure when
/// the link is gone.
class WorkerLink {
 public:
  virtual ~WorkerLink() = default;
  virtual void send(const Message& msg) = 0;
  virtual Message receive() = 0;
  /// Reports a fatal worker error and closes the link.
  virtual void fail(const std::string& reason) = 0;
  virtual void close() = 0;
};

/// Coordinator end of all m links.
class CoordinatorLinks {
 public:
  virtual ~CoordinatorLinks() = default;
  virtual std::size_t workers() const = 0;
  virtual void send(std::size_t worker, const Message& msg) = 0;
  /// Next inbound frame from any worker.
  virtual Inbound receive() = 0;
  /// Frame bytes sent and received so far.
  std::uint64_t bytes_sent() const { return sent_; }
  std::uint64_t bytes_received() const { return received_; }

 protected:
  std::uint64_t sent_ = 0;
  std::uint64_t received_ = 0;
};

/// Queues of encoded frames between threads of one process.
class InProcessHub : public CoordinatorLinks {
 public:
  explicit InProcessHub(std::size_t workers);
  ~InProcessHub() override;

  std::size_t workers() const override { return down_.size(); }
  void send(std::size_t worker, const Message& msg) override;
  Inbound receive() override;

  /// Link for worker j; may be called once per worker.
  std::unique_ptr<WorkerLink> connect(std::size_t worker);

 private:
  class Link;
  std::vector<std::unique_ptr<BlockingQueue<std::vector<std::uint8_t>>>> down_;
  BlockingQueue<Inbound> up_;
  std::vector<bool> connected_;
};

/// TCP listener on a loopback address. Each connection identifies itself with
/// a Register frame; a reader thread per connection feeds the inbox.
class SocketHub : public CoordinatorLinks {
 public:
  /// port 0 picks a free port.
  SocketHub(std::size_t workers, const std::string& address, std::uint16_t port);
  ~SocketHub() override;

  std::uint16_t port() const { return port_; }
  /// Blocks until all m workers have connected and registered, or the
  /// timeout (seconds) expires.
  void accept_all(double timeout_seconds);

  std::size_t workers() const override { return fds_.size(); }
  void send(std::size_t worker, const Message& msg) override;
  Inbound receive() override;

 private:
  void reader(std::size_t worker, int fd, std::vector<std::uint8_t> pending);

  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::vector<int> fds_;
  std::vector<std::thread> readers_;
  BlockingQueue<Inbound> up_;
};

/// Connects a worker to a SocketHub.
std::unique_ptr<WorkerLink> connect_socket(const std::string& address, std::uint16_t port,
                                           double timeout_seconds = 10.0);

}  // namespace bpt::cluster
