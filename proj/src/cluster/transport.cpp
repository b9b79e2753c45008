#include "bpt/cluster/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace bpt::cluster {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RuntimeFailure(errno_text("socket send"));
    }
    off += static_cast<std::size_t>(n);
  }
}

// Reads until one frame is complete; nullopt on orderly EOF.
std::optional<std::vector<std::uint8_t>> read_frame(int fd, FrameReader& reader) {
  std::uint8_t buf[65536];
  for (;;) {
    if (auto f = reader.next_frame()) return f;
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n == 0) {
      if (reader.buffered() != 0) throw WireError("connection closed inside a frame");
      return std::nullopt;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw RuntimeFailure(errno_text("socket recv"));
    }
    reader.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
  }
}

sockaddr_in make_address(const std::string& address, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    throw ValidationError("not an IPv4 address: " + address);
  }
  return addr;
}

void no_delay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

// ---- in-process ----

class InProcessHub::Link : public WorkerLink {
 public:
  Link(std::size_t worker, BlockingQueue<std::vector<std::uint8_t>>& down, BlockingQueue<Inbound>& up)
      : worker_(worker), down_(down), up_(up) {}
  ~Link() override { close(); }

  void send(const Message& msg) override {
    if (closed_) throw RuntimeFailure("link closed");
    up_.push(Inbound{worker_, encode_message(msg), {}});
  }

  Message receive() override {
    auto frame = down_.pop();
    if (!frame) throw RuntimeFailure("coordinator link closed");
    return decode_message(*frame);
  }

  void fail(const std::string& reason) override {
    if (closed_) return;
    closed_ = true;
    up_.push(Inbound{worker_, std::nullopt, reason});
  }

  void close() override { fail("link closed"); }

 private:
  std::size_t worker_;
  BlockingQueue<std::vector<std::uint8_t>>& down_;
  BlockingQueue<Inbound>& up_;
  bool closed_ = false;
};

InProcessHub::InProcessHub(std::size_t workers) : connected_(workers, false) {
  for (std::size_t j = 0; j < workers; ++j) {
    down_.push_back(std::make_unique<BlockingQueue<std::vector<std::uint8_t>>>());
  }
}

InProcessHub::~InProcessHub() {
  for (auto& q : down_) q->close();
}

std::unique_ptr<WorkerLink> InProcessHub::connect(std::size_t worker) {
  if (worker >= down_.size()) throw ValidationError("worker index out of range");
  if (connected_[worker]) throw ValidationError("worker " + std::to_string(worker) + " already connected");
  connected_[worker] = true;
  return std::make_unique<Link>(worker, *down_[worker], up_);
}

void InProcessHub::send(std::size_t worker, const Message& msg) {
  auto frame = encode_message(msg);
  sent_ += frame.size();
  down_.at(worker)->push(std::move(frame));
}

Inbound InProcessHub::receive() {
  auto in = up_.pop();
  if (!in) throw RuntimeFailure("all worker links closed");
  if (in->frame) received_ += in->frame->size();
  return std::move(*in);
}

// ---- sockets ----

namespace {

class SocketLink : public WorkerLink {
 public:
  explicit SocketLink(int fd) : fd_(fd) {}
  ~SocketLink() override { close(); }

  void send(const Message& msg) override {
    if (fd_ < 0) throw RuntimeFailure("link closed");
    write_all(fd_, encode_message(msg));
  }

  Message receive() override {
    if (fd_ < 0) throw RuntimeFailure("link closed");
    auto frame = read_frame(fd_, reader_);
    if (!frame) throw RuntimeFailure("coordinator closed the connection");
    return decode_message(*frame);
  }

  void fail(const std::string&) override { close(); }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
  FrameReader reader_;
};

}  // namespace

SocketHub::SocketHub(std::size_t workers, const std::string& address, std::uint16_t port)
    : fds_(workers, -1) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw RuntimeFailure(errno_text("socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = make_address(address, port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, static_cast<int>(workers) + 4) != 0) {
    const auto msg = errno_text("bind/listen");
    ::close(listen_fd_);
    throw RuntimeFailure(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketHub::~SocketHub() {
  for (int fd : fds_) {
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }
  up_.close();
  for (auto& t : readers_) t.join();
  for (int fd : fds_) {
    if (fd >= 0) ::close(fd);
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SocketHub::accept_all(double timeout_seconds) {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::duration<double>(timeout_seconds);
  std::size_t joined = 0;
  while (joined < fds_.size()) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (left.count() <= 0) {
      throw RuntimeFailure("only " + std::to_string(joined) + " of " + std::to_string(fds_.size()) +
                           " workers connected before the timeout");
    }
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    no_delay(fd);
    FrameReader reader;
    std::optional<std::vector<std::uint8_t>> frame;
    try {
      frame = read_frame(fd, reader);
    } catch (const std::exception&) {
      ::close(fd);
      continue;
    }
    if (!frame) {
      ::close(fd);
      continue;
    }
    const Message msg = decode_message(*frame);
    const auto* reg = std::get_if<Register>(&msg);
    if (!reg || reg->worker >= fds_.size() || fds_[reg->worker] >= 0) {
      ::close(fd);
      throw ValidationError("connection did not register as a new worker");
    }
    fds_[reg->worker] = fd;
    up_.push(Inbound{reg->worker, std::move(frame), {}});
    std::vector<std::uint8_t> rest;
    while (auto extra = reader.next_frame()) rest.insert(rest.end(), extra->begin(), extra->end());
    readers_.emplace_back(&SocketHub::reader, this, std::size_t{reg->worker}, fd, std::move(rest));
    ++joined;
  }
}

void SocketHub::reader(std::size_t worker, int fd, std::vector<std::uint8_t> pending) {
  FrameReader reader;
  reader.feed(pending);
  try {
    while (auto frame = read_frame(fd, reader)) up_.push(Inbound{worker, std::move(frame), {}});
    up_.push(Inbound{worker, std::nullopt, "connection closed"});
  } catch (const std::exception& e) {
    up_.push(Inbound{worker, std::nullopt, e.what()});
  }
}

void SocketHub::send(std::size_t worker, const Message& msg) {
  const int fd = fds_.at(worker);
  if (fd < 0) throw RuntimeFailure("worker " + std::to_string(worker) + " is not connected");
  const auto frame = encode_message(msg);
  sent_ += frame.size();
  write_all(fd, frame);
}

Inbound SocketHub::receive() {
  auto in = up_.pop();
  if (!in) throw RuntimeFailure("socket hub closed");
  if (in->frame) received_ += in->frame->size();
  return std::move(*in);
}

std::unique_ptr<WorkerLink> connect_socket(const std::string& address, std::uint16_t port,
                                           double timeout_seconds) {
  const sockaddr_in addr = make_address(address, port);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw RuntimeFailure(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      no_delay(fd);
      return std::make_unique<SocketLink>(fd);
    }
    const auto msg = errno_text("connect");
    ::close(fd);
    if (std::chrono::steady_clock::now() > deadline) throw RuntimeFailure(msg);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

}  // namespace bpt::cluster
