#include "bpt/cluster/wire.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "bpt/common/bytes.hpp"
#include "bpt/common/crc32.hpp"

namespace bpt::cluster {

namespace {

constexpr std::uint8_t kMagic[4] = {'B', 'P', 'T', 'C'};

std::uint32_t to_u32(std::size_t n, const char* what) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw WireError(std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(n);
}

void put_payload(ByteWriter& w, const Message& msg) {
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Register>) {
          w.put(m.worker);
          w.put(m.frequency);
        } else if constexpr (std::is_same_v<T, AllocBatch>) {
          w.put(m.batch);
          w.put(m.count);
          w.put(to_u32(m.ranges.size(), "range count"));
          for (const auto& r : m.ranges) {
            w.put(to_u32(r.begin, "range start"));
            w.put(to_u32(r.end, "range end"));
          }
        } else if constexpr (std::is_same_v<T, GlobalWeights>) {
          w.put(m.version);
          w.put(to_u32(m.values.size(), "parameter count"));
          w.put_doubles(m.values);
        } else if constexpr (std::is_same_v<T, LocalSubmit>) {
          w.put(m.worker);
          w.put(m.base_version);
          w.put(to_u32(m.values.size(), "parameter count"));
          w.put_doubles(m.values);
          w.put(m.accuracy);
          w.put(m.seconds);
        } else if constexpr (std::is_same_v<T, IterTime>) {
          w.put(m.worker);
          w.put(m.iteration);
          w.put(m.seconds);
        }
      },
      msg);
}

Message read_payload(MessageType type, ByteReader& r) {
  switch (type) {
    case MessageType::register_worker: {
      Register m;
      m.worker = r.get<std::uint32_t>();
      m.frequency = r.get<double>();
      return m;
    }
    case MessageType::alloc_batch: {
      AllocBatch m;
      m.batch = r.get<std::uint16_t>();
      m.count = r.get<std::uint32_t>();
      const auto n = r.get<std::uint32_t>();
      if (n > r.remaining() / 8) throw WireError("AllocBatch range count overruns the payload");
      for (std::uint32_t k = 0; k < n; ++k) {
        partition::SampleRange range;
        range.begin = r.get<std::uint32_t>();
        range.end = r.get<std::uint32_t>();
        if (range.end < range.begin) throw WireError("AllocBatch range ends before it starts");
        m.ranges.push_back(range);
      }
      return m;
    }
    case MessageType::global_weights: {
      GlobalWeights m;
      m.version = r.get<std::uint32_t>();
      m.values = r.get_doubles(r.get<std::uint32_t>());
      return m;
    }
    case MessageType::local_submit: {
      LocalSubmit m;
      m.worker = r.get<std::uint32_t>();
      m.base_version = r.get<std::uint32_t>();
      m.values = r.get_doubles(r.get<std::uint32_t>());
      m.accuracy = r.get<double>();
      m.seconds = r.get<double>();
      return m;
    }
    case MessageType::iter_time: {
      IterTime m;
      m.worker = r.get<std::uint32_t>();
      m.iteration = r.get<std::uint32_t>();
      m.seconds = r.get<double>();
      return m;
    }
    case MessageType::shutdown:
      return Shutdown{};
  }
  throw WireError("unknown message type " + std::to_string(static_cast<int>(type)));
}

// Validates magic and type of a header; returns the payload length.
std::uint32_t check_header(std::span<const std::uint8_t> header) {
  if (!std::equal(kMagic, kMagic + 4, header.begin())) throw WireError("bad magic");
  if (header[4] > static_cast<std::uint8_t>(MessageType::shutdown)) {
    throw WireError("unknown message type " + std::to_string(header[4]));
  }
  std::uint32_t len;
  std::memcpy(&len, header.data() + 5, 4);
  return len;
}

}  // namespace

MessageType type_of(const Message& msg) { return static_cast<MessageType>(msg.index()); }

std::vector<std::uint8_t> encode_message(const Message& msg) {
  std::vector<std::uint8_t> payload;
  ByteWriter pw(payload);
  put_payload(pw, msg);
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeader + payload.size() + kFrameTrailer);
  ByteWriter w(out);
  w.put_bytes(kMagic);
  w.put(static_cast<std::uint8_t>(type_of(msg)));
  w.put(to_u32(payload.size(), "payload length"));
  w.put_bytes(payload);
  w.put(crc32(out));
  return out;
}

Message decode_message(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeader + kFrameTrailer) throw WireError("frame shorter than header and CRC");
  const std::uint32_t len = check_header(frame.first(kFrameHeader));
  if (static_cast<std::uint64_t>(len) + kFrameHeader + kFrameTrailer != frame.size()) {
    throw WireError("length overrun: header announces " + std::to_string(len) +
                    " payload bytes, frame carries " +
                    std::to_string(frame.size() - kFrameHeader - kFrameTrailer));
  }
  const auto body = frame.first(frame.size() - kFrameTrailer);
  std::uint32_t crc;
  std::memcpy(&crc, frame.data() + body.size(), 4);
  if (crc != crc32(body)) throw WireError("CRC mismatch");
  ByteReader r(frame.subspan(kFrameHeader, len));
  try {
    Message m = read_payload(static_cast<MessageType>(frame[4]), r);
    if (r.remaining() != 0) throw WireError("trailing payload bytes");
    return m;
  } catch (const std::out_of_range&) {
    throw WireError("payload truncated for its message type");
  }
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) {
  if (start_ > 0 && start_ == buffer_.size()) {
    buffer_.clear();
    start_ = 0;
  }
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<std::vector<std::uint8_t>> FrameReader::next_frame() {
  const std::size_t avail = buffer_.size() - start_;
  if (avail < kFrameHeader) return std::nullopt;
  const std::uint32_t len =
      check_header(std::span<const std::uint8_t>(buffer_).subspan(start_, kFrameHeader));
  const std::size_t total = kFrameHeader + static_cast<std::size_t>(len) + kFrameTrailer;
  if (avail < total) return std::nullopt;
  std::vector<std::uint8_t> frame(buffer_.begin() + static_cast<std::ptrdiff_t>(start_),
                                  buffer_.begin() + static_cast<std::ptrdiff_t>(start_ + total));
  start_ += total;
  if (start_ > 65536 && start_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
    start_ = 0;
  }
  return frame;
}

}  // namespace bpt::cluster
