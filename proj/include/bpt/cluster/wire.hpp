#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "bpt/common/error.hpp"
#include "bpt/partition/partition.hpp"

namespace bpt::cluster {

enum class MessageType : std::uint8_t {
  register_worker = 0,
  alloc_batch = 1,
  global_weights = 2,
  local_submit = 3,
  iter_time = 4,
  shutdown = 5,
};

struct Register {
  std::uint32_t worker = 0;
  double frequency = 1.0;
  bool operator==(const Register&) const = default;
};

struct AllocBatch {
  std::uint16_t batch = 0;
  std::uint32_t count = 0;
  std::vector<partition::SampleRange> ranges;
  bool operator==(const AllocBatch&) const = default;
};

struct GlobalWeights {
  std::uint32_t version = 0;
  std::vector<double> values;
  bool operator==(const GlobalWeights&) const = default;
};

struct LocalSubmit {
  std::uint32_t worker = 0;
  std::uint32_t base_version = 0;
  std::vector<double> values;
  double accuracy = 0.0;
  double seconds = 0.0;
  bool operator==(const LocalSubmit&) const = default;
};

struct IterTime {
  std::uint32_t worker = 0;
  std::uint32_t iteration = 0;
  double seconds = 0.0;
  bool operator==(const IterTime&) const = default;
};

struct Shutdown {
  bool operator==(const Shutdown&) const = default;
};

using Message = std::variant<Register, AllocBatch, GlobalWeights, LocalSubmit, IterTime, Shutdown>;

MessageType type_of(const Message& msg);

/// Malformed frame; what() names the failed check.
class WireError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

inline constexpr std::size_t kFrameHeader = 9;   // magic, type, length
inline constexpr std::size_t kFrameTrailer = 4;  // CRC-32

/// "BPTC" | type u8 | payload length u32 | payload | CRC-32 of all previous bytes.
std::vector<std::uint8_t> encode_message(const Message& msg);

/// Decodes exactly one frame occupying all of `frame`.
Message decode_message(std::span<const std::uint8_t> frame);

/// Splits a byte stream into frames.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete frame, or nullopt if more bytes are needed. Throws
  /// WireError as soon as the header is known to be invalid.
  std::optional<std::vector<std::uint8_t>> next_frame();
  std::size_t buffered() const { return buffer_.size() - start_; }

 private:
  std::vector<std::uint8_t> buffer_;
  std::size_t start_ = 0;
};

}  // namespace bpt::cluster
