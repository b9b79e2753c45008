#include "bpt/nn/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include "bpt/common/bytes.hpp"
#include "bpt/common/crc32.hpp"
#include "bpt/common/error.hpp"

namespace bpt::nn {

namespace {
constexpr std::uint8_t kMagic[4] = {'B', 'P', 'T', 'W'};
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params) {
  std::vector<std::uint8_t> out;
  out.reserve(18 + params.layout.size() + params.values.size() * 8);
  ByteWriter w(out);
  w.put_bytes(kMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.values.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.layout.size()));
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(params.layout.data()), params.layout.size()});
  w.put_doubles(params.values);
  w.put<std::uint32_t>(crc32(out));
  return out;
}

ParameterSet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    if (bytes.size() < 18) throw ValidationError("checkpoint truncated");
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4));
    if (tail.get<std::uint32_t>() != crc32(body)) throw ValidationError("checkpoint CRC mismatch");
    ByteReader r(body);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
      throw ValidationError("not a checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion) {
      throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = r.get<std::uint32_t>();
    const auto desc_len = r.get<std::uint32_t>();
    const auto desc = r.get_bytes(desc_len);
    ParameterSet params;
    params.layout.assign(desc.begin(), desc.end());
    params.values = r.get_doubles(count);
    if (r.remaining() != 0) throw ValidationError("trailing bytes in checkpoint");
    return params;
  } catch (const std::out_of_range&) {
    throw ValidationError("checkpoint truncated");
  }
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw RuntimeFailure("failed writing " + path.string());
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace bpt::nn
