#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bpt/nn/tensor.hpp"

namespace bpt::nn {

struct Sample {
  Tensor3 x;
  std::uint32_t label = 0;
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t classes = 0;
  /// Where the samples came from (file paths, seeds); informational.
  std::vector<std::string> provenance;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

}  // namespace bpt::nn
