#include "bpt/nn/presets.hpp"

#include <algorithm>
#include <array>

#include "bpt/common/error.hpp"

namespace bpt::nn {

namespace {

constexpr std::array<PresetRow, 7> kPresets{{
    {"case1", 2, 4, 3, 500},
    {"case2", 4, 4, 3, 1000},
    {"case3", 6, 8, 5, 1500},
    {"case4", 8, 8, 5, 1500},
    {"case5", 8, 10, 7, 2000},
    {"case6", 10, 10, 7, 2000},
    {"case7", 10, 12, 7, 2000},
}};

}  // namespace

std::span<const PresetRow> preset_table() { return kPresets; }

NetworkSpec make_preset(std::string_view name, const PresetScale& scale) {
  const auto it = std::find_if(kPresets.begin(), kPresets.end(),
                               [&](const PresetRow& r) { return r.name == name; });
  if (it == kPresets.end()) throw ValidationError("unknown preset '" + std::string(name) + "'");
  if (scale.filter_divisor == 0 || scale.fc_divisor == 0 || scale.filter_size == 0 ||
      scale.filter_size % 2 == 0) {
    throw ValidationError("preset scale needs positive divisors and an odd filter size");
  }
  if (scale.classes == 0) throw ValidationError("preset needs at least one class");

  NetworkSpec spec;
  spec.input = scale.input;
  spec.learning_rate = scale.learning_rate;
  const std::size_t filters = std::max<std::size_t>(1, it->filters / scale.filter_divisor);
  std::size_t h = scale.input.height;
  std::size_t w = scale.input.width;
  for (std::size_t k = 0; k < it->conv_layers; ++k) {
    spec.layers.push_back(ConvSpec{filters, scale.filter_size, scale.filter_size, 1,
                                   scale.filter_size / 2, scale.hidden});
    if (h % 2 == 0 && w % 2 == 0 && h >= 4 && w >= 4) {
      spec.layers.push_back(PoolSpec{PoolKind::max, 2, 2});
      h /= 2;
      w /= 2;
    }
  }
  const std::size_t hidden = std::max<std::size_t>(1, it->fc_neurons / scale.fc_divisor);
  for (std::size_t k = 0; k + 1 < it->fc_layers; ++k) {
    spec.layers.push_back(DenseSpec{hidden, scale.hidden});
  }
  spec.layers.push_back(DenseSpec{scale.classes, Activation::sigmoid});
  return spec;
}

}  // namespace bpt::nn
