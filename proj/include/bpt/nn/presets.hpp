#pragma once

#include <span>
#include <string>
#include <string_view>

#include "bpt/nn/network.hpp"

namespace bpt::nn {

/// One column of the network-scale table: conv layer count, filters per conv
/// layer, fully connected layer count and neurons per hidden FC layer.
struct PresetRow {
  std::string_view name;
  std::size_t conv_layers;
  std::size_t filters;
  std::size_t fc_layers;
  std::size_t fc_neurons;
};

std::span<const PresetRow> preset_table();

/// Down-scaling applied when instantiating a preset.
struct PresetScale {
  Shape3 input{1, 28, 28};
  std::size_t classes = 10;
  std::size_t filter_divisor = 1;
  std::size_t fc_divisor = 8;
  std::size_t filter_size = 5;
  Activation hidden = Activation::tanh;
  double learning_rate = 0.05;
};

/// Builds case1..case7. Conv layers use same-size padding; a 2x2 max pool
/// follows each conv layer while the feature map is even-sized and at least
/// 4 wide. The last FC layer is the sigmoid output layer; the others are
/// hidden layers of fc_neurons / fc_divisor units.
NetworkSpec make_preset(std::string_view name, const PresetScale& scale = {});

}  // namespace bpt::nn
