#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "bpt/nn/activation.hpp"
#include "bpt/nn/tensor.hpp"

namespace bpt::nn {

/// Convolution: each filter spans the full input depth and produces one
/// output channel.
struct ConvSpec {
  std::size_t filters = 1;
  std::size_t filter_height = 1;
  std::size_t filter_width = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::linear;
};

enum class PoolKind { max, mean };

struct PoolSpec {
  PoolKind kind = PoolKind::max;
  std::size_t window = 2;
  std::size_t stride = 2;
};

/// Fully connected layer over the flattened previous output.
struct DenseSpec {
  std::size_t units = 1;
  Activation activation = Activation::linear;
};

using LayerSpec = std::variant<ConvSpec, PoolSpec, DenseSpec>;

enum class LayerKind { conv, pool, dense };
LayerKind kind_of(const LayerSpec& layer);

/// Layer topology. Trainable values live in a ParameterSet.
struct NetworkSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;
  double learning_rate = 0.05;
};

/// Output shape of a convolution window sweep. Rejects S = 0, filters that
/// do not fit the padded input and strides that do not tile it exactly.
Shape3 output_shape(Shape3 input, Shape3 filter, std::size_t stride, std::size_t padding);

/// Output shape of a pooling sweep (same geometry rules, no padding).
Shape3 pool_output_shape(Shape3 input, std::size_t window, std::size_t stride);

/// Slice of the flat parameter vector owned by one layer. Conv layers store,
/// per filter, its D*H*W weights followed by its bias; dense layers store the
/// row-major units x fan_in matrix followed by the bias vector.
struct LayerSlice {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// A validated NetworkSpec with its derived per-layer shapes and parameter layout.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t layer_count() const { return spec_.layers.size(); }
  const LayerSpec& layer(std::size_t l) const { return spec_.layers[l]; }

  Shape3 input_shape() const { return spec_.input; }
  /// Shape fed into layer l.
  Shape3 input_shape(std::size_t l) const { return l == 0 ? spec_.input : shapes_[l - 1]; }
  Shape3 output_shape(std::size_t l) const { return shapes_[l]; }
  Shape3 final_shape() const { return shapes_.back(); }
  std::size_t output_size() const { return shapes_.back().size(); }

  const LayerSlice& slice(std::size_t l) const { return slices_[l]; }
  std::size_t parameter_count() const { return parameter_count_; }

  /// Canonical text form of the topology, used as the checkpoint layout
  /// descriptor, e.g. "in=1x28x28;conv=4x5x5,s1,p2,tanh;pool=max,2,2;dense=10,sigmoid".
  std::string descriptor() const;

  /// Multiply-accumulate count of one forward pass (work units).
  std::size_t forward_macs() const;
  /// Multiply-accumulate count of one backward pass including gradients and the update.
  std::size_t backward_macs() const;

 private:
  NetworkSpec spec_;
  std::vector<Shape3> shapes_;
  std::vector<LayerSlice> slices_;
  std::size_t parameter_count_ = 0;
};

/// Inverse of Network::descriptor(); learning rate is not part of the descriptor.
NetworkSpec parse_descriptor(const std::string& descriptor, double learning_rate = 0.05);

}  // namespace bpt::nn
