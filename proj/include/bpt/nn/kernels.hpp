#pragma once

// Per-element numeric kernels shared by the sequential passes and the
// task-parallel runtime. Every kernel computes each output element with a
// fixed summation order and writes only the elements in its unit range, so
// any partition of the ranges reproduces the sequential result bit for bit.
//
// A "unit" is one output row (all channels, all columns) for conv and pool
// layers and one neuron for dense layers.

#include <cstddef>
#include <span>
#include <vector>

#include "bpt/nn/network.hpp"
#include "bpt/nn/tensor.hpp"

namespace bpt::nn {

/// Input window feeding one convolution output element, in padded-input
/// coordinates, end-exclusive.
struct ConvArea {
  std::size_t r_begin = 0;
  std::size_t r_end = 0;
  std::size_t c_begin = 0;
  std::size_t c_end = 0;
  bool operator==(const ConvArea&) const = default;
};

/// Pre-activation of one conv output: sum over (d, row, col) of w * x_padded, then the bias.
/// `filter` holds D*fh*fw weights followed by the bias.
double conv_pre_activation(const Tensor3& input, std::span<const double> filter,
                           std::size_t filter_height, std::size_t filter_width,
                           std::size_t padding, const ConvArea& area);

std::size_t unit_count(const Network& net, std::size_t layer);
std::size_t gradient_unit_count(const Network& net, std::size_t layer);

/// Forward pass of layer `layer` for units [begin, end). `argmax` receives
/// flat input indices for max-pool layers and is ignored otherwise.
void forward_units(const Network& net, std::size_t layer, std::span<const double> params,
                   const Tensor3& input, Tensor3& pre_activation, Tensor3& output,
                   std::vector<std::size_t>& argmax, std::size_t begin, std::size_t end);

/// Output-layer error delta_i = 2 (y'_i - y_i) f'(net_i) for the loss sum (y' - y)^2.
void output_delta(const Network& net, const Tensor3& pre_activation, const Tensor3& output,
                  std::span<const double> target, Tensor3& delta);

/// delta^layer for units [begin, end), gathered from delta^(layer+1) and
/// multiplied by f'(net^layer). Requires layer + 1 < layer_count.
void backprop_units(const Network& net, std::size_t layer, std::span<const double> params,
                    const Tensor3& pre_activation, const Tensor3& next_delta,
                    const std::vector<std::size_t>& next_argmax, Tensor3& delta,
                    std::size_t begin, std::size_t end);

/// dE/dw for gradient units [begin, end) of `layer` (filters for conv,
/// neurons for dense), written into the layer's slice of `grads`.
void gradient_units(const Network& net, std::size_t layer, const Tensor3& input,
                    const Tensor3& delta, std::span<double> grads, std::size_t begin,
                    std::size_t end);

/// Raw correlation sum_{i,j} delta_{i,j} * a_{i*S+m, j*S+n} for every
/// filter tap (d, m, n) of one output channel: the weight-gradient kernel.
Tensor3 conv_weight_correlation(const Tensor3& input, const Tensor3& channel_delta,
                                std::size_t filter_height, std::size_t filter_width,
                                std::size_t stride, std::size_t padding);

/// Sum of all entries of one delta channel: the bias-gradient kernel.
double delta_sum(const Tensor3& channel_delta);

}  // namespace bpt::nn
