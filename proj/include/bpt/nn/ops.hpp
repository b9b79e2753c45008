#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bpt/nn/kernels.hpp"
#include "bpt/nn/network.hpp"
#include "bpt/nn/parameters.hpp"
#include "bpt/nn/tensor.hpp"

namespace bpt::nn {

/// Weighted inputs and outputs of every layer for one sample. Pool layers
/// have no activation: their net equals their output.
struct ForwardTrace {
  Tensor3 input;
  std::vector<Tensor3> nets;
  std::vector<Tensor3> outputs;
  std::vector<std::vector<std::size_t>> argmax;

  const Tensor3& output() const { return outputs.back(); }
};

/// Buffers shaped for `net`, values zero.
ForwardTrace make_trace(const Network& net);
std::vector<Tensor3> make_deltas(const Network& net);

// Single-layer operations.
Tensor3 conv_forward(const Tensor3& x, const ConvFilter& filter, std::size_t stride,
                     std::size_t padding, Activation activation);
Tensor3 pool_forward(const Tensor3& a, PoolKind kind, std::size_t window, std::size_t stride,
                     std::vector<std::size_t>* argmax = nullptr);
std::vector<double> dense_forward(std::span<const double> x, const DenseParams& layer,
                                  Activation activation);

/// E = sum_i (y'_i - y_i)^2
double loss_squared_error(std::span<const double> labels, std::span<const double> outputs);

std::vector<double> one_hot(std::size_t label, std::size_t classes);

// Whole-network passes.
ForwardTrace forward(const Network& net, const ParameterSet& params, const Tensor3& x);
void forward_into(const Network& net, std::span<const double> params, const Tensor3& x,
                  ForwardTrace& trace);

/// Re-run layers layer..end from a replacement weighted input of `layer`;
/// returns the network output. Used for finite-difference checks.
Tensor3 resume_forward(const Network& net, const ParameterSet& params,
                       const ForwardTrace& trace, std::size_t layer, const Tensor3& net_input);

/// Per-layer deltas, delta^l = -dE/dnet^l.
std::vector<Tensor3> backward_pass(const Network& net, const ParameterSet& params,
                                   const ForwardTrace& trace, std::span<const double> target);
void backward_into(const Network& net, std::span<const double> params, const ForwardTrace& trace,
                   std::span<const double> target, std::vector<Tensor3>& deltas);

/// dE/dw for every parameter, in the canonical layout.
ParameterSet param_gradients(const Network& net, const ForwardTrace& trace,
                             const std::vector<Tensor3>& deltas);
void gradients_into(const Network& net, const ForwardTrace& trace,
                    const std::vector<Tensor3>& deltas, std::span<double> grads);

/// One sequential SGD step on a single sample; returns the loss before the step.
double train_sample(const Network& net, ParameterSet& params, const Tensor3& x,
                    std::span<const double> target);

}  // namespace bpt::nn
