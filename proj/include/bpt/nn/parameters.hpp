#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bpt/nn/network.hpp"
#include "bpt/nn/tensor.hpp"

namespace bpt::nn {

/// Flat trainable weight set in the canonical layer order of a Network.
/// The layout descriptor ties the vector back to its topology.
struct ParameterSet {
  std::string layout;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const ParameterSet&) const = default;
};

ParameterSet zero_parameters(const Network& net);

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) from a seeded generator; biases start at zero.
ParameterSet init_parameters(const Network& net, std::uint64_t seed);

struct ConvFilter {
  Tensor3 weights;
  double bias = 0.0;
  bool operator==(const ConvFilter&) const = default;
};

struct DenseParams {
  std::size_t units = 0;
  std::size_t fan_in = 0;
  std::vector<double> weights;  // units x fan_in, row-major
  std::vector<double> bias;
  bool operator==(const DenseParams&) const = default;
};

struct NoParams {
  bool operator==(const NoParams&) const = default;
};

using LayerParams = std::variant<std::vector<ConvFilter>, NoParams, DenseParams>;

/// Layer-wise view of a flat parameter set.
std::vector<LayerParams> unflatten(const Network& net, const ParameterSet& params);
ParameterSet flatten(const Network& net, const std::vector<LayerParams>& layers);

/// w <- w - eta * g, element-wise.
ParameterSet sgd_step(const ParameterSet& params, const ParameterSet& grads, double learning_rate);
void sgd_step_in_place(std::span<double> params, std::span<const double> grads, double learning_rate);

}  // namespace bpt::nn
