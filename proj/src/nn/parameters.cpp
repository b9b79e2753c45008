#include "bpt/nn/parameters.hpp"

#include <cmath>

#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"

namespace bpt::nn {

ParameterSet zero_parameters(const Network& net) {
  return {net.descriptor(), std::vector<double>(net.parameter_count(), 0.0)};
}

ParameterSet init_parameters(const Network& net, std::uint64_t seed) {
  ParameterSet params = zero_parameters(net);
  Rng rng(derive_seed(seed, "init"));
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Shape3 in = net.input_shape(l);
    double* base = params.values.data() + net.slice(l).offset;
    if (const auto* conv = std::get_if<ConvSpec>(&net.layer(l))) {
      const std::size_t taps = in.depth * conv->filter_height * conv->filter_width;
      const double fan_in = static_cast<double>(taps);
      const double fan_out =
          static_cast<double>(conv->filters * conv->filter_height * conv->filter_width);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (std::size_t f = 0; f < conv->filters; ++f) {
        double* filter = base + f * (taps + 1);
        for (std::size_t k = 0; k < taps; ++k) filter[k] = rng.uniform(-limit, limit);
      }
    } else if (const auto* dense = std::get_if<DenseSpec>(&net.layer(l))) {
      const std::size_t fan_in = in.size();
      const double limit =
          std::sqrt(6.0 / static_cast<double>(fan_in + dense->units));
      for (std::size_t k = 0; k < dense->units * fan_in; ++k) base[k] = rng.uniform(-limit, limit);
    }
  }
  return params;
}

std::vector<LayerParams> unflatten(const Network& net, const ParameterSet& params) {
  if (params.size() != net.parameter_count()) {
    throw ShapeError("parameter set has " + std::to_string(params.size()) +
                     " values, network needs " + std::to_string(net.parameter_count()));
  }
  std::vector<LayerParams> layers;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Shape3 in = net.input_shape(l);
    const double* base = params.values.data() + net.slice(l).offset;
    if (const auto* conv = std::get_if<ConvSpec>(&net.layer(l))) {
      const Shape3 fshape{in.depth, conv->filter_height, conv->filter_width};
      const std::size_t taps = fshape.size();
      std::vector<ConvFilter> filters;
      for (std::size_t f = 0; f < conv->filters; ++f) {
        const double* p = base + f * (taps + 1);
        filters.push_back({Tensor3(fshape, std::vector<double>(p, p + taps)), p[taps]});
      }
      layers.emplace_back(std::move(filters));
    } else if (const auto* dense = std::get_if<DenseSpec>(&net.layer(l))) {
      DenseParams d;
      d.units = dense->units;
      d.fan_in = in.size();
      d.weights.assign(base, base + d.units * d.fan_in);
      d.bias.assign(base + d.units * d.fan_in, base + d.units * (d.fan_in + 1));
      layers.emplace_back(std::move(d));
    } else {
      layers.emplace_back(NoParams{});
    }
  }
  return layers;
}

ParameterSet flatten(const Network& net, const std::vector<LayerParams>& layers) {
  if (layers.size() != net.layer_count()) throw ShapeError("layer count mismatch in flatten");
  ParameterSet params = zero_parameters(net);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Shape3 in = net.input_shape(l);
    double* base = params.values.data() + net.slice(l).offset;
    if (const auto* conv = std::get_if<ConvSpec>(&net.layer(l))) {
      const auto* filters = std::get_if<std::vector<ConvFilter>>(&layers[l]);
      const Shape3 fshape{in.depth, conv->filter_height, conv->filter_width};
      if (filters == nullptr || filters->size() != conv->filters) {
        throw ShapeError("layer " + std::to_string(l) + ": expected conv filters");
      }
      for (std::size_t f = 0; f < conv->filters; ++f) {
        const auto& filter = (*filters)[f];
        if (filter.weights.shape() != fshape) {
          throw ShapeError("layer " + std::to_string(l) + ": filter shape mismatch");
        }
        double* p = base + f * (fshape.size() + 1);
        std::copy(filter.weights.values().begin(), filter.weights.values().end(), p);
        p[fshape.size()] = filter.bias;
      }
    } else if (const auto* dense = std::get_if<DenseSpec>(&net.layer(l))) {
      const auto* d = std::get_if<DenseParams>(&layers[l]);
      if (d == nullptr || d->units != dense->units || d->fan_in != in.size() ||
          d->weights.size() != d->units * d->fan_in || d->bias.size() != d->units) {
        throw ShapeError("layer " + std::to_string(l) + ": dense parameter shape mismatch");
      }
      std::copy(d->weights.begin(), d->weights.end(), base);
      std::copy(d->bias.begin(), d->bias.end(), base + d->weights.size());
    } else if (!std::holds_alternative<NoParams>(layers[l])) {
      throw ShapeError("layer " + std::to_string(l) + ": pool layers carry no parameters");
    }
  }
  return params;
}

void sgd_step_in_place(std::span<double> params, std::span<const double> grads,
                       double learning_rate) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k] -= learning_rate * grads[k];
}

ParameterSet sgd_step(const ParameterSet& params, const ParameterSet& grads, double learning_rate) {
  ParameterSet out = params;
  sgd_step_in_place(out.values, grads.values, learning_rate);
  return out;
}

}  // namespace bpt::nn
