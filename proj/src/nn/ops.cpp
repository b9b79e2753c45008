#include "bpt/nn/ops.hpp"

#include "bpt/common/error.hpp"

namespace bpt::nn {

namespace {

void check_params(const Network& net, std::span<const double> params) {
  if (params.size() != net.parameter_count()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) +
                     " values, network needs " + std::to_string(net.parameter_count()));
  }
}

}  // namespace

ForwardTrace make_trace(const Network& net) {
  ForwardTrace trace;
  trace.input = Tensor3(net.input_shape());
  trace.nets.reserve(net.layer_count());
  trace.outputs.reserve(net.layer_count());
  trace.argmax.resize(net.layer_count());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    trace.nets.emplace_back(net.output_shape(l));
    trace.outputs.emplace_back(net.output_shape(l));
    if (const auto* pool = std::get_if<PoolSpec>(&net.layer(l));
        pool && pool->kind == PoolKind::max) {
      trace.argmax[l].assign(net.output_shape(l).size(), 0);
    }
  }
  return trace;
}

std::vector<Tensor3> make_deltas(const Network& net) {
  std::vector<Tensor3> deltas;
  deltas.reserve(net.layer_count());
  for (std::size_t l = 0; l < net.layer_count(); ++l) deltas.emplace_back(net.output_shape(l));
  return deltas;
}

Tensor3 conv_forward(const Tensor3& x, const ConvFilter& filter, std::size_t stride,
                     std::size_t padding, Activation activation) {
  const Shape3 out = output_shape(x.shape(), filter.weights.shape(), stride, padding);
  if (!x.all_finite()) throw ValidationError("conv_forward: non-finite input");
  std::vector<double> packed(filter.weights.values().begin(), filter.weights.values().end());
  packed.push_back(filter.bias);
  const std::size_t fh = filter.weights.height();
  const std::size_t fw = filter.weights.width();
  Tensor3 result(out);
  for (std::size_t i = 0; i < out.height; ++i) {
    for (std::size_t j = 0; j < out.width; ++j) {
      const ConvArea area{i * stride, i * stride + fh, j * stride, j * stride + fw};
      result.at(0, i, j) = activate(activation, conv_pre_activation(x, packed, fh, fw, padding, area));
    }
  }
  return result;
}

Tensor3 pool_forward(const Tensor3& a, PoolKind kind, std::size_t window, std::size_t stride,
                     std::vector<std::size_t>* argmax) {
  const Network net(NetworkSpec{a.shape(), {PoolSpec{kind, window, stride}}, 0.05});
  Tensor3 pre(net.final_shape());
  Tensor3 out(net.final_shape());
  std::vector<std::size_t> idx;
  forward_units(net, 0, {}, a, pre, out, idx, 0, unit_count(net, 0));
  if (argmax) *argmax = std::move(idx);
  return out;
}

std::vector<double> dense_forward(std::span<const double> x, const DenseParams& layer,
                                  Activation activation) {
  if (x.size() != layer.fan_in || layer.weights.size() != layer.units * layer.fan_in ||
      layer.bias.size() != layer.units) {
    throw ShapeError("dense layer parameters do not match an input of " +
                     std::to_string(x.size()) + " values");
  }
  std::vector<double> out(layer.units);
  for (std::size_t o = 0; o < layer.units; ++o) {
    double sum = 0.0;
    for (std::size_t k = 0; k < layer.fan_in; ++k) sum += layer.weights[o * layer.fan_in + k] * x[k];
    out[o] = activate(activation, sum + layer.bias[o]);
  }
  return out;
}

double loss_squared_error(std::span<const double> labels, std::span<const double> outputs) {
  if (labels.size() != outputs.size()) {
    throw ShapeError("label and output vectors differ in length");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double e = labels[k] - outputs[k];
    sum += e * e;
  }
  return sum;
}

std::vector<double> one_hot(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(classes) + " classes");
  }
  std::vector<double> v(classes, 0.0);
  v[label] = 1.0;
  return v;
}

void forward_into(const Network& net, std::span<const double> params, const Tensor3& x,
                  ForwardTrace& trace) {
  check_params(net, params);
  if (x.shape() != net.input_shape()) {
    throw ShapeError("input shape " + x.shape().str() + " != network input " +
                     net.input_shape().str());
  }
  trace.input = x;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Tensor3& in = l == 0 ? trace.input : trace.outputs[l - 1];
    forward_units(net, l, params, in, trace.nets[l], trace.outputs[l], trace.argmax[l], 0,
                  unit_count(net, l));
  }
}

ForwardTrace forward(const Network& net, const ParameterSet& params, const Tensor3& x) {
  ForwardTrace trace = make_trace(net);
  forward_into(net, params.values, x, trace);
  return trace;
}

Tensor3 resume_forward(const Network& net, const ParameterSet& params,
                       const ForwardTrace& trace, std::size_t layer, const Tensor3& net_input) {
  if (layer >= net.layer_count()) throw ShapeError("resume_forward: layer out of range");
  if (net_input.shape() != net.output_shape(layer)) {
    throw ShapeError("resume_forward: replacement net has the wrong shape");
  }
  ForwardTrace t = trace;
  Activation act = Activation::linear;
  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(layer))) act = conv->activation;
  if (const auto* dense = std::get_if<DenseSpec>(&net.layer(layer))) act = dense->activation;
  t.nets[layer] = net_input;
  for (std::size_t k = 0; k < net_input.size(); ++k) t.outputs[layer][k] = activate(act, net_input[k]);
  for (std::size_t l = layer + 1; l < net.layer_count(); ++l) {
    forward_units(net, l, params.values, t.outputs[l - 1], t.nets[l], t.outputs[l], t.argmax[l],
                  0, unit_count(net, l));
  }
  return t.outputs.back();
}

void backward_into(const Network& net, std::span<const double> params, const ForwardTrace& trace,
                   std::span<const double> target, std::vector<Tensor3>& deltas) {
  check_params(net, params);
  const std::size_t last = net.layer_count() - 1;
  output_delta(net, trace.nets[last], trace.outputs[last], target, deltas[last]);
  for (std::size_t l = last; l-- > 0;) {
    backprop_units(net, l, params, trace.nets[l], deltas[l + 1], trace.argmax[l + 1], deltas[l],
                   0, unit_count(net, l));
  }
}

std::vector<Tensor3> backward_pass(const Network& net, const ParameterSet& params,
                                   const ForwardTrace& trace, std::span<const double> target) {
  std::vector<Tensor3> deltas = make_deltas(net);
  backward_into(net, params.values, trace, target, deltas);
  return deltas;
}

void gradients_into(const Network& net, const ForwardTrace& trace,
                    const std::vector<Tensor3>& deltas, std::span<double> grads) {
  if (grads.size() != net.parameter_count()) throw ShapeError("gradient buffer has the wrong size");
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Tensor3& in = l == 0 ? trace.input : trace.outputs[l - 1];
    gradient_units(net, l, in, deltas[l], grads, 0, gradient_unit_count(net, l));
  }
}

ParameterSet param_gradients(const Network& net, const ForwardTrace& trace,
                             const std::vector<Tensor3>& deltas) {
  ParameterSet grads = zero_parameters(net);
  gradients_into(net, trace, deltas, grads.values);
  return grads;
}

double train_sample(const Network& net, ParameterSet& params, const Tensor3& x,
                    std::span<const double> target) {
  const ForwardTrace trace = forward(net, params, x);
  const double loss = loss_squared_error(target, trace.output().values());
  const auto deltas = backward_pass(net, params, trace, target);
  const ParameterSet grads = param_gradients(net, trace, deltas);
  sgd_step_in_place(params.values, grads.values, net.spec().learning_rate);
  return loss;
}

}  // namespace bpt::nn
