#include "bpt/nn/kernels.hpp"

#include "bpt/common/error.hpp"

namespace bpt::nn {

namespace {

// Input element (pr, pc) of the padded frame mapped back to the unpadded
// input; false when it falls on the zero ring.
inline bool unpad(std::size_t pr, std::size_t pc, std::size_t padding, const Shape3& in,
                  std::size_t& r, std::size_t& c) {
  if (pr < padding || pc < padding) return false;
  r = pr - padding;
  c = pc - padding;
  return r < in.height && c < in.width;
}

void check_range(std::size_t begin, std::size_t end, std::size_t count, const char* what) {
  if (begin > end || end > count) {
    throw ShapeError(std::string(what) + ": unit range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside 0.." + std::to_string(count));
  }
}

}  // namespace

double conv_pre_activation(const Tensor3& input, std::span<const double> filter,
                           std::size_t filter_height, std::size_t filter_width,
                           std::size_t padding, const ConvArea& area) {
  const Shape3& in = input.shape();
  double sum = 0.0;
  for (std::size_t d = 0; d < in.depth; ++d) {
    const double* w = filter.data() + d * filter_height * filter_width;
    for (std::size_t pr = area.r_begin; pr < area.r_end; ++pr) {
      for (std::size_t pc = area.c_begin; pc < area.c_end; ++pc) {
        std::size_t r, c;
        if (!unpad(pr, pc, padding, in, r, c)) continue;
        sum += w[(pr - area.r_begin) * filter_width + (pc - area.c_begin)] * input.at(d, r, c);
      }
    }
  }
  return sum + filter[in.depth * filter_height * filter_width];
}

std::size_t unit_count(const Network& net, std::size_t layer) {
  const Shape3 out = net.output_shape(layer);
  return kind_of(net.layer(layer)) == LayerKind::dense ? out.depth : out.height;
}

std::size_t gradient_unit_count(const Network& net, std::size_t layer) {
  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(layer))) return conv->filters;
  if (const auto* dense = std::get_if<DenseSpec>(&net.layer(layer))) return dense->units;
  return 0;
}

void forward_units(const Network& net, std::size_t layer, std::span<const double> params,
                   const Tensor3& input, Tensor3& pre_activation, Tensor3& output,
                   std::vector<std::size_t>& argmax, std::size_t begin, std::size_t end) {
  check_range(begin, end, unit_count(net, layer), "forward_units");
  const Shape3 in = net.input_shape(layer);
  const Shape3 out = net.output_shape(layer);
  const LayerSlice slice = net.slice(layer);

  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(layer))) {
    const std::size_t taps = in.depth * conv->filter_height * conv->filter_width;
    for (std::size_t f = 0; f < conv->filters; ++f) {
      const auto filter = params.subspan(slice.offset + f * (taps + 1), taps + 1);
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t j = 0; j < out.width; ++j) {
          const ConvArea area{i * conv->stride, i * conv->stride + conv->filter_height,
                              j * conv->stride, j * conv->stride + conv->filter_width};
          const double net_value = conv_pre_activation(input, filter, conv->filter_height,
                                                       conv->filter_width, conv->padding, area);
          pre_activation.at(f, i, j) = net_value;
          output.at(f, i, j) = activate(conv->activation, net_value);
        }
      }
    }
  } else if (const auto* pool = std::get_if<PoolSpec>(&net.layer(layer))) {
    const bool is_max = pool->kind == PoolKind::max;
    if (is_max && argmax.size() != out.size()) argmax.assign(out.size(), 0);
    const double cells = static_cast<double>(pool->window * pool->window);
    for (std::size_t d = 0; d < out.depth; ++d) {
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t j = 0; j < out.width; ++j) {
          const std::size_t r0 = i * pool->stride;
          const std::size_t c0 = j * pool->stride;
          double value;
          if (is_max) {
            std::size_t best = (d * in.height + r0) * in.width + c0;
            value = input[best];
            for (std::size_t r = r0; r < r0 + pool->window; ++r) {
              for (std::size_t c = c0; c < c0 + pool->window; ++c) {
                const std::size_t flat = (d * in.height + r) * in.width + c;
                if (input[flat] > value) {
                  value = input[flat];
                  best = flat;
                }
              }
            }
            argmax[(d * out.height + i) * out.width + j] = best;
          } else {
            double sum = 0.0;
            for (std::size_t r = r0; r < r0 + pool->window; ++r) {
              for (std::size_t c = c0; c < c0 + pool->window; ++c) sum += input.at(d, r, c);
            }
            value = sum / cells;
          }
          pre_activation.at(d, i, j) = value;
          output.at(d, i, j) = value;
        }
      }
    }
  } else {
    const auto& dense = std::get<DenseSpec>(net.layer(layer));
    const std::size_t fan_in = in.size();
    const double* weights = params.data() + slice.offset;
    const double* bias = weights + dense.units * fan_in;
    const auto x = input.values();
    for (std::size_t o = begin; o < end; ++o) {
      const double* row = weights + o * fan_in;
      double sum = 0.0;
      for (std::size_t k = 0; k < fan_in; ++k) sum += row[k] * x[k];
      sum += bias[o];
      pre_activation[o] = sum;
      output[o] = activate(dense.activation, sum);
    }
  }
}

void output_delta(const Network& net, const Tensor3& pre_activation, const Tensor3& output,
                  std::span<const double> target, Tensor3& delta) {
  if (target.size() != output.size()) {
    throw ShapeError("target has " + std::to_string(target.size()) + " entries, output has " +
                     std::to_string(output.size()));
  }
  const std::size_t last = net.layer_count() - 1;
  Activation act = Activation::linear;
  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(last))) act = conv->activation;
  if (const auto* dense = std::get_if<DenseSpec>(&net.layer(last))) act = dense->activation;
  for (std::size_t k = 0; k < output.size(); ++k) {
    delta[k] = 2.0 * (target[k] - output[k]) * activate_derivative(act, pre_activation[k]);
  }
}

void backprop_units(const Network& net, std::size_t layer, std::span<const double> params,
                    const Tensor3& pre_activation, const Tensor3& next_delta,
                    const std::vector<std::size_t>& next_argmax, Tensor3& delta,
                    std::size_t begin, std::size_t end) {
  if (layer + 1 >= net.layer_count()) throw ShapeError("backprop_units: no next layer");
  check_range(begin, end, unit_count(net, layer), "backprop_units");
  const Shape3 here = net.output_shape(layer);
  const std::size_t next = layer + 1;
  const Shape3 next_out = net.output_shape(next);

  Activation act = Activation::linear;
  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(layer))) act = conv->activation;
  if (const auto* dense = std::get_if<DenseSpec>(&net.layer(layer))) act = dense->activation;

  // Raw error reaching one element (flat index `k`, coordinates d, r, c) of
  // this layer's output from the layer above.
  auto gather = [&](std::size_t k, std::size_t d, std::size_t r, std::size_t c) -> double {
    if (const auto* conv = std::get_if<ConvSpec>(&net.layer(next))) {
      const std::size_t taps = here.depth * conv->filter_height * conv->filter_width;
      const double* weights = params.data() + net.slice(next).offset;
      const std::size_t pr = r + conv->padding;
      const std::size_t pc = c + conv->padding;
      double sum = 0.0;
      for (std::size_t f = 0; f < conv->filters; ++f) {
        const double* w = weights + f * (taps + 1) + d * conv->filter_height * conv->filter_width;
        for (std::size_t m = 0; m < conv->filter_height && m <= pr; ++m) {
          if ((pr - m) % conv->stride != 0) continue;
          const std::size_t i = (pr - m) / conv->stride;
          if (i >= next_out.height) continue;
          for (std::size_t n = 0; n < conv->filter_width && n <= pc; ++n) {
            if ((pc - n) % conv->stride != 0) continue;
            const std::size_t j = (pc - n) / conv->stride;
            if (j >= next_out.width) continue;
            sum += next_delta.at(f, i, j) * w[m * conv->filter_width + n];
          }
        }
      }
      return sum;
    }
    if (const auto* pool = std::get_if<PoolSpec>(&net.layer(next))) {
      const double cells = static_cast<double>(pool->window * pool->window);
      double sum = 0.0;
      for (std::size_t m = 0; m < pool->window && m <= r; ++m) {
        if ((r - m) % pool->stride != 0) continue;
        const std::size_t i = (r - m) / pool->stride;
        if (i >= next_out.height) continue;
        for (std::size_t n = 0; n < pool->window && n <= c; ++n) {
          if ((c - n) % pool->stride != 0) continue;
          const std::size_t j = (c - n) / pool->stride;
          if (j >= next_out.width) continue;
          const std::size_t out_flat = (d * next_out.height + i) * next_out.width + j;
          if (pool->kind == PoolKind::max) {
            if (next_argmax[out_flat] == k) sum += next_delta[out_flat];
          } else {
            sum += next_delta[out_flat] / cells;
          }
        }
      }
      return sum;
    }
    const auto& dense = std::get<DenseSpec>(net.layer(next));
    const std::size_t fan_in = here.size();
    const double* weights = params.data() + net.slice(next).offset;
    double sum = 0.0;
    for (std::size_t o = 0; o < dense.units; ++o) sum += weights[o * fan_in + k] * next_delta[o];
    return sum;
  };

  if (kind_of(net.layer(layer)) == LayerKind::dense) {
    for (std::size_t o = begin; o < end; ++o) {
      delta[o] = gather(o, o, 0, 0) * activate_derivative(act, pre_activation[o]);
    }
    return;
  }
  for (std::size_t d = 0; d < here.depth; ++d) {
    for (std::size_t r = begin; r < end; ++r) {
      for (std::size_t c = 0; c < here.width; ++c) {
        const std::size_t k = (d * here.height + r) * here.width + c;
        delta[k] = gather(k, d, r, c) * activate_derivative(act, pre_activation[k]);
      }
    }
  }
}

void gradient_units(const Network& net, std::size_t layer, const Tensor3& input,
                    const Tensor3& delta, std::span<double> grads, std::size_t begin,
                    std::size_t end) {
  check_range(begin, end, gradient_unit_count(net, layer), "gradient_units");
  const Shape3 in = net.input_shape(layer);
  const Shape3 out = net.output_shape(layer);
  double* base = grads.data() + net.slice(layer).offset;

  if (const auto* conv = std::get_if<ConvSpec>(&net.layer(layer))) {
    const std::size_t fh = conv->filter_height;
    const std::size_t fw = conv->filter_width;
    const std::size_t taps = in.depth * fh * fw;
    for (std::size_t f = begin; f < end; ++f) {
      double* g = base + f * (taps + 1);
      for (std::size_t d = 0; d < in.depth; ++d) {
        for (std::size_t m = 0; m < fh; ++m) {
          for (std::size_t n = 0; n < fw; ++n) {
            double sum = 0.0;
            for (std::size_t i = 0; i < out.height; ++i) {
              for (std::size_t j = 0; j < out.width; ++j) {
                std::size_t r, c;
                if (!unpad(i * conv->stride + m, j * conv->stride + n, conv->padding, in, r, c)) {
                  continue;
                }
                sum += delta.at(f, i, j) * input.at(d, r, c);
              }
            }
            // delta is -dE/dnet, so the gradient is the negated correlation.
            g[(d * fh + m) * fw + n] = -sum;
          }
        }
      }
      double bias = 0.0;
      for (std::size_t i = 0; i < out.height; ++i) {
        for (std::size_t j = 0; j < out.width; ++j) bias += delta.at(f, i, j);
      }
      g[taps] = -bias;
    }
  } else if (const auto* dense = std::get_if<DenseSpec>(&net.layer(layer))) {
    const std::size_t fan_in = in.size();
    const auto x = input.values();
    double* bias = base + dense->units * fan_in;
    for (std::size_t o = begin; o < end; ++o) {
      double* row = base + o * fan_in;
      const double d = delta[o];
      for (std::size_t k = 0; k < fan_in; ++k) row[k] = -(d * x[k]);
      bias[o] = -d;
    }
  }
}

Tensor3 conv_weight_correlation(const Tensor3& input, const Tensor3& channel_delta,
                                std::size_t filter_height, std::size_t filter_width,
                                std::size_t stride, std::size_t padding) {
  const Shape3 in = input.shape();
  const Shape3 expected = output_shape(in, {in.depth, filter_height, filter_width}, stride, padding);
  if (channel_delta.height() != expected.height || channel_delta.width() != expected.width ||
      channel_delta.depth() != 1) {
    throw ShapeError("delta channel shape " + channel_delta.shape().str() +
                     " does not match conv output " + expected.str());
  }
  Tensor3 result({in.depth, filter_height, filter_width});
  for (std::size_t d = 0; d < in.depth; ++d) {
    for (std::size_t m = 0; m < filter_height; ++m) {
      for (std::size_t n = 0; n < filter_width; ++n) {
        double sum = 0.0;
        for (std::size_t i = 0; i < expected.height; ++i) {
          for (std::size_t j = 0; j < expected.width; ++j) {
            std::size_t r, c;
            if (!unpad(i * stride + m, j * stride + n, padding, in, r, c)) continue;
            sum += channel_delta.at(0, i, j) * input.at(d, r, c);
          }
        }
        result.at(d, m, n) = sum;
      }
    }
  }
  return result;
}

double delta_sum(const Tensor3& channel_delta) {
  double sum = 0.0;
  for (double v : channel_delta.values()) sum += v;
  return sum;
}

}  // namespace bpt::nn
