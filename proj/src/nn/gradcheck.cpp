#include "bpt/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "bpt/common/error.hpp"
#include "bpt/nn/ops.hpp"

namespace bpt::nn {

namespace {

void record(GradcheckReport& report, std::size_t index, double analytic, double numeric,
            double tolerance) {
  const double err = relative_error(analytic, numeric);
  ++report.checked;
  if (!report.non_finite_index && !(std::isfinite(analytic) && std::isfinite(numeric))) {
    report.non_finite_index = index;
  }
  if (!(err <= tolerance)) ++report.failed;
  if (err > report.max_relative_error || std::isnan(err)) {
    report.max_relative_error = err;
    report.worst_index = index;
  }
}

using Wide = long double;

Wide wide_activate(Activation kind, Wide x) {
  switch (kind) {
    case Activation::sigmoid: return 1.0L / (1.0L + std::exp(-x));
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0.0L ? x : 0.0L;
    case Activation::linear: break;
  }
  return x;
}

// Straight-loop forward pass in extended precision, independent of the
// kernels. At h = 1e-5 the f64 loss difference loses about ten digits to
// cancellation, which swamps small gradients.
Wide wide_loss(const Network& net, const std::vector<Wide>& p, const Sample& sample) {
  Shape3 in = net.input_shape();
  std::vector<Wide> x(sample.x.values().begin(), sample.x.values().end());
  std::vector<Wide> y;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Shape3 out = net.output_shape(l);
    const std::size_t offset = net.slice(l).offset;
    y.assign(out.size(), 0.0L);
    if (const auto* conv = std::get_if<ConvSpec>(&net.layer(l))) {
      const std::size_t fh = conv->filter_height, fw = conv->filter_width;
      const std::size_t taps = in.depth * fh * fw;
      for (std::size_t f = 0; f < conv->filters; ++f) {
        const Wide* w = p.data() + offset + f * (taps + 1);
        for (std::size_t i = 0; i < out.height; ++i) {
          for (std::size_t j = 0; j < out.width; ++j) {
            Wide sum = w[taps];
            for (std::size_t d = 0; d < in.depth; ++d) {
              for (std::size_t m = 0; m < fh; ++m) {
                for (std::size_t n = 0; n < fw; ++n) {
                  const std::size_t pr = i * conv->stride + m, pc = j * conv->stride + n;
                  if (pr < conv->padding || pc < conv->padding) continue;
                  const std::size_t r = pr - conv->padding, c = pc - conv->padding;
                  if (r >= in.height || c >= in.width) continue;
                  sum += w[(d * fh + m) * fw + n] * x[(d * in.height + r) * in.width + c];
                }
              }
            }
            y[(f * out.height + i) * out.width + j] = wide_activate(conv->activation, sum);
          }
        }
      }
    } else if (const auto* pool = std::get_if<PoolSpec>(&net.layer(l))) {
      for (std::size_t d = 0; d < out.depth; ++d) {
        for (std::size_t i = 0; i < out.height; ++i) {
          for (std::size_t j = 0; j < out.width; ++j) {
            Wide best = x[(d * in.height + i * pool->stride) * in.width + j * pool->stride];
            Wide sum = 0.0L;
            for (std::size_t r = 0; r < pool->window; ++r) {
              for (std::size_t c = 0; c < pool->window; ++c) {
                const Wide v =
                    x[(d * in.height + i * pool->stride + r) * in.width + j * pool->stride + c];
                best = std::max(best, v);
                sum += v;
              }
            }
            y[(d * out.height + i) * out.width + j] =
                pool->kind == PoolKind::max
                    ? best
                    : sum / static_cast<Wide>(pool->window * pool->window);
          }
        }
      }
    } else {
      const auto& dense = std::get<DenseSpec>(net.layer(l));
      const std::size_t fan_in = in.size();
      for (std::size_t u = 0; u < dense.units; ++u) {
        Wide sum = 0.0L;
        for (std::size_t k = 0; k < fan_in; ++k) sum += p[offset + u * fan_in + k] * x[k];
        y[u] = wide_activate(dense.activation, sum + p[offset + dense.units * fan_in + u]);
      }
    }
    x.swap(y);
    in = out;
  }
  Wide e = 0.0L;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const Wide diff = (k == sample.label ? 1.0L : 0.0L) - x[k];
    e += diff * diff;
  }
  return e;
}

Wide wide_total_loss(const Network& net, const std::vector<Wide>& p,
                     std::span<const Sample> samples) {
  Wide e = 0.0L;
  for (const Sample& s : samples) e += wide_loss(net, p, s);
  return e;
}

}  // namespace

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradcheckReport gradient_check(const Network& net, const ParameterSet& params,
                               std::span<const Sample> samples, double h, double tolerance,
                               const GradientHook& hook) {
  if (samples.empty()) throw ValidationError("gradient check needs at least one sample");
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  const std::size_t classes = net.output_size();

  std::vector<double> analytic(net.parameter_count(), 0.0);
  std::vector<double> grads(net.parameter_count());
  ForwardTrace trace = make_trace(net);
  std::vector<Tensor3> deltas = make_deltas(net);
  for (const Sample& s : samples) {
    const auto target = one_hot(s.label, classes);
    forward_into(net, params.values, s.x, trace);
    backward_into(net, params.values, trace, target, deltas);
    gradients_into(net, trace, deltas, grads);
    for (std::size_t k = 0; k < grads.size(); ++k) analytic[k] += grads[k];
  }
  if (hook) hook(analytic);

  GradcheckReport report;
  std::vector<Wide> w(params.values.begin(), params.values.end());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Wide original = w[k];
    w[k] = original + h;
    const Wide e_up = wide_total_loss(net, w, samples);
    w[k] = original - h;
    const Wide e_down = wide_total_loss(net, w, samples);
    w[k] = original;
    record(report, k, analytic[k], static_cast<double>((e_up - e_down) / (2.0L * h)), tolerance);
  }
  return report;
}

GradcheckReport delta_check(const Network& net, const ParameterSet& params, const Sample& sample,
                            double h, double tolerance) {
  const auto target = one_hot(sample.label, net.output_size());
  const ForwardTrace trace = forward(net, params, sample.x);
  const auto deltas = backward_pass(net, params, trace, target);
  GradcheckReport report;
  std::size_t index = 0;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    // Pool outputs have no own weighted input distinct from the output; the
    // delta there is still -dE/dnet with net = output.
    for (std::size_t k = 0; k < trace.nets[l].size(); ++k, ++index) {
      Tensor3 shifted = trace.nets[l];
      shifted[k] = trace.nets[l][k] + h;
      const double up = shifted[k];
      const double e_up = loss_squared_error(
          target, resume_forward(net, params, trace, l, shifted).values());
      shifted[k] = trace.nets[l][k] - h;
      const double down = shifted[k];
      const double e_down = loss_squared_error(
          target, resume_forward(net, params, trace, l, shifted).values());
      record(report, index, deltas[l][k], -(e_up - e_down) / (up - down), tolerance);
    }
  }
  return report;
}

}  // namespace bpt::nn
