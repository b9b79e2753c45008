#include "bpt/inner/trainer.hpp"

#include "bpt/common/error.hpp"
#include "bpt/nn/kernels.hpp"

namespace bpt::inner {

InnerTrainer::InnerTrainer(const nn::Network& net, std::size_t threads, const DagOptions& options,
                           const RunOptions& run)
    : net_(net),
      forward_(build_task_dag(net_, Phase::forward, options)),
      backward_(build_task_dag(net_, Phase::backward, options)),
      run_(run),
      pool_(threads),
      trace_(nn::make_trace(net_)),
      deltas_(nn::make_deltas(net_)),
      grads_(net_.parameter_count(), 0.0) {}

const nn::ForwardTrace& InnerTrainer::forward(std::span<const double> params, const nn::Tensor3& x) {
  if (params.size() != net_.parameter_count()) throw ShapeError("parameter vector has the wrong size");
  if (x.shape() != net_.input_shape()) throw ShapeError("input shape " + x.shape().str() + " does not match the network");
  trace_.input = x;
  forward_timeline_ = pool_.run(
      forward_,
      [&](const TaskNode& t) {
        const nn::Tensor3& in = t.layer == 0 ? trace_.input : trace_.outputs[t.layer - 1];
        nn::forward_units(net_, t.layer, params, in, trace_.nets[t.layer], trace_.outputs[t.layer],
                          trace_.argmax[t.layer], t.begin, t.end);
      },
      run_);
  return trace_;
}

double InnerTrainer::train_sample(std::span<double> params, const nn::Tensor3& x,
                                  std::span<const double> target) {
  forward(params, x);
  const double loss = nn::loss_squared_error(target, trace_.output().values());
  const double eta = net_.spec().learning_rate;
  backward_timeline_ = pool_.run(
      backward_,
      [&](const TaskNode& t) {
        switch (t.kind) {
          case TaskKind::loss:
            nn::output_delta(net_, trace_.nets[t.layer], trace_.outputs[t.layer], target,
                             deltas_[t.layer]);
            break;
          case TaskKind::delta:
            nn::backprop_units(net_, t.layer, params, trace_.nets[t.layer], deltas_[t.layer + 1],
                               trace_.argmax[t.layer + 1], deltas_[t.layer], t.begin, t.end);
            break;
          case TaskKind::gradient: {
            const nn::Tensor3& in = t.layer == 0 ? trace_.input : trace_.outputs[t.layer - 1];
            nn::gradient_units(net_, t.layer, in, deltas_[t.layer], grads_, t.begin, t.end);
            break;
          }
          case TaskKind::update: {
            const nn::LayerSlice& s = net_.slice(t.layer);
            nn::sgd_step_in_place(params.subspan(s.offset, s.count),
                                  std::span<const double>(grads_).subspan(s.offset, s.count), eta);
            break;
          }
          default:
            throw RuntimeFailure("unexpected task kind in the backward graph");
        }
      },
      run_);
  return loss;
}

}  // namespace bpt::inner
