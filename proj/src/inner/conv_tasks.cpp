#include "bpt/inner/conv_tasks.hpp"

#include <algorithm>

#include "bpt/common/error.hpp"

namespace bpt::inner {

std::size_t count_conv_tasks(nn::Shape3 input, nn::Shape3 filter, std::size_t stride,
                             std::size_t padding) {
  const nn::Shape3 out = nn::output_shape(input, filter, stride, padding);
  return out.height * out.width;
}

nn::ConvArea conv_area(std::size_t i, std::size_t j, std::size_t stride, std::size_t filter_height,
                       std::size_t filter_width, std::size_t out_height, std::size_t out_width) {
  if (i >= out_height || j >= out_width) {
    throw ValidationError("output element (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") outside a " + std::to_string(out_height) + "x" +
                          std::to_string(out_width) + " map");
  }
  const std::size_t r = i * stride;
  const std::size_t c = j * stride;
  return {r, r + filter_height, c, c + filter_width};
}

std::vector<ConvTask> decompose_conv(std::shared_ptr<const nn::Tensor3> input,
                                     const nn::ConvFilter& filter, std::size_t stride,
                                     std::size_t padding, nn::Activation activation) {
  if (!input) throw ValidationError("decompose_conv needs an input tensor");
  const nn::Shape3 fshape = filter.weights.shape();
  const nn::Shape3 out = nn::output_shape(input->shape(), fshape, stride, padding);
  auto packed = std::make_shared<std::vector<double>>(filter.weights.values().begin(),
                                                      filter.weights.values().end());
  packed->push_back(filter.bias);
  std::vector<ConvTask> tasks;
  tasks.reserve(out.height * out.width);
  for (std::size_t i = 0; i < out.height; ++i) {
    for (std::size_t j = 0; j < out.width; ++j) {
      ConvTask t;
      t.i = i;
      t.j = j;
      t.area = conv_area(i, j, stride, fshape.height, fshape.width, out.height, out.width);
      t.input = input;
      t.filter = packed;
      t.filter_height = fshape.height;
      t.filter_width = fshape.width;
      t.padding = padding;
      t.activation = activation;
      t.cost = static_cast<double>(fshape.size());
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

double conv_duration(const std::vector<ConvTask>& tasks, std::size_t pool_size) {
  if (pool_size == 0) throw ValidationError("pool size must be at least 1");
  double total = 0.0;
  for (std::size_t w = 0; w < tasks.size(); w += pool_size) {
    double longest = 0.0;
    for (std::size_t k = w; k < std::min(tasks.size(), w + pool_size); ++k) {
      longest = std::max(longest, tasks[k].cost);
    }
    total += longest;
  }
  return total;
}

ConvResult parallel_conv_execute(const std::vector<ConvTask>& tasks, ExecutorPool& pool) {
  std::size_t h = 0, w = 0;
  for (const auto& t : tasks) {
    h = std::max(h, t.i + 1);
    w = std::max(w, t.j + 1);
  }
  ConvResult result{nn::Tensor3({1, h, w}), conv_duration(tasks, pool.size())};
  nn::Tensor3& out = result.output;
  pool.parallel_for(tasks.size(), [&](std::size_t k) {
    const ConvTask& t = tasks[k];
    const double net = nn::conv_pre_activation(*t.input, *t.filter, t.filter_height,
                                               t.filter_width, t.padding, t.area);
    out.at(0, t.i, t.j) = nn::activate(t.activation, net);
  });
  return result;
}

ConvResult parallel_conv_execute(const std::vector<ConvTask>& tasks, std::size_t pool_size) {
  ExecutorPool pool(pool_size);
  return parallel_conv_execute(tasks, pool);
}

}  // namespace bpt::inner
