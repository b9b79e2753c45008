#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "bpt/inner/executor.hpp"
#include "bpt/nn/kernels.hpp"
#include "bpt/nn/parameters.hpp"

namespace bpt::inner {

/// K_C = H_a * W_a, the number of independent element tasks of one filter sweep.
std::size_t count_conv_tasks(nn::Shape3 input, nn::Shape3 filter, std::size_t stride,
                             std::size_t padding);

/// Input window of output element (i, j) in padded coordinates, end-exclusive.
/// Throws ValidationError when (i, j) lies outside the out_height x out_width map.
nn::ConvArea conv_area(std::size_t i, std::size_t j, std::size_t stride, std::size_t filter_height,
                       std::size_t filter_width, std::size_t out_height, std::size_t out_width);

struct ConvTask {
  std::size_t i = 0;
  std::size_t j = 0;
  nn::ConvArea area;
  std::shared_ptr<const nn::Tensor3> input;
  /// Filter weights followed by the bias.
  std::shared_ptr<const std::vector<double>> filter;
  std::size_t filter_height = 0;
  std::size_t filter_width = 0;
  std::size_t padding = 0;
  nn::Activation activation = nn::Activation::linear;
  /// Simulated duration; defaults to the task's multiply-accumulate count.
  double cost = 0.0;
};

std::vector<ConvTask> decompose_conv(std::shared_ptr<const nn::Tensor3> input,
                                     const nn::ConvFilter& filter, std::size_t stride,
                                     std::size_t padding, nn::Activation activation);

/// Sum over consecutive waves of pool_size tasks of the longest task in the wave.
double conv_duration(const std::vector<ConvTask>& tasks, std::size_t pool_size);

struct ConvResult {
  nn::Tensor3 output;
  double duration = 0.0;
};

ConvResult parallel_conv_execute(const std::vector<ConvTask>& tasks, ExecutorPool& pool);
ConvResult parallel_conv_execute(const std::vector<ConvTask>& tasks, std::size_t pool_size);

}  // namespace bpt::inner
