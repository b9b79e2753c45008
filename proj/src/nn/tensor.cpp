#include "bpt/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "bpt/common/error.hpp"

namespace bpt::nn {

std::string Shape3::str() const {
  return std::to_string(depth) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Tensor3::Tensor3(Shape3 shape, double fill) : shape_(shape), values_(shape.size(), fill) {}

Tensor3::Tensor3(Shape3 shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("tensor of shape " + shape_.str() + " needs " +
                     std::to_string(shape_.size()) + " values, got " +
                     std::to_string(values_.size()));
  }
}

bool Tensor3::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace bpt::nn
