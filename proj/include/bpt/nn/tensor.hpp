#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bpt::nn {

struct Shape3 {
  std::size_t depth = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  constexpr std::size_t size() const { return depth * height * width; }
  constexpr bool operator==(const Shape3&) const = default;

  std::string str() const;
};

/// Dense depth x height x width array; values stored with depth outermost,
/// then rows, then columns.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape, double fill = 0.0);
  Tensor3(Shape3 shape, std::vector<double> values);

  const Shape3& shape() const { return shape_; }
  std::size_t depth() const { return shape_.depth; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t d, std::size_t r, std::size_t c) {
    return values_[(d * shape_.height + r) * shape_.width + c];
  }
  double at(std::size_t d, std::size_t r, std::size_t c) const {
    return values_[(d * shape_.height + r) * shape_.width + c];
  }

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }

  bool all_finite() const;
  bool operator==(const Tensor3& other) const = default;

 private:
  Shape3 shape_{0, 0, 0};
  std::vector<double> values_;
};

}  // namespace bpt::nn
