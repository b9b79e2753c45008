#include "bpt/nn/activation.hpp"

#include <cmath>

#include "bpt/common/error.hpp"

namespace bpt::nn {

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::sigmoid:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::tanh:
      return std::tanh(x);
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::linear:
      return x;
  }
  return x;
}

double activate_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::linear:
      return 1.0;
  }
  return 1.0;
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
    case Activation::linear:
      return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "linear") return Activation::linear;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

}  // namespace bpt::nn
