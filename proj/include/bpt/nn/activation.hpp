#pragma once

#include <string>
#include <string_view>

namespace bpt::nn {

enum class Activation { sigmoid, tanh, relu, linear };

/// f(x)
double activate(Activation kind, double x);

/// f'(x), evaluated at the pre-activation value.
double activate_derivative(Activation kind, double x);

std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

}  // namespace bpt::nn
