#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bpt/nn/dataset.hpp"
#include "bpt/nn/network.hpp"
#include "bpt/nn/parameters.hpp"

namespace bpt::nn {

struct GradcheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_relative_error = 0.0;
  /// Parameter index reaching max_relative_error.
  std::size_t worst_index = 0;
  /// First parameter whose analytic or numeric derivative is not finite.
  std::optional<std::size_t> non_finite_index;
  bool passed() const { return checked > 0 && failed == 0; }
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

/// Runs on the analytic gradient before comparison (fault injection in tests).
using GradientHook = std::function<void(std::vector<double>&)>;

/// Compares analytic dE/dw with central differences of step h for every
/// parameter, with E summed over `samples`. The differences come from a
/// separate long double forward pass.
GradcheckReport gradient_check(const Network& net, const ParameterSet& params,
                               std::span<const Sample> samples, double h = 1e-5,
                               double tolerance = 1e-6, const GradientHook& hook = {});

/// Same comparison for the deltas: delta^l_k against -(E(net+h) - E(net-h)) / 2h.
GradcheckReport delta_check(const Network& net, const ParameterSet& params, const Sample& sample,
                            double h = 1e-5, double tolerance = 1e-6);

}  // namespace bpt::nn
