#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bpt/nn/dataset.hpp"
#include "bpt/nn/network.hpp"
#include "bpt/nn/parameters.hpp"

namespace bpt::nn {

struct Evaluation {
  double accuracy = 0.0;
  double auc = 0.0;
};

/// Accuracy of argmax predictions and macro one-vs-rest AUC.
Evaluation evaluate(const Network& net, const ParameterSet& params, std::span<const Sample> samples,
                    std::size_t classes);
Evaluation evaluate(const Network& net, const ParameterSet& params,
                    std::span<const Sample* const> samples, std::size_t classes);

/// Same metrics from a precomputed score table (one row of class scores per sample).
/// Tied scores count 1/2 per positive-negative pair. Classes that lack either
/// positives or negatives are left out of the macro average; with none left the AUC is 0.5.
Evaluation evaluate_scores(const std::vector<std::vector<double>>& scores,
                           std::span<const std::uint32_t> labels, std::size_t classes);

/// Index of the first maximal score.
std::size_t argmax(std::span<const double> scores);

}  // namespace bpt::nn
