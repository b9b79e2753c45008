#include "bpt/nn/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bpt/common/error.hpp"
#include "bpt/nn/ops.hpp"

namespace bpt::nn {

namespace {

// Mann-Whitney AUC of one class: rank all scores with midranks for ties.
double class_auc(const std::vector<std::vector<double>>& scores,
                 std::span<const std::uint32_t> labels, std::size_t cls, bool& defined) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a][cls] < scores[b][cls]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]][cls] == scores[order[i]][cls]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == cls) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  defined = positives > 0 && negatives > 0;
  if (!defined) return 0.0;
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

template <typename Get>
Evaluation evaluate_impl(const Network& net, const ParameterSet& params, std::size_t count,
                         std::size_t classes, Get get) {
  if (net.output_size() != classes) {
    throw ShapeError("network has " + std::to_string(net.output_size()) + " outputs for " +
                     std::to_string(classes) + " classes");
  }
  std::vector<std::vector<double>> scores;
  std::vector<std::uint32_t> labels;
  scores.reserve(count);
  labels.reserve(count);
  ForwardTrace trace = make_trace(net);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample& s = get(i);
    forward_into(net, params.values, s.x, trace);
    const auto out = trace.output().values();
    scores.emplace_back(out.begin(), out.end());
    labels.push_back(s.label);
  }
  return evaluate_scores(scores, labels, classes);
}

}  // namespace

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("argmax of an empty score vector");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

Evaluation evaluate_scores(const std::vector<std::vector<double>>& scores,
                           std::span<const std::uint32_t> labels, std::size_t classes) {
  if (scores.size() != labels.size()) throw ShapeError("score and label counts differ");
  if (labels.empty()) throw ValidationError("cannot evaluate an empty dataset");
  Evaluation result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (scores[i].size() != classes) throw ShapeError("score row has the wrong class count");
    if (labels[i] >= classes) throw ValidationError("label out of range");
    for (double v : scores[i]) {
      if (!std::isfinite(v)) throw ValidationError("non-finite score for sample " + std::to_string(i));
    }
    if (argmax(scores[i]) == labels[i]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  double auc_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    bool defined = false;
    const double a = class_auc(scores, labels, c, defined);
    if (defined) {
      auc_sum += a;
      ++used;
    }
  }
  result.auc = used == 0 ? 0.5 : auc_sum / static_cast<double>(used);
  return result;
}

Evaluation evaluate(const Network& net, const ParameterSet& params, std::span<const Sample> samples,
                    std::size_t classes) {
  return evaluate_impl(net, params, samples.size(), classes,
                       [&](std::size_t i) -> const Sample& { return samples[i]; });
}

Evaluation evaluate(const Network& net, const ParameterSet& params,
                    std::span<const Sample* const> samples, std::size_t classes) {
  return evaluate_impl(net, params, samples.size(), classes,
                       [&](std::size_t i) -> const Sample& { return *samples[i]; });
}

}  // namespace bpt::nn
