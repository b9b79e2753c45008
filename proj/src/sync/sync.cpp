#include "bpt/sync/sync.hpp"

#include <algorithm>
#include <cmath>

#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"
#include "bpt/nn/evaluate.hpp"
#include "json.hpp"

namespace bpt::sync {

nn::ParameterSet sgwu_update(std::span<const nn::ParameterSet> locals,
                             std::span<const double> accuracy) {
  if (locals.empty()) throw ValidationError("SGWU needs at least one local weight set");
  if (locals.size() != accuracy.size()) throw ValidationError("one accuracy per local weight set");
  const std::size_t n = locals[0].size();
  double total = 0.0;
  for (std::size_t j = 0; j < locals.size(); ++j) {
    if (locals[j].size() != n || locals[j].layout != locals[0].layout) {
      throw ValidationError("local weight sets have different layouts");
    }
    if (!(accuracy[j] >= 0.0) || !std::isfinite(accuracy[j])) {
      throw ValidationError("accuracies must be finite and nonnegative");
    }
    total += accuracy[j];
  }
  std::vector<double> coef(locals.size());
  for (std::size_t j = 0; j < locals.size(); ++j) {
    coef[j] = total > 0.0 ? accuracy[j] / total : 1.0 / static_cast<double>(locals.size());
  }
  nn::ParameterSet out{locals[0].layout, std::vector<double>(n, 0.0)};
  for (std::size_t j = 0; j < locals.size(); ++j) {
    const auto& w = locals[j].values;
    for (std::size_t k = 0; k < n; ++k) out.values[k] += w[k] * coef[j];
  }
  return out;
}

double sync_wait_time(const std::vector<std::vector<double>>& t) {
  double wait = 0.0;
  for (const auto& row : t) {
    if (row.size() != t.front().size()) throw ValidationError("ragged duration matrix");
    if (row.empty()) continue;
    for (double v : row) {
      if (!(v >= 0.0)) throw ValidationError("durations must be nonnegative");
    }
    const double mx = *std::max_element(row.begin(), row.end());
    for (double v : row) wait += mx - v;
  }
  return wait;
}

double attenuation_factor(std::uint64_t base, std::uint64_t latest,
                          std::span<const std::uint64_t> peers) {
  if (latest == 0 || peers.empty()) return 1.0;
  const double scale = static_cast<double>(latest);
  double denom = 0.0;
  for (std::uint64_t k : peers) denom += std::exp(static_cast<double>(k) / scale);
  return std::exp(static_cast<double>(base) / scale) / denom;
}

nn::ParameterSet agwu_step(const nn::ParameterSet& latest, const nn::ParameterSet& local,
                           const nn::ParameterSet& base, double gamma, double accuracy) {
  if (local.size() != latest.size() || base.size() != latest.size()) {
    throw ValidationError("weight sets have different sizes");
  }
  const double scale = gamma * accuracy;
  nn::ParameterSet next = latest;
  for (std::size_t k = 0; k < next.size(); ++k) {
    next.values[k] += scale * (local.values[k] - base.values[k]);
  }
  return next;
}

double comm_cost(std::size_t workers, std::size_t iterations, double unit_cost) {
  if (unit_cost < 0.0) throw ValidationError("unit communication cost must be nonnegative");
  return 2.0 * unit_cost * static_cast<double>(workers) * static_cast<double>(iterations);
}

VersionStore::VersionStore(std::size_t capacity, nn::ParameterSet initial) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("version store capacity must be positive");
  ring_.push_back({0, std::make_shared<const nn::ParameterSet>(std::move(initial))});
}

std::shared_ptr<const nn::ParameterSet> VersionStore::get(std::uint64_t version) const {
  const std::uint64_t oldest = ring_.front().version;
  if (version < oldest || version > latest_version()) return nullptr;
  return ring_[version - oldest].params;
}

std::uint64_t VersionStore::push(nn::ParameterSet params) {
  const std::uint64_t v = latest_version() + 1;
  ring_.push_back({v, std::make_shared<const nn::ParameterSet>(std::move(params))});
  if (ring_.size() > capacity_) ring_.erase(ring_.begin());
  return v;
}

std::vector<std::uint64_t> VersionStore::peers(std::size_t worker) const {
  std::vector<std::uint64_t> out;
  for (const auto& [w, v] : base_) {
    if (w != worker) out.push_back(v);
  }
  return out;
}

std::string to_json_line(const UpdateRecord& r) {
  nlohmann::ordered_json j;
  j["record"] = "update";
  j["version"] = r.version;
  j["worker"] = r.worker == static_cast<std::size_t>(-1) ? -1 : static_cast<long long>(r.worker);
  j["base_version"] = r.base_version;
  j["gamma"] = r.gamma;
  j["Q"] = r.accuracy;
  j["delta_norm"] = r.delta_norm;
  j["wall_time"] = r.wall_time;
  if (!r.accepted) j["rejected"] = true;
  return j.dump();
}

ParameterServer::ParameterServer(nn::ParameterSet initial, std::size_t capacity)
    : store_(capacity, std::move(initial)) {}

VersionedWeights ParameterServer::latest() const {
  std::lock_guard lock(mutex_);
  return store_.latest();
}

UpdateRecord ParameterServer::submit(const UpdateMessage& msg) {
  std::lock_guard lock(mutex_);
  UpdateRecord rec;
  rec.worker = msg.worker;
  rec.base_version = msg.base_version;
  rec.accuracy = msg.accuracy;
  const VersionedWeights prev = store_.latest();
  rec.version = prev.version;
  const auto base = store_.get(msg.base_version);
  if (!base) {
    ++rejected_;
    return rec;
  }
  if (msg.params.size() != prev.params->size() || msg.params.layout != prev.params->layout) {
    throw ValidationError("update from worker " + std::to_string(msg.worker) +
                          " does not match the global layout");
  }
  if (!(msg.accuracy >= 0.0 && msg.accuracy <= 1.0)) {
    throw ValidationError("accuracy must lie in [0, 1]");
  }
  const auto peers = store_.peers(msg.worker);
  rec.gamma = attenuation_factor(msg.base_version, prev.version, peers);
  nn::ParameterSet next = agwu_step(*prev.params, msg.params, *base, rec.gamma, msg.accuracy);
  double norm = 0.0;
  for (std::size_t k = 0; k < next.size(); ++k) {
    const double d = next.values[k] - prev.params->values[k];
    norm += d * d;
  }
  rec.delta_norm = std::sqrt(norm);
  rec.version = store_.push(std::move(next));
  store_.set_base(msg.worker, msg.base_version);
  rec.accepted = true;
  ++accepted_;
  return rec;
}

UpdateRecord ParameterServer::merge(std::span<const nn::ParameterSet> locals,
                                    std::span<const double> accuracy) {
  nn::ParameterSet next = sgwu_update(locals, accuracy);
  std::lock_guard lock(mutex_);
  const VersionedWeights prev = store_.latest();
  if (next.size() != prev.params->size()) throw ValidationError("merged set does not match the global layout");
  UpdateRecord rec;
  rec.worker = static_cast<std::size_t>(-1);
  rec.base_version = prev.version;
  rec.gamma = 1.0;
  double total = 0.0;
  for (double q : accuracy) total += q;
  rec.accuracy = total / static_cast<double>(accuracy.size());
  double norm = 0.0;
  for (std::size_t k = 0; k < next.size(); ++k) {
    const double d = next.values[k] - prev.params->values[k];
    norm += d * d;
  }
  rec.delta_norm = std::sqrt(norm);
  rec.version = store_.push(std::move(next));
  rec.accepted = true;
  ++accepted_;
  return rec;
}

std::uint64_t ParameterServer::accepted() const {
  std::lock_guard lock(mutex_);
  return accepted_;
}

std::uint64_t ParameterServer::rejected() const {
  std::lock_guard lock(mutex_);
  return rejected_;
}

std::vector<std::size_t> validation_slice(std::size_t dataset_size, std::uint64_t seed,
                                          std::size_t cap) {
  if (dataset_size == 0) throw ValidationError("cannot draw a validation slice from no samples");
  const std::size_t n = std::min(cap, std::max<std::size_t>(1, dataset_size / 10));
  Rng rng(derive_seed(seed, "validation"));
  auto perm = rng.permutation(dataset_size);
  perm.resize(n);
  return perm;
}

double evaluate_local_accuracy(const nn::Network& net, const nn::ParameterSet& params,
                               std::span<const nn::Sample* const> validation) {
  if (validation.empty()) throw ValidationError("validation set is empty");
  return nn::evaluate(net, params, validation, net.output_size()).accuracy;
}

}  // namespace bpt::sync
