#include <chrono>
#include <cmath>
#include <thread>

#include "bpt/cluster/runtime.hpp"
#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"
#include "bpt/nn/ops.hpp"

namespace bpt::cluster {

double simulated_seconds(const nn::Network& net, std::size_t samples, double slowdown,
                         double seconds_per_mac) {
  const double macs = static_cast<double>(net.forward_macs() + net.backward_macs());
  return macs * static_cast<double>(samples) * seconds_per_mac * slowdown;
}

std::vector<std::size_t> sample_order(std::size_t samples, std::uint64_t seed) {
  return Rng(derive_seed(seed, "shuffle")).permutation(samples);
}

std::vector<std::size_t> local_order(std::vector<std::size_t> positions, std::uint64_t seed,
                                     std::size_t worker, std::size_t iteration) {
  Rng rng(derive_seed(seed, "local-order", (std::uint64_t{worker} << 32) | iteration));
  const auto p = rng.permutation(positions.size());
  std::vector<std::size_t> out(positions.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = positions[p[k]];
  return out;
}

EpochResult worker_epoch(inner::InnerTrainer& trainer, std::span<const nn::Sample* const> samples,
                         const nn::ParameterSet& global,
                         std::span<const nn::Sample* const> validation, double slowdown,
                         TimeMode mode, double seconds_per_mac) {
  const nn::Network& net = trainer.network();
  EpochResult r;
  r.params = global;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t classes = net.output_size();
  for (const nn::Sample* s : samples) {
    const auto target = nn::one_hot(s->label, classes);
    const double loss = trainer.train_sample(r.params.values, s->x, target);
    if (!std::isfinite(loss)) throw RuntimeFailure("non-finite loss; local epoch failed");
    r.loss += loss;
  }
  for (double v : r.params.values) {
    if (!std::isfinite(v)) throw RuntimeFailure("non-finite parameters; local epoch failed");
  }
  if (mode == TimeMode::simulated) {
    r.seconds = simulated_seconds(net, samples.size(), slowdown, seconds_per_mac);
  } else if (!samples.empty()) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Stretch real time so that arrival order reflects the slowdown too.
    if (slowdown > 1.0) std::this_thread::sleep_for(std::chrono::duration<double>(wall * (slowdown - 1.0)));
    r.seconds = wall * slowdown;
  }
  r.accuracy = sync::evaluate_local_accuracy(net, r.params, validation);
  return r;
}

void run_worker(const ClusterConfig& config, const nn::Network& net, const nn::Dataset& train,
                std::size_t worker, WorkerLink& link) {
  try {
    const std::size_t total = config.total_iterations(train.size());
    const std::size_t needs_batches = config.partition == Partitioning::idpa ? config.batches : 1;
    const auto order = sample_order(train.size(), config.seed);
    std::vector<const nn::Sample*> validation;
    for (std::size_t idx : sync::validation_slice(train.size(), config.seed, config.validation_cap)) {
      validation.push_back(&train.samples[idx]);
    }
    inner::InnerTrainer trainer(net, config.pool_size);
    nn::ParameterSet global = nn::init_parameters(net, config.seed);
    std::uint32_t base = 0;
    std::vector<std::size_t> positions;
    std::size_t batches = 0;
    bool fresh = true;  // holds the global version for the next iteration

    link.send(Register{static_cast<std::uint32_t>(worker), config.frequency_of(worker)});
    auto handle = [&](Message msg) {
      if (auto* a = std::get_if<AllocBatch>(&msg)) {
        for (const auto& r : a->ranges) {
          for (std::size_t p = r.begin; p < r.end; ++p) positions.push_back(p);
        }
        ++batches;
      } else if (auto* g = std::get_if<GlobalWeights>(&msg)) {
        if (g->values.size() != net.parameter_count()) {
          throw ValidationError("global weights do not match the network");
        }
        global.values = std::move(g->values);
        base = g->version;
        fresh = true;
      } else if (std::holds_alternative<Shutdown>(msg)) {
        return false;
      } else {
        throw ValidationError("unexpected message at worker");
      }
      return true;
    };

    for (std::size_t i = 1; i <= total; ++i) {
      while (!fresh || batches < std::min(i, needs_batches)) {
        if (!handle(link.receive())) return;
      }
      fresh = false;
      std::vector<const nn::Sample*> samples;
      for (std::size_t p : local_order(positions, config.seed, worker, i)) {
        if (p >= order.size()) throw ValidationError("allocated position out of range");
        samples.push_back(&train.samples[order[p]]);
      }
      EpochResult r = worker_epoch(trainer, samples, global, validation, config.slowdown_of(worker),
                                   config.time, config.seconds_per_mac);
      link.send(IterTime{static_cast<std::uint32_t>(worker), static_cast<std::uint32_t>(i), r.seconds});
      link.send(LocalSubmit{static_cast<std::uint32_t>(worker), base, std::move(r.params.values),
                            r.accuracy, r.seconds});
    }
    while (handle(link.receive())) {
    }
    link.close();
  } catch (const std::exception& e) {
    link.fail("worker " + std::to_string(worker) + ": " + e.what());
    throw;
  }
}

}  // namespace bpt::cluster
