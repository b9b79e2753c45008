#include "bpt/experiments/experiments.hpp"

#include <charconv>
#include <fstream>

#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"
#include "bpt/experiments/dataset_io.hpp"
#include "bpt/inner/dag.hpp"
#include "bpt/nn/presets.hpp"
#include "json.hpp"

namespace bpt::experiments {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

LoadedData load_data(const ExperimentConfig& c) {
  LoadedData d;
  if (c.format == "idx") {
    d.train = load_idx_dataset(c.train_images, c.train_labels, c.classes, c.train_limit);
    if (!c.test_images.empty() && !c.test_labels.empty()) {
      d.test = load_idx_dataset(c.test_images, c.test_labels, c.classes, c.test_limit);
    }
  } else {
    const CsvLayout layout{c.input_size, c.input_size, c.label_column, c.classes};
    d.train = load_csv_dataset(c.train_csv, layout);
    if (c.train_limit && d.train.size() > c.train_limit) d.train.samples.resize(c.train_limit);
    if (!c.test_csv.empty()) {
      d.test = load_csv_dataset(c.test_csv, layout);
      if (c.test_limit && d.test->size() > c.test_limit) d.test->samples.resize(c.test_limit);
    }
  }
  d.train.classes = c.classes;
  if (d.test) d.test->classes = c.classes;
  return d;
}

std::string Combination::tag() const {
  return std::string(cluster::to_string(strategy)) + "_" + std::string(cluster::to_string(partition)) +
         "_m" + std::to_string(workers);
}

std::vector<Combination> matrix_combinations(const ExperimentConfig& config) {
  std::vector<std::size_t> scales = config.scales;
  if (scales.empty()) scales.push_back(config.cluster.workers);
  std::vector<Combination> out;
  for (auto s : config.strategies) {
    for (auto p : config.partitions) {
      for (std::size_t m : scales) out.push_back({s, p, m});
    }
  }
  return out;
}

cluster::ClusterConfig combination_config(const ExperimentConfig& config, const Combination& combo) {
  cluster::ClusterConfig c = config.cluster;
  c.strategy = combo.strategy;
  c.partition = combo.partition;
  if (combo.workers != c.workers) {
    c.workers = combo.workers;
    c.slowdown.clear();
    c.frequency.clear();
  }
  return c;
}

void write_metrics_jsonl(std::ostream& out, const Combination& combo, const cluster::RunReport& r) {
  nlohmann::ordered_json head;
  head["record"] = "run";
  head["strategy"] = cluster::to_string(combo.strategy);
  head["partition"] = cluster::to_string(combo.partition);
  head["workers"] = combo.workers;
  head["iterations"] = r.iterations;
  head["seed"] = r.config.seed;
  head["time"] = cluster::to_string(r.config.time);
  // Without a barrier, epoch e closes when the last worker finishes its e-th iteration.
  head["epoch_bucketing"] = "per-worker iteration index";
  out << head.dump() << '\n';
  std::size_t e = 0;
  for (std::size_t u = 0; u <= r.updates.size(); ++u) {
    while (e < r.epochs.size() && r.epochs[e].updates == u) out << cluster::to_json_line(r.epochs[e++]) << '\n';
    if (u < r.updates.size()) out << sync::to_json_line(r.updates[u]) << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const RunOutcome> outcomes) {
  out << kSummaryHeader << '\n';
  for (const auto& o : outcomes) {
    const std::string s(cluster::to_string(o.combination.strategy));
    const std::string p(cluster::to_string(o.combination.partition));
    const std::string m = std::to_string(o.combination.workers);
    if (!o.ok) {
      out << "," << s << "," << p << ",,,,,,," << m << ",," << csv_field("failed: " + o.error) << '\n';
      continue;
    }
    for (const auto& e : o.report->epochs) {
      out << e.epoch << ',' << s << ',' << p << ',' << num(e.makespan) << ',' << num(e.sync_wait) << ','
          << num(e.comm_units) << ',' << num(e.balance) << ',' << num(e.accuracy) << ',' << num(e.auc) << ','
          << m << ',' << e.comm_bytes << ",ok\n";
    }
  }
}

RunOutcome run_combination(const ExperimentConfig& config, const Combination& combo,
                           const nn::Network& net, const LoadedData& data,
                           const std::filesystem::path& out) {
  RunOutcome o;
  o.combination = combo;
  o.metrics = out / (combo.tag() + ".jsonl");
  try {
    const auto cc = combination_config(config, combo);
    o.report = cluster::run_training(cc, net, data.train, data.test ? &*data.test : nullptr);
    o.ok = true;
  } catch (const std::exception& e) {
    o.error = e.what();
  }
  std::filesystem::create_directories(out);
  std::ofstream f(o.metrics);
  if (!f) throw RuntimeFailure("cannot write " + o.metrics.string());
  if (o.ok) {
    write_metrics_jsonl(f, combo, *o.report);
  } else {
    nlohmann::ordered_json j;
    j["record"] = "failed";
    j["strategy"] = cluster::to_string(combo.strategy);
    j["partition"] = cluster::to_string(combo.partition);
    j["workers"] = combo.workers;
    j["error"] = o.error;
    f << j.dump() << '\n';
  }
  return o;
}

std::vector<RunOutcome> run_experiment_matrix(const ExperimentConfig& config, const nn::Network& net,
                                              const LoadedData& data, const std::filesystem::path& out) {
  std::vector<RunOutcome> outcomes;
  for (const auto& combo : matrix_combinations(config)) {
    outcomes.push_back(run_combination(config, combo, net, data, out));
  }
  std::ofstream summary(out / "summary.csv");
  if (!summary) throw RuntimeFailure("cannot write " + (out / "summary.csv").string());
  write_summary_csv(summary, outcomes);
  return outcomes;
}

nn::NetworkSpec gradcheck_network(std::string_view preset) {
  nn::PresetScale scale;
  scale.input = nn::Shape3{1, 12, 12};
  return nn::make_preset(preset, scale);
}

GradcheckOutcome gradcheck_command(const nn::NetworkSpec& spec, const GradcheckOptions& options) {
  const nn::Network net(spec);
  Rng rng(derive_seed(options.seed, "gradcheck"));
  std::vector<nn::Sample> samples;
  for (std::size_t k = 0; k < options.samples; ++k) {
    nn::Sample s{nn::Tensor3(net.input_shape()), static_cast<std::uint32_t>(rng.below(net.output_size()))};
    for (double& v : s.x.values()) v = rng.uniform();
    samples.push_back(std::move(s));
  }
  const auto params = nn::init_parameters(net, options.seed);
  nn::GradientHook hook;
  if (options.corrupt_parameter) {
    const std::size_t at = *options.corrupt_parameter;
    if (at >= net.parameter_count()) throw ValidationError("corrupt_parameter out of range");
    hook = [at](std::vector<double>& g) { g[at] += 1e-3; };
  }
  GradcheckOutcome o;
  o.parameters = net.parameter_count();
  o.report = nn::gradient_check(net, params, samples, options.h, options.tolerance, hook);
  o.passed = o.report.passed() && !o.report.non_finite_index;
  if (o.report.non_finite_index) {
    o.message = "non-finite derivative at parameter " + std::to_string(*o.report.non_finite_index);
  } else {
    o.message = std::to_string(o.report.checked) + " parameters checked, " + std::to_string(o.report.failed) +
                " above " + num(options.tolerance) + ", max relative error " +
                num(o.report.max_relative_error) + " at parameter " + std::to_string(o.report.worst_index);
  }
  return o;
}

PlanInspection inspect_plan(const ExperimentConfig& config, const nn::Network& net, std::size_t samples) {
  const auto& c = config.cluster;
  c.validate();
  PlanInspection out;
  out.total_iterations = c.total_iterations(samples);
  if (c.partition == cluster::Partitioning::udpa) {
    out.plan = partition::udpa_plan(samples, c.workers);
    return out;
  }
  std::vector<double> mu;
  for (std::size_t j = 0; j < c.workers; ++j) mu.push_back(c.frequency_of(j));
  partition::IdpaPlanner planner(samples, c.batches, mu, c.predictor);
  for (std::size_t a = 1; a <= c.batches; ++a) {
    planner.plan_next();
    if (a == c.batches) break;
    const auto cum = planner.plan().cumulative();
    std::vector<double> t(c.workers);
    for (std::size_t j = 0; j < c.workers; ++j) {
      t[j] = cluster::simulated_seconds(net, cum[j], c.slowdown_of(j), c.seconds_per_mac);
    }
    planner.record(a, t, cum);
    out.batch_times.push_back(t);
  }
  out.plan = planner.plan();
  return out;
}

void write_task_timelines(const nn::Network& net, std::size_t threads, std::ostream& forward,
                          std::ostream& backward) {
  for (auto phase : {inner::Phase::forward, inner::Phase::backward}) {
    const auto dag = inner::build_task_dag(net, phase);
    const auto timeline = inner::to_timeline(inner::schedule_tasks(dag, threads));
    inner::write_timeline_csv(phase == inner::Phase::forward ? forward : backward, dag, timeline);
  }
}

}  // namespace bpt::experiments
