// Acceptance suite: one PASS/FAIL line per criterion. Exit status 0 only when
// every requested criterion passes. Pass criterion numbers to run a subset.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "bpt/cluster/runtime.hpp"
#include "bpt/cluster/wire.hpp"
#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"
#include "bpt/experiments/dataset_io.hpp"
#include "bpt/experiments/experiments.hpp"
#include "bpt/inner/conv_tasks.hpp"
#include "bpt/inner/dag.hpp"
#include "bpt/inner/executor.hpp"
#include "bpt/inner/trainer.hpp"
#include "bpt/nn/evaluate.hpp"
#include "bpt/nn/gradcheck.hpp"
#include "bpt/nn/kernels.hpp"
#include "bpt/nn/ops.hpp"
#include "bpt/nn/presets.hpp"
#include "bpt/partition/partition.hpp"
#include "bpt/sync/sync.hpp"

#ifndef BPT_DATA_DIR
#define BPT_DATA_DIR "data"
#endif

using namespace bpt;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kRealTol = 1e-12;        // formula oracles on reals
constexpr double kGradTol = 1e-6;         // analytic vs central differences
constexpr double kGradStep = 1e-5;
constexpr std::size_t kGradSamples = 4;
constexpr double kWaitReduction = 0.5;    // IDPA wait <= 0.5 x UDPA wait
constexpr double kIdpaBalance = 0.9;
constexpr double kUdpaBalance = 0.6875;   // mean/max of (1, 1, 0.5, 0.25)
constexpr double kUdpaBalanceTol = 0.05;
constexpr double kMinAccuracy = 0.90;
constexpr double kAccuracyGap = 0.02;
constexpr double kLoadRatio = 1.5;
constexpr int kWireCases = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

fs::path data_dir() {
  if (const char* env = std::getenv("BPT_DATA_DIR")) return env;
  return BPT_DATA_DIR;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpt_accept_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nn::Tensor3 random_tensor(nn::Shape3 s, Rng& rng) {
  nn::Tensor3 t(s);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

// Counts individual oracle checks and remembers the first few failures.
class Tally {
 public:
  void exact(bool ok, const std::string& what) {
    ++total_;
    if (!ok) fail(what);
  }
  void real(double got, double want, const std::string& what) {
    const double err = std::abs(got - want) / std::max(std::abs(want), 1e-300);
    exact(want == 0.0 ? got == 0.0 : err <= kRealTol, what + " (got " + fmt(got) + ", want " + fmt(want) + ")");
  }
  Outcome outcome() const {
    Outcome o;
    o.pass = failed_ == 0 && total_ > 0;
    o.detail = std::to_string(total_ - failed_) + "/" + std::to_string(total_) + " checks";
    if (!failures_.empty()) o.detail += "; first failure: " + failures_.front();
    return o;
  }

 private:
  void fail(const std::string& what) {
    ++failed_;
    if (failures_.size() < 5) failures_.push_back(what);
  }
  int total_ = 0;
  int failed_ = 0;
  std::vector<std::string> failures_;
};

// ---------------------------------------------------------------- criterion 1

nn::ParameterSet scalar(double v) { return {"s", {v}}; }

Outcome formula_oracles() {
  Tally t;
  using nn::Shape3;
  using nn::Tensor3;

  // Shapes and element kernels.
  t.exact(nn::output_shape({1, 5, 5}, {1, 3, 3}, 1, 0) == Shape3{1, 3, 3}, "output shape 5x5/3x3");
  t.exact(nn::output_shape({1, 28, 28}, {1, 5, 5}, 1, 2) == Shape3{1, 28, 28}, "output shape 28x28/5x5 P2");
  {
    const Tensor3 x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const nn::ConvFilter ones{Tensor3({1, 2, 2}, 1.0), 0.0};
    const Tensor3 y = nn::conv_forward(x, ones, 1, 0, nn::Activation::linear);
    const double want[] = {12, 16, 24, 28};
    for (std::size_t k = 0; k < 4; ++k) t.real(y[k], want[k], "conv hand sum " + std::to_string(k));
  }
  const Tensor3 square({1, 2, 2}, {1, 2, 3, 4});
  t.real(nn::pool_forward(square, nn::PoolKind::max, 2, 2)[0], 4.0, "max pool");
  t.real(nn::pool_forward(square, nn::PoolKind::mean, 2, 2)[0], 2.5, "mean pool");
  t.real(nn::dense_forward(std::vector<double>{2, 3}, nn::DenseParams{1, 2, {1, 1}, {1}}, nn::Activation::linear)[0],
         6.0, "dense dot product");
  t.real(nn::loss_squared_error(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}), 0.5, "squared error");

  // Deltas and gradients.
  {
    const nn::Network net({{1, 1, 1}, {nn::DenseSpec{1, nn::Activation::linear}}, 0.1});
    const nn::ParameterSet p{net.descriptor(), {1.0, 0.0}};
    const auto trace = nn::forward(net, p, Tensor3({1, 1, 1}, 0.5));
    t.real(nn::backward_pass(net, p, trace, std::vector<double>{1.0}).back()[0], 1.0, "output delta");
  }
  {
    nn::NetworkSpec spec{{1, 8, 8},
                         {nn::ConvSpec{2, 3, 3, 1, 1, nn::Activation::tanh}, nn::PoolSpec{nn::PoolKind::max, 2, 2},
                          nn::ConvSpec{2, 3, 3, 1, 0, nn::Activation::tanh}, nn::DenseSpec{3, nn::Activation::sigmoid}},
                         0.1};
    const nn::Network net(spec);
    const auto p = nn::init_parameters(net, 31);
    Rng rng(32);
    for (int k = 0; k < 3; ++k) {
      nn::Sample s{random_tensor(net.input_shape(), rng), static_cast<std::uint32_t>(rng.below(3))};
      const auto r = nn::delta_check(net, p, s, kGradStep, kGradTol);
      t.exact(r.passed(), "delta finite differences, sample " + std::to_string(k) + " max rel err " +
                              fmt(r.max_relative_error));
    }
  }
  t.real(nn::conv_weight_correlation(square, Tensor3({1, 2, 2}, 1.0), 1, 1, 1, 0)[0], 10.0, "weight gradient");
  t.real(nn::delta_sum(Tensor3({1, 2, 2}, 1.0)), 4.0, "bias gradient");
  t.real(nn::sgd_step(scalar(1.0), scalar(0.5), 0.1).values[0], 0.95, "sgd step");
  {
    const std::vector<std::vector<double>> table{{0.9, 0.1}, {0.4, 0.6}, {0.4, 0.3}, {0.2, 0.8}};
    const std::vector<std::uint32_t> y{0, 0, 1, 1};
    double macro = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      double wins = 0.0, pairs = 0.0;
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          if (y[i] != c || y[j] == c) continue;
          pairs += 1;
          wins += table[i][c] > table[j][c] ? 1.0 : table[i][c] == table[j][c] ? 0.5 : 0.0;
        }
      macro += wins / pairs;
    }
    t.real(nn::evaluate_scores(table, y, 2).auc, macro / 2, "AUC pair counting");
  }

  // Convolution decomposition and parallel duration.
  t.exact(inner::count_conv_tasks({1, 5, 5}, {1, 3, 3}, 1, 0) == 9, "K_C 5x5/3x3");
  t.exact(inner::count_conv_tasks({1, 28, 28}, {1, 5, 5}, 1, 2) == 784, "K_C 28x28/5x5");
  t.exact(inner::conv_area(1, 2, 2, 3, 3, 4, 4) == nn::ConvArea{2, 5, 4, 7}, "conv area (1,2) S2");
  t.exact(inner::conv_area(2, 0, 1, 2, 2, 3, 3) == nn::ConvArea{2, 4, 0, 2}, "conv area (2,0) S1");
  {
    Rng rng(4);
    auto x = std::make_shared<const Tensor3>(random_tensor({1, 5, 5}, rng));
    const nn::ConvFilter f{random_tensor({1, 3, 3}, rng), 0.0};
    auto tasks = inner::decompose_conv(x, f, 1, 0, nn::Activation::linear);
    std::set<std::pair<std::size_t, std::size_t>> windows;
    for (const auto& task : tasks) {
      t.exact(task.area.r_end - task.area.r_begin == 3 && task.area.c_end - task.area.c_begin == 3, "task window");
      windows.insert({task.area.r_begin, task.area.c_begin});
    }
    t.exact(tasks.size() == 9 && windows.size() == 9, "9 tasks tile all windows");
    for (auto& task : tasks) task.cost = 2.5;
    t.real(inner::conv_duration(tasks, 9), 2.5, "T_Conv with equal durations");
  }

  // Task graphs.
  {
    nn::NetworkSpec two{{1, 9, 9},
                        {nn::ConvSpec{2, 3, 3, 1, 1, nn::Activation::tanh},
                         nn::ConvSpec{2, 3, 3, 2, 0, nn::Activation::tanh}},
                        0.1};
    const nn::Network net(two);
    const auto dag = inner::build_task_dag(net, inner::Phase::forward);
    const std::size_t h1 = net.output_shape(0).height;
    for (const auto& n : dag.nodes) {
      if (n.layer != 1) continue;
      std::set<std::size_t> rows, deps;
      for (std::size_t i = n.begin; i < n.end; ++i)
        for (std::size_t m = 0; m < 3; ++m)
          if (i * 2 + m < h1) rows.insert(i * 2 + m);
      for (std::size_t d : n.deps) deps.insert(dag.nodes[d].begin);
      t.exact(rows == deps, "receptive-field dependencies");
    }
    for (const auto& row : nn::preset_table()) {
      const nn::Network preset(nn::make_preset(row.name));
      for (auto ph : {inner::Phase::forward, inner::Phase::backward}) {
        auto g = inner::build_task_dag(preset, ph);
        bool ok = true;
        try {
          inner::assign_priorities(g);
        } catch (const std::exception&) {
          ok = false;
        }
        t.exact(ok, std::string(row.name) + " DAG acyclic");
      }
    }
    auto make = [](std::vector<std::vector<std::size_t>> deps) {
      inner::TaskDag g;
      for (std::size_t i = 0; i < deps.size(); ++i) {
        inner::TaskNode n;
        n.id = i;
        n.deps = deps[i];
        n.cost = 1.0;
        g.nodes.push_back(n);
      }
      inner::assign_priorities(g);
      return g;
    };
    const auto chain = make({{}, {0}, {1}});
    t.exact(chain.nodes[0].priority > chain.nodes[1].priority && chain.nodes[1].priority > chain.nodes[2].priority,
            "chain priorities decrease");
    const auto diamond = make({{}, {0}, {0}, {1, 2}});
    t.exact(diamond.nodes[1].priority == diamond.nodes[2].priority, "diamond middle shares priority");
    const auto four = inner::schedule_tasks(make({{}, {}, {}, {}}), 2);
    t.exact(four.queues[0].size() == 2 && four.queues[1].size() == 2, "4 tasks on 2 executors");
  }

  // Partitioning.
  using Sizes = std::vector<std::size_t>;
  t.exact(partition::initial_allocation(100, 4, 2, std::vector<double>{2, 1}) == Sizes{16, 9}, "initial (16,9)");
  t.exact(partition::initial_allocation(90, 3, 3, std::vector<double>{1, 1, 2}) == Sizes{7, 7, 16}, "initial (7,7,16)");
  t.real(partition::predict_iteration_time(100, 4, 2, 2, std::vector<double>{1, 2}), 37.5, "T_2");
  t.real(partition::predict_iteration_time(100, 4, 3, 2, std::vector<double>{1, 2}), 56.25, "T_3");
  {
    partition::IdpaPlanner planner(100, 4, {2, 1}, partition::Predictor::mean_rate);
    planner.plan_next();
    planner.record(1, std::vector<double>{16.0, 18.0});
    t.exact(planner.plan_next() == Sizes{21, 4}, "n(2) = (21,4)");
    t.exact(planner.plan().cumulative() == Sizes{37, 13}, "cumulative (37,13)");
    planner.record(2, std::vector<double>{21.0, 8.0});
    t.exact(planner.plan_next() == Sizes{19, 6}, "n(3) = (19,6)");
    t.exact(planner.plan().cumulative() == Sizes{56, 19}, "cumulative (56,19)");
    planner.record(3, std::vector<double>{19.0, 12.0});
    planner.plan_next();
    for (const auto& row : planner.plan().alloc) t.exact(row[0] + row[1] == 25, "batch sum 25");
  }
  {
    partition::IdpaPlanner planner(1000, 5, {1, 1, 1, 1});
    for (std::size_t a = 1; a <= 5; ++a) {
      const auto alloc = planner.plan_next();
      std::vector<double> times(4);
      for (std::size_t j = 0; j < 4; ++j) times[j] = double(alloc[j]) * 0.5;
      planner.record(a, times);
    }
    const auto c = planner.plan().cumulative();
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    t.exact(*hi - *lo <= 1, "homogeneous times give equal shares +-1");
  }
  auto budget = [&](std::size_t k, std::size_t a, std::size_t dk, std::size_t total) {
    const auto b = partition::remaining_iterations(k, a, 1000);
    t.exact(b.remaining == dk && b.total == total,
            "K=" + std::to_string(k) + " A=" + std::to_string(a) + " remaining iterations");
  };
  budget(100, 10, 94, 104);
  budget(100, 4, 97, 101);
  budget(10, 3, 8, 11);
  t.exact(partition::udpa_allocation(10, 3) == Sizes{3, 3, 4}, "UDPA remainder");

  // Weight synchronisation.
  {
    const std::vector<nn::ParameterSet> locals{scalar(1), scalar(3)};
    t.real(sync::sgwu_update(locals, std::vector<double>{0.8, 0.2}).values[0], 1.4, "accuracy-weighted merge");
  }
  t.real(sync::sync_wait_time({{3, 5}}), 2.0, "sync wait m=2 K=1");
  t.real(sync::sync_wait_time({{1, 2, 3}, {3, 3, 3}}), 3.0, "sync wait m=3 K=2");
  t.real(sync::attenuation_factor(2, 4, std::vector<std::uint64_t>{4}), std::exp(0.5) / std::exp(1.0), "gamma (4,2,{4})");
  t.real(sync::attenuation_factor(1, 2, std::vector<std::uint64_t>{1, 2}),
         std::exp(0.5) / (std::exp(0.5) + std::exp(1.0)), "gamma (2,1,{1,2})");
  t.real(sync::agwu_step(scalar(2.0), scalar(3.0), scalar(2.5), 0.5, 0.8).values[0], 2.2, "incremental merge");
  t.real(sync::comm_cost(2, 3, 1.0), 12.0, "comm cost m=2 K=3");
  t.real(sync::comm_cost(30, 100, 1.0), 6000.0, "comm cost m=30 K=100");
  {
    const nn::Network net({{1, 6, 6}, {nn::DenseSpec{10, nn::Activation::sigmoid}}, 0.1});
    const auto p = nn::init_parameters(net, 12);
    Rng rng(9);
    std::vector<nn::Sample> samples;
    for (int k = 0; k < 2000; ++k) samples.push_back({random_tensor({1, 6, 6}, rng), std::uint32_t(rng.below(10))});
    std::vector<const nn::Sample*> view;
    for (const auto& s : samples) view.push_back(&s);
    const double q = sync::evaluate_local_accuracy(net, p, view);
    t.exact(std::abs(q - 0.1) < 5 * std::sqrt(0.1 * 0.9 / 2000), "random model near chance: " + fmt(q));
  }
  {
    sync::ParameterServer server(scalar(0.0), 4);
    const std::vector<nn::ParameterSet> locals{scalar(1), scalar(3)};
    const auto r = server.merge(locals, std::vector<double>{0.8, 0.2});
    t.exact(r.version == 1, "barrier merge creates one version");
    t.real(server.latest().params->values[0], 1.4, "barrier merge value");
  }
  t.real(cluster::workload_balance(std::vector<double>{1, 1, 0.5, 0.25}), 0.6875, "balance (1,1,0.5,0.25)");

  // Runtime accounting on a small network.
  {
    const nn::Network net(nn::parse_descriptor(
        "in=1x8x8;conv=2x3x3,s1,p1,tanh;pool=max,2,2;dense=6,tanh;dense=3,sigmoid", 0.1));
    Rng rng(3);
    nn::Dataset data;
    data.classes = 3;
    for (int k = 0; k < 90; ++k) data.samples.push_back({random_tensor({1, 8, 8}, rng), std::uint32_t(rng.below(3))});
    cluster::ClusterConfig c;
    c.workers = 3;
    c.batches = 3;
    c.iterations = 5;
    c.slowdown = {1.0, 2.0, 0.5};
    c.strategy = cluster::Strategy::sgwu;
    const auto sg = cluster::run_training(c, net, data);
    t.exact(sg.versions == sg.iterations, "SGWU: one version per epoch");
    t.real(sg.sync_wait, sync::sync_wait_time(cluster::measure_iteration_times(sg)), "runtime idle equals sync wait");
    c.strategy = cluster::Strategy::agwu;
    const auto ag = cluster::run_training(c, net, data);
    t.exact(ag.versions == c.workers * ag.iterations, "AGWU: one version per completion");

    inner::InnerTrainer trainer(net, 1);
    std::vector<const nn::Sample*> view;
    for (const auto& s : data.samples) view.push_back(&s);
    const auto global = nn::init_parameters(net, 5);
    const auto a = cluster::worker_epoch(trainer, view, global, view, 1.0, cluster::TimeMode::simulated);
    const auto b = cluster::worker_epoch(trainer, view, global, view, 4.0, cluster::TimeMode::simulated);
    t.exact(a.params == b.params, "slowdown factor does not change numerics");
    t.real(b.seconds, 4.0 * a.seconds, "slowdown scales simulated time");
  }

  // Wire layout fixture.
  {
    const std::vector<std::uint8_t> expect{0x42, 0x50, 0x54, 0x43, 0x02, 0x18, 0x00, 0x00, 0x00, 0x01,
                                           0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
                                           0x00, 0x00, 0x00, 0xf0, 0x3f, 0x00, 0x00, 0x00, 0x00, 0x00,
                                           0x00, 0x00, 0x40, 0x7a, 0x53, 0xfe, 0x24};
    t.exact(cluster::encode_message(cluster::GlobalWeights{1, {1.0, 2.0}}) == expect, "GlobalWeights bytes");
  }

  // Dataset fixtures.
  {
    const fs::path dir = scratch("fixtures");
    auto be32 = [](std::vector<unsigned char>& out, std::uint32_t v) {
      for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>(v >> s));
    };
    std::vector<unsigned char> img, lab;
    for (std::uint32_t v : {0x803u, 2u, 28u, 28u}) be32(img, v);
    img.resize(img.size() + 2 * 784, 0);
    img[16] = 255;
    for (std::uint32_t v : {0x801u, 2u}) be32(lab, v);
    lab.push_back(3);
    lab.push_back(1);
    std::ofstream(dir / "img", std::ios::binary).write(reinterpret_cast<const char*>(img.data()), img.size());
    std::ofstream(dir / "lab", std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), lab.size());
    const auto d = experiments::load_idx_dataset(dir / "img", dir / "lab", 10);
    t.exact(d.size() == 2 && d.samples[0].x.shape() == Shape3{1, 28, 28} && d.samples[1].label == 1,
            "IDX fixture: 2 samples of 1x28x28");
    t.real(d.samples[0].x[0], 1.0, "IDX pixel 255 scales to 1");

    nn::Dataset rows;
    rows.classes = 3;
    Rng rng(6);
    for (std::uint32_t k = 0; k < 4; ++k) rows.samples.push_back({random_tensor({1, 2, 2}, rng), k % 3});
    experiments::save_csv_dataset(dir / "rows.csv", rows);
    const auto back = experiments::load_csv_dataset(dir / "rows.csv", {2, 2, -1, 3});
    t.exact(back.samples == rows.samples, "4-row CSV round trip");
    fs::remove_all(dir);
  }
  return t.outcome();
}

// ---------------------------------------------------------------- criterion 2

Outcome gradient_correctness() {
  experiments::GradcheckOptions o;
  o.samples = kGradSamples;
  o.h = kGradStep;
  o.tolerance = kGradTol;
  const auto r = experiments::gradcheck_command(experiments::gradcheck_network("case1"), o);
  return {r.passed && r.report.checked == r.parameters, "case1 at 12x12, " + r.message};
}

// ---------------------------------------------------------------- criterion 3

Outcome parallel_equals_sequential() {
  Rng rng(2024);
  const nn::Activation acts[] = {nn::Activation::tanh, nn::Activation::sigmoid, nn::Activation::relu,
                                 nn::Activation::linear};
  const std::size_t sizes[] = {1, 2, 8};
  int mismatches = 0;
  int comparisons = 0;
  for (int layer = 0; layer < 100; ++layer) {
    const std::size_t d = 1 + rng.below(3), h = 6 + rng.below(11);
    const std::size_t fh = 1 + 2 * rng.below(3);
    const std::size_t pad = rng.below(fh / 2 + 1);
    std::size_t stride = 1 + rng.below(2);
    if ((h + 2 * pad - fh) % stride != 0) stride = 1;
    const nn::ConvSpec conv{1 + rng.below(3), fh, fh, stride, pad, acts[rng.below(4)]};
    nn::NetworkSpec spec{{d, h, h}, {conv}, 0.05};
    // A second conv and a dense output put the random layer inside the backward pass.
    spec.layers.push_back(nn::ConvSpec{2, 1, 1, 1, 0, nn::Activation::tanh});
    spec.layers.push_back(nn::DenseSpec{3, nn::Activation::sigmoid});
    const nn::Network net(spec);
    const auto params = nn::init_parameters(net, 100 + layer);
    const nn::Tensor3 x = random_tensor(net.input_shape(), rng);
    const auto target = nn::one_hot(rng.below(3), 3);
    const auto trace = nn::forward(net, params, x);
    const auto deltas = nn::backward_pass(net, params, trace, target);

    auto input = std::make_shared<const nn::Tensor3>(x);
    const auto first = std::get<std::vector<nn::ConvFilter>>(nn::unflatten(net, params)[0]);
    for (std::size_t size : sizes) {
      inner::ExecutorPool pool(size);
      for (std::size_t f = 0; f < first.size(); ++f) {
        const auto got = inner::parallel_conv_execute(
            inner::decompose_conv(input, first[f], conv.stride, conv.padding, conv.activation), pool);
        ++comparisons;
        if (!(got.output == nn::conv_forward(x, first[f], conv.stride, conv.padding, conv.activation))) ++mismatches;
      }
      inner::InnerTrainer trainer(net, size);
      ++comparisons;
      if (!(trainer.forward(params.values, x).outputs == trace.outputs)) ++mismatches;
      auto updated = params.values;
      trainer.train_sample(updated, x, target);
      ++comparisons;
      if (!(trainer.last_deltas() == deltas)) ++mismatches;
    }
  }
  return {mismatches == 0, std::to_string(comparisons - mismatches) + "/" + std::to_string(comparisons) +
                               " bit-identical comparisons over 100 layers, pools {1,2,8}"};
}

// ---------------------------------------------------------------- criterion 4

Outcome idpa_conservation() {
  Rng rng(4242);
  int bad_sum = 0, bad_share = 0, bad_range = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(8);
    const std::size_t a = 1 + rng.below(10);
    const std::size_t n = a * m + rng.below(20000);
    std::vector<double> speed(m);
    for (auto& s : speed) s = rng.uniform(0.25, 4.0);
    // Nominal frequencies match the stationary speeds.
    partition::IdpaPlanner planner(n, a, speed);
    for (std::size_t b = 1; b <= a; ++b) {
      const auto alloc = planner.plan_next();
      std::vector<double> t(m);
      for (std::size_t j = 0; j < m; ++j) t[j] = double(alloc[j]) / speed[j];
      planner.record(b, t);
    }
    const auto& plan = planner.plan();
    for (std::size_t b = 0; b < a; ++b) {
      std::size_t sum = 0;
      for (std::size_t j = 0; j < m; ++j) {
        sum += plan.alloc[b][j];
        if (plan.alloc[b][j] > n) ++bad_range;
      }
      const std::size_t tail = b + 1 == a ? n % a : 0;
      if (sum != n / a + tail) ++bad_sum;
    }
    const auto c = plan.cumulative();
    const double total_speed = std::accumulate(speed.begin(), speed.end(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double dev = std::abs(double(c[j]) - double(n) * speed[j] / total_speed);
      worst = std::max(worst, dev / double(m * a));
      if (dev > double(m * a)) ++bad_share;
    }
  }
  return {bad_sum == 0 && bad_share == 0 && bad_range == 0,
          "1000 instances: " + std::to_string(bad_sum) + " bad batch sums, " + std::to_string(bad_range) +
              " out-of-range allocations, " + std::to_string(bad_share) +
              " share deviations above m*A (worst " + fmt(worst) + " x m*A)"};
}

// ------------------------------------------------------------ criteria 5 and 6

struct StrategyRuns {
  bool ok = false;
  std::string error;
  // [partition][strategy]: idpa/udpa x sgwu/agwu.
  cluster::RunReport run[2][2];
};

experiments::ExperimentConfig mnist_config(std::size_t train_limit, std::size_t test_limit) {
  const fs::path d = data_dir();
  return experiments::parse_config(
      {}, {{"train_images", (d / "mnist-train-images.idx3-ubyte").string()},
           {"train_labels", (d / "mnist-train-labels.idx1-ubyte").string()},
           {"test_images", test_limit ? (d / "mnist-test-images.idx3-ubyte").string() : ""},
           {"test_labels", test_limit ? (d / "mnist-test-labels.idx1-ubyte").string() : ""},
           {"train_limit", std::to_string(train_limit)},
           {"test_limit", std::to_string(test_limit)}});
}

StrategyRuns strategy_matrix(const std::vector<double>& slowdown) {
  StrategyRuns out;
  try {
    auto config = mnist_config(400, 0);
    const nn::Network net(config.network());
    const auto data = experiments::load_data(config);
    auto c = config.cluster;
    c.workers = 4;
    c.iterations = 20;
    c.batches = 4;
    c.seed = 7;
    c.slowdown = slowdown;
    c.time = cluster::TimeMode::simulated;
    for (int p = 0; p < 2; ++p) {
      for (int s = 0; s < 2; ++s) {
        c.partition = p == 0 ? cluster::Partitioning::idpa : cluster::Partitioning::udpa;
        c.strategy = s == 0 ? cluster::Strategy::sgwu : cluster::Strategy::agwu;
        out.run[p][s] = cluster::run_training(c, net, data.train);
      }
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

Outcome strategy_comparison(const StrategyRuns& r) {
  if (!r.ok) return {false, "runs failed: " + r.error};
  const auto& si = r.run[0][0];
  const auto& ai = r.run[0][1];
  const auto& su = r.run[1][0];
  const auto& au = r.run[1][1];
  const bool a = su.sync_wait > 0.0 && si.sync_wait <= kWaitReduction * su.sync_wait;
  const bool b = ai.makespan <= si.makespan && au.makespan <= su.makespan;
  const bool c = si.balance >= kIdpaBalance && ai.balance >= kIdpaBalance &&
                 std::abs(su.balance - kUdpaBalance) <= kUdpaBalanceTol &&
                 std::abs(au.balance - kUdpaBalance) <= kUdpaBalanceTol;
  const std::string d = std::string("(a) ") + (a ? "ok" : "FAILS") + " wait udpa " + fmt(su.sync_wait) + " idpa " +
                  fmt(si.sync_wait) + " (" + fmt(100.0 * (1.0 - si.sync_wait / su.sync_wait)) + "% less); (b) " +
                  (b ? "ok" : "FAILS") + " makespan agwu/sgwu idpa " + fmt(ai.makespan) + "/" + fmt(si.makespan) +
                  " udpa " + fmt(au.makespan) + "/" + fmt(su.makespan) + "; (c) " + (c ? "ok" : "FAILS") +
                  " balance idpa " + fmt(si.balance) + "/" + fmt(ai.balance) + " udpa " + fmt(su.balance) + "/" +
                  fmt(au.balance);
  return {a && b && c, d};
}

Outcome communication_accounting(const std::vector<const StrategyRuns*>& matrices) {
  int runs = 0, bad = 0;
  std::string detail;
  for (const auto* r : matrices) {
    if (!r->ok) return {false, "runs failed: " + r->error};
    for (const auto& row : r->run) {
      for (const auto& run : row) {
        ++runs;
        const std::uint64_t want = 2 * run.config.workers * run.iterations;
        if (run.transfers != want ||
            run.comm_units != sync::comm_cost(run.config.workers, run.iterations, run.config.unit_cost)) {
          ++bad;
        }
        if (detail.empty()) detail = "e.g. " + std::to_string(run.transfers) + " = 2*4*" + std::to_string(run.iterations);
      }
    }
  }
  return {bad == 0, std::to_string(runs - bad) + "/" + std::to_string(runs) +
                        " runs with transfers = 2*m*K' (K' executed iterations), " + detail};
}

// ---------------------------------------------------------------- criterion 7

Outcome learning_sanity() {
  try {
    auto config = mnist_config(8000, 2000);
    const nn::Network net(config.network());
    const auto data = experiments::load_data(config);
    if (data.train.size() != 8000 || !data.test || data.test->size() != 2000) {
      return {false, "expected an 8000/2000 MNIST split in " + data_dir().string()};
    }
    auto c = config.cluster;
    c.iterations = 5;
    c.seed = 1;
    c.partition = cluster::Partitioning::udpa;
    c.time = cluster::TimeMode::simulated;
    c.workers = 1;
    c.strategy = cluster::Strategy::sgwu;
    const auto single = cluster::run_training(c, net, data.train, &*data.test);
    // Four workers over a quarter each for the same number of epochs: equal sample passes.
    c.workers = 4;
    c.strategy = cluster::Strategy::agwu;
    const auto multi = cluster::run_training(c, net, data.train, &*data.test);
    const double a1 = single.epochs.back().accuracy;
    const double a4 = multi.epochs.back().accuracy;
    return {a1 >= kMinAccuracy && a4 >= a1 - kAccuracyGap,
            "case1 28x28, 5 epochs: single worker " + fmt(a1) + ", 4-worker AGWU " + fmt(a4) + " (gap " +
                fmt(100.0 * (a1 - a4)) + " pp)"};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

// ---------------------------------------------------------------- criterion 8

inner::TaskDag random_dag(Rng& rng, std::size_t max_nodes) {
  const std::size_t n = 1 + rng.below(max_nodes);
  inner::TaskDag g;
  for (std::size_t i = 0; i < n; ++i) {
    inner::TaskNode node;
    node.id = i;
    for (std::size_t j = 0; j < i; ++j)
      if (rng.below(6) == 0) node.deps.push_back(j);
    node.cost = 1.0 + double(rng.below(20));
    g.nodes.push_back(node);
  }
  inner::assign_priorities(g);
  return g;
}

Outcome scheduler_safety() {
  Rng rng(88);
  int early = 0, split_level = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = random_dag(rng, 40);
    const auto as = inner::schedule_tasks(g, 1 + rng.below(8));
    for (const auto& n : g.nodes) {
      for (std::size_t d : n.deps)
        if (as.start[n.id] < as.finish[d]) ++early;
      for (const auto& m : g.nodes)
        if (m.level == n.level && m.priority != n.priority) ++split_level;
    }
  }
  // The threaded executor on real threads.
  int executed_early = 0;
  for (std::size_t size : {2, 8}) {
    inner::ExecutorPool pool(size);
    for (int trial = 0; trial < 100; ++trial) {
      const auto g = random_dag(rng, 40);
      std::vector<std::atomic<int>> done(g.size());
      std::atomic<int> violations{0};
      pool.run(g, [&](const inner::TaskNode& n) {
        for (std::size_t d : n.deps)
          if (!done[d]) ++violations;
        done[n.id] = 1;
      });
      executed_early += violations.load();
    }
  }
  inner::TaskDag flat;
  for (std::size_t i = 0; i < 64; ++i) {
    inner::TaskNode n;
    n.id = i;
    n.cost = 1.0;
    flat.nodes.push_back(n);
  }
  inner::assign_priorities(flat);
  const auto as = inner::schedule_tasks(flat, 8);
  const double ratio = *std::max_element(as.load.begin(), as.load.end()) /
                       *std::min_element(as.load.begin(), as.load.end());
  return {early == 0 && split_level == 0 && executed_early == 0 && ratio <= kLoadRatio,
          "1000 DAGs: " + std::to_string(early) + " early starts, " + std::to_string(split_level) +
              " same-level priority splits; 200 threaded runs: " + std::to_string(executed_early) +
              " early executions; 64 tasks on 8 executors max/min load " + fmt(ratio)};
}

// ---------------------------------------------------------------- criterion 9

cluster::Message random_message(Rng& rng) {
  auto doubles = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) {
      std::uint64_t bits = rng.next();
      std::memcpy(&x, &bits, 8);
      if (std::isnan(x)) x = rng.uniform(-1e6, 1e6);
    }
    return v;
  };
  const auto u32 = [&] { return static_cast<std::uint32_t>(rng.next()); };
  switch (rng.below(6)) {
    case 0:
      return cluster::Register{u32(), rng.uniform(0.1, 10)};
    case 1: {
      cluster::AllocBatch a{static_cast<std::uint16_t>(rng.next()), u32(), {}};
      for (std::size_t k = rng.below(4); k > 0; --k) {
        const std::size_t b = rng.below(1u << 30);
        a.ranges.push_back({b, b + rng.below(1000)});
      }
      return a;
    }
    case 2:
      return cluster::GlobalWeights{u32(), doubles(rng.below(40))};
    case 3:
      return cluster::LocalSubmit{u32(), u32(), doubles(rng.below(40)), rng.uniform(), rng.uniform(0, 100)};
    case 4:
      return cluster::IterTime{u32(), u32(), rng.uniform(0, 1e3)};
    default:
      return cluster::Shutdown{};
  }
}

Outcome protocol_and_determinism() {
  Rng rng(99);
  int failures = 0;
  std::vector<std::uint8_t> stream;
  std::vector<cluster::Message> sent;
  for (int k = 0; k < kWireCases; ++k) {
    const auto msg = random_message(rng);
    const auto frame = cluster::encode_message(msg);
    try {
      if (!(cluster::decode_message(frame) == msg)) ++failures;
    } catch (const std::exception&) {
      ++failures;
    }
    sent.push_back(msg);
    stream.insert(stream.end(), frame.begin(), frame.end());
  }
  cluster::FrameReader reader;
  std::size_t got = 0;
  for (std::size_t off = 0; off < stream.size();) {
    const std::size_t n = std::min<std::size_t>(stream.size() - off, 1 + rng.below(500));
    reader.feed(std::span<const std::uint8_t>(stream).subspan(off, n));
    off += n;
    while (auto f = reader.next_frame()) {
      if (got >= sent.size() || !(cluster::decode_message(*f) == sent[got])) ++failures;
      ++got;
    }
  }
  if (got != sent.size()) ++failures;

  bool identical = false;
  std::string why;
  try {
    auto config = mnist_config(200, 100);
    config.cluster.iterations = 3;
    config.cluster.slowdown = {1, 1, 0.5, 0.25};
    config.cluster.time = cluster::TimeMode::simulated;
    config.scales = {4};
    const nn::Network net(config.network());
    const auto data = experiments::load_data(config);
    const fs::path dir = scratch("determinism");
    experiments::run_experiment_matrix(config, net, data, dir / "a");
    experiments::run_experiment_matrix(config, net, data, dir / "b");
    identical = true;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
      ++files;
      if (slurp(entry.path()) != slurp(dir / "b" / entry.path().filename())) {
        identical = false;
        why = entry.path().filename().string() + " differs";
      }
    }
    if (files != 5) identical = false, why = std::to_string(files) + " output files";
    if (why.empty()) why = std::to_string(files) + " metrics files byte-identical";
    fs::remove_all(dir);
  } catch (const std::exception& e) {
    why = e.what();
  }
  return {failures == 0 && identical,
          std::to_string(kWireCases) + " round trips with " + std::to_string(failures) + " failures; reruns: " + why};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  int failed = 0;
  auto report = [&](int k, const char* name, const std::function<Outcome()>& run) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s criterion %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "formula oracles", formula_oracles);
  report(2, "gradient correctness", gradient_correctness);
  report(3, "parallel equals sequential", parallel_equals_sequential);
  report(4, "IDPA conservation and proportionality", idpa_conservation);

  StrategyRuns primary, literal;
  bool matrices = false;
  auto run_matrices = [&] {
    if (matrices) return;
    primary = strategy_matrix({1.0, 1.0, 0.5, 0.25});
    literal = strategy_matrix({1.0, 1.0, 2.0, 4.0});
    matrices = true;
  };
  report(5, "strategy comparison", [&] {
    run_matrices();
    auto o = strategy_comparison(primary);
    const auto v = strategy_comparison(literal);
    o.detail += " | time multipliers (1,1,2,4), reported only: " + v.detail;
    return o;
  });
  report(6, "communication accounting", [&] {
    run_matrices();
    return communication_accounting({&primary, &literal});
  });
  report(7, "learning sanity", learning_sanity);
  report(8, "scheduler safety", scheduler_safety);
  report(9, "protocol and determinism", protocol_and_determinism);
  return failed == 0 ? 0 : 1;
}
