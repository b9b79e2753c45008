#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <thread>

#include "bpt/common/error.hpp"
#include "bpt/common/rng.hpp"
#include "bpt/inner/conv_tasks.hpp"
#include "bpt/inner/dag.hpp"
#include "bpt/inner/executor.hpp"
#include "bpt/inner/trainer.hpp"
#include "bpt/nn/ops.hpp"
#include "bpt/nn/presets.hpp"
#include "doctest.h"

using namespace bpt;
using namespace bpt::inner;
using nn::Shape3;
using nn::Tensor3;

namespace {

Tensor3 random_tensor(Shape3 s, Rng& rng) {
  Tensor3 t(s);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

TaskDag make_dag(std::vector<std::vector<std::size_t>> deps, std::vector<double> cost = {}) {
  TaskDag dag;
  for (std::size_t i = 0; i < deps.size(); ++i) {
    TaskNode n;
    n.id = i;
    n.deps = deps[i];
    n.cost = cost.empty() ? 1.0 : cost[i];
    dag.nodes.push_back(n);
  }
  assign_priorities(dag);
  return dag;
}

TaskDag random_dag(Rng& rng) {
  const std::size_t n = 1 + rng.below(40);
  std::vector<std::vector<std::size_t>> deps(n);
  std::vector<double> cost(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (rng.below(6) == 0) deps[i].push_back(j);
    }
    cost[i] = 1.0 + static_cast<double>(rng.below(20));
  }
  return make_dag(deps, cost);
}

nn::NetworkSpec two_conv() {
  nn::NetworkSpec spec;
  spec.input = {1, 9, 9};
  spec.layers = {nn::ConvSpec{2, 3, 3, 1, 1, nn::Activation::tanh},
                 nn::ConvSpec{2, 3, 3, 2, 0, nn::Activation::tanh}};
  return spec;
}

}  // namespace

TEST_CASE("count_conv_tasks examples") {
  CHECK(count_conv_tasks({1, 5, 5}, {1, 3, 3}, 1, 0) == 9);
  CHECK(count_conv_tasks({1, 28, 28}, {1, 5, 5}, 1, 2) == 784);
  CHECK(count_conv_tasks({2, 4, 6}, {2, 4, 6}, 1, 0) == 1);
  CHECK_THROWS_AS(count_conv_tasks({1, 4, 4}, {1, 5, 5}, 1, 0), ShapeError);
}

TEST_CASE("conv_area examples") {
  CHECK(conv_area(0, 0, 1, 3, 3, 3, 3) == nn::ConvArea{0, 3, 0, 3});
  CHECK(conv_area(1, 2, 2, 3, 3, 4, 4) == nn::ConvArea{2, 5, 4, 7});
  CHECK(conv_area(2, 0, 1, 2, 2, 3, 3) == nn::ConvArea{2, 4, 0, 2});
  CHECK_THROWS_AS(conv_area(3, 0, 1, 2, 2, 3, 3), ValidationError);
}

TEST_CASE("decompose_conv examples") {
  Rng rng(1);
  const nn::ConvFilter f{random_tensor({1, 3, 3}, rng), 0.5};
  auto small = std::make_shared<const Tensor3>(random_tensor({1, 3, 3}, rng));
  const auto one = decompose_conv(small, f, 1, 0, nn::Activation::linear);
  REQUIRE(one.size() == 1);
  CHECK(one[0].area == nn::ConvArea{0, 3, 0, 3});

  auto x = std::make_shared<const Tensor3>(random_tensor({1, 5, 5}, rng));
  const auto tasks = decompose_conv(x, f, 1, 0, nn::Activation::linear);
  REQUIRE(tasks.size() == 9);
  std::set<std::pair<std::size_t, std::size_t>> windows;
  for (const auto& t : tasks) {
    CHECK(t.area.r_end - t.area.r_begin == 3);
    CHECK(t.area.c_end - t.area.c_begin == 3);
    CHECK(t.input.get() == x.get());
    windows.insert({t.area.r_begin, t.area.c_begin});
  }
  std::set<std::pair<std::size_t, std::size_t>> expected;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) expected.insert({r, c});
  CHECK(windows == expected);

  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t s = 1 + rng.below(2), fh = 1 + rng.below(3), h = fh + s * rng.below(5);
    auto in = std::make_shared<const Tensor3>(random_tensor({1, h, h}, rng));
    const nn::ConvFilter g{random_tensor({1, fh, fh}, rng), 0.0};
    CHECK(decompose_conv(in, g, s, 0, nn::Activation::linear).size() ==
          count_conv_tasks(in->shape(), g.weights.shape(), s, 0));
  }
}

TEST_CASE("parallel_conv_execute matches conv_forward bit for bit") {
  Rng rng(2);
  const nn::ConvFilter f{random_tensor({2, 3, 3}, rng), 0.1};
  auto x = std::make_shared<const Tensor3>(random_tensor({2, 6, 6}, rng));
  const auto tasks = decompose_conv(x, f, 1, 1, nn::Activation::tanh);
  CHECK(parallel_conv_execute(tasks, 1).output == nn::conv_forward(*x, f, 1, 1, nn::Activation::tanh));

  ExecutorPool pool(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(3), fh = 1 + 2 * rng.below(3), p = rng.below(3);
    const nn::ConvFilter g{random_tensor({d, fh, fh}, rng), rng.uniform(-1, 1)};
    auto in = std::make_shared<const Tensor3>(random_tensor({d, 16, 16}, rng));
    const auto act = trial % 2 ? nn::Activation::tanh : nn::Activation::sigmoid;
    const auto got = parallel_conv_execute(decompose_conv(in, g, 1, p, act), pool);
    CHECK(got.output == nn::conv_forward(*in, g, 1, p, act));
  }
}

TEST_CASE("conv duration over waves") {
  Rng rng(3);
  auto x = std::make_shared<const Tensor3>(random_tensor({1, 5, 5}, rng));
  const nn::ConvFilter f{random_tensor({1, 3, 3}, rng), 0.0};
  auto tasks = decompose_conv(x, f, 1, 0, nn::Activation::linear);
  for (auto& t : tasks) t.cost = 2.5;
  CHECK(parallel_conv_execute(tasks, 9).duration == 2.5);
  CHECK(conv_duration(tasks, 1) == doctest::Approx(9 * 2.5));
  CHECK(conv_duration(tasks, 4) == doctest::Approx(3 * 2.5));
  tasks[7].cost = 10.0;
  CHECK(conv_duration(tasks, 9) == 10.0);
}

TEST_CASE("task failure surfaces as an error") {
  for (std::size_t size : {1, 4}) {
    ExecutorPool pool(size);
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(pool.parallel_for(50,
                                      [&](std::size_t k) {
                                        ++ran;
                                        if (k == 3) throw RuntimeFailure("boom");
                                      }),
                    RuntimeFailure);
    // The pool stays usable afterwards.
    std::atomic<int> count{0};
    pool.parallel_for(20, [&](std::size_t) { ++count; });
    CHECK(count == 20);
  }
}

TEST_CASE("build_task_dag structure") {
  SUBCASE("single layer forward graph has one level and no edges") {
    nn::Network net({{1, 6, 6}, {nn::ConvSpec{2, 3, 3, 1, 1, nn::Activation::tanh}}, 0.1});
    const auto dag = build_task_dag(net, Phase::forward);
    CHECK(dag.size() == 6);
    CHECK(dag.max_level == 0);
    for (const auto& n : dag.nodes) CHECK(n.deps.empty());
  }
  SUBCASE("layer-2 tiles depend on exactly their receptive field") {
    const nn::Network net(two_conv());
    const auto dag = build_task_dag(net, Phase::forward);
    const std::size_t h1 = net.output_shape(0).height;
    const auto& c2 = std::get<nn::ConvSpec>(net.layer(1));
    for (const auto& n : dag.nodes) {
      if (n.layer != 1) continue;
      // Brute force: every tap of every output row of the tile.
      std::set<std::size_t> rows;
      for (std::size_t i = n.begin; i < n.end; ++i)
        for (std::size_t m = 0; m < c2.filter_height; ++m) {
          const long r = long(i * c2.stride + m) - long(c2.padding);
          if (r >= 0 && r < long(h1)) rows.insert(std::size_t(r));
        }
      std::set<std::size_t> dep_rows;
      for (std::size_t d : n.deps) {
        CHECK(dag.nodes[d].layer == 0);
        dep_rows.insert(dag.nodes[d].begin);
      }
      CHECK(dep_rows == rows);
    }
  }
  SUBCASE("backward delta tiles depend on the delta tiles that reach them") {
    const nn::Network net(two_conv());
    const auto dag = build_task_dag(net, Phase::backward);
    const auto& c2 = std::get<nn::ConvSpec>(net.layer(1));
    for (const auto& n : dag.nodes) {
      if (n.kind != TaskKind::delta) continue;
      CHECK(n.layer == 0);
      REQUIRE(n.deps.size() == 1);
      CHECK(dag.nodes[n.deps[0]].kind == TaskKind::loss);
      (void)c2;
    }
    std::size_t updates = 0;
    for (const auto& n : dag.nodes) {
      if (n.kind != TaskKind::update) continue;
      ++updates;
      if (n.layer == 1) {
        // Waits for every layer-0 delta tile.
        std::size_t delta_deps = 0;
        for (std::size_t d : n.deps) delta_deps += dag.nodes[d].kind == TaskKind::delta;
        CHECK(delta_deps == net.output_shape(0).height);
      }
    }
    CHECK(updates == 2);
  }
  SUBCASE("all presets give acyclic graphs") {
    for (const auto& row : nn::preset_table()) {
      const nn::Network net(nn::make_preset(row.name));
      for (Phase ph : {Phase::forward, Phase::backward}) {
        TaskDag dag = build_task_dag(net, ph);
        CHECK_NOTHROW(assign_priorities(dag));
        for (const auto& n : dag.nodes)
          for (std::size_t d : n.deps) CHECK(d < n.id);
      }
    }
  }
}

TEST_CASE("assign_priorities examples") {
  const auto single = make_dag({{}});
  CHECK(single.nodes[0].priority == single.max_level + 1);
  const auto chain = make_dag({{}, {0}, {1}});
  CHECK(chain.nodes[0].priority > chain.nodes[1].priority);
  CHECK(chain.nodes[1].priority > chain.nodes[2].priority);
  const auto diamond = make_dag({{}, {0}, {0}, {1, 2}});
  CHECK(diamond.nodes[1].priority == diamond.nodes[2].priority);
  CHECK(diamond.nodes[0].priority == 3);
  CHECK(diamond.nodes[3].priority == 1);

  TaskDag cyc;
  cyc.nodes = {TaskNode{0, TaskKind::dense, 0, 0, 1, {1}}, TaskNode{1, TaskKind::dense, 0, 0, 1, {0}}};
  CHECK_THROWS_AS(assign_priorities(cyc), ValidationError);
}

TEST_CASE("schedule_tasks examples") {
  const auto indep = make_dag({{}, {}, {}});
  const auto a = schedule_tasks(indep, 4);
  CHECK(std::set<std::size_t>(a.executor.begin(), a.executor.end()).size() == 3);

  const auto four = make_dag({{}, {}, {}, {}});
  const auto b = schedule_tasks(four, 2);
  CHECK(b.queues[0].size() == 2);
  CHECK(b.queues[1].size() == 2);

  const auto pair = make_dag({{}, {0}}, {3.0, 1.0});
  const auto c = schedule_tasks(pair, 2);
  CHECK(c.start[1] >= c.finish[0]);
  CHECK_THROWS_AS(schedule_tasks(pair, 0), ValidationError);
}

TEST_CASE("schedules over random graphs are safe and sound") {
  Rng rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const TaskDag dag = random_dag(rng);
    const std::size_t pool = 1 + rng.below(6);
    const auto as = schedule_tasks(dag, pool);
    std::size_t assigned = 0;
    for (const auto& q : as.queues) assigned += q.size();
    CHECK(assigned == dag.size());
    for (const auto& n : dag.nodes) {
      for (std::size_t d : n.deps) {
        CHECK(as.start[n.id] >= as.finish[d]);
        CHECK(dag.nodes[d].priority > n.priority);
      }
    }
    // At most `pool` tasks overlap at any start instant.
    for (const auto& n : dag.nodes) {
      std::size_t live = 0;
      for (const auto& m : dag.nodes) {
        if (as.start[m.id] <= as.start[n.id] && as.start[n.id] < as.finish[m.id]) ++live;
      }
      CHECK(live <= pool);
    }
    // Same level, same priority.
    for (const auto& x : dag.nodes)
      for (const auto& y : dag.nodes)
        if (x.level == y.level) CHECK(x.priority == y.priority);
  }
}

TEST_CASE("equal independent tasks balance across executors") {
  for (std::size_t n : {64, 100, 257}) {
    const TaskDag dag = make_dag(std::vector<std::vector<std::size_t>>(n));
    const auto as = schedule_tasks(dag, 8);
    const double hi = *std::max_element(as.load.begin(), as.load.end());
    const double lo = *std::min_element(as.load.begin(), as.load.end());
    CHECK(hi / lo <= 1.5);
  }
}

TEST_CASE("executor respects dependencies, priorities and the pool bound") {
  Rng rng(8);
  for (std::size_t size : {1, 3, 8}) {
    ExecutorPool pool(size);
    for (int trial = 0; trial < 60; ++trial) {
      const TaskDag dag = random_dag(rng);
      std::atomic<int> live{0};
      std::atomic<int> peak{0};
      std::vector<std::atomic<int>> done(dag.size());
      std::atomic<bool> violated{false};
      const bool barrier = trial % 2 == 0;
      const auto timeline = pool.run(
          dag,
          [&](const TaskNode& n) {
            for (std::size_t d : n.deps)
              if (!done[d]) violated = true;
            const int now = ++live;
            int p = peak.load();
            while (now > p && !peak.compare_exchange_weak(p, now)) {
            }
            std::this_thread::yield();
            --live;
            done[n.id] = 1;
          },
          RunOptions{barrier, true});
      CHECK_FALSE(violated.load());
      CHECK(peak.load() <= static_cast<int>(size));
      REQUIRE(timeline.size() == dag.size());
      for (const auto& n : dag.nodes) {
        CHECK(timeline[n.id].executor < size);
        for (std::size_t d : n.deps) CHECK(timeline[n.id].start_ns >= timeline[d].end_ns);
      }
      if (barrier) {
        for (const auto& x : dag.nodes)
          for (const auto& y : dag.nodes)
            if (x.level < y.level) CHECK(timeline[y.id].start_ns >= timeline[x.id].end_ns);
      }
    }
  }
}

TEST_CASE("inline executor follows priority order") {
  ExecutorPool pool(1);
  const auto dag = make_dag({{}, {}, {0}, {1}, {2, 3}});
  std::vector<std::size_t> order;
  pool.run(dag, [&](const TaskNode& n) { order.push_back(n.id); });
  CHECK(order == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("parallel training is bit-identical to sequential training") {
  nn::NetworkSpec small;
  small.input = {2, 8, 8};
  small.layers = {nn::ConvSpec{3, 3, 3, 1, 1, nn::Activation::tanh},
                  nn::PoolSpec{nn::PoolKind::max, 2, 2},
                  nn::ConvSpec{2, 3, 3, 1, 1, nn::Activation::tanh},
                  nn::PoolSpec{nn::PoolKind::mean, 2, 2},
                  nn::DenseSpec{7, nn::Activation::tanh},
                  nn::DenseSpec{3, nn::Activation::sigmoid}};
  nn::PresetScale scale;
  scale.input = {1, 12, 12};
  scale.fc_divisor = 20;
  const std::vector<nn::NetworkSpec> specs{small, two_conv(), nn::make_preset("case1", scale)};
  Rng rng(77);
  for (const auto& spec : specs) {
    const nn::Network net(spec);
    for (std::size_t threads : {1, 2, 5}) {
      for (std::size_t rows : {1, 2}) {
        for (bool barrier : {true, false}) {
          InnerTrainer trainer(net, threads, DagOptions{rows, 3}, RunOptions{barrier, false});
          nn::ParameterSet seq = nn::init_parameters(net, 5);
          nn::ParameterSet par = seq;
          for (int step = 0; step < 4; ++step) {
            const Tensor3 x = random_tensor(net.input_shape(), rng);
            const auto target = nn::one_hot(rng.below(net.output_size()), net.output_size());
            const double l1 = nn::train_sample(net, seq, x, target);
            const double l2 = trainer.train_sample(par.values, x, target);
            CHECK(l1 == l2);
            CHECK(trainer.forward(par.values, x).outputs == nn::forward(net, par, x).outputs);
          }
          CHECK(seq.values == par.values);
        }
      }
    }
  }
}

TEST_CASE("timeline csv") {
  const auto dag = make_dag({{}, {0}}, {2.0, 3.0});
  const auto as = schedule_tasks(dag, 2);
  std::ostringstream out;
  write_timeline_csv(out, dag, to_timeline(as, 10.0));
  CHECK(out.str() == "task_id,level,priority,executor,start_ns,end_ns\n0,0,2,0,0,20\n1,1,1,1,20,50\n");
}
