#include "bpt/inner/dag.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "bpt/common/error.hpp"
#include "bpt/nn/kernels.hpp"

namespace bpt::inner {

using nn::ConvSpec;
using nn::DenseSpec;
using nn::LayerKind;
using nn::Network;
using nn::PoolSpec;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::conv_tile: return "conv_tile";
    case TaskKind::pool: return "pool";
    case TaskKind::dense: return "dense";
    case TaskKind::loss: return "loss";
    case TaskKind::delta: return "delta";
    case TaskKind::gradient: return "gradient";
    case TaskKind::update: return "update";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> TaskDag::successors() const {
  std::vector<std::vector<std::size_t>> succ(nodes.size());
  for (const auto& n : nodes) {
    for (std::size_t d : n.deps) succ[d].push_back(n.id);
  }
  return succ;
}

namespace {

// Tiles of one layer: contiguous unit ranges with their task ids.
struct LayerTiles {
  std::size_t chunk = 1;
  std::size_t units = 0;
  std::vector<std::size_t> ids;

  // Tile ids whose unit range meets [lo, hi).
  void covering(std::size_t lo, std::size_t hi, std::vector<std::size_t>& out) const {
    if (lo >= hi) return;
    const std::size_t first = lo / chunk;
    const std::size_t last = std::min(ids.size(), (hi - 1) / chunk + 1);
    for (std::size_t t = first; t < last; ++t) out.push_back(ids[t]);
  }
  void all(std::vector<std::size_t>& out) const { out.insert(out.end(), ids.begin(), ids.end()); }
};

std::size_t chunk_for(const Network& net, std::size_t l, const DagOptions& o) {
  return kind_of(net.layer(l)) == LayerKind::dense ? std::max<std::size_t>(1, o.dense_chunk)
                                                   : std::max<std::size_t>(1, o.rows_per_tile);
}

// Rows of layer l's input read by output rows [b, e) of layer l.
void rows_read(const Network& net, std::size_t l, std::size_t b, std::size_t e, std::size_t& lo,
               std::size_t& hi) {
  const std::size_t in_h = net.input_shape(l).height;
  std::size_t stride = 1, window = 1, pad = 0;
  if (const auto* c = std::get_if<ConvSpec>(&net.layer(l))) {
    stride = c->stride, window = c->filter_height, pad = c->padding;
  } else if (const auto* p = std::get_if<PoolSpec>(&net.layer(l))) {
    stride = p->stride, window = p->window;
  }
  const std::size_t top = b * stride;
  const std::size_t bottom = (e - 1) * stride + window;
  lo = top > pad ? top - pad : 0;
  hi = std::min(in_h, bottom > pad ? bottom - pad : 0);
}

// Output rows of layer n (the next layer) that read rows [b, e) of its input.
void rows_reaching(const Network& net, std::size_t n, std::size_t b, std::size_t e,
                   std::size_t& lo, std::size_t& hi) {
  const std::size_t out_h = net.output_shape(n).height;
  std::size_t stride = 1, window = 1, pad = 0;
  if (const auto* c = std::get_if<ConvSpec>(&net.layer(n))) {
    stride = c->stride, window = c->filter_height, pad = c->padding;
  } else if (const auto* p = std::get_if<PoolSpec>(&net.layer(n))) {
    stride = p->stride, window = p->window;
  }
  // Output row i reads padded rows [i*S, i*S + window).
  const std::size_t pb = b + pad;
  const std::size_t pe = e - 1 + pad;
  lo = pb + 1 > window ? (pb + 1 - window + stride - 1) / stride : 0;
  hi = std::min(out_h, pe / stride + 1);
}

double forward_cost(const Network& net, std::size_t l, std::size_t b, std::size_t e) {
  const nn::Shape3 in = net.input_shape(l);
  const nn::Shape3 out = net.output_shape(l);
  const double units = static_cast<double>(e - b);
  if (const auto* c = std::get_if<ConvSpec>(&net.layer(l))) {
    return units * out.width * out.depth * in.depth * c->filter_height * c->filter_width;
  }
  if (const auto* p = std::get_if<PoolSpec>(&net.layer(l))) {
    return units * out.width * out.depth * p->window * p->window;
  }
  return units * in.size();
}

double delta_cost(const Network& net, std::size_t l, std::size_t b, std::size_t e) {
  const nn::Shape3 here = net.output_shape(l);
  const double elems =
      kind_of(net.layer(l)) == LayerKind::dense ? double(e - b) : double(e - b) * here.width * here.depth;
  const std::size_t n = l + 1;
  if (const auto* c = std::get_if<ConvSpec>(&net.layer(n))) {
    return elems * c->filters * c->filter_height * c->filter_width /
           static_cast<double>(c->stride * c->stride);
  }
  if (const auto* p = std::get_if<PoolSpec>(&net.layer(n))) return elems * p->window * p->window;
  return elems * net.output_shape(n).size();
}

}  // namespace

TaskDag build_task_dag(const Network& net, Phase phase, const DagOptions& options) {
  TaskDag dag;
  dag.phase = phase;
  const std::size_t layers = net.layer_count();
  auto add = [&](TaskKind kind, std::size_t layer, std::size_t b, std::size_t e,
                 std::vector<std::size_t> deps, double cost) {
    TaskNode node;
    node.id = dag.nodes.size();
    node.kind = kind;
    node.layer = layer;
    node.begin = b;
    node.end = e;
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    node.deps = std::move(deps);
    node.cost = cost;
    dag.nodes.push_back(std::move(node));
    return dag.nodes.back().id;
  };

  if (phase == Phase::forward) {
    std::vector<LayerTiles> tiles(layers);
    for (std::size_t l = 0; l < layers; ++l) {
      LayerTiles& t = tiles[l];
      t.chunk = chunk_for(net, l, options);
      t.units = nn::unit_count(net, l);
      const LayerKind kind = kind_of(net.layer(l));
      const TaskKind tk = kind == LayerKind::conv   ? TaskKind::conv_tile
                          : kind == LayerKind::pool ? TaskKind::pool
                                                    : TaskKind::dense;
      for (std::size_t b = 0; b < t.units; b += t.chunk) {
        const std::size_t e = std::min(t.units, b + t.chunk);
        std::vector<std::size_t> deps;
        if (l > 0) {
          if (kind == LayerKind::dense || kind_of(net.layer(l - 1)) == LayerKind::dense) {
            tiles[l - 1].all(deps);
          } else {
            std::size_t lo, hi;
            rows_read(net, l, b, e, lo, hi);
            tiles[l - 1].covering(lo, hi, deps);
          }
        }
        t.ids.push_back(add(tk, l, b, e, std::move(deps), forward_cost(net, l, b, e)));
      }
    }
  } else {
    const std::size_t last = layers - 1;
    std::vector<LayerTiles> delta(layers);
    const std::size_t loss = add(TaskKind::loss, last, 0, nn::unit_count(net, last), {},
                                 static_cast<double>(net.output_size()));
    delta[last].chunk = nn::unit_count(net, last);
    delta[last].units = delta[last].chunk;
    delta[last].ids = {loss};
    for (std::size_t l = last; l-- > 0;) {
      LayerTiles& t = delta[l];
      t.chunk = chunk_for(net, l, options);
      t.units = nn::unit_count(net, l);
      const bool all_next = kind_of(net.layer(l)) == LayerKind::dense ||
                            kind_of(net.layer(l + 1)) == LayerKind::dense;
      for (std::size_t b = 0; b < t.units; b += t.chunk) {
        const std::size_t e = std::min(t.units, b + t.chunk);
        std::vector<std::size_t> deps;
        if (all_next) {
          delta[l + 1].all(deps);
        } else {
          std::size_t lo, hi;
          rows_reaching(net, l + 1, b, e, lo, hi);
          delta[l + 1].covering(lo, hi, deps);
        }
        t.ids.push_back(add(TaskKind::delta, l, b, e, std::move(deps), delta_cost(net, l, b, e)));
      }
    }
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t grad_units = nn::gradient_unit_count(net, l);
      if (grad_units == 0) continue;
      const nn::Shape3 in = net.input_shape(l);
      const nn::Shape3 out = net.output_shape(l);
      std::vector<std::size_t> grads;
      if (const auto* c = std::get_if<ConvSpec>(&net.layer(l))) {
        const double cost = double(in.depth) * c->filter_height * c->filter_width * out.height * out.width;
        for (std::size_t f = 0; f < grad_units; ++f) {
          std::vector<std::size_t> deps;
          delta[l].all(deps);
          grads.push_back(add(TaskKind::gradient, l, f, f + 1, std::move(deps), cost));
        }
      } else {
        const std::size_t chunk = l == last ? grad_units : delta[l].chunk;
        for (std::size_t b = 0; b < grad_units; b += chunk) {
          const std::size_t e = std::min(grad_units, b + chunk);
          std::vector<std::size_t> deps;
          delta[l].covering(b, e, deps);
          if (l == last) deps = {loss};
          grads.push_back(add(TaskKind::gradient, l, b, e, std::move(deps),
                              double(e - b) * (in.size() + 1)));
        }
      }
      std::vector<std::size_t> deps = grads;
      if (l > 0) delta[l - 1].all(deps);
      add(TaskKind::update, l, 0, grad_units, std::move(deps),
          static_cast<double>(net.slice(l).count));
    }
  }
  assign_priorities(dag);
  return dag;
}

void assign_priorities(TaskDag& dag) {
  const std::size_t n = dag.nodes.size();
  std::vector<std::size_t> pending(n, 0);
  for (const auto& node : dag.nodes) {
    for (std::size_t d : node.deps) {
      if (d >= n) throw ValidationError("task " + std::to_string(node.id) + " depends on unknown task");
    }
    pending[node.id] = node.deps.size();
  }
  const auto succ = dag.successors();
  std::vector<std::size_t> level(n, 0);
  std::queue<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (pending[i] == 0) ready.push(i);
  }
  std::size_t seen = 0;
  while (!ready.empty()) {
    const std::size_t v = ready.front();
    ready.pop();
    ++seen;
    for (std::size_t s : succ[v]) {
      level[s] = std::max(level[s], level[v] + 1);
      if (--pending[s] == 0) ready.push(s);
    }
  }
  if (seen != n) throw ValidationError("task graph contains a cycle");
  dag.max_level = n == 0 ? 0 : *std::max_element(level.begin(), level.end());
  for (std::size_t i = 0; i < n; ++i) {
    dag.nodes[i].level = level[i];
    dag.nodes[i].priority = dag.max_level - level[i] + 1;
  }
}

TaskAssignment schedule_tasks(const TaskDag& dag, std::size_t pool_size) {
  if (pool_size == 0) throw ValidationError("pool size must be at least 1");
  const std::size_t n = dag.nodes.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dag.nodes[a].priority != dag.nodes[b].priority) {
      return dag.nodes[a].priority > dag.nodes[b].priority;
    }
    return a < b;
  });

  TaskAssignment as;
  as.executor.assign(n, 0);
  as.start.assign(n, 0.0);
  as.finish.assign(n, 0.0);
  as.queues.assign(pool_size, {});
  as.load.assign(pool_size, 0.0);
  std::vector<double> free_at(pool_size, 0.0);
  std::vector<bool> done(n, false);
  for (std::size_t v : order) {
    double ready_at = 0.0;
    for (std::size_t d : dag.nodes[v].deps) {
      if (!done[d]) {
        throw ValidationError("task " + std::to_string(v) + " is ordered before its dependency " +
                              std::to_string(d) + "; priorities are missing or inconsistent");
      }
      ready_at = std::max(ready_at, as.finish[d]);
    }
    const std::size_t e = static_cast<std::size_t>(
        std::min_element(as.load.begin(), as.load.end()) - as.load.begin());
    as.executor[v] = e;
    as.queues[e].push_back(v);
    as.start[v] = std::max(free_at[e], ready_at);
    as.finish[v] = as.start[v] + dag.nodes[v].cost;
    free_at[e] = as.finish[v];
    as.load[e] += dag.nodes[v].cost;
    as.makespan = std::max(as.makespan, as.finish[v]);
    done[v] = true;
  }
  return as;
}

std::vector<TimelineEntry> to_timeline(const TaskAssignment& as, double ns_per_cost) {
  std::vector<TimelineEntry> out(as.executor.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {as.executor[i], static_cast<std::int64_t>(std::llround(as.start[i] * ns_per_cost)),
              static_cast<std::int64_t>(std::llround(as.finish[i] * ns_per_cost))};
  }
  return out;
}

void write_timeline_csv(std::ostream& out, const TaskDag& dag,
                        const std::vector<TimelineEntry>& timeline) {
  if (timeline.size() != dag.size()) throw ValidationError("timeline does not match the task graph");
  out << "task_id,level,priority,executor,start_ns,end_ns\n";
  for (std::size_t i = 0; i < dag.size(); ++i) {
    out << i << ',' << dag.nodes[i].level << ',' << dag.nodes[i].priority << ','
        << timeline[i].executor << ',' << timeline[i].start_ns << ',' << timeline[i].end_ns << '\n';
  }
}

}  // namespace bpt::inner
