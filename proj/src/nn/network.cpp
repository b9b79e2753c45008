#include "bpt/nn/network.hpp"

#include <sstream>

#include "bpt/common/error.hpp"

namespace bpt::nn {

namespace {

std::size_t sweep(std::size_t extent, std::size_t window, std::size_t stride,
                  std::size_t padding, const char* axis) {
  const std::size_t padded = extent + 2 * padding;
  if (window > padded) {
    throw ShapeError(std::string("window larger than padded input along ") + axis + " (" +
                     std::to_string(window) + " > " + std::to_string(padded) + ")");
  }
  if ((padded - window) % stride != 0) {
    throw ShapeError(std::string("stride ") + std::to_string(stride) +
                     " does not tile the padded input along " + axis);
  }
  return (padded - window) / stride + 1;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

std::size_t to_count(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("bad number '" + s + "' in " + context);
  }
}

Shape3 parse_dims(const std::string& s, const std::string& context) {
  const auto dims = split(s, 'x');
  if (dims.size() != 3) throw ValidationError("expected DxHxW in " + context);
  return {to_count(dims[0], context), to_count(dims[1], context), to_count(dims[2], context)};
}

}  // namespace

LayerKind kind_of(const LayerSpec& layer) {
  return static_cast<LayerKind>(layer.index());
}

Shape3 output_shape(Shape3 input, Shape3 filter, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("convolution stride must be at least 1");
  if (input.size() == 0 || filter.size() == 0) throw ShapeError("empty input or filter");
  if (filter.depth != input.depth) {
    throw ShapeError("filter depth " + std::to_string(filter.depth) + " != input depth " +
                     std::to_string(input.depth));
  }
  return {1, sweep(input.height, filter.height, stride, padding, "height"),
          sweep(input.width, filter.width, stride, padding, "width")};
}

Shape3 pool_output_shape(Shape3 input, std::size_t window, std::size_t stride) {
  if (stride == 0 || window == 0) throw ShapeError("pool window and stride must be at least 1");
  return {input.depth, sweep(input.height, window, stride, 0, "height"),
          sweep(input.width, window, stride, 0, "width")};
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.input.size() == 0) throw ShapeError("network input shape must be nonempty");
  if (spec_.layers.empty()) throw ValidationError("network needs at least one layer");
  if (!(spec_.learning_rate > 0.0)) throw ValidationError("learning rate must be positive");

  Shape3 in = spec_.input;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < spec_.layers.size(); ++l) {
    Shape3 out;
    std::size_t count = 0;
    const auto& layer = spec_.layers[l];
    try {
      if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
        if (conv->filters == 0) throw ShapeError("conv layer needs at least one filter");
        out = nn::output_shape(in, Shape3{in.depth, conv->filter_height, conv->filter_width},
                           conv->stride, conv->padding);
        out.depth = conv->filters;
        count = conv->filters * (in.depth * conv->filter_height * conv->filter_width + 1);
      } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
        out = pool_output_shape(in, pool->window, pool->stride);
      } else {
        const auto& dense = std::get<DenseSpec>(layer);
        if (dense.units == 0) throw ShapeError("dense layer needs at least one unit");
        out = {dense.units, 1, 1};
        count = dense.units * (in.size() + 1);
      }
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(l) + ": " + e.what());
    }
    shapes_.push_back(out);
    slices_.push_back({offset, count});
    offset += count;
    in = out;
  }
  parameter_count_ = offset;
}

std::string Network::descriptor() const {
  std::ostringstream out;
  out << "in=" << spec_.input.str();
  for (const auto& layer : spec_.layers) {
    out << ';';
    if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
      out << "conv=" << conv->filters << 'x' << conv->filter_height << 'x' << conv->filter_width
          << ",s" << conv->stride << ",p" << conv->padding << ',' << to_string(conv->activation);
    } else if (const auto* pool = std::get_if<PoolSpec>(&layer)) {
      out << "pool=" << (pool->kind == PoolKind::max ? "max" : "mean") << ',' << pool->window
          << ',' << pool->stride;
    } else {
      const auto& dense = std::get<DenseSpec>(layer);
      out << "dense=" << dense.units << ',' << to_string(dense.activation);
    }
  }
  return out.str();
}

std::size_t Network::forward_macs() const {
  std::size_t macs = 0;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const Shape3 in = input_shape(l);
    const Shape3 out = shapes_[l];
    if (const auto* conv = std::get_if<ConvSpec>(&spec_.layers[l])) {
      macs += out.size() * in.depth * conv->filter_height * conv->filter_width;
    } else if (const auto* pool = std::get_if<PoolSpec>(&spec_.layers[l])) {
      macs += out.size() * pool->window * pool->window;
    } else {
      macs += out.size() * in.size();
    }
  }
  return macs;
}

std::size_t Network::backward_macs() const {
  std::size_t macs = output_size();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const Shape3 in = input_shape(l);
    const Shape3 out = shapes_[l];
    std::size_t layer_macs = 0;
    if (const auto* conv = std::get_if<ConvSpec>(&spec_.layers[l])) {
      layer_macs = out.size() * in.depth * conv->filter_height * conv->filter_width;
    } else if (const auto* pool = std::get_if<PoolSpec>(&spec_.layers[l])) {
      layer_macs = out.size() * pool->window * pool->window;
    } else {
      layer_macs = out.size() * in.size();
    }
    // Delta propagation into the previous layer (none below the first layer),
    // the gradient correlation and the update.
    if (l > 0) macs += layer_macs;
    if (kind_of(spec_.layers[l]) != LayerKind::pool) macs += layer_macs + slices_[l].count;
  }
  return macs;
}

NetworkSpec parse_descriptor(const std::string& descriptor, double learning_rate) {
  NetworkSpec spec;
  spec.learning_rate = learning_rate;
  const auto items = split(descriptor, ';');
  if (items.empty() || items[0].rfind("in=", 0) != 0) {
    throw ValidationError("network descriptor must start with in=DxHxW");
  }
  spec.input = parse_dims(items[0].substr(3), "input");
  for (std::size_t k = 1; k < items.size(); ++k) {
    const auto& item = items[k];
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("bad layer item '" + item + "'");
    const std::string kind = item.substr(0, eq);
    const auto fields = split(item.substr(eq + 1), ',');
    if (kind == "conv") {
      if (fields.size() != 4) throw ValidationError("conv needs FxHxW,sS,pP,act: " + item);
      const Shape3 f = parse_dims(fields[0], item);
      if (fields[1].empty() || fields[1][0] != 's' || fields[2].empty() || fields[2][0] != 'p') {
        throw ValidationError("conv stride/padding must be written sS,pP: " + item);
      }
      spec.layers.push_back(ConvSpec{f.depth, f.height, f.width, to_count(fields[1].substr(1), item),
                                     to_count(fields[2].substr(1), item),
                                     parse_activation(fields[3])});
    } else if (kind == "pool") {
      if (fields.size() != 3) throw ValidationError("pool needs kind,window,stride: " + item);
      PoolKind pk;
      if (fields[0] == "max") {
        pk = PoolKind::max;
      } else if (fields[0] == "mean") {
        pk = PoolKind::mean;
      } else {
        throw ValidationError("unknown pool kind in " + item);
      }
      spec.layers.push_back(PoolSpec{pk, to_count(fields[1], item), to_count(fields[2], item)});
    } else if (kind == "dense") {
      if (fields.size() != 2) throw ValidationError("dense needs units,act: " + item);
      spec.layers.push_back(DenseSpec{to_count(fields[0], item), parse_activation(fields[1])});
    } else {
      throw ValidationError("unknown layer kind '" + kind + "'");
    }
  }
  return spec;
}

}  // namespace bpt::nn
