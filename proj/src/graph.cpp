// Network description, validation and topological execution. Node order is
// deterministic: Kahn's algorithm with a lexicographic tie-break on node id.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "bnne/graph.hpp"

namespace bnne {

namespace {

const std::map<std::string, LayerKind>& kind_table() {
  static const std::map<std::string, LayerKind> table = {
      {"bconv2d", LayerKind::kBConv2d},
      {"bdwconv2d", LayerKind::kBDWConv2d},
      {"pconv2d", LayerKind::kPConv2d},
      {"downsample_conv", LayerKind::kDownsampleConv},
      {"bn_fold_marker", LayerKind::kBnFoldMarker},
      {"quant_act", LayerKind::kQuantAct},
      {"bmm", LayerKind::kBmm},
      {"upsample_nearest", LayerKind::kUpsampleNearest},
      {"eltwise_add", LayerKind::kEltwiseAdd},
      {"coord_embed", LayerKind::kCoordEmbed},
      {"binarize_act", LayerKind::kBinarizeAct},
  };
  return table;
}

int port_count(LayerKind kind) {
  return kind == LayerKind::kEltwiseAdd || kind == LayerKind::kBmm ? 2 : 1;
}

bool is_conv(LayerKind kind) {
  return kind == LayerKind::kBConv2d || kind == LayerKind::kDownsampleConv;
}

struct PortSource {
  bool from_input = false;
  std::string producer;  // node id or input name
};

// (node, port) -> source, with exactly-once binding enforced.
std::map<std::pair<std::string, int>, PortSource> bind_ports(
    const NetworkGraph& graph) {
  std::map<std::pair<std::string, int>, PortSource> sources;
  for (const auto& e : graph.edges) {
    if (!graph.find(e.from))
      throw ConfigError("graph: edge references unknown producer '" + e.from + "'");
    if (!graph.find(e.to))
      throw ConfigError("graph: edge references unknown consumer '" + e.to + "'");
    if (!sources.emplace(std::make_pair(e.to, e.port), PortSource{false, e.from})
             .second)
      throw ConfigError("graph: port " + std::to_string(e.port) + " of node '" +
                        e.to + "' bound more than once");
  }
  for (const auto& in : graph.inputs) {
    if (!graph.find(in.node))
      throw ConfigError("graph: input '" + in.name + "' references unknown node '" +
                        in.node + "'");
    if (!sources.emplace(std::make_pair(in.node, in.port), PortSource{true, in.name})
             .second)
      throw ConfigError("graph: port " + std::to_string(in.port) + " of node '" +
                        in.node + "' bound more than once");
  }
  for (const auto& node : graph.nodes) {
    for (int p = 0; p < port_count(node.kind); ++p)
      if (!sources.contains({node.id, p}))
        throw ConfigError("graph: port " + std::to_string(p) + " of node '" +
                          node.id + "' is unbound");
    if (sources.contains({node.id, port_count(node.kind)}))
      throw ConfigError("graph: node '" + node.id + "' has too many inputs");
  }
  return sources;
}

std::vector<std::string> topo_sort(
    const NetworkGraph& graph,
    const std::map<std::pair<std::string, int>, PortSource>& sources) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> consumers;
  for (const auto& n : graph.nodes) indegree[n.id] = 0;
  for (const auto& [key, src] : sources) {
    if (src.from_input) continue;
    ++indegree[key.first];
    consumers[src.producer].push_back(key.first);
  }
  std::set<std::string> ready;
  for (const auto& [id, deg] : indegree)
    if (deg == 0) ready.insert(id);
  std::vector<std::string> order;
  while (!ready.empty()) {
    const std::string id = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(id);
    for (const auto& c : consumers[id])
      if (--indegree[c] == 0) ready.insert(c);
  }
  if (order.size() != graph.nodes.size()) {
    std::string cyclic;
    for (const auto& [id, deg] : indegree)
      if (deg > 0) cyclic += (cyclic.empty() ? "" : ", ") + id;
    throw ConfigError("graph: cycle detected involving nodes: " + cyclic);
  }
  return order;
}

ValueInfo quant_info(Shape shape, int bits) {
  ValueInfo v;
  v.kind = ValueKind::kQuant;
  v.shape = shape;
  v.bits = bits;
  return v;
}

ValueInfo int_info(Shape shape) {
  ValueInfo v;
  v.kind = ValueKind::kInt;
  v.shape = shape;
  return v;
}

const BinaryWeightSet& node_weights(const ParamMap& params, const LayerSpec& spec) {
  auto it = params.find(spec.id);
  if (it == params.end() || !it->second.weights)
    throw ConfigError("graph: node '" + spec.id + "' has no weight record");
  return *it->second.weights;
}

RequantParams node_requant(const ParamMap& params, const LayerSpec& spec) {
  auto it = params.find(spec.id);
  if (it != params.end() && it->second.requant) return *it->second.requant;
  RequantParams identity;
  identity.bits = spec.out_bits;
  return identity;
}

struct ConvShapeResult {
  Shape out;
  std::int64_t macs = 0;
};

ConvShapeResult infer_conv(const LayerSpec& spec, const ValueInfo& in,
                           const BinaryWeightSet& weights) {
  if (in.kind != ValueKind::kQuant)
    throw ShapeError("node '" + spec.id + "': convolution expects a quantized input");
  if (weights.bits != in.bits)
    throw ShapeError("node '" + spec.id + "': weights folded for " +
                     std::to_string(weights.bits) + "-bit activations, input has " +
                     std::to_string(in.bits));
  const auto& g = spec.geom;
  const int oh = (in.shape.height + 2 * g.pad - g.kernel_h) / g.stride + 1;
  const int ow = (in.shape.width + 2 * g.pad - g.kernel_w) / g.stride + 1;
  if (oh < 1 || ow < 1)
    throw ShapeError("node '" + spec.id + "': empty convolution output");

  ConvShapeResult r;
  switch (spec.kind) {
    case LayerKind::kBConv2d:
    case LayerKind::kDownsampleConv: {
      const int lanes = in.shape.channels * g.kernel_h * g.kernel_w;
      if (weights.lane_count != lanes)
        throw ShapeError("node '" + spec.id + "': weights expect " +
                         std::to_string(weights.lane_count) + " lanes, input has " +
                         std::to_string(lanes));
      r.out = {weights.out_channels, oh, ow};
      r.macs = std::int64_t{weights.out_channels} * oh * ow * lanes;
      break;
    }
    case LayerKind::kBDWConv2d: {
      if (weights.out_channels != in.shape.channels ||
          weights.lane_count != g.kernel_h * g.kernel_w)
        throw ShapeError("node '" + spec.id + "': depthwise filter shape mismatch");
      r.out = {in.shape.channels, oh, ow};
      r.macs = std::int64_t{in.shape.channels} * oh * ow * g.kernel_h * g.kernel_w;
      break;
    }
    case LayerKind::kPConv2d: {
      const int conv_channels =
          static_cast<int>(std::floor(in.shape.channels * spec.split_ratio));
      if (conv_channels < 1)
        throw ConfigError("node '" + spec.id + "': split leaves no conv channels");
      if (g.stride != 1 || oh != in.shape.height || ow != in.shape.width)
        throw ConfigError("node '" + spec.id +
                          "': partial conv must preserve spatial dims");
      const int lanes = conv_channels * g.kernel_h * g.kernel_w;
      if (weights.out_channels != conv_channels || weights.lane_count != lanes)
        throw ShapeError("node '" + spec.id + "': partial conv weight mismatch");
      r.out = in.shape;
      r.macs = std::int64_t{conv_channels} * oh * ow * lanes;
      break;
    }
    default:
      throw InternalError("infer_conv: not a convolution kind");
  }
  return r;
}

}  // namespace

std::string kind_name(LayerKind kind) {
  for (const auto& [name, k] : kind_table())
    if (k == kind) return name;
  throw InternalError("kind_name: unknown layer kind");
}

LayerKind kind_from_name(const std::string& name) {
  auto it = kind_table().find(name);
  if (it == kind_table().end())
    throw ConfigError("unknown layer kind '" + name + "'");
  return it->second;
}

const LayerSpec* NetworkGraph::find(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

ValidatedGraph validate(const NetworkGraph& graph, const ParamMap& params) {
  std::set<std::string> ids;
  for (const auto& n : graph.nodes)
    if (!ids.insert(n.id).second)
      throw ConfigError("graph: duplicate node id '" + n.id + "'");

  const auto sources = bind_ports(graph);

  // Mode-0 weight sets must carry a bias consistent with the gamma closed form.
  for (const auto& [id, np] : params) {
    if (!np.weights || np.weights->mode != 0) continue;
    const auto& ws = *np.weights;
    for (int c = 0; c < ws.out_channels; ++c) {
      int ones = 0;
      for (auto w : ws.packed_bits[static_cast<std::size_t>(c)])
        ones += std::popcount(w);
      const std::int64_t expected =
          ws.beta[static_cast<std::size_t>(c)] +
          gamma_term(2 * ones - ws.lane_count, ws.lane_count, ws.bits);
      if (ws.folded_bias[static_cast<std::size_t>(c)] != expected)
        throw InvalidInputError("graph: node '" + id + "' channel " +
                                std::to_string(c) +
                                " folded bias is inconsistent with its packed bits");
    }
  }

  // Declared graph input shapes must agree per input name.
  std::map<std::string, std::pair<Shape, int>> input_decl;
  for (const auto& in : graph.inputs) {
    auto [it, inserted] = input_decl.emplace(in.name, std::make_pair(in.shape, in.bits));
    if (!inserted && (!(it->second.first == in.shape) || it->second.second != in.bits))
      throw ConfigError("graph: input '" + in.name + "' declared with conflicting "
                        "shapes");
  }

  ValidatedGraph out;
  out.topo_order = topo_sort(graph, sources);

  auto input_of = [&](const LayerSpec& spec, int port) -> ValueInfo {
    const auto& src = sources.at({spec.id, port});
    if (src.from_input) {
      const auto& decl = input_decl.at(src.producer);
      return quant_info(decl.first, decl.second);
    }
    return out.node_output.at(src.producer);
  };

  for (const auto& id : out.topo_order) {
    const LayerSpec& spec = *graph.find(id);
    ValueInfo result;
    std::int64_t macs = 0;
    switch (spec.kind) {
      case LayerKind::kBConv2d:
      case LayerKind::kDownsampleConv:
      case LayerKind::kBDWConv2d:
      case LayerKind::kPConv2d: {
        const auto conv = infer_conv(spec, input_of(spec, 0), node_weights(params, spec));
        result = int_info(conv.out);
        macs = conv.macs;
        break;
      }
      case LayerKind::kBnFoldMarker: {
        const auto in = input_of(spec, 0);
        if (in.kind != ValueKind::kInt)
          throw ShapeError("node '" + id + "': BN marker expects an accumulator input");
        result = in;
        break;
      }
      case LayerKind::kQuantAct: {
        const auto in = input_of(spec, 0);
        // Quantized inputs widen losslessly to the accumulator domain.
        if (in.kind != ValueKind::kInt && in.kind != ValueKind::kQuant)
          throw ShapeError("node '" + id + "': quant_act expects a tensor input");
        result = quant_info(in.shape, spec.out_bits);
        break;
      }
      case LayerKind::kUpsampleNearest: {
        const auto in = input_of(spec, 0);
        if (in.kind != ValueKind::kQuant)
          throw ShapeError("node '" + id + "': upsample expects a quantized input");
        if (spec.factor < 1)
          throw ConfigError("node '" + id + "': upsample factor must be >= 1");
        result = quant_info({in.shape.channels, in.shape.height * spec.factor,
                             in.shape.width * spec.factor},
                            in.bits);
        break;
      }
      case LayerKind::kCoordEmbed: {
        const auto in = input_of(spec, 0);
        if (in.kind != ValueKind::kQuant)
          throw ShapeError("node '" + id + "': coord_embed expects a quantized input");
        result = quant_info({in.shape.channels + 2, in.shape.height, in.shape.width},
                            in.bits);
        break;
      }
      case LayerKind::kEltwiseAdd: {
        const auto a = input_of(spec, 0);
        const auto b = input_of(spec, 1);
        if (a.kind == ValueKind::kPacked || b.kind == ValueKind::kPacked)
          throw ShapeError("node '" + id + "': cannot add packed operands");
        if (!(a.shape == b.shape))
          throw ShapeError("node '" + id + "': add shape mismatch " + a.shape.str() +
                           " vs " + b.shape.str());
        result = int_info(a.shape);
        break;
      }
      case LayerKind::kBinarizeAct: {
        const auto in = input_of(spec, 0);
        if (in.kind == ValueKind::kPacked)
          throw ShapeError("node '" + id + "': cannot re-binarize packed values");
        result.kind = ValueKind::kPacked;
        result.rows = in.shape.channels;
        result.lanes = in.shape.height * in.shape.width;
        result.bits = spec.fold_bits;
        result.mode = spec.sign_target ? 0 : 1;
        break;
      }
      case LayerKind::kBmm: {
        const auto left = input_of(spec, 0);
        const auto right = input_of(spec, 1);
        if (left.kind != ValueKind::kQuant)
          throw ShapeError("node '" + id + "': bmm left operand must be quantized");
        if (right.kind != ValueKind::kPacked)
          throw ShapeError("node '" + id + "': bmm right operand must be binarized");
        const int inner = left.shape.height * left.shape.width;
        if (right.lanes != inner)
          throw ShapeError("node '" + id + "': bmm inner dimension mismatch: " +
                           std::to_string(inner) + " vs " +
                           std::to_string(right.lanes));
        if (right.mode != spec.mode)
          throw ModeError("node '" + id + "': bmm mode " + std::to_string(spec.mode) +
                          " but operand was binarized for mode " +
                          std::to_string(right.mode));
        if (right.bits != left.bits)
          throw ModeError("node '" + id + "': operand binarized against " +
                          std::to_string(right.bits) + "-bit activations");
        result = int_info({left.shape.channels, 1, right.rows});
        macs = std::int64_t{left.shape.channels} * right.rows * inner;
        break;
      }
    }
    out.node_output[id] = result;
    out.node_macs[id] = macs;
    out.total_macs += macs;
  }

  for (const auto& o : graph.outputs)
    if (!out.node_output.contains(o.node))
      throw ConfigError("graph: output '" + o.name + "' references unknown node '" +
                        o.node + "'");
  return out;
}

namespace {

IntTensor as_int(const Value& v, const std::string& id) {
  if (std::holds_alternative<IntTensor>(v)) return std::get<IntTensor>(v);
  if (std::holds_alternative<QuantTensor>(v)) {
    const auto& q = std::get<QuantTensor>(v);
    IntTensor t(q.dims);
    std::transform(q.data.begin(), q.data.end(), t.data.begin(),
                   [](std::uint32_t x) { return static_cast<std::int32_t>(x); });
    return t;
  }
  throw ShapeError("node '" + id + "': expected a tensor operand");
}

const QuantTensor& as_quant(const Value& v, const std::string& id) {
  if (!std::holds_alternative<QuantTensor>(v))
    throw ShapeError("node '" + id + "': expected a quantized operand");
  return std::get<QuantTensor>(v);
}

}  // namespace

std::map<std::string, Value> execute(const NetworkGraph& graph,
                                     const ParamMap& params,
                                     const std::map<std::string, QuantTensor>& inputs,
                                     int workers,
                                     ExecutionTrace* trace) {
  const ValidatedGraph vg = validate(graph, params);
  const auto sources = bind_ports(graph);

  for (const auto& binding : graph.inputs) {
    auto it = inputs.find(binding.name);
    if (it == inputs.end())
      throw InvalidInputError("execute: missing input '" + binding.name + "'");
    if (!(it->second.dims == binding.shape) || it->second.bits != binding.bits)
      throw ShapeError("execute: input '" + binding.name + "' is " +
                       it->second.dims.str() + "/" + std::to_string(it->second.bits) +
                       "b, graph declares " + binding.shape.str() + "/" +
                       std::to_string(binding.bits) + "b");
  }

  std::map<std::string, Value> values;
  for (const auto& id : vg.topo_order) values.emplace(id, Value{});

  // Graph inputs wrapped once so ports can reference them uniformly.
  std::map<std::string, Value> input_values;
  for (const auto& [name, tensor] : inputs) input_values.emplace(name, tensor);

  auto operand = [&](const LayerSpec& spec, int port) -> const Value& {
    const auto& src = sources.at({spec.id, port});
    return src.from_input ? input_values.at(src.producer) : values.at(src.producer);
  };

  ExecutionTrace local_trace;
  std::mutex trace_mutex;

  auto run_node = [&](const std::string& id) {
    const LayerSpec& spec = *graph.find(id);
    const auto start = std::chrono::steady_clock::now();
    Value result;
    switch (spec.kind) {
      case LayerKind::kBConv2d:
      case LayerKind::kDownsampleConv:
        result = bconv2d(as_quant(operand(spec, 0), id), node_weights(params, spec),
                         spec.geom);
        break;
      case LayerKind::kBDWConv2d:
        result = bdwconv2d(as_quant(operand(spec, 0), id), node_weights(params, spec),
                           spec.geom);
        break;
      case LayerKind::kPConv2d:
        result = pconv2d(as_quant(operand(spec, 0), id), node_weights(params, spec),
                         spec.geom, spec.split_ratio);
        break;
      case LayerKind::kBnFoldMarker:
        result = as_int(operand(spec, 0), id);  // folded offline, identity here
        break;
      case LayerKind::kQuantAct:
        result = quant_act(as_int(operand(spec, 0), id), node_requant(params, spec));
        break;
      case LayerKind::kUpsampleNearest:
        result = upsample_nearest(as_quant(operand(spec, 0), id), spec.factor);
        break;
      case LayerKind::kCoordEmbed:
        result = coord_embed(as_quant(operand(spec, 0), id));
        break;
      case LayerKind::kEltwiseAdd:
        result = adder_array(as_int(operand(spec, 0), id), as_int(operand(spec, 1), id));
        break;
      case LayerKind::kBinarizeAct: {
        const IntTensor in = as_int(operand(spec, 0), id);
        result = binarize_act(in.data, in.dims.channels,
                              in.dims.height * in.dims.width,
                              spec.sign_target ? BinTarget::kSigned
                                               : BinTarget::kZeroOne,
                              spec.threshold, spec.fold_bits);
        break;
      }
      case LayerKind::kBmm:
        result = bmm(as_quant(operand(spec, 0), id),
                     std::get<BinaryWeightSet>(operand(spec, 1)));
        break;
    }
    const auto stop = std::chrono::steady_clock::now();
    values.at(id) = std::move(result);
    if (trace) {
      ExecutionTrace::Node n;
      n.id = id;
      n.kind = kind_name(spec.kind);
      const auto& info = vg.node_output.at(id);
      n.out_shape = info.kind == ValueKind::kPacked
                        ? Shape{info.rows, 1, info.lanes}
                        : info.shape;
      n.macs = vg.node_macs.at(id);
      auto pit = params.find(id);
      n.mode = (pit != params.end() && pit->second.weights)
                   ? pit->second.weights->mode
                   : (spec.kind == LayerKind::kBmm ? spec.mode : -1);
      n.millis = std::chrono::duration<double, std::milli>(stop - start).count();
      std::lock_guard<std::mutex> lock(trace_mutex);
      local_trace.nodes.push_back(std::move(n));
    }
  };

  // Dependency levels; nodes within a level are independent.
  std::map<std::string, int> level;
  for (const auto& id : vg.topo_order) {
    int lvl = 0;
    const LayerSpec& spec = *graph.find(id);
    for (int p = 0; p < (spec.kind == LayerKind::kEltwiseAdd ||
                                 spec.kind == LayerKind::kBmm
                             ? 2
                             : 1);
         ++p) {
      const auto& src = sources.at({id, p});
      if (!src.from_input) lvl = std::max(lvl, level.at(src.producer) + 1);
    }
    level[id] = lvl;
  }
  std::map<int, std::vector<std::string>> by_level;
  for (const auto& id : vg.topo_order) by_level[level.at(id)].push_back(id);

  for (auto& [lvl, ids] : by_level) {
    std::sort(ids.begin(), ids.end());
    if (workers <= 1 || ids.size() == 1) {
      for (const auto& id : ids) run_node(id);
      continue;
    }
    const int nthreads = std::min<int>(workers, static_cast<int>(ids.size()));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t]() {
        for (std::size_t i = static_cast<std::size_t>(t); i < ids.size();
             i += static_cast<std::size_t>(nthreads)) {
          try {
            run_node(ids[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  if (trace) {
    std::sort(local_trace.nodes.begin(), local_trace.nodes.end(),
              [&](const auto& a, const auto& b) {
                return std::find(vg.topo_order.begin(), vg.topo_order.end(), a.id) <
                       std::find(vg.topo_order.begin(), vg.topo_order.end(), b.id);
              });
    local_trace.total_macs = vg.total_macs;
    for (const auto& n : local_trace.nodes) local_trace.total_millis += n.millis;
    *trace = std::move(local_trace);
  }

  std::map<std::string, Value> outputs;
  for (const auto& o : graph.outputs) outputs.emplace(o.name, values.at(o.node));
  return outputs;
}

MacCounts count_macs(const NetworkGraph& graph, const ParamMap& params) {
  const ValidatedGraph vg = validate(graph, params);
  return {vg.node_macs, vg.total_macs};
}

}  // namespace bnne
