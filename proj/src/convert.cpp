// Float-model conversion: everything weight-only (binarization, gamma, bias
// folding, BN folding) happens here, once, so the runtime never touches it.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "bnne/bitcore.hpp"
#include "bnne/toolchain.hpp"

namespace bnne::tool {

namespace {

// Activation bit width reaching each node's port-0 input, resolved without
// weights (only input bindings and quant_act out_bits can set it).
std::map<std::string, int> input_bits_map(const NetworkGraph& graph) {
  std::map<std::string, int> out_bits;   // node id -> produced bit width
  std::map<std::string, int> in_bits;    // node id -> consumed bit width
  std::map<std::string, std::string> port0_producer;
  for (const auto& e : graph.edges)
    if (e.port == 0) port0_producer[e.to] = e.from;
  std::map<std::string, int> pending;
  for (const auto& n : graph.nodes) pending[n.id] = 0;

  std::map<std::string, int> binding_bits;
  for (const auto& b : graph.inputs)
    if (b.port == 0) binding_bits[b.node] = b.bits;

  // Nodes form a DAG, so a fixed number of passes settles every width.
  bool progress = true;
  while (progress) {
    progress = false;
    for (const auto& n : graph.nodes) {
      if (out_bits.contains(n.id)) continue;
      int in = -1;
      if (auto it = binding_bits.find(n.id); it != binding_bits.end()) {
        in = it->second;
      } else if (auto it = port0_producer.find(n.id); it != port0_producer.end()) {
        if (auto ob = out_bits.find(it->second); ob != out_bits.end())
          in = ob->second;
      }
      if (in < 0) continue;
      in_bits[n.id] = in;
      int out = in;
      if (n.kind == LayerKind::kQuantAct) out = n.out_bits;
      out_bits[n.id] = out;
      progress = true;
    }
  }
  return in_bits;
}

class BlobCursor {
 public:
  explicit BlobCursor(std::span<const float> blob) : blob_(blob) {}

  std::span<const float> take(std::size_t n, const std::string& node) {
    if (pos_ + n > blob_.size())
      throw InvalidInputError("convert: weight blob too short for node '" + node +
                              "' (need " + std::to_string(pos_ + n) + " floats, have " +
                              std::to_string(blob_.size()) + ")");
    const auto s = blob_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t consumed() const { return pos_; }
  std::size_t total() const { return blob_.size(); }

 private:
  std::span<const float> blob_;
  std::size_t pos_ = 0;
};

std::vector<std::int32_t> round_biases(std::span<const float> raw,
                                       const std::string& node) {
  std::vector<std::int32_t> out;
  out.reserve(raw.size());
  for (auto b : raw) {
    if (std::isnan(b))
      throw InvalidInputError("convert: NaN bias in node '" + node + "'");
    out.push_back(static_cast<std::int32_t>(std::llround(b)));
  }
  return out;
}

}  // namespace

ModelContainer convert(const NetworkGraph& graph, std::span<const float> blob) {
  const auto in_bits = input_bits_map(graph);
  std::vector<const LayerSpec*> order;
  for (const auto& n : graph.nodes) order.push_back(&n);
  std::sort(order.begin(), order.end(),
            [](const LayerSpec* a, const LayerSpec* b) { return a->id < b->id; });

  ModelContainer model;
  model.graph = graph;
  BlobCursor cursor(blob);

  // Producer conv of each bn marker, and the quant_act consuming it.
  std::map<std::string, std::string> producer_of, consumer_of;
  for (const auto& e : graph.edges) {
    if (e.port != 0) continue;
    producer_of[e.to] = e.from;
    consumer_of[e.from] = e.to;
  }

  for (const LayerSpec* node : order) {
    switch (node->kind) {
      case LayerKind::kBConv2d:
      case LayerKind::kDownsampleConv:
      case LayerKind::kBDWConv2d:
      case LayerKind::kPConv2d: {
        int out_ch = node->out_channels;
        int lanes = 0;
        const int kk = node->geom.kernel_h * node->geom.kernel_w;
        if (node->kind == LayerKind::kBDWConv2d) {
          out_ch = node->in_channels;
          lanes = kk;
        } else if (node->kind == LayerKind::kPConv2d) {
          const int conv_c =
              static_cast<int>(std::floor(node->in_channels * node->split_ratio));
          out_ch = conv_c;
          lanes = conv_c * kk;
        } else {
          lanes = node->in_channels * kk;
        }
        if (out_ch < 1 || lanes < 1)
          throw ConfigError("convert: node '" + node->id +
                            "' has incomplete channel parameters");
        auto bits_it = in_bits.find(node->id);
        if (bits_it == in_bits.end())
          throw ConfigError("convert: cannot resolve activation width for '" +
                            node->id + "'");
        const auto weights =
            cursor.take(static_cast<std::size_t>(out_ch) * lanes, node->id);
        const auto betas = round_biases(cursor.take(out_ch, node->id), node->id);
        model.params[node->id].weights =
            binarize_filter_bank(weights, out_ch, lanes, bits_it->second, betas);
        break;
      }
      case LayerKind::kBnFoldMarker: {
        const int channels = node->out_channels;
        if (channels < 1)
          throw ConfigError("convert: bn marker '" + node->id +
                            "' needs out_channels");
        BnParams bn;
        bn.eps = node->bn_eps;
        auto grab = [&](std::vector<double>& dst) {
          const auto s = cursor.take(static_cast<std::size_t>(channels), node->id);
          dst.assign(s.begin(), s.end());
          for (auto v : dst)
            if (std::isnan(v))
              throw InvalidInputError("convert: NaN BN parameter in node '" +
                                      node->id + "'");
        };
        grab(bn.mean);
        grab(bn.variance);
        grab(bn.scale);
        grab(bn.shift);

        auto cit = consumer_of.find(node->id);
        if (cit == consumer_of.end())
          throw ConfigError("convert: bn marker '" + node->id + "' has no consumer");
        const LayerSpec* act = graph.find(cit->second);
        if (!act || act->kind != LayerKind::kQuantAct)
          throw ConfigError("convert: bn marker '" + node->id +
                            "' must feed a quant_act node");
        // Bias stays in the pre-scale integer domain of the producing conv.
        auto pit = producer_of.find(node->id);
        std::vector<std::int32_t> bias(static_cast<std::size_t>(channels), 0);
        if (pit != producer_of.end()) {
          auto wp = model.params.find(pit->second);
          if (wp != model.params.end() && wp->second.weights)
            bias = wp->second.weights->folded_bias;
        }
        auto [rq, new_bias] = fold_bn(bias, bn, act->out_bits);
        (void)new_bias;
        model.params[act->id].requant = std::move(rq);
        break;
      }
      default:
        break;
    }
  }

  if (cursor.consumed() != cursor.total())
    throw InvalidInputError("convert: weight blob has " +
                            std::to_string(cursor.total() - cursor.consumed()) +
                            " unconsumed floats");

  validate(model.graph, model.params);  // converter self-check
  return model;
}

void cmd_convert(const std::string& graph_path, const std::string& blob_path,
                 const std::string& out_path) {
  std::ifstream gf(graph_path);
  if (!gf) throw IoError("cannot open graph file '" + graph_path + "'");
  const std::string text((std::istreambuf_iterator<char>(gf)),
                         std::istreambuf_iterator<char>());
  const NetworkGraph graph = graph_from_json(text);

  std::ifstream bf(blob_path, std::ios::binary);
  if (!bf) throw IoError("cannot open weight blob '" + blob_path + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(bf)),
                        std::istreambuf_iterator<char>());
  if (raw.size() % sizeof(float) != 0)
    throw InvalidInputError("convert: blob size is not a multiple of 4 bytes");
  std::vector<float> blob(raw.size() / sizeof(float));
  std::memcpy(blob.data(), raw.data(), raw.size());

  write_model(out_path, convert(graph, blob));
}

}  // namespace bnne::tool
