#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bnne/layers.hpp"
#include "bnne/tensor.hpp"

namespace bnne {

enum class LayerKind {
  kBConv2d,
  kBDWConv2d,
  kPConv2d,
  kDownsampleConv,  // bconv2d alias used for strided stem/stage transitions
  kBnFoldMarker,    // identity at run time; parameters are folded at convert time
  kQuantAct,
  kBmm,
  kUpsampleNearest,
  kEltwiseAdd,
  kCoordEmbed,
  kBinarizeAct,
};

std::string kind_name(LayerKind kind);
LayerKind kind_from_name(const std::string& name);

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kBConv2d;
  ConvGeometry geom;
  int in_channels = 0;
  int out_channels = 0;
  int mode = 0;
  double split_ratio = 0.25;
  int factor = 1;               // upsample
  std::int32_t threshold = 0;   // binarize_act
  bool sign_target = true;      // binarize_act: +-1 (true) vs {0,1}
  int fold_bits = 8;            // binarize_act: activation width gamma folds on
  int out_bits = 8;             // quant_act
  double bn_eps = 1e-5;         // bn_fold_marker
};

struct Edge {
  std::string from;
  std::string to;
  int port = 0;
};

struct IoBinding {
  std::string name;
  std::string node;
  int port = 0;
  Shape shape;
  int bits = 8;
};

struct NetworkGraph {
  std::vector<LayerSpec> nodes;
  std::vector<Edge> edges;
  std::vector<IoBinding> inputs;
  std::vector<IoBinding> outputs;

  const LayerSpec* find(const std::string& id) const;
};

// Per-node runtime parameters, produced by the converter / model container.
struct NodeParams {
  std::optional<BinaryWeightSet> weights;
  std::optional<RequantParams> requant;
};
using ParamMap = std::map<std::string, NodeParams>;

using Value = std::variant<QuantTensor, IntTensor, BinaryWeightSet>;

enum class ValueKind { kQuant, kInt, kPacked };

struct ValueInfo {
  ValueKind kind = ValueKind::kQuant;
  Shape shape;
  int bits = 8;
  int rows = 0;   // packed values
  int lanes = 0;  // packed values
  int mode = -1;  // packed values
};

struct ValidatedGraph {
  std::vector<std::string> topo_order;  // deterministic, id tie-break
  std::map<std::string, ValueInfo> node_output;
  std::map<std::string, std::int64_t> node_macs;
  std::int64_t total_macs = 0;
};

ValidatedGraph validate(const NetworkGraph& graph, const ParamMap& params);

struct ExecutionTrace {
  struct Node {
    std::string id;
    std::string kind;
    Shape out_shape;
    std::int64_t macs = 0;
    int mode = -1;  // -1 for non-MAC nodes
    double millis = 0.0;
  };
  std::vector<Node> nodes;
  std::int64_t total_macs = 0;
  double total_millis = 0.0;
};

// Executes the graph in deterministic topological order. workers <= 1 runs
// single threaded; independent ready nodes run in parallel otherwise with
// identical results.
std::map<std::string, Value> execute(const NetworkGraph& graph,
                                     const ParamMap& params,
                                     const std::map<std::string, QuantTensor>& inputs,
                                     int workers = 1,
                                     ExecutionTrace* trace = nullptr);

// Analytic MAC counts from shape inference alone (no execution).
struct MacCounts {
  std::map<std::string, std::int64_t> per_node;
  std::int64_t total = 0;
};
MacCounts count_macs(const NetworkGraph& graph, const ParamMap& params);

}  // namespace bnne
