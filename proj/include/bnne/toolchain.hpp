#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "bnne/graph.hpp"
#include "bnne/model_io.hpp"
#include "bnne/oracle.hpp"

namespace bnne::tool {

// Offline conversion: sign-binarize float weights, compute the correction
// term, fold it into the bias, and fold batch-norm parameters into the
// requantization of the following quant_act node.
//
// Blob layout (32-bit little-endian floats, nodes visited in lexicographic
// id order):
//   conv kinds:      out_channels x lane_count weights, then out_channels biases
//   bn_fold_marker:  mean[C], variance[C], scale[C], shift[C]
// All other kinds consume nothing.
ModelContainer convert(const NetworkGraph& graph, std::span<const float> blob);

void cmd_convert(const std::string& graph_path, const std::string& blob_path,
                 const std::string& out_path);

// Loads a model and an input tensor, executes, writes the output tensor and
// optionally a JSON trace. workers <= 0 picks up BNNE_THREADS (0 = auto).
void run_model(const std::string& model_path, const std::string& input_path,
               const std::string& output_path, const std::string& trace_path,
               int workers);

struct VerifyResult {
  bool ok = true;
  std::string report;
};

// Model self-check: folded-bias consistency per layer, then randomized
// engine-vs-reference executions of the whole graph.
VerifyResult verify_model(const ModelContainer& model, std::uint64_t seed,
                          int trials);

int resolve_workers(int requested);

}  // namespace bnne::tool

namespace bnne::oracle {

// Reference execution of a whole graph with dense unpacked weights and naive
// layer loops; the comparison target for model verification and goldens.
std::map<std::string, Value> ref_execute(const NetworkGraph& graph,
                                         const ParamMap& params,
                                         const std::map<std::string, QuantTensor>& inputs);

}  // namespace bnne::oracle
