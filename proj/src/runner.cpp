#include <bit>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "bnne/bitcore.hpp"
#include "bnne/toolchain.hpp"

namespace bnne::tool {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  int n = 0;
  if (const char* env = std::getenv("BNNE_THREADS")) n = std::atoi(env);
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

void run_model(const std::string& model_path, const std::string& input_path,
               const std::string& output_path, const std::string& trace_path,
               int workers) {
  const ModelContainer model = read_model(model_path);

  std::set<std::string> input_names;
  for (const auto& b : model.graph.inputs) input_names.insert(b.name);
  if (input_names.size() != 1)
    throw ConfigError("run: model must declare exactly one input tensor, found " +
                      std::to_string(input_names.size()));

  std::map<std::string, QuantTensor> inputs;
  inputs.emplace(*input_names.begin(), quant_from_raw(read_tensor(input_path)));

  ExecutionTrace trace;
  const auto outputs =
      execute(model.graph, model.params, inputs, resolve_workers(workers),
              trace_path.empty() ? nullptr : &trace);

  if (model.graph.outputs.empty()) throw ConfigError("run: model has no outputs");
  const Value& out = outputs.at(model.graph.outputs.front().name);
  if (std::holds_alternative<QuantTensor>(out))
    write_tensor(output_path, to_raw(std::get<QuantTensor>(out)));
  else if (std::holds_alternative<IntTensor>(out))
    write_tensor(output_path, to_raw(std::get<IntTensor>(out)));
  else
    throw ConfigError("run: output node produces a packed operand, not a tensor");

  if (!trace_path.empty()) {
    std::ofstream tf(trace_path, std::ios::trunc);
    if (!tf) throw IoError("cannot write trace '" + trace_path + "'");
    tf << trace_to_json(trace) << "\n";
  }
}

VerifyResult verify_model(const ModelContainer& model, std::uint64_t seed,
                          int trials) {
  VerifyResult result;

  // Folded-bias consistency, re-derived from packed bits per layer.
  for (const auto& [id, np] : model.params) {
    if (!np.weights || np.weights->mode != 0) continue;
    const auto& ws = *np.weights;
    for (int c = 0; c < ws.out_channels; ++c) {
      int ones = 0;
      for (auto w : ws.packed_bits[static_cast<std::size_t>(c)])
        ones += std::popcount(w);
      const std::int64_t expected =
          ws.beta[static_cast<std::size_t>(c)] +
          gamma_term(2 * ones - ws.lane_count, ws.lane_count, ws.bits);
      if (ws.folded_bias[static_cast<std::size_t>(c)] != expected) {
        result.ok = false;
        result.report += "FAIL layer '" + id + "' channel " + std::to_string(c) +
                         ": folded bias " +
                         std::to_string(ws.folded_bias[static_cast<std::size_t>(c)]) +
                         " != beta + gamma = " + std::to_string(expected) + "\n";
      }
    }
  }
  if (!result.ok) return result;
  result.report += "folded-bias consistency: OK\n";

  // Randomized whole-graph runs against the dense reference executor.
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    std::map<std::string, QuantTensor> inputs;
    for (const auto& b : model.graph.inputs) {
      if (inputs.contains(b.name)) continue;
      QuantTensor q(b.shape, b.bits);
      std::uniform_int_distribution<std::uint32_t> dist(0, (1u << b.bits) - 1);
      for (auto& v : q.data) v = dist(rng);
      inputs.emplace(b.name, std::move(q));
    }
    const auto engine = execute(model.graph, model.params, inputs);
    const auto reference = oracle::ref_execute(model.graph, model.params, inputs);
    for (const auto& [name, value] : engine) {
      bool equal = true;
      const auto& ref = reference.at(name);
      if (std::holds_alternative<IntTensor>(value))
        equal = std::get<IntTensor>(value).data == std::get<IntTensor>(ref).data;
      else if (std::holds_alternative<QuantTensor>(value))
        equal = std::get<QuantTensor>(value).data == std::get<QuantTensor>(ref).data;
      if (!equal) {
        result.ok = false;
        result.report += "FAIL trial " + std::to_string(t) + ": output '" + name +
                         "' differs from the reference executor\n";
      }
    }
    if (!result.ok) return result;
  }
  result.report += "graph equivalence: " + std::to_string(trials) +
                   " randomized runs, 0 mismatches\n";
  return result;
}

}  // namespace bnne::tool
