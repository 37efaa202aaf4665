#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnne/graph.hpp"
#include "bnne/tensor.hpp"

namespace bnne {

// In-memory form of a .bnne model container: graph topology plus one weight
// or requant record per parameterized node. All integers little-endian on
// disk; a CRC32 over every section guards the whole file.
struct ModelContainer {
  static constexpr std::uint16_t kFormatVersion = 1;

  NetworkGraph graph;
  ParamMap params;
};

std::vector<std::uint8_t> serialize_model(const ModelContainer& model);
ModelContainer parse_model(const std::vector<std::uint8_t>& bytes);

void write_model(const std::string& path, const ModelContainer& model);
ModelContainer read_model(const std::string& path);

// Graph description as JSON text (also embedded in the container).
std::string graph_to_json(const NetworkGraph& graph);
NetworkGraph graph_from_json(const std::string& text);

// Raw tensor files ("BNNT"): dims, bit width, dtype tag {u8, i32}, payload.
struct RawTensor {
  Shape dims;
  int bits = 8;
  bool is_signed = false;  // false: u8 payload, true: i32 payload
  std::vector<std::uint8_t> u8;
  std::vector<std::int32_t> i32;
};

void write_tensor(const std::string& path, const RawTensor& tensor);
RawTensor read_tensor(const std::string& path);

RawTensor to_raw(const QuantTensor& t);
RawTensor to_raw(const IntTensor& t);
QuantTensor quant_from_raw(const RawTensor& raw);

std::string trace_to_json(const ExecutionTrace& trace);

}  // namespace bnne
