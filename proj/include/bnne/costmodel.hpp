#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnne/errors.hpp"

namespace bnne::cost {

// Abstract MAC-lane architectures compared in gate equivalents. Counts model
// the combinational structure of one reduction lane; accumulator registers
// and memories are excluded.
enum class Arch { kProposed, kSelector, kXnorModified };

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);

struct PrimitiveCounts {
  std::int64_t two_input_logic = 0;
  std::int64_t one_bit_mux = 0;
  std::int64_t full_adder_bit = 0;
};

// Per-lane primitive inventory as a function of the activation bit width.
PrimitiveCounts lane_primitives(Arch arch, int bits);

struct GeConfig {
  double logic = 1.0;
  double mux = 2.0;
  double full_adder = 6.0;
};

struct CostEntry {
  Arch arch = Arch::kProposed;
  int bits = 8;
  std::int64_t lanes = 1;
  PrimitiveCounts per_lane;
  double total_ge = 0.0;
};

CostEntry model_cost(Arch arch, int bits, std::int64_t lanes, const GeConfig& config);

struct CostRow {
  int bits = 0;
  double proposed_ge = 0.0;
  double selector_ge = 0.0;
  double xnor_modified_ge = 0.0;
  double ratio_vs_selector = 0.0;       // proposed / selector
  double ratio_vs_xnor_modified = 0.0;  // proposed / xnor_modified
};

struct CostReport {
  GeConfig config;  // echoed so ratios are traceable to one weighting
  std::int64_t lanes = 1;
  std::vector<CostRow> rows;
};

CostReport compare(std::int64_t lanes, const std::vector<int>& bit_sweep,
                   const GeConfig& config);

std::string format_text(const CostReport& report);

}  // namespace bnne::cost
