#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnne/tensor.hpp"

// Brute-force reference implementations. Nothing in this namespace touches the
// packed-bit kernels; weights stay dense and multiplies are used freely.
namespace bnne::oracle {

struct SignedWeightTensor {
  int mode = 0;  // 0: values in {-1,+1}, 1: values in {0,1}
  int out_channels = 0;
  int lanes = 0;
  std::vector<std::int8_t> values;  // channel-major, out_channels x lanes
  std::vector<std::int32_t> beta;   // unfolded per-channel bias

  std::int8_t at(int channel, int lane) const {
    return values[static_cast<std::size_t>(channel) * lanes + lane];
  }
};

std::int64_t ref_mac(std::span<const std::uint32_t> activations,
                     const SignedWeightTensor& weights, int channel);

struct RefConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
};

IntTensor ref_conv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                     const RefConvGeometry& geom);
IntTensor ref_dwconv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                       const RefConvGeometry& geom);
IntTensor ref_pconv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                      const RefConvGeometry& geom, double split_ratio);
// right is a dense cols x inner matrix of {-1,+1} (mode 0) or {0,1} (mode 1).
IntTensor ref_bmm(const QuantTensor& left, const SignedWeightTensor& right);

QuantTensor ref_quant_act(const IntTensor& input,
                          std::span<const std::int32_t> multiplier, int shift,
                          std::span<const std::int32_t> offset, int bits);
QuantTensor ref_upsample_nearest(const QuantTensor& input, int factor);
QuantTensor ref_coord_embed(const QuantTensor& input);
IntTensor ref_add(const IntTensor& a, const IntTensor& b);

struct CampaignReport {
  std::uint64_t seed = 0;
  int trials = 0;
  int mismatches = 0;
  std::int64_t max_abs_diff = 0;
  std::vector<std::string> failures;  // "<trial>:<layer kind>" entries

  bool passed() const { return mismatches == 0; }
};

// Randomized engine-vs-oracle comparison over every layer kind and both
// operation modes. Deterministic for a fixed seed.
CampaignReport equivalence_campaign(std::uint64_t seed, int trials);

std::string format_report(const CampaignReport& report);

}  // namespace bnne::oracle
