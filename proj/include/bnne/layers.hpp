#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bnne/bitcore.hpp"
#include "bnne/tensor.hpp"

namespace bnne {

struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
};

// Per-channel fixed-point requantization: clamp(((x*M + round) >> s) + offset)
// into [0, 2^bits - 1]. Round-half-up; multiplier and offset broadcast when
// given as a single value.
struct RequantParams {
  std::vector<std::int32_t> multiplier{1};
  int shift = 0;
  std::vector<std::int32_t> offset{0};
  int bits = 8;
};

enum class BinTarget { kZeroOne, kSigned };  // {0,1} vs +-1

IntTensor bconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                  const ConvGeometry& geom);
IntTensor bdwconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                    const ConvGeometry& geom);
IntTensor pconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                  const ConvGeometry& geom, double split_ratio);

// Second operand is a runtime-binarized matrix: one packed row per output
// column, lane count equal to the inner dimension. Rows of the left operand
// are channels, lanes are the flattened spatial extent.
IntTensor bmm(const QuantTensor& left, const BinaryWeightSet& right);

// Binarize a flat value matrix (rows x lanes) into packed weight rows.
// fold_bits is the activation bit width gamma is folded against (+-1 target).
BinaryWeightSet binarize_act(std::span<const std::int32_t> values, int rows,
                             int lanes, BinTarget target, std::int32_t threshold,
                             int fold_bits);

IntTensor adder_array(const IntTensor& acc, const IntTensor& addend);
IntTensor adder_array(const IntTensor& acc, std::span<const std::int32_t> channel_bias);

QuantTensor quant_act(const IntTensor& input, const RequantParams& rq);
std::int32_t requant_value(std::int64_t x, std::int32_t multiplier, int shift,
                           std::int32_t offset, int bits);

QuantTensor upsample_nearest(const QuantTensor& input, int factor);
QuantTensor coord_embed(const QuantTensor& input);

// Batch-norm folding into requantization parameters. The conv bias stays in
// the pre-scale integer domain; the BN affine lands in multiplier/shift/offset.
struct BnParams {
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> scale;
  std::vector<double> shift;
  double eps = 1e-5;
};

std::pair<RequantParams, std::vector<std::int32_t>> fold_bn(
    std::span<const std::int32_t> folded_bias, const BnParams& bn, int out_bits);

}  // namespace bnne
