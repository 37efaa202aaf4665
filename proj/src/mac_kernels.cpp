// Bit-plane packing and the two multiply-free MAC kernels. This translation
// unit is the runtime inference path for MAC operations: XNOR/AND, popcount,
// shift and add only. Weight-side constants (gamma, folded bias) are prepared
// elsewhere and arrive here as opaque integers.

#include <bit>
#include <cstdint>
#include <string>

#include "bnne/bitcore.hpp"

namespace bnne {

namespace {

std::vector<std::uint64_t> prefix_mask(int lanes, int words) {
  std::vector<std::uint64_t> mask(static_cast<std::size_t>(words), 0);
  int full = lanes / kLanesPerWord;
  for (int w = 0; w < full; ++w) mask[static_cast<std::size_t>(w)] = ~0ull;
  int rest = lanes % kLanesPerWord;
  if (rest != 0) mask[static_cast<std::size_t>(full)] = (1ull << rest) - 1;
  return mask;
}

void check_operands(const BitPlaneBlock& block, const BinaryWeightSet& weights,
                    int channel, int expected_mode) {
  if (weights.mode != expected_mode)
    throw ModeError("mac: weight set has mode " + std::to_string(weights.mode) +
                    ", kernel expects mode " + std::to_string(expected_mode));
  if (block.lane_count != weights.lane_count)
    throw ShapeError("mac: lane count mismatch, block " +
                     std::to_string(block.lane_count) + " vs weights " +
                     std::to_string(weights.lane_count));
  if (block.bits != weights.bits)
    throw ShapeError("mac: bit width mismatch, block " + std::to_string(block.bits) +
                     " vs weights " + std::to_string(weights.bits));
  if (channel < 0 || channel >= weights.out_channels)
    throw ShapeError("mac: channel " + std::to_string(channel) + " out of range");
  if (static_cast<int>(weights.packed_bits[static_cast<std::size_t>(channel)].size()) !=
      block.words())
    throw ShapeError("mac: packed word count mismatch between block and weights");
}

}  // namespace

int xnor_popcount_word(std::uint64_t plane, std::uint64_t weight_bits,
                       std::uint64_t mask) {
  return std::popcount(~(plane ^ weight_bits) & mask);
}

int and_popcount_word(std::uint64_t plane, std::uint64_t weight_bits,
                      std::uint64_t mask) {
  return std::popcount(plane & weight_bits & mask);
}

BitPlaneBlock pack_bitplanes(std::span<const std::uint32_t> activations, int bits,
                             int capacity) {
  if (bits < kMinBits || bits > kMaxBits)
    throw RangeError("pack_bitplanes: bit width must be in 1..16, got " +
                     std::to_string(bits));
  const int lanes = static_cast<int>(activations.size());
  if (capacity < lanes) capacity = lanes;
  const int words = words_for_lanes(capacity);

  const std::uint32_t limit = 1u << bits;
  for (std::size_t i = 0; i < activations.size(); ++i)
    if (activations[i] >= limit)
      throw RangeError("pack_bitplanes: value " + std::to_string(activations[i]) +
                       " at index " + std::to_string(i) + " does not fit in " +
                       std::to_string(bits) + " bits");

  BitPlaneBlock block;
  block.lane_count = lanes;
  block.bits = bits;
  block.planes.assign(static_cast<std::size_t>(bits),
                      std::vector<std::uint64_t>(static_cast<std::size_t>(words), 0));
  for (int i = 0; i < lanes; ++i) {
    const std::uint32_t value = activations[static_cast<std::size_t>(i)];
    const std::size_t word = static_cast<std::size_t>(i / kLanesPerWord);
    const int offset = i % kLanesPerWord;
    for (int j = 0; j < bits; ++j)
      if ((value >> j) & 1u)
        block.planes[static_cast<std::size_t>(j)][word] |= 1ull << offset;
  }
  block.valid_mask = prefix_mask(lanes, words);
  return block;
}

std::vector<std::uint32_t> unpack_bitplanes(const BitPlaneBlock& block) {
  std::vector<std::uint32_t> values(static_cast<std::size_t>(block.lane_count), 0);
  for (int i = 0; i < block.lane_count; ++i) {
    const std::size_t word = static_cast<std::size_t>(i / kLanesPerWord);
    const int offset = i % kLanesPerWord;
    std::uint32_t value = 0;
    for (int j = 0; j < block.bits; ++j)
      value |= static_cast<std::uint32_t>(
                   (block.planes[static_cast<std::size_t>(j)][word] >> offset) & 1ull)
               << j;
    values[static_cast<std::size_t>(i)] = value;
  }
  return values;
}

MacResult mac_xnor(const BitPlaneBlock& block, const BinaryWeightSet& weights,
                   int channel) {
  check_operands(block, weights, channel, 0);
  const auto& bits = weights.packed_bits[static_cast<std::size_t>(channel)];
  // Padded lanes would count as XNOR(0,0) hits, so every popcount is masked.
  std::int64_t acc = weights.folded_bias[static_cast<std::size_t>(channel)];
  for (int j = 0; j < block.bits; ++j) {
    const auto& plane = block.planes[static_cast<std::size_t>(j)];
    std::int64_t matches = 0;
    for (std::size_t w = 0; w < plane.size(); ++w)
      matches += xnor_popcount_word(plane[w], bits[w], block.valid_mask[w]);
    acc += matches << j;
  }
  return MacResult{static_cast<std::int32_t>(acc)};
}

MacResult mac_and(const BitPlaneBlock& block, const BinaryWeightSet& weights,
                  int channel) {
  check_operands(block, weights, channel, 1);
  const auto& bits = weights.packed_bits[static_cast<std::size_t>(channel)];
  std::int64_t acc = weights.folded_bias[static_cast<std::size_t>(channel)];
  for (int j = 0; j < block.bits; ++j) {
    const auto& plane = block.planes[static_cast<std::size_t>(j)];
    std::int64_t hits = 0;
    for (std::size_t w = 0; w < plane.size(); ++w)
      hits += and_popcount_word(plane[w], bits[w], block.valid_mask[w]);
    acc += hits << j;
  }
  return MacResult{static_cast<std::int32_t>(acc)};
}

std::vector<MacResult> mac_batch(const BitPlaneBlock& block,
                                 const BinaryWeightSet& weights) {
  std::vector<MacResult> out(static_cast<std::size_t>(weights.out_channels));
  for (int c = 0; c < weights.out_channels; ++c)
    out[static_cast<std::size_t>(c)] =
        weights.mode == 0 ? mac_xnor(block, weights, c) : mac_and(block, weights, c);
  return out;
}

}  // namespace bnne
