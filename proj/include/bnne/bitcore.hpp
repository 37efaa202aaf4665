#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bnne/errors.hpp"

namespace bnne {

inline constexpr int kMinBits = 1;
inline constexpr int kMaxBits = 16;
inline constexpr int kLanesPerWord = 64;

inline int words_for_lanes(int lanes) {
  return (lanes + kLanesPerWord - 1) / kLanesPerWord;
}

// Packed bit-planes of one reduction vector. Lane k lives at bit k%64 of
// word k/64; valid lanes form a prefix of length lane_count.
struct BitPlaneBlock {
  int lane_count = 0;  // I
  int bits = 0;        // J
  std::vector<std::vector<std::uint64_t>> planes;  // [bits][words]
  std::vector<std::uint64_t> valid_mask;

  int words() const { return static_cast<int>(valid_mask.size()); }
};

// Packed 1-bit weights per output channel plus the folded additive constant.
// Mode 0 kernels expect folded_bias = beta + gamma; mode 1 kernels expect
// folded_bias = beta. Gamma is folded at construction, never inside a kernel.
enum class WeightOrigin { kSignBinarized, kNativeMask };

struct BinaryWeightSet {
  int mode = 0;  // 0: +-1 weights via XNOR, 1: {0,1} weights via AND
  int out_channels = 0;
  int lane_count = 0;  // I per output channel
  int bits = 8;        // J the bias was folded against (mode 0)
  WeightOrigin origin = WeightOrigin::kSignBinarized;
  std::vector<std::vector<std::uint64_t>> packed_bits;  // [channel][words]
  std::vector<std::int32_t> folded_bias;
  std::vector<std::int32_t> beta;  // pre-fold bias, kept for consistency checks
};

struct MacResult {
  std::int32_t value = 0;
};

// --- packing (mac_kernels.cpp, multiply-free) ------------------------------

// capacity >= lane_count allocates extra mask-excluded zero lanes, so word
// counts can be aligned between operands.
BitPlaneBlock pack_bitplanes(std::span<const std::uint32_t> activations, int bits,
                             int capacity = 0);
std::vector<std::uint32_t> unpack_bitplanes(const BitPlaneBlock& block);

// --- offline weight preparation (bitcore.cpp) -------------------------------

// Sign binarization: bit = 1 for w >= 0 (ties to +1), bit = 0 for w < 0.
// weight_sum is the sum of the +-1 weights, i.e. 2*popcount - I.
std::pair<std::vector<std::uint64_t>, std::int32_t> binarize_weights_sign(
    std::span<const float> weights, int capacity = 0);

// Correction term: ((weight_sum - I)/2) * (2^J - 1).
std::int64_t gamma_term(std::int64_t weight_sum, int lane_count, int bits);

// beta + gamma, checked against the 32-bit accumulator budget.
std::int32_t fold_bias(std::int64_t beta, std::int64_t weight_sum, int lane_count,
                       int bits);

BinaryWeightSet make_weight_set_signed(int lane_count, int bits,
                                       std::vector<std::vector<std::uint64_t>> packed,
                                       std::span<const std::int32_t> weight_sums,
                                       std::span<const std::int32_t> beta);
BinaryWeightSet make_weight_set_mask(int lane_count, int bits,
                                     std::vector<std::vector<std::uint64_t>> packed,
                                     std::span<const std::int32_t> beta);

// Sign-binarize a dense float filter bank (out_channels x lane_count,
// channel-major) and fold gamma into the per-channel bias.
BinaryWeightSet binarize_filter_bank(std::span<const float> weights, int out_channels,
                                     int lane_count, int bits,
                                     std::span<const std::int32_t> beta);

// --- MAC kernels (mac_kernels.cpp, multiply-free) ---------------------------

MacResult mac_xnor(const BitPlaneBlock& block, const BinaryWeightSet& weights,
                   int channel);
MacResult mac_and(const BitPlaneBlock& block, const BinaryWeightSet& weights,
                  int channel);
std::vector<MacResult> mac_batch(const BitPlaneBlock& block,
                                 const BinaryWeightSet& weights);

// Single-word popcount primitives, shared with the exhaustive identity checks.
int xnor_popcount_word(std::uint64_t plane, std::uint64_t weight_bits,
                       std::uint64_t mask);
int and_popcount_word(std::uint64_t plane, std::uint64_t weight_bits,
                      std::uint64_t mask);

}  // namespace bnne
