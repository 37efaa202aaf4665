// Offline weight preparation: sign binarization, the correction term gamma,
// and bias folding. Everything here runs on the conversion side; the MAC
// kernels only ever see packed bits and folded biases.

#include <cmath>
#include <bit>
#include <cstdint>
#include <limits>
#include <string>

#include "bnne/bitcore.hpp"

namespace bnne {

namespace {

void check_bits(int bits, const char* where) {
  if (bits < kMinBits || bits > kMaxBits)
    throw RangeError(std::string(where) + ": bit width must be in 1..16, got " +
                     std::to_string(bits));
}

// 32-bit accumulator budget: I*(2^J-1) + |bias| must fit.
void check_accumulator_budget(int lane_count, int bits, std::int64_t folded_bias) {
  const std::int64_t max_act = (std::int64_t{1} << bits) - 1;
  const std::int64_t bound = std::int64_t{lane_count} * max_act +
                             (folded_bias < 0 ? -folded_bias : folded_bias);
  if (bound >= std::numeric_limits<std::int32_t>::max())
    throw RangeError("weight set exceeds the 32-bit accumulator budget: I=" +
                     std::to_string(lane_count) + " J=" + std::to_string(bits) +
                     " bias=" + std::to_string(folded_bias));
}

int packed_popcount(const std::vector<std::uint64_t>& words) {
  int count = 0;
  for (auto w : words) count += std::popcount(w);
  return count;
}

void check_padding_zero(const std::vector<std::uint64_t>& words, int lane_count) {
  const int full = lane_count / kLanesPerWord;
  const int rest = lane_count % kLanesPerWord;
  for (std::size_t w = static_cast<std::size_t>(full + (rest ? 1 : 0));
       w < words.size(); ++w)
    if (words[w] != 0)
      throw InvalidInputError("weight set: nonzero bits beyond lane count");
  if (rest != 0 && (words[static_cast<std::size_t>(full)] & ~((1ull << rest) - 1)) != 0)
    throw InvalidInputError("weight set: nonzero bits beyond lane count");
}

}  // namespace

std::pair<std::vector<std::uint64_t>, std::int32_t> binarize_weights_sign(
    std::span<const float> weights, int capacity) {
  if (weights.empty())
    throw InvalidInputError("binarize_weights_sign: empty weight vector");
  const int lanes = static_cast<int>(weights.size());
  if (capacity < lanes) capacity = lanes;
  std::vector<std::uint64_t> packed(words_for_lanes(capacity), 0);
  int ones = 0;
  for (int i = 0; i < lanes; ++i) {
    const float w = weights[static_cast<std::size_t>(i)];
    if (std::isnan(w))
      throw InvalidInputError("binarize_weights_sign: NaN weight at index " +
                              std::to_string(i));
    if (w >= 0.0f) {  // ties at 0.0 map to +1
      packed[static_cast<std::size_t>(i / kLanesPerWord)] |= 1ull << (i % kLanesPerWord);
      ++ones;
    }
  }
  return {std::move(packed), 2 * ones - lanes};
}

std::int64_t gamma_term(std::int64_t weight_sum, int lane_count, int bits) {
  check_bits(bits, "gamma_term");
  if (((weight_sum - lane_count) & 1) != 0)
    throw InternalError("gamma_term: weight_sum " + std::to_string(weight_sum) +
                        " and lane count " + std::to_string(lane_count) +
                        " have different parity");
  return ((weight_sum - lane_count) / 2) * ((std::int64_t{1} << bits) - 1);
}

std::int32_t fold_bias(std::int64_t beta, std::int64_t weight_sum, int lane_count,
                       int bits) {
  const std::int64_t folded = beta + gamma_term(weight_sum, lane_count, bits);
  if (folded < std::numeric_limits<std::int32_t>::min() ||
      folded > std::numeric_limits<std::int32_t>::max())
    throw RangeError("fold_bias: folded bias " + std::to_string(folded) +
                     " overflows 32 bits");
  return static_cast<std::int32_t>(folded);
}

BinaryWeightSet make_weight_set_signed(int lane_count, int bits,
                                       std::vector<std::vector<std::uint64_t>> packed,
                                       std::span<const std::int32_t> weight_sums,
                                       std::span<const std::int32_t> beta) {
  check_bits(bits, "make_weight_set_signed");
  if (packed.size() != weight_sums.size() || packed.size() != beta.size())
    throw ShapeError("make_weight_set_signed: channel count mismatch");
  BinaryWeightSet ws;
  ws.mode = 0;
  ws.out_channels = static_cast<int>(packed.size());
  ws.lane_count = lane_count;
  ws.bits = bits;
  ws.origin = WeightOrigin::kSignBinarized;
  ws.packed_bits = std::move(packed);
  ws.beta.assign(beta.begin(), beta.end());
  ws.folded_bias.reserve(ws.packed_bits.size());
  for (std::size_t c = 0; c < ws.packed_bits.size(); ++c) {
    check_padding_zero(ws.packed_bits[c], lane_count);
    const int ones = packed_popcount(ws.packed_bits[c]);
    if (weight_sums[c] != 2 * ones - lane_count)
      throw InternalError("make_weight_set_signed: weight_sum does not match packed"
                          " bits for channel " + std::to_string(c));
    const std::int32_t folded = fold_bias(beta[c], weight_sums[c], lane_count, bits);
    check_accumulator_budget(lane_count, bits, folded);
    ws.folded_bias.push_back(folded);
  }
  return ws;
}

BinaryWeightSet make_weight_set_mask(int lane_count, int bits,
                                     std::vector<std::vector<std::uint64_t>> packed,
                                     std::span<const std::int32_t> beta) {
  check_bits(bits, "make_weight_set_mask");
  if (packed.size() != beta.size())
    throw ShapeError("make_weight_set_mask: channel count mismatch");
  BinaryWeightSet ws;
  ws.mode = 1;
  ws.out_channels = static_cast<int>(packed.size());
  ws.lane_count = lane_count;
  ws.bits = bits;
  ws.origin = WeightOrigin::kNativeMask;
  ws.packed_bits = std::move(packed);
  ws.beta.assign(beta.begin(), beta.end());
  for (std::size_t c = 0; c < ws.packed_bits.size(); ++c) {
    check_padding_zero(ws.packed_bits[c], lane_count);
    check_accumulator_budget(lane_count, bits, beta[c]);
  }
  ws.folded_bias = ws.beta;  // no correction term in mode 1
  return ws;
}

BinaryWeightSet binarize_filter_bank(std::span<const float> weights, int out_channels,
                                     int lane_count, int bits,
                                     std::span<const std::int32_t> beta) {
  if (weights.size() != static_cast<std::size_t>(out_channels) * lane_count)
    throw ShapeError("binarize_filter_bank: expected " +
                     std::to_string(static_cast<std::size_t>(out_channels) * lane_count) +
                     " weights, got " + std::to_string(weights.size()));
  std::vector<std::vector<std::uint64_t>> packed;
  std::vector<std::int32_t> sums;
  packed.reserve(static_cast<std::size_t>(out_channels));
  sums.reserve(static_cast<std::size_t>(out_channels));
  for (int c = 0; c < out_channels; ++c) {
    auto [bits_c, sum_c] = binarize_weights_sign(
        weights.subspan(static_cast<std::size_t>(c) * lane_count,
                        static_cast<std::size_t>(lane_count)));
    packed.push_back(std::move(bits_c));
    sums.push_back(sum_c);
  }
  return make_weight_set_signed(lane_count, bits, std::move(packed), sums, beta);
}

}  // namespace bnne
