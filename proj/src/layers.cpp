// Layer inventory on top of the bitcore kernels: binary-weight convolutions,
// partial convolution, BMM with a runtime-binarized operand, the adder array,
// and the quantization/activation unit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "bnne/layers.hpp"

namespace bnne {

namespace {

struct ConvDims {
  int out_h = 0;
  int out_w = 0;
};

ConvDims conv_output_dims(const Shape& in, const ConvGeometry& g) {
  if (g.kernel_h < 1 || g.kernel_w < 1 || g.stride < 1 || g.pad < 0)
    throw ConfigError("conv: invalid geometry");
  const int oh = (in.height + 2 * g.pad - g.kernel_h) / g.stride + 1;
  const int ow = (in.width + 2 * g.pad - g.kernel_w) / g.stride + 1;
  if (in.height + 2 * g.pad < g.kernel_h || in.width + 2 * g.pad < g.kernel_w)
    throw ShapeError("conv: kernel larger than padded input");
  return {oh, ow};
}

// Receptive field as reduction lanes, channel-major then kernel row/col.
// Zero padding contributes real zero-valued lanes, so I (and gamma) stay
// constant across the whole feature map.
void gather_patch(const QuantTensor& in, int channels_lo, int channels_hi, int oy,
                  int ox, const ConvGeometry& g, std::vector<std::uint32_t>& lanes) {
  lanes.clear();
  for (int c = channels_lo; c < channels_hi; ++c)
    for (int ky = 0; ky < g.kernel_h; ++ky)
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const int iy = oy * g.stride - g.pad + ky;
        const int ix = ox * g.stride - g.pad + kx;
        const bool inside =
            iy >= 0 && iy < in.dims.height && ix >= 0 && ix < in.dims.width;
        lanes.push_back(inside ? in.at(c, iy, ix) : 0u);
      }
}

void require_mode0(const BinaryWeightSet& w, const char* op) {
  if (w.mode != 0)
    throw ModeError(std::string(op) + ": expects mode-0 (+-1) weights, got mode " +
                    std::to_string(w.mode));
}

std::int32_t checked_add(std::int64_t a, std::int64_t b) {
  const std::int64_t s = a + b;
  if (s < std::numeric_limits<std::int32_t>::min() ||
      s > std::numeric_limits<std::int32_t>::max())
    throw RangeError("adder_array: 32-bit accumulator overflow");
  return static_cast<std::int32_t>(s);
}

}  // namespace

IntTensor bconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                  const ConvGeometry& geom) {
  require_mode0(weights, "bconv2d");
  const int lanes_needed = input.dims.channels * geom.kernel_h * geom.kernel_w;
  if (weights.lane_count != lanes_needed)
    throw ShapeError("bconv2d: weights expect " + std::to_string(weights.lane_count) +
                     " lanes, input provides " + std::to_string(lanes_needed));
  if (weights.bits != input.bits)
    throw ShapeError("bconv2d: weight fold bit width " + std::to_string(weights.bits) +
                     " vs input " + std::to_string(input.bits));
  const auto [oh, ow] = conv_output_dims(input.dims, geom);
  IntTensor out({weights.out_channels, oh, ow});
  std::vector<std::uint32_t> patch;
  patch.reserve(static_cast<std::size_t>(lanes_needed));
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      gather_patch(input, 0, input.dims.channels, oy, ox, geom, patch);
      const BitPlaneBlock block = pack_bitplanes(patch, input.bits);
      const auto results = mac_batch(block, weights);
      for (int c = 0; c < weights.out_channels; ++c)
        out.at(c, oy, ox) = results[static_cast<std::size_t>(c)].value;
    }
  return out;
}

IntTensor bdwconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                    const ConvGeometry& geom) {
  require_mode0(weights, "bdwconv2d");
  if (weights.out_channels != input.dims.channels)
    throw ShapeError("bdwconv2d: one filter per channel required, got " +
                     std::to_string(weights.out_channels) + " filters for " +
                     std::to_string(input.dims.channels) + " channels");
  if (weights.lane_count != geom.kernel_h * geom.kernel_w)
    throw ShapeError("bdwconv2d: filter lane count mismatch");
  if (weights.bits != input.bits)
    throw ShapeError("bdwconv2d: bit width mismatch");
  const auto [oh, ow] = conv_output_dims(input.dims, geom);
  IntTensor out({input.dims.channels, oh, ow});
  std::vector<std::uint32_t> patch;
  for (int c = 0; c < input.dims.channels; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        gather_patch(input, c, c + 1, oy, ox, geom, patch);
        const BitPlaneBlock block = pack_bitplanes(patch, input.bits);
        out.at(c, oy, ox) = mac_xnor(block, weights, c).value;
      }
  return out;
}

IntTensor pconv2d(const QuantTensor& input, const BinaryWeightSet& weights,
                  const ConvGeometry& geom, double split_ratio) {
  const int conv_channels =
      static_cast<int>(std::floor(input.dims.channels * split_ratio));
  if (conv_channels < 1)
    throw ConfigError("pconv2d: split ratio " + std::to_string(split_ratio) +
                      " leaves no channels to convolve");
  if (geom.stride != 1)
    throw ConfigError("pconv2d: pass-through slice requires stride 1");
  const auto [oh, ow] = conv_output_dims(input.dims, geom);
  if (oh != input.dims.height || ow != input.dims.width)
    throw ConfigError("pconv2d: geometry must preserve spatial dims");
  if (weights.out_channels != conv_channels)
    throw ShapeError("pconv2d: expected " + std::to_string(conv_channels) +
                     " filters, got " + std::to_string(weights.out_channels));

  // Convolved slice first, remaining channels pass through untouched.
  QuantTensor slice({conv_channels, input.dims.height, input.dims.width}, input.bits);
  std::copy_n(input.data.begin(), slice.data.size(), slice.data.begin());
  const IntTensor conv_out = bconv2d(slice, weights, geom);

  IntTensor out(input.dims);
  std::copy(conv_out.data.begin(), conv_out.data.end(), out.data.begin());
  std::transform(input.data.begin() + static_cast<std::ptrdiff_t>(slice.data.size()),
                 input.data.end(),
                 out.data.begin() + static_cast<std::ptrdiff_t>(conv_out.data.size()),
                 [](std::uint32_t v) { return static_cast<std::int32_t>(v); });
  return out;
}

IntTensor bmm(const QuantTensor& left, const BinaryWeightSet& right) {
  const int rows = left.dims.channels;
  const int inner = left.dims.height * left.dims.width;
  if (right.lane_count != inner)
    throw ShapeError("bmm: inner dimension mismatch, left " + std::to_string(inner) +
                     " vs right " + std::to_string(right.lane_count));
  if (right.mode == 0 && right.origin != WeightOrigin::kSignBinarized)
    throw ModeError("bmm: mode-0 operand must be +-1 binarized");
  if (right.mode == 1 && right.origin != WeightOrigin::kNativeMask)
    throw ModeError("bmm: mode-1 operand must be a {0,1} mask");
  if (right.bits != left.bits)
    throw ModeError("bmm: operand binarized against " + std::to_string(right.bits) +
                    "-bit activations, left operand has " +
                    std::to_string(left.bits) + " bits");

  IntTensor out({rows, 1, right.out_channels});
  for (int r = 0; r < rows; ++r) {
    const std::span<const std::uint32_t> row(
        left.data.data() + static_cast<std::size_t>(r) * inner,
        static_cast<std::size_t>(inner));
    const BitPlaneBlock block = pack_bitplanes(row, left.bits);
    const auto results = mac_batch(block, right);
    for (int q = 0; q < right.out_channels; ++q)
      out.at(r, 0, q) = results[static_cast<std::size_t>(q)].value;
  }
  return out;
}

BinaryWeightSet binarize_act(std::span<const std::int32_t> values, int rows,
                             int lanes, BinTarget target, std::int32_t threshold,
                             int fold_bits) {
  if (values.size() != static_cast<std::size_t>(rows) * lanes)
    throw ShapeError("binarize_act: value count does not match rows x lanes");
  std::vector<std::vector<std::uint64_t>> packed(
      static_cast<std::size_t>(rows),
      std::vector<std::uint64_t>(static_cast<std::size_t>(words_for_lanes(lanes)), 0));
  std::vector<std::int32_t> sums(static_cast<std::size_t>(rows), 0);
  for (int r = 0; r < rows; ++r) {
    int ones = 0;
    for (int i = 0; i < lanes; ++i) {
      const std::int32_t x = values[static_cast<std::size_t>(r) * lanes + i];
      const bool bit = target == BinTarget::kSigned ? x >= threshold : x > threshold;
      if (bit) {
        packed[static_cast<std::size_t>(r)][static_cast<std::size_t>(i / 64)] |=
            1ull << (i % 64);
        ++ones;
      }
    }
    sums[static_cast<std::size_t>(r)] = 2 * ones - lanes;
  }
  const std::vector<std::int32_t> zero_beta(static_cast<std::size_t>(rows), 0);
  return target == BinTarget::kSigned
             ? make_weight_set_signed(lanes, fold_bits, std::move(packed), sums,
                                      zero_beta)
             : make_weight_set_mask(lanes, fold_bits, std::move(packed), zero_beta);
}

IntTensor adder_array(const IntTensor& acc, const IntTensor& addend) {
  if (!(acc.dims == addend.dims))
    throw ShapeError("adder_array: shape mismatch " + acc.dims.str() + " vs " +
                     addend.dims.str());
  IntTensor out(acc.dims);
  for (std::size_t i = 0; i < acc.data.size(); ++i)
    out.data[i] = checked_add(acc.data[i], addend.data[i]);
  return out;
}

IntTensor adder_array(const IntTensor& acc, std::span<const std::int32_t> channel_bias) {
  if (static_cast<int>(channel_bias.size()) != acc.dims.channels &&
      channel_bias.size() != 1)
    throw ShapeError("adder_array: bias vector does not broadcast over channels");
  IntTensor out(acc.dims);
  const std::size_t plane = static_cast<std::size_t>(acc.dims.height) * acc.dims.width;
  for (int c = 0; c < acc.dims.channels; ++c) {
    const std::int32_t b = channel_bias[channel_bias.size() == 1 ? 0 : c];
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = static_cast<std::size_t>(c) * plane + i;
      out.data[idx] = checked_add(acc.data[idx], b);
    }
  }
  return out;
}

std::int32_t requant_value(std::int64_t x, std::int32_t multiplier, int shift,
                           std::int32_t offset, int bits) {
  std::int64_t y = x * multiplier;
  if (shift > 0) y += std::int64_t{1} << (shift - 1);  // round half up
  y >>= shift;
  y += offset;
  const std::int64_t hi = (std::int64_t{1} << bits) - 1;
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(y, 0, hi));
}

QuantTensor quant_act(const IntTensor& input, const RequantParams& rq) {
  if (rq.bits < kMinBits || rq.bits > kMaxBits)
    throw RangeError("quant_act: bit width out of range");
  if (rq.shift < 0 || rq.shift > 31)
    throw RangeError("quant_act: shift out of range");
  const bool bcast_m = rq.multiplier.size() == 1;
  const bool bcast_o = rq.offset.size() == 1;
  if (!bcast_m && static_cast<int>(rq.multiplier.size()) != input.dims.channels)
    throw ShapeError("quant_act: multiplier vector does not broadcast");
  if (!bcast_o && static_cast<int>(rq.offset.size()) != input.dims.channels)
    throw ShapeError("quant_act: offset vector does not broadcast");
  for (auto m : rq.multiplier)
    if (m < 0) throw RangeError("quant_act: multiplier must be nonnegative");

  QuantTensor out(input.dims, rq.bits);
  const std::size_t plane =
      static_cast<std::size_t>(input.dims.height) * input.dims.width;
  for (int c = 0; c < input.dims.channels; ++c) {
    const std::int32_t m = rq.multiplier[bcast_m ? 0 : c];
    const std::int32_t o = rq.offset[bcast_o ? 0 : c];
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = static_cast<std::size_t>(c) * plane + i;
      out.data[idx] =
          static_cast<std::uint32_t>(requant_value(input.data[idx], m, rq.shift, o,
                                                   rq.bits));
    }
  }
  return out;
}

QuantTensor upsample_nearest(const QuantTensor& input, int factor) {
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1");
  QuantTensor out({input.dims.channels, input.dims.height * factor,
                   input.dims.width * factor},
                  input.bits);
  for (int c = 0; c < input.dims.channels; ++c)
    for (int y = 0; y < out.dims.height; ++y)
      for (int x = 0; x < out.dims.width; ++x)
        out.at(c, y, x) = input.at(c, y / factor, x / factor);
  return out;
}

QuantTensor coord_embed(const QuantTensor& input) {
  if (input.dims.height < 1 || input.dims.width < 1)
    throw ShapeError("coord_embed: empty spatial extent");
  const int c_in = input.dims.channels;
  QuantTensor out({c_in + 2, input.dims.height, input.dims.width}, input.bits);
  std::copy(input.data.begin(), input.data.end(), out.data.begin());
  const double scale = static_cast<double>((1u << input.bits) - 1);
  for (int y = 0; y < input.dims.height; ++y)
    for (int x = 0; x < input.dims.width; ++x) {
      const double nx =
          input.dims.width > 1 ? static_cast<double>(x) / (input.dims.width - 1) : 0.0;
      const double ny = input.dims.height > 1
                            ? static_cast<double>(y) / (input.dims.height - 1)
                            : 0.0;
      out.at(c_in, y, x) = static_cast<std::uint32_t>(std::lround(nx * scale));
      out.at(c_in + 1, y, x) = static_cast<std::uint32_t>(std::lround(ny * scale));
    }
  return out;
}

std::pair<RequantParams, std::vector<std::int32_t>> fold_bn(
    std::span<const std::int32_t> folded_bias, const BnParams& bn, int out_bits) {
  const std::size_t channels = folded_bias.size();
  auto pick = [&](const std::vector<double>& v, std::size_t c) -> double {
    if (v.size() == 1) return v[0];
    if (v.size() != channels)
      throw ShapeError("fold_bn: parameter vector does not broadcast");
    return v[c];
  };

  std::vector<double> gain(channels);
  double max_gain = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double denom = pick(bn.variance, c) + bn.eps;
    if (denom <= 0.0)
      throw InvalidInputError("fold_bn: nonpositive variance + eps");
    const double g = pick(bn.scale, c) / std::sqrt(denom);
    if (g < 0.0)
      throw InvalidInputError("fold_bn: negative scale cannot map to a monotone "
                              "requantizer");
    gain[c] = g;
    max_gain = std::max(max_gain, g);
  }

  // Largest shift keeping the biggest multiplier within 2^30.
  int shift = 31;
  while (shift > 0 &&
         std::llround(max_gain * static_cast<double>(std::int64_t{1} << shift)) >
             (std::int64_t{1} << 30))
    --shift;

  RequantParams rq;
  rq.bits = out_bits;
  rq.shift = shift;
  rq.multiplier.resize(channels);
  rq.offset.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    rq.multiplier[c] = static_cast<std::int32_t>(
        std::llround(gain[c] * static_cast<double>(std::int64_t{1} << shift)));
    rq.offset[c] = static_cast<std::int32_t>(
        std::llround(pick(bn.shift, c) - gain[c] * pick(bn.mean, c)));
  }
  return {std::move(rq),
          std::vector<std::int32_t>(folded_bias.begin(), folded_bias.end())};
}

}  // namespace bnne
