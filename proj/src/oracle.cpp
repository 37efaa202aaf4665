// Naive loop references. Clarity over speed: these are the ground truth for
// every bit-exactness claim, so they stay textbook-shaped.

#include <algorithm>
#include <cmath>
#include <string>

#include "bnne/oracle.hpp"

namespace bnne::oracle {

namespace {

void check_mode_values(const SignedWeightTensor& w) {
  for (auto v : w.values) {
    const bool ok = w.mode == 0 ? (v == -1 || v == 1) : (v == 0 || v == 1);
    if (!ok)
      throw InvalidInputError("oracle: weight value " + std::to_string(v) +
                              " not allowed in mode " + std::to_string(w.mode));
  }
}

}  // namespace

std::int64_t ref_mac(std::span<const std::uint32_t> activations,
                     const SignedWeightTensor& weights, int channel) {
  if (static_cast<int>(activations.size()) != weights.lanes)
    throw ShapeError("ref_mac: length mismatch");
  check_mode_values(weights);
  std::int64_t acc = weights.beta[static_cast<std::size_t>(channel)];
  for (int i = 0; i < weights.lanes; ++i)
    acc += static_cast<std::int64_t>(activations[static_cast<std::size_t>(i)]) *
           weights.at(channel, i);
  return acc;
}

IntTensor ref_conv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                     const RefConvGeometry& geom) {
  check_mode_values(weights);
  if (weights.lanes != input.dims.channels * geom.kernel_h * geom.kernel_w)
    throw ShapeError("ref_conv2d: lane count mismatch");
  const int oh = (input.dims.height + 2 * geom.pad - geom.kernel_h) / geom.stride + 1;
  const int ow = (input.dims.width + 2 * geom.pad - geom.kernel_w) / geom.stride + 1;
  IntTensor out({weights.out_channels, oh, ow});
  for (int oc = 0; oc < weights.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        std::int64_t acc = weights.beta[static_cast<std::size_t>(oc)];
        int lane = 0;
        for (int ic = 0; ic < input.dims.channels; ++ic)
          for (int ky = 0; ky < geom.kernel_h; ++ky)
            for (int kx = 0; kx < geom.kernel_w; ++kx, ++lane) {
              const int iy = oy * geom.stride - geom.pad + ky;
              const int ix = ox * geom.stride - geom.pad + kx;
              if (iy < 0 || iy >= input.dims.height || ix < 0 ||
                  ix >= input.dims.width)
                continue;  // zero padding contributes nothing here
              acc += static_cast<std::int64_t>(input.at(ic, iy, ix)) *
                     weights.at(oc, lane);
            }
        out.at(oc, oy, ox) = static_cast<std::int32_t>(acc);
      }
  return out;
}

IntTensor ref_dwconv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                       const RefConvGeometry& geom) {
  check_mode_values(weights);
  if (weights.out_channels != input.dims.channels ||
      weights.lanes != geom.kernel_h * geom.kernel_w)
    throw ShapeError("ref_dwconv2d: filter shape mismatch");
  const int oh = (input.dims.height + 2 * geom.pad - geom.kernel_h) / geom.stride + 1;
  const int ow = (input.dims.width + 2 * geom.pad - geom.kernel_w) / geom.stride + 1;
  IntTensor out({input.dims.channels, oh, ow});
  for (int c = 0; c < input.dims.channels; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        std::int64_t acc = weights.beta[static_cast<std::size_t>(c)];
        int lane = 0;
        for (int ky = 0; ky < geom.kernel_h; ++ky)
          for (int kx = 0; kx < geom.kernel_w; ++kx, ++lane) {
            const int iy = oy * geom.stride - geom.pad + ky;
            const int ix = ox * geom.stride - geom.pad + kx;
            if (iy < 0 || iy >= input.dims.height || ix < 0 || ix >= input.dims.width)
              continue;
            acc += static_cast<std::int64_t>(input.at(c, iy, ix)) *
                   weights.at(c, lane);
          }
        out.at(c, oy, ox) = static_cast<std::int32_t>(acc);
      }
  return out;
}

IntTensor ref_pconv2d(const QuantTensor& input, const SignedWeightTensor& weights,
                      const RefConvGeometry& geom, double split_ratio) {
  const int conv_channels =
      static_cast<int>(std::floor(input.dims.channels * split_ratio));
  if (conv_channels < 1) throw ConfigError("ref_pconv2d: empty convolved slice");
  QuantTensor slice({conv_channels, input.dims.height, input.dims.width}, input.bits);
  std::copy_n(input.data.begin(), slice.data.size(), slice.data.begin());
  const IntTensor conv_out = ref_conv2d(slice, weights, geom);
  IntTensor out(input.dims);
  std::copy(conv_out.data.begin(), conv_out.data.end(), out.data.begin());
  for (std::size_t i = slice.data.size(); i < input.data.size(); ++i)
    out.data[i] = static_cast<std::int32_t>(input.data[i]);
  return out;
}

IntTensor ref_bmm(const QuantTensor& left, const SignedWeightTensor& right) {
  check_mode_values(right);
  const int rows = left.dims.channels;
  const int inner = left.dims.height * left.dims.width;
  if (right.lanes != inner) throw ShapeError("ref_bmm: inner dimension mismatch");
  IntTensor out({rows, 1, right.out_channels});
  for (int r = 0; r < rows; ++r)
    for (int q = 0; q < right.out_channels; ++q) {
      std::int64_t acc = right.beta[static_cast<std::size_t>(q)];
      for (int k = 0; k < inner; ++k)
        acc += static_cast<std::int64_t>(
                   left.data[static_cast<std::size_t>(r) * inner + k]) *
               right.at(q, k);
      out.at(r, 0, q) = static_cast<std::int32_t>(acc);
    }
  return out;
}

QuantTensor ref_quant_act(const IntTensor& input,
                          std::span<const std::int32_t> multiplier, int shift,
                          std::span<const std::int32_t> offset, int bits) {
  QuantTensor out(input.dims, bits);
  const std::size_t plane =
      static_cast<std::size_t>(input.dims.height) * input.dims.width;
  const std::int64_t hi = (std::int64_t{1} << bits) - 1;
  for (int c = 0; c < input.dims.channels; ++c) {
    const std::int64_t m = multiplier[multiplier.size() == 1 ? 0 : c];
    const std::int64_t o = offset[offset.size() == 1 ? 0 : c];
    for (std::size_t i = 0; i < plane; ++i) {
      std::int64_t y = input.data[static_cast<std::size_t>(c) * plane + i] * m;
      if (shift > 0) y += std::int64_t{1} << (shift - 1);
      y = (y >> shift) + o;
      out.data[static_cast<std::size_t>(c) * plane + i] =
          static_cast<std::uint32_t>(std::clamp<std::int64_t>(y, 0, hi));
    }
  }
  return out;
}

QuantTensor ref_upsample_nearest(const QuantTensor& input, int factor) {
  QuantTensor out({input.dims.channels, input.dims.height * factor,
                   input.dims.width * factor},
                  input.bits);
  for (int c = 0; c < out.dims.channels; ++c)
    for (int y = 0; y < out.dims.height; ++y)
      for (int x = 0; x < out.dims.width; ++x)
        out.at(c, y, x) = input.at(c, y / factor, x / factor);
  return out;
}

QuantTensor ref_coord_embed(const QuantTensor& input) {
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

IntTensor ref_add(const IntTensor& a, const IntTensor& b) {
  if (!(a.dims == b.dims)) throw ShapeError("ref_add: shape mismatch");
  IntTensor out(a.dims);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = a.data[i] + b.data[i];
  return out;
}

std::string format_report(const CampaignReport& report) {
  std::string s = "equivalence campaign: seed=" + std::to_string(report.seed) +
                  " trials=" + std::to_string(report.trials) +
                  " mismatches=" + std::to_string(report.mismatches) +
                  " max_abs_diff=" + std::to_string(report.max_abs_diff) + "\n";
  for (const auto& f : report.failures) s += "  FAIL " + f + "\n";
  return s;
}

}  // namespace bnne::oracle
