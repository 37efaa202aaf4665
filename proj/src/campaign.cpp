// Engine-vs-reference equivalence machinery: a reference executor for whole
// graphs (dense weights, naive loops) and the randomized comparison campaign.

#include <algorithm>
#include <random>

#include "bnne/bitcore.hpp"
#include "bnne/layers.hpp"
#include "bnne/toolchain.hpp"

namespace bnne::oracle {

namespace {

// Unpacks packed weight words with plain bit extraction; the reference side
// never calls the kernel-path unpack helpers.
SignedWeightTensor densify(const BinaryWeightSet& ws) {
  SignedWeightTensor w;
  w.mode = ws.mode;
  w.out_channels = ws.out_channels;
  w.lanes = ws.lane_count;
  w.beta = ws.beta;
  w.values.resize(static_cast<std::size_t>(ws.out_channels) * ws.lane_count);
  for (int c = 0; c < ws.out_channels; ++c)
    for (int i = 0; i < ws.lane_count; ++i) {
      const bool bit =
          (ws.packed_bits[static_cast<std::size_t>(c)][static_cast<std::size_t>(i / 64)] >>
           (i % 64)) &
          1ull;
      w.values[static_cast<std::size_t>(c) * ws.lane_count + i] =
          ws.mode == 0 ? (bit ? 1 : -1) : (bit ? 1 : 0);
    }
  return w;
}

IntTensor ref_as_int(const Value& v) {
  if (std::holds_alternative<IntTensor>(v)) return std::get<IntTensor>(v);
  const auto& q = std::get<QuantTensor>(v);
  IntTensor t(q.dims);
  std::transform(q.data.begin(), q.data.end(), t.data.begin(),
                 [](std::uint32_t x) { return static_cast<std::int32_t>(x); });
  return t;
}

}  // namespace

std::map<std::string, Value> ref_execute(
    const NetworkGraph& graph, const ParamMap& params,
    const std::map<std::string, QuantTensor>& inputs) {
  const ValidatedGraph vg = validate(graph, params);

  std::map<std::pair<std::string, int>, Value> port_values;
  std::map<std::string, Value> values;
  std::map<std::string, SignedWeightTensor> dense;  // binarize_act outputs
  for (const auto& b : graph.inputs)
    port_values[{b.node, b.port}] = inputs.at(b.name);

  auto operand = [&](const std::string& id, int port) -> const Value& {
    if (auto it = port_values.find({id, port}); it != port_values.end())
      return it->second;
    for (const auto& e : graph.edges)
      if (e.to == id && e.port == port) return values.at(e.from);
    throw InternalError("ref_execute: unbound port");
  };

  for (const auto& id : vg.topo_order) {
    const LayerSpec& spec = *graph.find(id);
    Value result;
    switch (spec.kind) {
      case LayerKind::kBConv2d:
      case LayerKind::kDownsampleConv: {
        const auto& in = std::get<QuantTensor>(operand(id, 0));
        const auto w = densify(*params.at(id).weights);
        result = ref_conv2d(in, w,
                            {spec.geom.kernel_h, spec.geom.kernel_w,
                             spec.geom.stride, spec.geom.pad});
        break;
      }
      case LayerKind::kBDWConv2d: {
        const auto& in = std::get<QuantTensor>(operand(id, 0));
        const auto w = densify(*params.at(id).weights);
        result = ref_dwconv2d(in, w,
                              {spec.geom.kernel_h, spec.geom.kernel_w,
                               spec.geom.stride, spec.geom.pad});
        break;
      }
      case LayerKind::kPConv2d: {
        const auto& in = std::get<QuantTensor>(operand(id, 0));
        const auto w = densify(*params.at(id).weights);
        result = ref_pconv2d(in, w,
                             {spec.geom.kernel_h, spec.geom.kernel_w,
                              spec.geom.stride, spec.geom.pad},
                             spec.split_ratio);
        break;
      }
      case LayerKind::kBnFoldMarker:
        result = ref_as_int(operand(id, 0));
        break;
      case LayerKind::kQuantAct: {
        RequantParams rq;
        rq.bits = spec.out_bits;
        if (auto it = params.find(id); it != params.end() && it->second.requant)
          rq = *it->second.requant;
        result = ref_quant_act(ref_as_int(operand(id, 0)), rq.multiplier, rq.shift,
                               rq.offset, rq.bits);
        break;
      }
      case LayerKind::kUpsampleNearest:
        result = ref_upsample_nearest(std::get<QuantTensor>(operand(id, 0)),
                                      spec.factor);
        break;
      case LayerKind::kCoordEmbed:
        result = ref_coord_embed(std::get<QuantTensor>(operand(id, 0)));
        break;
      case LayerKind::kEltwiseAdd:
        result = ref_add(ref_as_int(operand(id, 0)), ref_as_int(operand(id, 1)));
        break;
      case LayerKind::kBinarizeAct: {
        const IntTensor in = ref_as_int(operand(id, 0));
        SignedWeightTensor w;
        w.mode = spec.sign_target ? 0 : 1;
        w.out_channels = in.dims.channels;
        w.lanes = in.dims.height * in.dims.width;
        w.beta.assign(static_cast<std::size_t>(w.out_channels), 0);
        w.values.reserve(in.data.size());
        for (auto x : in.data) {
          const bool bit =
              spec.sign_target ? x >= spec.threshold : x > spec.threshold;
          w.values.push_back(spec.sign_target ? (bit ? 1 : -1) : (bit ? 1 : 0));
        }
        dense[id] = std::move(w);
        result = Value{};  // dense operand rides in the side table
        break;
      }
      case LayerKind::kBmm: {
        const auto& left = std::get<QuantTensor>(operand(id, 0));
        std::string producer;
        for (const auto& e : graph.edges)
          if (e.to == id && e.port == 1) producer = e.from;
        result = ref_bmm(left, dense.at(producer));
        break;
      }
    }
    values[id] = std::move(result);
  }

  std::map<std::string, Value> outputs;
  for (const auto& o : graph.outputs) outputs.emplace(o.name, values.at(o.node));
  return outputs;
}

namespace {

struct TrialContext {
  std::mt19937_64 rng;

  int uniform(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  }
  QuantTensor random_quant(Shape shape, int bits) {
    QuantTensor t(shape, bits);
    std::uniform_int_distribution<std::uint32_t> dist(0, (1u << bits) - 1);
    for (auto& v : t.data) v = dist(rng);
    return t;
  }
  std::vector<float> random_floats(std::size_t n) {
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
  }
  std::vector<std::int32_t> random_betas(std::size_t n, int bound) {
    std::uniform_int_distribution<std::int32_t> dist(-bound, bound);
    std::vector<std::int32_t> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
  }
};

void record_diff(CampaignReport& report, std::int64_t engine, std::int64_t ref,
                 int trial, const std::string& kind, bool& failed) {
  const std::int64_t diff = engine > ref ? engine - ref : ref - engine;
  report.max_abs_diff = std::max(report.max_abs_diff, diff);
  if (diff != 0 && !failed) {
    failed = true;
    ++report.mismatches;
    report.failures.push_back(std::to_string(trial) + ":" + kind);
  }
}

void compare_tensors(CampaignReport& report, const IntTensor& engine,
                     const IntTensor& ref, int trial, const std::string& kind) {
  bool failed = false;
  if (!(engine.dims == ref.dims)) {
    ++report.mismatches;
    report.failures.push_back(std::to_string(trial) + ":" + kind + ":shape");
    return;
  }
  for (std::size_t i = 0; i < engine.data.size(); ++i)
    record_diff(report, engine.data[i], ref.data[i], trial, kind, failed);
}

BinaryWeightSet signed_set_from_floats(const std::vector<float>& floats,
                                       int out_channels, int lanes, int bits,
                                       std::span<const std::int32_t> beta) {
  return binarize_filter_bank(floats, out_channels, lanes, bits, beta);
}

}  // namespace

CampaignReport equivalence_campaign(std::uint64_t seed, int trials) {
  CampaignReport report;
  report.seed = seed;
  report.trials = trials;
  TrialContext ctx{std::mt19937_64(seed)};

  static const std::vector<std::string> kinds = {
      "mac_xnor", "mac_and", "bconv2d", "bdwconv2d", "pconv2d", "bmm_m0", "bmm_m1"};

  for (int trial = 0; trial < trials; ++trial) {
    const std::string& kind = kinds[static_cast<std::size_t>(trial) % kinds.size()];
    bool failed = false;
    if (kind == "mac_xnor" || kind == "mac_and") {
      const int lanes = ctx.uniform(1, 4096);
      const int bits = 8;
      QuantTensor acts = ctx.random_quant({1, 1, lanes}, bits);
      const auto beta = ctx.random_betas(1, 1 << 15);
      const BitPlaneBlock block = pack_bitplanes(acts.data, bits);
      if (kind == "mac_xnor") {
        const auto floats = ctx.random_floats(static_cast<std::size_t>(lanes));
        const auto ws = signed_set_from_floats(floats, 1, lanes, bits, beta);
        SignedWeightTensor dense_w;
        dense_w.mode = 0;
        dense_w.out_channels = 1;
        dense_w.lanes = lanes;
        dense_w.beta = {beta[0]};
        for (auto f : floats) dense_w.values.push_back(f >= 0.0f ? 1 : -1);
        record_diff(report, mac_xnor(block, ws, 0).value,
                    ref_mac(acts.data, dense_w, 0), trial, kind, failed);
      } else {
        std::vector<std::vector<std::uint64_t>> packed(
            1, std::vector<std::uint64_t>(
                   static_cast<std::size_t>(words_for_lanes(lanes)), 0));
        SignedWeightTensor dense_w;
        dense_w.mode = 1;
        dense_w.out_channels = 1;
        dense_w.lanes = lanes;
        dense_w.beta = {beta[0]};
        for (int i = 0; i < lanes; ++i) {
          const int bit = ctx.uniform(0, 1);
          if (bit) packed[0][static_cast<std::size_t>(i / 64)] |= 1ull << (i % 64);
          dense_w.values.push_back(static_cast<std::int8_t>(bit));
        }
        const auto ws = make_weight_set_mask(lanes, bits, std::move(packed), beta);
        record_diff(report, mac_and(block, ws, 0).value,
                    ref_mac(acts.data, dense_w, 0), trial, kind, failed);
      }
    } else if (kind == "bconv2d" || kind == "bdwconv2d" || kind == "pconv2d") {
      const int kernel = ctx.uniform(0, 1) ? 3 : 1;
      const int stride = kind == "pconv2d" ? 1 : ctx.uniform(1, 2);
      const int pad = kernel == 3 ? ctx.uniform(kind == "pconv2d" ? 1 : 0, 1) : 0;
      const int channels = ctx.uniform(kind == "pconv2d" ? 4 : 1, 8);
      const int side_lo = kernel == 3 && pad == 0 ? 3 : 2;
      const Shape in_shape{channels, ctx.uniform(side_lo, 12),
                           ctx.uniform(side_lo, 12)};
      const QuantTensor input = ctx.random_quant(in_shape, 8);
      const ConvGeometry geom{kernel, kernel, stride, pad};
      const oracle::RefConvGeometry ref_geom{kernel, kernel, stride, pad};
      if (kind == "bconv2d") {
        const int out_channels = ctx.uniform(1, 8);
        const int lanes = channels * kernel * kernel;
        const auto beta = ctx.random_betas(static_cast<std::size_t>(out_channels), 64);
        const auto ws = signed_set_from_floats(
            ctx.random_floats(static_cast<std::size_t>(out_channels) * lanes),
            out_channels, lanes, 8, beta);
        compare_tensors(report, bconv2d(input, ws, geom),
                        ref_conv2d(input, densify(ws), ref_geom), trial, kind);
      } else if (kind == "bdwconv2d") {
        const int lanes = kernel * kernel;
        const auto beta = ctx.random_betas(static_cast<std::size_t>(channels), 64);
        const auto ws = signed_set_from_floats(
            ctx.random_floats(static_cast<std::size_t>(channels) * lanes), channels,
            lanes, 8, beta);
        compare_tensors(report, bdwconv2d(input, ws, geom),
                        ref_dwconv2d(input, densify(ws), ref_geom), trial, kind);
      } else {
        const double ratio = ctx.uniform(0, 1) ? 0.25 : 0.5;
        const int conv_c = static_cast<int>(channels * ratio);
        if (conv_c < 1 || (kernel == 3 && pad != 1)) continue;  // keep dims intact
        const int lanes = conv_c * kernel * kernel;
        const auto beta = ctx.random_betas(static_cast<std::size_t>(conv_c), 64);
        const auto ws = signed_set_from_floats(
            ctx.random_floats(static_cast<std::size_t>(conv_c) * lanes), conv_c,
            lanes, 8, beta);
        compare_tensors(report, pconv2d(input, ws, geom, ratio),
                        ref_pconv2d(input, densify(ws), ref_geom, ratio), trial,
                        kind);
      }
    } else {  // bmm
      const int rows = ctx.uniform(1, 6);
      const int inner = ctx.uniform(2, 48);
      const int cols = ctx.uniform(1, 6);
      const QuantTensor left = ctx.random_quant({rows, 1, inner}, 8);
      std::vector<std::int32_t> right_vals(
          static_cast<std::size_t>(cols) * inner);
      for (auto& v : right_vals) v = ctx.uniform(-100, 100);
      const bool sign = kind == "bmm_m0";
      const auto packed = binarize_act(right_vals, cols, inner,
                                       sign ? BinTarget::kSigned : BinTarget::kZeroOne,
                                       0, 8);
      SignedWeightTensor dense_right;
      dense_right.mode = sign ? 0 : 1;
      dense_right.out_channels = cols;
      dense_right.lanes = inner;
      dense_right.beta.assign(static_cast<std::size_t>(cols), 0);
      dense_right.values.reserve(right_vals.size());
      for (auto v : right_vals) {
        const bool bit = sign ? v >= 0 : v > 0;
        dense_right.values.push_back(sign ? (bit ? 1 : -1) : (bit ? 1 : 0));
      }
      compare_tensors(report, bmm(left, packed), ref_bmm(left, dense_right), trial,
                      kind);
    }
  }
  return report;
}

}  // namespace bnne::oracle
