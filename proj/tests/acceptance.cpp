// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each check is self-contained and uses the dense reference
// implementations as the comparison oracle.

#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bnne/bitcore.hpp"
#include "bnne/costmodel.hpp"
#include "bnne/graph.hpp"
#include "bnne/layers.hpp"
#include "bnne/model_io.hpp"
#include "bnne/oracle.hpp"
#include "bnne/toolchain.hpp"

using namespace bnne;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", ok ? "PASS" : "FAIL", number,
              name.c_str(), detail.c_str());
  if (!ok) ++failures;
}

void run(int number, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& body) {
  bool ok = false;
  std::string detail;
  try {
    auto [r, d] = body();
    ok = r;
    detail = d;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(number, name, ok, detail);
}

std::string data_path(const std::string& name) {
  return std::string(BNNE_DATA_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

// --- criterion 1: single-bit operation tables -------------------------------

std::pair<bool, std::string> truth_tables() {
  int checked = 0;
  // Signed table: output is a' * w for a' in {0,1}, w in {-1,+1}.
  for (const std::uint32_t act : {0u, 1u}) {
    for (const float weight : {1.0f, -1.0f}) {
      std::vector<std::uint32_t> a{act};
      const auto block = pack_bitplanes(a, 1);
      std::vector<float> w{weight};
      std::vector<std::int32_t> beta{0};
      const auto ws = binarize_filter_bank(w, 1, 1, 1, beta);
      const std::int32_t expected =
          static_cast<std::int32_t>(act) * (weight >= 0 ? 1 : -1);
      if (mac_xnor(block, ws, 0).value != expected)
        return {false, "signed table mismatch"};
      ++checked;
    }
  }
  // Mask table: output is a' & w'.
  for (const std::uint32_t act : {0u, 1u}) {
    for (const std::uint64_t wbit : {0ull, 1ull}) {
      std::vector<std::uint32_t> a{act};
      const auto block = pack_bitplanes(a, 1);
      std::vector<std::vector<std::uint64_t>> packed{{wbit}};
      std::vector<std::int32_t> beta{0};
      const auto ws = make_weight_set_mask(1, 1, std::move(packed), beta);
      const std::int32_t expected = static_cast<std::int32_t>(act & wbit);
      if (mac_and(block, ws, 0).value != expected)
        return {false, "mask table mismatch"};
      ++checked;
    }
  }
  return {checked == 8, std::to_string(checked) + "/8 single-bit cases exact"};
}

// --- criterion 2: randomized MAC equivalence, both modes --------------------

std::pair<bool, std::string> mac_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(0xbadc0ffeull);
  std::int64_t max_diff = 0;
  const int trials = 1000;
  for (int mode = 0; mode <= 1; ++mode) {
    for (int trial = 0; trial < trials; ++trial) {
      const int lanes =
          std::uniform_int_distribution<int>(1, 4096)(rng);
      std::vector<std::uint32_t> acts(static_cast<std::size_t>(lanes));
      for (auto& v : acts) v = static_cast<std::uint32_t>(rng() & 0xff);
      const std::int32_t beta =
          std::uniform_int_distribution<std::int32_t>(-(1 << 15), 1 << 15)(rng);
      const auto block = pack_bitplanes(acts, 8);

      oracle::SignedWeightTensor dense;
      dense.mode = mode;
      dense.out_channels = 1;
      dense.lanes = lanes;
      dense.beta = {beta};
      std::int64_t engine = 0;
      if (mode == 0) {
        std::vector<float> floats(static_cast<std::size_t>(lanes));
        for (auto& f : floats)
          f = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
        for (auto f : floats) dense.values.push_back(f >= 0.0f ? 1 : -1);
        const auto ws = binarize_filter_bank(floats, 1, lanes, 8,
                                             std::vector<std::int32_t>{beta});
        engine = mac_xnor(block, ws, 0).value;
      } else {
        std::vector<std::vector<std::uint64_t>> packed(
            1, std::vector<std::uint64_t>(
                   static_cast<std::size_t>(words_for_lanes(lanes)), 0));
        for (int i = 0; i < lanes; ++i) {
          const int bit = static_cast<int>(rng() & 1);
          if (bit) packed[0][static_cast<std::size_t>(i / 64)] |= 1ull << (i % 64);
          dense.values.push_back(static_cast<std::int8_t>(bit));
        }
        const auto ws = make_weight_set_mask(lanes, 8, std::move(packed),
                                             std::vector<std::int32_t>{beta});
        engine = mac_and(block, ws, 0).value;
      }
      const std::int64_t ref = oracle::ref_mac(acts, dense, 0);
      const std::int64_t diff = engine > ref ? engine - ref : ref - engine;
      if (diff > max_diff) max_diff = diff;
    }
  }
  const double elapsed = seconds_since(start);
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "%d trials per mode, max abs diff %lld, %.1fs", trials,
                static_cast<long long>(max_diff), elapsed);
  return {max_diff == 0 && elapsed < 60.0, detail};
}

// --- criterion 3: exhaustive single-plane identity, I <= 12 -----------------

std::pair<bool, std::string> exhaustive_identity() {
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t cases = 0;
  for (int lanes = 1; lanes <= 12; ++lanes) {
    const std::uint64_t mask = (1ull << lanes) - 1;
    for (std::uint64_t w = 0; w <= mask; ++w) {
      const int wpop = std::popcount(w);
      for (std::uint64_t a = 0; a <= mask; ++a) {
        // Dense signed dot product of the bit vector a against weights
        // w_i = 2*w'_i - 1, versus the popcount identity the kernels use.
        const int dense = 2 * std::popcount(a & w) - std::popcount(a);
        const int packed = xnor_popcount_word(a, w, mask) - lanes + wpop;
        if (dense != packed) {
          char detail[96];
          std::snprintf(detail, sizeof detail,
                        "mismatch at I=%d w=%llu a=%llu", lanes,
                        static_cast<unsigned long long>(w),
                        static_cast<unsigned long long>(a));
          return {false, detail};
        }
        ++cases;
      }
    }
  }
  const double elapsed = seconds_since(start);
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "%llu (bit-vector, weight-vector) pairs exact over I=1..12, %.1fs",
                static_cast<unsigned long long>(cases), elapsed);
  return {cases > (1ull << 24) && elapsed < 120.0, detail};
}

// --- criterion 4: correction-term closed form -------------------------------

std::pair<bool, std::string> gamma_closed_form() {
  std::mt19937_64 rng(424242);
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    const int lanes = std::uniform_int_distribution<int>(1, 2048)(rng);
    const int bits = std::uniform_int_distribution<int>(1, 16)(rng);
    std::vector<float> w(static_cast<std::size_t>(lanes));
    int ones = 0;
    for (auto& f : w) {
      f = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
      if (f >= 0.0f) ++ones;
    }
    const auto [packed, weight_sum] = binarize_weights_sign(w);
    const std::int64_t expected =
        -static_cast<std::int64_t>(lanes - ones) * ((1ll << bits) - 1);
    if (gamma_term(weight_sum, lanes, bits) != expected)
      return {false, "closed-form mismatch at trial " + std::to_string(trial)};
    int packed_pop = 0;
    for (auto word : packed) packed_pop += std::popcount(word);
    if (packed_pop != ones || weight_sum != 2 * ones - lanes)
      return {false, "binarization bookkeeping mismatch"};
  }
  return {true, std::to_string(trials) + " random weight vectors exact"};
}

// --- criterion 5: per-layer randomized equivalence --------------------------

std::pair<bool, std::string> layer_equivalence() {
  std::mt19937_64 rng(555);
  auto uniform = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto random_quant = [&](Shape shape, int bits) {
    QuantTensor t(shape, bits);
    for (auto& v : t.data)
      v = static_cast<std::uint32_t>(rng() & ((1u << bits) - 1));
    return t;
  };
  auto random_signed_set = [&](int out_channels, int lanes, int bits,
                               std::vector<float>& floats,
                               std::vector<std::int32_t>& beta) {
    floats.resize(static_cast<std::size_t>(out_channels) * lanes);
    for (auto& f : floats)
      f = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
    beta.resize(static_cast<std::size_t>(out_channels));
    for (auto& b : beta) b = uniform(-64, 64);
    return binarize_filter_bank(floats, out_channels, lanes, bits, beta);
  };
  auto densify = [](const std::vector<float>& floats, int out_channels, int lanes,
                    const std::vector<std::int32_t>& beta) {
    oracle::SignedWeightTensor w;
    w.mode = 0;
    w.out_channels = out_channels;
    w.lanes = lanes;
    w.beta = beta;
    for (auto f : floats) w.values.push_back(f >= 0.0f ? 1 : -1);
    return w;
  };

  const int trials = 200;
  std::string failing;

  auto check_int = [&](const IntTensor& engine, const IntTensor& ref,
                       const char* kind) {
    if (!(engine.dims == ref.dims) || engine.data != ref.data) failing = kind;
  };
  auto check_quant = [&](const QuantTensor& engine, const QuantTensor& ref,
                         const char* kind) {
    if (!(engine.dims == ref.dims) || engine.data != ref.data) failing = kind;
  };

  for (int t = 0; t < trials && failing.empty(); ++t) {
    // bconv2d
    {
      const int k = uniform(0, 1) ? 3 : 1;
      const int stride = uniform(1, 2);
      const int pad = k == 3 ? uniform(0, 1) : 0;
      const int cin = uniform(1, 6);
      const int cout = uniform(1, 6);
      const int side = uniform(k == 3 && pad == 0 ? 3 : 2, 10);
      const QuantTensor in = random_quant({cin, side, side}, 8);
      std::vector<float> floats;
      std::vector<std::int32_t> beta;
      const auto ws = random_signed_set(cout, cin * k * k, 8, floats, beta);
      check_int(bconv2d(in, ws, {k, k, stride, pad}),
                oracle::ref_conv2d(in, densify(floats, cout, cin * k * k, beta),
                                   {k, k, stride, pad}),
                "bconv2d");
    }
    // bdwconv2d
    {
      const int k = uniform(0, 1) ? 3 : 1;
      const int pad = k == 3 ? 1 : 0;
      const int c = uniform(1, 6);
      const int side = uniform(2, 10);
      const QuantTensor in = random_quant({c, side, side}, 8);
      std::vector<float> floats;
      std::vector<std::int32_t> beta;
      const auto ws = random_signed_set(c, k * k, 8, floats, beta);
      check_int(bdwconv2d(in, ws, {k, k, 1, pad}),
                oracle::ref_dwconv2d(in, densify(floats, c, k * k, beta),
                                     {k, k, 1, pad}),
                "bdwconv2d");
    }
    // pconv2d
    {
      const int c = uniform(4, 8);
      const double ratio = uniform(0, 1) ? 0.25 : 0.5;
      const int conv_c = static_cast<int>(c * ratio);
      const int side = uniform(3, 10);
      const QuantTensor in = random_quant({c, side, side}, 8);
      std::vector<float> floats;
      std::vector<std::int32_t> beta;
      const auto ws = random_signed_set(conv_c, conv_c * 9, 8, floats, beta);
      check_int(pconv2d(in, ws, {3, 3, 1, 1}, ratio),
                oracle::ref_pconv2d(in, densify(floats, conv_c, conv_c * 9, beta),
                                    {3, 3, 1, 1}, ratio),
                "pconv2d");
    }
    // bmm, both modes
    for (const bool sign : {true, false}) {
      const int rows = uniform(1, 6);
      const int inner = uniform(2, 48);
      const int cols = uniform(1, 6);
      const QuantTensor left = random_quant({rows, 1, inner}, 8);
      std::vector<std::int32_t> right_vals(
          static_cast<std::size_t>(cols) * inner);
      for (auto& v : right_vals) v = uniform(-100, 100);
      const auto packed = binarize_act(
          right_vals, cols, inner,
          sign ? BinTarget::kSigned : BinTarget::kZeroOne, 0, 8);
      oracle::SignedWeightTensor dense;
      dense.mode = sign ? 0 : 1;
      dense.out_channels = cols;
      dense.lanes = inner;
      dense.beta.assign(static_cast<std::size_t>(cols), 0);
      for (auto v : right_vals) {
        const bool bit = sign ? v >= 0 : v > 0;
        dense.values.push_back(sign ? (bit ? 1 : -1) : (bit ? 1 : 0));
      }
      check_int(bmm(left, packed), oracle::ref_bmm(left, dense),
                sign ? "bmm mode 0" : "bmm mode 1");
    }
    // quant_act
    {
      const int c = uniform(1, 4);
      const int side = uniform(1, 8);
      IntTensor in({c, side, side});
      for (auto& v : in.data) v = uniform(-5000, 5000);
      RequantParams rq;
      rq.shift = uniform(0, 8);
      rq.bits = uniform(1, 8);
      rq.multiplier.assign(static_cast<std::size_t>(c), 0);
      rq.offset.assign(static_cast<std::size_t>(c), 0);
      for (auto& m : rq.multiplier) m = uniform(0, 512);
      for (auto& o : rq.offset) o = uniform(-16, 16);
      check_quant(quant_act(in, rq),
                  oracle::ref_quant_act(in, rq.multiplier, rq.shift, rq.offset,
                                        rq.bits),
                  "quant_act");
    }
    // upsample_nearest
    {
      const QuantTensor in = random_quant({uniform(1, 4), uniform(1, 6),
                                           uniform(1, 6)}, 8);
      const int factor = uniform(1, 3);
      check_quant(upsample_nearest(in, factor),
                  oracle::ref_upsample_nearest(in, factor), "upsample_nearest");
    }
    // coord_embed
    {
      const QuantTensor in = random_quant({uniform(1, 4), uniform(1, 8),
                                           uniform(1, 8)}, 8);
      check_quant(coord_embed(in), oracle::ref_coord_embed(in), "coord_embed");
    }
    // adder_array
    {
      const Shape shape{uniform(1, 4), uniform(1, 6), uniform(1, 6)};
      IntTensor a(shape), b(shape);
      for (auto& v : a.data) v = uniform(-100000, 100000);
      for (auto& v : b.data) v = uniform(-100000, 100000);
      check_int(adder_array(a, b), oracle::ref_add(a, b), "adder_array");
    }
  }
  if (!failing.empty()) return {false, "mismatch in " + failing};
  return {true, std::to_string(trials) +
                    " randomized shapes per layer kind, all exact"};
}

// --- criterion 6: end-to-end toy network ------------------------------------

std::pair<bool, std::string> end_to_end() {
  const std::string model = data_path("toy_block.bnne");
  const std::string input = data_path("toy_input.bnnt");
  const std::string golden = read_file(data_path("toy_golden.bnnt"));

  tool::run_model(model, input, "/tmp/bnne_accept_w1.bnnt", "", 1);
  tool::run_model(model, input, "/tmp/bnne_accept_wn.bnnt", "", 4);
  const std::string one = read_file("/tmp/bnne_accept_w1.bnnt");
  const std::string many = read_file("/tmp/bnne_accept_wn.bnnt");
  if (one != golden) return {false, "single-worker output differs from golden"};
  if (many != one) return {false, "worker counts disagree"};

  // The same flow through the installed command-line binary.
  const std::string cmd = std::string("\"") + BNNE_CLI_BIN + "\" run \"" + model +
                          "\" \"" + input +
                          "\" -o /tmp/bnne_accept_cli.bnnt > /dev/null 2>&1";
  if (std::system(cmd.c_str()) != 0) return {false, "CLI run failed"};
  if (read_file("/tmp/bnne_accept_cli.bnnt") != golden)
    return {false, "CLI output differs from golden"};
  return {true, "output byte-matches the committed golden, 1- and 4-worker runs "
                "and the CLI agree"};
}

// --- criterion 7: cost-model ordering and monotonicity ----------------------

std::pair<bool, std::string> cost_ordering() {
  const cost::GeConfig cfg;
  const double proposed = cost::model_cost(cost::Arch::kProposed, 8, 1, cfg).total_ge;
  const double selector = cost::model_cost(cost::Arch::kSelector, 8, 1, cfg).total_ge;
  const double xnor_mod =
      cost::model_cost(cost::Arch::kXnorModified, 8, 1, cfg).total_ge;
  if (!(proposed < selector && selector < xnor_mod))
    return {false, "ordering violated at J=8"};
  for (const cost::Arch a : {cost::Arch::kProposed, cost::Arch::kSelector,
                             cost::Arch::kXnorModified}) {
    double prev = cost::model_cost(a, 1, 1, cfg).total_ge;
    for (int bits = 2; bits <= 16; ++bits) {
      const double cur = cost::model_cost(a, bits, 1, cfg).total_ge;
      if (!(cur > prev))
        return {false, "non-monotone " + cost::arch_name(a) + " at J=" +
                           std::to_string(bits)};
      prev = cur;
    }
  }
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "J=8 GE %.0f < %.0f < %.0f; all models monotone over J=1..16",
                proposed, selector, xnor_mod);
  return {true, detail};
}

// --- criterion 8: MAC counting ----------------------------------------------

std::pair<bool, std::string> mac_counting() {
  const NetworkGraph g = graph_from_json(read_file(data_path("toy_block.json")));
  const ModelContainer model = parse_model([&] {
    const std::string bytes = read_file(data_path("toy_block.bnne"));
    return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  }());
  const auto macs = count_macs(model.graph, model.params);

  // Hand-computed totals for the committed toy graph:
  //   a_dw: 4 ch * 8*8 px * 3*3      = 2304
  //   d_pc: 2 conv ch * 8*8 * 2*3*3  = 2304
  //   f_pw: 4 out * 8*8 * 4*1*1      = 1024
  //   k_hd: 8 out * 16*16 * 6*1*1    = 12288
  //   n_mm: 8 rows * 8 cols * 256    = 16384
  const std::map<std::string, std::int64_t> expected{{"a_dw", 2304},
                                                     {"d_pc", 2304},
                                                     {"f_pw", 1024},
                                                     {"k_hd", 12288},
                                                     {"n_mm", 16384}};
  for (const auto& [id, value] : expected)
    if (macs.per_node.at(id) != value)
      return {false, "per-node count mismatch at " + id};
  if (macs.total != 34304)
    return {false, "total " + std::to_string(macs.total) + " != 34304"};
  return {true, "per-layer counts and total 34304 match hand computation"};
}

// --- criterion 9: no-multiply audit ------------------------------------------

std::pair<bool, std::string> no_multiply_audit() {
  const std::string src = read_file(BNNE_KERNEL_SRC);
  if (src.find('*') != std::string::npos)
    return {false, "kernel translation unit contains a '*' character"};

  // API-level audit: a kernel call sees only packed bits and an opaque folded
  // bias; the correction term is fixed before the weight set exists.
  std::vector<float> w{1.0f, -1.0f, -1.0f};
  const auto ws =
      binarize_filter_bank(w, 1, 3, 8, std::vector<std::int32_t>{5});
  const std::int64_t gamma = gamma_term(-1, 3, 8);
  if (ws.folded_bias[0] != 5 + gamma)
    return {false, "correction term not folded at construction"};
  return {true, "kernel source free of '*'; correction folded offline into the "
                "bias"};
}

}  // namespace

int main() {
  run(1, "single-bit operation tables", truth_tables);
  run(2, "randomized MAC equivalence, both modes", mac_equivalence);
  run(3, "exhaustive popcount identity, I <= 12", exhaustive_identity);
  run(4, "correction-term closed form", gamma_closed_form);
  run(5, "per-layer randomized equivalence", layer_equivalence);
  run(6, "end-to-end toy network vs golden", end_to_end);
  run(7, "cost-model ordering and monotonicity", cost_ordering);
  run(8, "analytic MAC counting vs hand totals", mac_counting);
  run(9, "no-multiply audit of the kernel path", no_multiply_audit);

  if (failures == 0) {
    std::printf("acceptance: all 9 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", failures);
  return 1;
}
