#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "bnne/bitcore.hpp"
#include "bnne/oracle.hpp"

using namespace bnne;

TEST_CASE("pack_bitplanes basic layouts") {
  SUBCASE("all-zero input") {
    std::vector<std::uint32_t> a{0, 0, 0, 0};
    const auto block = pack_bitplanes(a, 8);
    CHECK(block.lane_count == 4);
    CHECK(block.bits == 8);
    REQUIRE(block.planes.size() == 8);
    for (const auto& plane : block.planes)
      for (auto word : plane) CHECK(word == 0);
    CHECK(block.valid_mask[0] == 0xfull);
  }
  SUBCASE("binary expansion [3,2] J=2") {
    std::vector<std::uint32_t> a{3, 2};
    const auto block = pack_bitplanes(a, 2);
    // 3 = 11b, 2 = 10b: plane 0 has lane bits (1,0), plane 1 has (1,1).
    CHECK(block.planes[0][0] == 0b01ull);
    CHECK(block.planes[1][0] == 0b11ull);
  }
  SUBCASE("all-ones value [255] J=8") {
    std::vector<std::uint32_t> a{255};
    const auto block = pack_bitplanes(a, 8);
    for (int j = 0; j < 8; ++j) CHECK((block.planes[j][0] & 1ull) == 1ull);
  }
  SUBCASE("out-of-range value names the offending index") {
    std::vector<std::uint32_t> a{0, 4};
    try {
      pack_bitplanes(a, 2);
      FAIL("expected RangeError");
    } catch (const RangeError& e) {
      CHECK(std::string(e.what()).find("index 1") != std::string::npos);
    }
  }
  SUBCASE("bit width bounds") {
    std::vector<std::uint32_t> a{0};
    CHECK_THROWS_AS(pack_bitplanes(a, 0), RangeError);
    CHECK_THROWS_AS(pack_bitplanes(a, 17), RangeError);
  }
}

TEST_CASE("unpack_bitplanes round trips") {
  SUBCASE("[3,2] J=2") {
    std::vector<std::uint32_t> a{3, 2};
    CHECK(unpack_bitplanes(pack_bitplanes(a, 2)) == a);
  }
  SUBCASE("all-zero block, I=5") {
    std::vector<std::uint32_t> a(5, 0);
    CHECK(unpack_bitplanes(pack_bitplanes(a, 4)) == a);
  }
  SUBCASE("random 1000-vector, J=8") {
    std::mt19937_64 rng(11);
    std::vector<std::uint32_t> a(1000);
    for (auto& v : a) v = static_cast<std::uint32_t>(rng() & 0xff);
    CHECK(unpack_bitplanes(pack_bitplanes(a, 8)) == a);
  }
  SUBCASE("capacity padding does not perturb the round trip") {
    std::vector<std::uint32_t> a{5, 9, 13};
    CHECK(unpack_bitplanes(pack_bitplanes(a, 4, 63)) == a);
  }
}

TEST_CASE("binarize_weights_sign") {
  SUBCASE("mixed signs") {
    std::vector<float> w{0.5f, -0.2f};
    const auto [bits, sum] = binarize_weights_sign(w);
    CHECK(bits[0] == 0b01ull);
    CHECK(sum == 0);
  }
  SUBCASE("all negative") {
    std::vector<float> w{-1.0f, -1.0f, -1.0f};
    const auto [bits, sum] = binarize_weights_sign(w);
    CHECK(bits[0] == 0ull);
    CHECK(sum == -3);
  }
  SUBCASE("tie rule: exact zero maps to +1") {
    std::vector<float> w{0.0f};
    const auto [bits, sum] = binarize_weights_sign(w);
    CHECK(bits[0] == 1ull);
    CHECK(sum == 1);
  }
  SUBCASE("NaN weight rejected") {
    std::vector<float> w{0.5f, std::nanf("")};
    CHECK_THROWS_AS(binarize_weights_sign(w), InvalidInputError);
  }
}

TEST_CASE("gamma_term closed form") {
  CHECK(gamma_term(4, 4, 8) == 0);
  CHECK(gamma_term(-1, 3, 8) == -510);
  CHECK(gamma_term(0, 2, 2) == -3);
  SUBCASE("parity violation is an internal invariant error") {
    CHECK_THROWS_AS(gamma_term(1, 2, 8), InternalError);
  }
  SUBCASE("matches -(I - popcount(w')) * (2^J - 1) for random vectors") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 500; ++trial) {
      const int lanes = 1 + static_cast<int>(rng() % 256);
      const int bits = 1 + static_cast<int>(rng() % 16);
      int ones = 0;
      for (int i = 0; i < lanes; ++i) ones += static_cast<int>(rng() & 1);
      const std::int64_t weight_sum = 2ll * ones - lanes;
      const std::int64_t expected =
          -static_cast<std::int64_t>(lanes - ones) * ((1ll << bits) - 1);
      CHECK(gamma_term(weight_sum, lanes, bits) == expected);
    }
  }
}

TEST_CASE("fold_bias") {
  CHECK(fold_bias(10, 4, 4, 8) == 10);
  CHECK(fold_bias(0, 0, 2, 2) == -3);
  CHECK(fold_bias(-510, -1, 3, 8) == -1020);
  SUBCASE("accumulator overflow rejected") {
    CHECK_THROWS_AS(fold_bias(3'000'000'000ll, 4, 4, 8), RangeError);
  }
}

namespace {

BinaryWeightSet single_signed(float w, int bits, std::int32_t beta = 0) {
  std::vector<float> weights{w};
  std::vector<std::int32_t> b{beta};
  return binarize_filter_bank(weights, 1, 1, bits, b);
}

}  // namespace

TEST_CASE("mac_xnor reproduces the signed single-bit operation table") {
  // J=1 activation bit a' with weight w in {-1,+1}; output is a' * w.
  const struct {
    std::uint32_t act;
    float weight;
    std::int32_t expected;
  } cases[] = {
      {0, 1.0f, 0}, {1, 1.0f, 1}, {0, -1.0f, 0}, {1, -1.0f, -1}};
  for (const auto& c : cases) {
    std::vector<std::uint32_t> a{c.act};
    const auto block = pack_bitplanes(a, 1);
    const auto ws = single_signed(c.weight, 1);
    CHECK(mac_xnor(block, ws, 0).value == c.expected);
  }
}

TEST_CASE("mac_and reproduces the unsigned single-bit operation table") {
  const struct {
    std::uint32_t act;
    std::uint64_t weight_bit;
    std::int32_t expected;
  } cases[] = {{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 1}};
  for (const auto& c : cases) {
    std::vector<std::uint32_t> a{c.act};
    const auto block = pack_bitplanes(a, 1);
    std::vector<std::vector<std::uint64_t>> packed{{c.weight_bit}};
    std::vector<std::int32_t> beta{0};
    const auto ws = make_weight_set_mask(1, 1, std::move(packed), beta);
    CHECK(mac_and(block, ws, 0).value == c.expected);
  }
}

TEST_CASE("mac_and multi-bit example") {
  // a = [3,5] at J=8 with mask weights [1,0]: selects 3.
  std::vector<std::uint32_t> a{3, 5};
  const auto block = pack_bitplanes(a, 8);
  std::vector<std::vector<std::uint64_t>> packed{{0b01ull}};
  std::vector<std::int32_t> beta{0};
  const auto ws = make_weight_set_mask(2, 8, std::move(packed), beta);
  CHECK(mac_and(block, ws, 0).value == 3);
}

TEST_CASE("mac_xnor multi-bit example matches hand arithmetic") {
  // a = [3,2], w = (+1,-1), beta = 0: 3 - 2 = 1.
  std::vector<std::uint32_t> a{3, 2};
  const auto block = pack_bitplanes(a, 8);
  std::vector<float> w{1.0f, -1.0f};
  std::vector<std::int32_t> beta{0};
  const auto ws = binarize_filter_bank(w, 1, 2, 8, beta);
  CHECK(mac_xnor(block, ws, 0).value == 1);
}

TEST_CASE("mac kernel error cases") {
  std::vector<std::uint32_t> a{1, 2, 3};
  const auto block = pack_bitplanes(a, 8);
  const auto signed_ws = single_signed(1.0f, 8);
  SUBCASE("lane-count mismatch") {
    CHECK_THROWS_AS(mac_xnor(block, signed_ws, 0), ShapeError);
  }
  SUBCASE("mode mismatch") {
    std::vector<std::vector<std::uint64_t>> packed{{0b111ull}};
    std::vector<std::int32_t> beta{0};
    const auto mask_ws = make_weight_set_mask(3, 8, std::move(packed), beta);
    CHECK_THROWS_AS(mac_xnor(block, mask_ws, 0), ModeError);
    const auto ws3 = binarize_filter_bank(std::vector<float>{1, 1, -1}, 1, 3, 8,
                                          std::vector<std::int32_t>{0});
    CHECK_THROWS_AS(mac_and(block, ws3, 0), ModeError);
  }
}

TEST_CASE("mac_batch matches independent single-channel calls and the oracle") {
  std::mt19937_64 rng(21);
  const int lanes = 37;
  const int channels = 16;
  std::vector<std::uint32_t> a(lanes);
  for (auto& v : a) v = static_cast<std::uint32_t>(rng() & 0xff);
  const auto block = pack_bitplanes(a, 8);

  std::vector<float> weights(static_cast<std::size_t>(channels) * lanes);
  for (auto& w : weights)
    w = (rng() & 1) ? 0.5f : -0.5f;
  std::vector<std::int32_t> beta(channels);
  for (auto& b : beta) b = static_cast<std::int32_t>(rng() % 100) - 50;
  const auto ws = binarize_filter_bank(weights, channels, lanes, 8, beta);

  oracle::SignedWeightTensor dense;
  dense.mode = 0;
  dense.out_channels = channels;
  dense.lanes = lanes;
  dense.beta = beta;
  for (auto w : weights) dense.values.push_back(w >= 0.0f ? 1 : -1);

  const auto batch = mac_batch(block, ws);
  REQUIRE(static_cast<int>(batch.size()) == channels);
  for (int c = 0; c < channels; ++c) {
    CHECK(batch[static_cast<std::size_t>(c)].value == mac_xnor(block, ws, c).value);
    CHECK(batch[static_cast<std::size_t>(c)].value == oracle::ref_mac(a, dense, c));
  }
}

TEST_CASE("xnor identity holds exhaustively for small lane counts") {
  // For single-bit activations a' and signed weights w = 2w' - 1:
  //   sum a'_i * w_i == xnor_popcount(a', w') - I + popcount(w').
  for (int lanes = 1; lanes <= 8; ++lanes) {
    const std::uint64_t mask = lanes == 64 ? ~0ull : (1ull << lanes) - 1;
    for (std::uint64_t w = 0; w <= mask; ++w)
      for (std::uint64_t a = 0; a <= mask; ++a) {
        const int lhs = 2 * std::popcount(a & w) - std::popcount(a);
        const int rhs =
            xnor_popcount_word(a, w, mask) - lanes + std::popcount(w);
        CHECK(lhs == rhs);
      }
  }
}

TEST_CASE("padding lanes beyond lane_count never contribute") {
  std::mt19937_64 rng(31);
  for (int lanes = 1; lanes <= 63; ++lanes) {
    std::vector<std::uint32_t> a(static_cast<std::size_t>(lanes));
    for (auto& v : a) v = static_cast<std::uint32_t>(rng() & 0xff);
    const auto tight = pack_bitplanes(a, 8);
    const auto padded = pack_bitplanes(a, 8, 64);

    std::vector<float> weights(static_cast<std::size_t>(lanes));
    for (auto& w : weights) w = (rng() & 1) ? 1.0f : -1.0f;
    std::vector<std::int32_t> beta{7};
    const auto ws = binarize_filter_bank(weights, 1, lanes, 8, beta);
    CHECK(mac_xnor(tight, ws, 0).value == mac_xnor(padded, ws, 0).value);
  }
}

TEST_CASE("weight-set factories validate their inputs") {
  std::vector<std::int32_t> beta{0};
  SUBCASE("weight_sum inconsistent with packed popcount") {
    std::vector<std::vector<std::uint64_t>> packed{{0b11ull}};
    std::vector<std::int32_t> sums{0};  // popcount 2 over I=2 implies sum 2
    CHECK_THROWS_AS(make_weight_set_signed(2, 8, std::move(packed), sums, beta),
                    InternalError);
  }
  SUBCASE("stray bits beyond lane_count rejected") {
    std::vector<std::vector<std::uint64_t>> packed{{0b100ull}};
    CHECK_THROWS_AS(make_weight_set_mask(2, 8, std::move(packed), beta),
                    InvalidInputError);
  }
  SUBCASE("accumulator budget enforced at construction") {
    const int lanes = 4096;
    std::vector<std::vector<std::uint64_t>> packed(
        1, std::vector<std::uint64_t>(static_cast<std::size_t>(words_for_lanes(lanes)), 0));
    std::vector<std::int32_t> big_beta{2'147'000'000};
    CHECK_THROWS_AS(make_weight_set_mask(lanes, 16, std::move(packed), big_beta),
                    RangeError);
  }
}
