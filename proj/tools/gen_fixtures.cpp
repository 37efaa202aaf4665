// Regenerates the committed toy-model fixtures: weight blob, converted model
// container, input tensor, and the golden output produced by the dense
// reference executor. Deterministic; run with the data directory as argv[1].

#include <fstream>
#include <iostream>
#include <random>

#include "bnne/toolchain.hpp"

namespace {

void append_uniform(std::vector<float>& blob, std::mt19937_64& rng, std::size_t n,
                    float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  for (std::size_t i = 0; i < n; ++i) blob.push_back(dist(rng));
}

void append_int_like(std::vector<float>& blob, std::mt19937_64& rng, std::size_t n,
                     int bound) {
  std::uniform_int_distribution<int> dist(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) blob.push_back(static_cast<float>(dist(rng)));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "tests/data";
  std::mt19937_64 rng(42);

  // Blob layout follows lexicographic node id order:
  // a_dw (36 w + 4 b), b_bn (4x4), d_pc (36 w + 2 b), f_pw (16 w + 4 b),
  // k_hd (48 w + 8 b).
  std::vector<float> blob;
  append_uniform(blob, rng, 36, -1.0f, 1.0f);  // a_dw weights
  append_int_like(blob, rng, 4, 20);           // a_dw biases
  append_uniform(blob, rng, 4, -2.0f, 2.0f);   // b_bn mean
  append_uniform(blob, rng, 4, 0.5f, 2.0f);    // b_bn variance
  append_uniform(blob, rng, 4, 0.5f, 1.5f);    // b_bn scale
  append_uniform(blob, rng, 4, -2.0f, 2.0f);   // b_bn shift
  append_uniform(blob, rng, 36, -1.0f, 1.0f);  // d_pc weights
  append_int_like(blob, rng, 2, 20);           // d_pc biases
  append_uniform(blob, rng, 16, -1.0f, 1.0f);  // f_pw weights
  append_int_like(blob, rng, 4, 20);           // f_pw biases
  append_uniform(blob, rng, 48, -1.0f, 1.0f);  // k_hd weights
  append_int_like(blob, rng, 8, 20);           // k_hd biases

  {
    std::ofstream bf(dir + "/toy_block_weights.f32", std::ios::binary | std::ios::trunc);
    bf.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }

  std::ifstream gf(dir + "/toy_block.json");
  const std::string graph_text((std::istreambuf_iterator<char>(gf)),
                               std::istreambuf_iterator<char>());
  const bnne::NetworkGraph graph = bnne::graph_from_json(graph_text);
  const bnne::ModelContainer model = bnne::tool::convert(graph, blob);
  bnne::write_model(dir + "/toy_block.bnne", model);

  bnne::QuantTensor input({4, 8, 8}, 8);
  std::uniform_int_distribution<std::uint32_t> act(0, 255);
  for (auto& v : input.data) v = act(rng);
  bnne::write_tensor(dir + "/toy_input.bnnt", bnne::to_raw(input));

  const auto golden =
      bnne::oracle::ref_execute(graph, model.params, {{"in", input}});
  bnne::write_tensor(dir + "/toy_golden.bnnt",
                     bnne::to_raw(std::get<bnne::IntTensor>(golden.at("out"))));

  std::cout << "fixtures written to " << dir << " (" << blob.size()
            << " blob floats)\n";
  return 0;
}
