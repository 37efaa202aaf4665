// bnne: convert float models into the packed binary-weight container, run
// inference, verify against the brute-force reference, and emit cost reports.
//
// Exit codes: 0 success, 1 verification mismatch, 2 usage or I/O error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bnne/costmodel.hpp"
#include "bnne/toolchain.hpp"

namespace {

std::vector<int> parse_bit_sweep(const std::string& text) {
  // "8" or "1..16"
  const auto dots = text.find("..");
  std::vector<int> bits;
  if (dots == std::string::npos) {
    bits.push_back(std::stoi(text));
  } else {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int b = lo; b <= hi; ++b) bits.push_back(b);
  }
  return bits;
}

bnne::cost::GeConfig load_ge_config(const std::string& path) {
  bnne::cost::GeConfig config;
  if (path.empty()) return config;
  std::ifstream in(path);
  if (!in) throw bnne::IoError("cannot open GE config '" + path + "'");
  const auto j = nlohmann::json::parse(in);
  config.logic = j.value("logic", config.logic);
  config.mux = j.value("mux", config.mux);
  config.full_adder = j.value("full_adder", config.full_adder);
  for (const auto& [key, value] : j.items())
    if (key != "logic" && key != "mux" && key != "full_adder")
      throw bnne::ConfigError("unknown GE config key '" + key + "'");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary-weight neural network inference engine toolchain"};
  app.require_subcommand(1);

  std::string graph_path, blob_path, model_path, input_path, output_path, trace_path;
  std::string ge_config_path, bits_arg = "8", report_path;
  long long lanes = 1;
  int trials = 1000;
  std::uint64_t seed = 0;
  int workers = 0;
  bool builtin = false;

  auto* convert = app.add_subcommand("convert", "build a .bnne model container");
  convert->add_option("graph", graph_path, "graph description (JSON)")->required();
  convert->add_option("weights", blob_path, "float32 weight blob")->required();
  convert->add_option("-o,--output", model_path, "output .bnne path")->required();

  auto* run = app.add_subcommand("run", "run inference on a raw tensor");
  run->add_option("model", model_path, ".bnne model")->required();
  run->add_option("input", input_path, "input tensor (.bnnt)")->required();
  run->add_option("-o,--output", output_path, "output tensor path")->required();
  run->add_option("--trace", trace_path, "write execution trace JSON here");
  run->add_option("--workers", workers, "worker threads (0 = BNNE_THREADS/auto)");

  auto* verify = app.add_subcommand("verify", "compare engine against the reference");
  verify->add_option("model", model_path, ".bnne model to verify");
  verify->add_flag("--builtin", builtin, "run the built-in layer campaign");
  verify->add_option("--trials", trials, "number of randomized trials");
  verify->add_option("--seed", seed, "campaign seed");
  verify->add_option("--report", report_path, "also write the report to this file");

  auto* cost = app.add_subcommand("cost", "gate-equivalent cost comparison");
  cost->add_option("model", model_path, "optional .bnne model for per-layer MACs");
  cost->add_option("--lanes", lanes, "parallel lane count");
  cost->add_option("--bits", bits_arg, "bit width or sweep, e.g. 8 or 1..16");
  cost->add_option("--ge-config", ge_config_path, "JSON GE weight overrides");

  CLI11_PARSE(app, argc, argv);

  try {
    if (convert->parsed()) {
      bnne::tool::cmd_convert(graph_path, blob_path, model_path);
      std::cout << "wrote " << model_path << "\n";
      return 0;
    }
    if (run->parsed()) {
      bnne::tool::run_model(model_path, input_path, output_path, trace_path, workers);
      std::cout << "wrote " << output_path << "\n";
      return 0;
    }
    if (verify->parsed()) {
      std::string report;
      bool ok = true;
      if (builtin || model_path.empty()) {
        const auto campaign = bnne::oracle::equivalence_campaign(seed, trials);
        report = bnne::oracle::format_report(campaign);
        ok = campaign.passed();
      } else {
        const auto model = bnne::read_model(model_path);
        const auto result = bnne::tool::verify_model(model, seed, std::min(trials, 8));
        report = result.report;
        ok = result.ok;
      }
      std::cout << report;
      if (!report_path.empty()) {
        std::ofstream rf(report_path, std::ios::trunc);
        rf << report;
      }
      return ok ? 0 : 1;
    }
    if (cost->parsed()) {
      const auto config = load_ge_config(ge_config_path);
      const auto report =
          bnne::cost::compare(lanes, parse_bit_sweep(bits_arg), config);
      std::cout << bnne::cost::format_text(report);
      if (!model_path.empty()) {
        const auto model = bnne::read_model(model_path);
        const auto macs = bnne::count_macs(model.graph, model.params);
        std::cout << "per-layer MAC counts:\n";
        for (const auto& [id, count] : macs.per_node)
          if (count > 0) std::cout << "  " << id << ": " << count << "\n";
        std::cout << "total MACs: " << macs.total << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
