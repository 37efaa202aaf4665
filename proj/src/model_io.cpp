// Container and tensor file formats. Layout is fixed little-endian: the same
// model bytes must load identically on any host.

#include <cstring>
#include <fstream>
#include <zlib.h>

#include <nlohmann/json.hpp>

#include "bnne/model_io.hpp"

namespace bnne {

namespace {

using json = nlohmann::json;

constexpr char kModelMagic[4] = {'B', 'N', 'N', 'E'};
constexpr char kTensorMagic[4] = {'B', 'N', 'N', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v));
    u32(static_cast<std::uint32_t>(v >> 32));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("model: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

json spec_to_json(const LayerSpec& n) {
  json j;
  j["id"] = n.id;
  j["kind"] = kind_name(n.kind);
  json p = json::object();
  switch (n.kind) {
    case LayerKind::kBConv2d:
    case LayerKind::kDownsampleConv:
    case LayerKind::kBDWConv2d:
    case LayerKind::kPConv2d:
      p["kernel_h"] = n.geom.kernel_h;
      p["kernel_w"] = n.geom.kernel_w;
      p["stride"] = n.geom.stride;
      p["pad"] = n.geom.pad;
      p["in_channels"] = n.in_channels;
      p["out_channels"] = n.out_channels;
      if (n.kind == LayerKind::kPConv2d) p["split_ratio"] = n.split_ratio;
      break;
    case LayerKind::kQuantAct:
      p["out_bits"] = n.out_bits;
      break;
    case LayerKind::kUpsampleNearest:
      p["factor"] = n.factor;
      break;
    case LayerKind::kBinarizeAct:
      p["target"] = n.sign_target ? "sign" : "mask";
      p["threshold"] = n.threshold;
      p["fold_bits"] = n.fold_bits;
      break;
    case LayerKind::kBmm:
      p["mode"] = n.mode;
      break;
    case LayerKind::kBnFoldMarker:
      p["out_channels"] = n.out_channels;
      p["eps"] = n.bn_eps;
      break;
    case LayerKind::kEltwiseAdd:
    case LayerKind::kCoordEmbed:
      break;
  }
  j["params"] = p;
  return j;
}

LayerSpec spec_from_json(const json& j) {
  LayerSpec n;
  n.id = j.at("id").get<std::string>();
  n.kind = kind_from_name(j.at("kind").get<std::string>());
  json p = j.value("params", json::object());
  if (p.is_null()) p = json::object();
  n.geom.kernel_h = p.value("kernel_h", p.value("kernel", 1));
  n.geom.kernel_w = p.value("kernel_w", p.value("kernel", 1));
  n.geom.stride = p.value("stride", 1);
  n.geom.pad = p.value("pad", 0);
  n.in_channels = p.value("in_channels", 0);
  n.out_channels = p.value("out_channels", 0);
  n.mode = p.value("mode", 0);
  n.split_ratio = p.value("split_ratio", 0.25);
  n.factor = p.value("factor", 1);
  n.threshold = p.value("threshold", 0);
  n.sign_target = p.value("target", std::string("sign")) == "sign";
  n.fold_bits = p.value("fold_bits", 8);
  n.out_bits = p.value("out_bits", 8);
  n.bn_eps = p.value("eps", 1e-5);
  return n;
}

void write_weight_record(Writer& w, const BinaryWeightSet& ws) {
  w.u8(static_cast<std::uint8_t>(ws.mode));
  w.u8(static_cast<std::uint8_t>(ws.bits));
  w.u8(ws.origin == WeightOrigin::kSignBinarized ? 0 : 1);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(ws.out_channels));
  w.u32(static_cast<std::uint32_t>(ws.lane_count));
  for (int c = 0; c < ws.out_channels; ++c) {
    w.i32(ws.beta[static_cast<std::size_t>(c)]);
    w.i32(ws.folded_bias[static_cast<std::size_t>(c)]);
  }
  const std::uint32_t words =
      ws.out_channels > 0 ? static_cast<std::uint32_t>(ws.packed_bits[0].size()) : 0;
  w.u32(words);
  for (const auto& channel : ws.packed_bits)
    for (auto word : channel) w.u64(word);
}

BinaryWeightSet read_weight_record(Reader& r) {
  BinaryWeightSet ws;
  ws.mode = r.u8();
  ws.bits = r.u8();
  ws.origin = r.u8() == 0 ? WeightOrigin::kSignBinarized : WeightOrigin::kNativeMask;
  r.u8();
  ws.out_channels = static_cast<int>(r.u32());
  ws.lane_count = static_cast<int>(r.u32());
  ws.beta.resize(static_cast<std::size_t>(ws.out_channels));
  ws.folded_bias.resize(static_cast<std::size_t>(ws.out_channels));
  for (int c = 0; c < ws.out_channels; ++c) {
    ws.beta[static_cast<std::size_t>(c)] = r.i32();
    ws.folded_bias[static_cast<std::size_t>(c)] = r.i32();
  }
  const std::uint32_t words = r.u32();
  ws.packed_bits.assign(static_cast<std::size_t>(ws.out_channels),
                        std::vector<std::uint64_t>(words));
  for (auto& channel : ws.packed_bits)
    for (auto& word : channel) word = r.u64();
  return ws;
}

void write_requant_record(Writer& w, const RequantParams& rq) {
  w.u8(static_cast<std::uint8_t>(rq.bits));
  w.u8(static_cast<std::uint8_t>(rq.shift));
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(rq.multiplier.size()));
  for (auto m : rq.multiplier) w.i32(m);
  w.u32(static_cast<std::uint32_t>(rq.offset.size()));
  for (auto o : rq.offset) w.i32(o);
}

RequantParams read_requant_record(Reader& r) {
  RequantParams rq;
  rq.bits = r.u8();
  rq.shift = r.u8();
  r.u16();
  rq.multiplier.resize(r.u32());
  for (auto& m : rq.multiplier) m = r.i32();
  rq.offset.resize(r.u32());
  for (auto& o : rq.offset) o = r.i32();
  return rq;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace

std::string graph_to_json(const NetworkGraph& graph) {
  json j;
  j["nodes"] = json::array();
  for (const auto& n : graph.nodes) j["nodes"].push_back(spec_to_json(n));
  j["edges"] = json::array();
  for (const auto& e : graph.edges)
    j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"port", e.port}});
  auto io = [](const IoBinding& b) {
    return json{{"name", b.name},
                {"node", b.node},
                {"port", b.port},
                {"shape", {b.shape.channels, b.shape.height, b.shape.width}},
                {"bits", b.bits}};
  };
  j["inputs"] = json::array();
  for (const auto& b : graph.inputs) j["inputs"].push_back(io(b));
  j["outputs"] = json::array();
  for (const auto& b : graph.outputs)
    j["outputs"].push_back({{"name", b.name}, {"node", b.node}});
  return j.dump(2);
}

NetworkGraph graph_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("graph JSON parse error: ") + e.what());
  }
  NetworkGraph g;
  try {
    for (const auto& n : j.value("nodes", json::array()))
      g.nodes.push_back(spec_from_json(n));
    for (const auto& e : j.value("edges", json::array()))
      g.edges.push_back({e.at("from").get<std::string>(),
                         e.at("to").get<std::string>(), e.value("port", 0)});
    for (const auto& b : j.value("inputs", json::array())) {
      IoBinding io;
      io.name = b.at("name").get<std::string>();
      io.node = b.at("node").get<std::string>();
      io.port = b.value("port", 0);
      const auto shape = b.at("shape");
      io.shape = {shape.at(0).get<int>(), shape.at(1).get<int>(),
                  shape.at(2).get<int>()};
      io.bits = b.value("bits", 8);
      g.inputs.push_back(io);
    }
    for (const auto& b : j.value("outputs", json::array())) {
      IoBinding io;
      io.name = b.at("name").get<std::string>();
      io.node = b.at("node").get<std::string>();
      g.outputs.push_back(io);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("graph JSON structure error: ") + e.what());
  }
  return g;
}

std::vector<std::uint8_t> serialize_model(const ModelContainer& model) {
  Writer w;
  w.raw(kModelMagic, 4);
  w.u16(ModelContainer::kFormatVersion);
  w.u8(1);  // little-endian marker
  w.u8(0);
  const std::string graph_json = graph_to_json(model.graph);
  w.u32(static_cast<std::uint32_t>(graph_json.size()));
  w.raw(graph_json.data(), graph_json.size());
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [id, np] : model.params) {
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.raw(id.data(), id.size());
    std::uint8_t flags = 0;
    if (np.weights) flags |= 1;
    if (np.requant) flags |= 2;
    w.u8(flags);
    if (np.weights) write_weight_record(w, *np.weights);
    if (np.requant) write_requant_record(w, *np.requant);
  }
  const std::uint32_t crc = checksum(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

ModelContainer parse_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw IoError("model: file too small");
  const std::uint32_t stored =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
      (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
  if (checksum(bytes.data(), bytes.size() - 4) != stored)
    throw IoError("model: checksum mismatch, file is corrupted");

  Reader r(bytes);
  if (r.str(4) != std::string(kModelMagic, 4))
    throw IoError("model: bad magic, not a BNNE container");
  const std::uint16_t version = r.u16();
  if (version != ModelContainer::kFormatVersion)
    throw IoError("model: unsupported format version " + std::to_string(version));
  if (r.u8() != 1) throw IoError("model: unsupported endianness marker");
  r.u8();

  ModelContainer model;
  const std::uint32_t graph_len = r.u32();
  model.graph = graph_from_json(r.str(graph_len));
  const std::uint32_t records = r.u32();
  for (std::uint32_t i = 0; i < records; ++i) {
    const std::uint16_t id_len = r.u16();
    const std::string id = r.str(id_len);
    const std::uint8_t flags = r.u8();
    NodeParams np;
    if (flags & 1) np.weights = read_weight_record(r);
    if (flags & 2) np.requant = read_requant_record(r);
    model.params.emplace(id, std::move(np));
  }
  return model;
}

void write_model(const std::string& path, const ModelContainer& model) {
  write_file(path, serialize_model(model));
}

ModelContainer read_model(const std::string& path) {
  return parse_model(read_file(path));
}

void write_tensor(const std::string& path, const RawTensor& tensor) {
  Writer w;
  w.raw(kTensorMagic, 4);
  w.u32(static_cast<std::uint32_t>(tensor.dims.channels));
  w.u32(static_cast<std::uint32_t>(tensor.dims.height));
  w.u32(static_cast<std::uint32_t>(tensor.dims.width));
  w.u8(static_cast<std::uint8_t>(tensor.bits));
  w.u8(tensor.is_signed ? 1 : 0);
  w.u16(0);
  if (tensor.is_signed) {
    if (tensor.i32.size() != tensor.dims.numel())
      throw ShapeError("tensor file: payload length mismatch");
    for (auto v : tensor.i32) w.i32(v);
  } else {
    if (tensor.u8.size() != tensor.dims.numel())
      throw ShapeError("tensor file: payload length mismatch");
    w.raw(tensor.u8.data(), tensor.u8.size());
  }
  write_file(path, w.bytes());
}

RawTensor read_tensor(const std::string& path) {
  const auto bytes = read_file(path);
  Reader r(bytes);
  if (r.str(4) != std::string(kTensorMagic, 4))
    throw IoError("tensor: bad magic, not a BNNT file");
  RawTensor t;
  t.dims.channels = static_cast<int>(r.u32());
  t.dims.height = static_cast<int>(r.u32());
  t.dims.width = static_cast<int>(r.u32());
  t.bits = r.u8();
  t.is_signed = r.u8() != 0;
  r.u16();
  const std::size_t n = t.dims.numel();
  if (t.is_signed) {
    t.i32.resize(n);
    for (auto& v : t.i32) v = r.i32();
  } else {
    const std::string payload = r.str(n);
    t.u8.assign(payload.begin(), payload.end());
  }
  if (r.pos() != bytes.size()) throw IoError("tensor: trailing bytes in file");
  return t;
}

RawTensor to_raw(const QuantTensor& t) {
  RawTensor raw;
  raw.dims = t.dims;
  raw.bits = t.bits;
  if (t.bits <= 8) {
    raw.is_signed = false;
    raw.u8.reserve(t.data.size());
    for (auto v : t.data) raw.u8.push_back(static_cast<std::uint8_t>(v));
  } else {
    raw.is_signed = true;
    raw.i32.assign(t.data.begin(), t.data.end());
  }
  return raw;
}

RawTensor to_raw(const IntTensor& t) {
  RawTensor raw;
  raw.dims = t.dims;
  raw.bits = 32;
  raw.is_signed = true;
  raw.i32 = t.data;
  return raw;
}

QuantTensor quant_from_raw(const RawTensor& raw) {
  std::vector<std::uint32_t> values;
  values.reserve(raw.dims.numel());
  if (raw.is_signed) {
    for (auto v : raw.i32) {
      if (v < 0) throw RangeError("tensor: negative value in quantized input");
      values.push_back(static_cast<std::uint32_t>(v));
    }
  } else {
    values.assign(raw.u8.begin(), raw.u8.end());
  }
  return QuantTensor(raw.dims, raw.bits, std::move(values));
}

std::string trace_to_json(const ExecutionTrace& trace) {
  json j;
  j["total_macs"] = trace.total_macs;
  j["total_millis"] = trace.total_millis;
  j["nodes"] = json::array();
  for (const auto& n : trace.nodes)
    j["nodes"].push_back({{"id", n.id},
                          {"kind", n.kind},
                          {"out_shape", {n.out_shape.channels, n.out_shape.height,
                                         n.out_shape.width}},
                          {"macs", n.macs},
                          {"mode", n.mode},
                          {"millis", n.millis}});
  return j.dump(2);
}

}  // namespace bnne
