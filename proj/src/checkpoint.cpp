#include "sfl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace sfl {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'L', 'C'};

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f32s(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }
  void f64s(const std::vector<double>& v) {
    for (double x : v) f64(x);
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::uint8_t u8() { return uint<std::uint8_t>(); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  std::vector<float> f32s(std::size_t n) {
    need(n * 4);
    std::vector<float> v(n);
    for (auto& x : v) x = f32();
    return v;
  }
  std::vector<double> f64s(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (n > remaining()) throw CheckpointError("checkpoint is truncated");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void write_descriptor(Writer& w, const ConvLayer<T>& layer) {
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(layer.in_channels));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(layer.out_channels));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(layer.half_size));
  w.u8(static_cast<std::uint8_t>(layer.stride));
  w.u8(static_cast<std::uint8_t>(layer.activation));
  w.u8(static_cast<std::uint8_t>(layer.padding));
  w.u8(layer.trainable ? 1 : 0);
}

struct LayerDescriptor {
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  std::uint32_t half = 0;
  Stride stride = Stride::one;
  Activation activation = Activation::identity;
  Padding padding = Padding::zero;
  bool trainable = false;

  std::size_t weight_count() const {
    const std::size_t k = 2 * static_cast<std::size_t>(half) + 1;
    return static_cast<std::size_t>(in) * out * k * k;
  }
};

LayerDescriptor read_descriptor(Reader& r) {
  LayerDescriptor d;
  d.in = r.uint<std::uint32_t>();
  d.out = r.uint<std::uint32_t>();
  d.half = r.uint<std::uint32_t>();
  const auto stride = r.u8();
  const auto act = r.u8();
  const auto pad = r.u8();
  const auto trainable = r.u8();
  if (d.in == 0 || d.out == 0 || d.in > 4096 || d.out > 4096 || d.half > 1024) {
    throw CheckpointError("checkpoint layer descriptor is invalid");
  }
  if (stride > 2 || act > 2 || pad > 1 || trainable > 1) {
    throw CheckpointError("checkpoint layer descriptor has an unknown tag");
  }
  d.stride = static_cast<Stride>(stride);
  d.activation = static_cast<Activation>(act);
  d.padding = static_cast<Padding>(pad);
  d.trainable = trainable == 1;
  return d;
}

ConvLayer<float> read_layer(Reader& r) {
  const LayerDescriptor d = read_descriptor(r);
  r.need((d.weight_count() + d.out) * 4);
  ConvLayer<float> layer(static_cast<int>(d.in), static_cast<int>(d.out), static_cast<int>(d.half),
                         d.stride, d.activation, d.padding, d.trainable);
  layer.weights = r.f32s(layer.weights.size());
  layer.biases = r.f32s(layer.biases.size());
  return layer;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CaeModel<float>& model,
                                            const OptimizerState<float>& state,
                                            std::uint32_t epoch, const TrainConfig& config) {
  model.validate();
  if (state.velocity.size() != model.layers.size()) {
    throw ConfigError("optimizer state does not match the model");
  }
  Writer w;
  w.raw(kMagic, 4);
  w.uint<std::uint16_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(epoch);
  w.f64(config.learning_rate);
  w.f64(config.momentum);
  w.f64(config.init_std);
  w.uint<std::uint64_t>(config.seed);
  w.u8(config.sfl_enabled ? 1 : 0);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(config.mini_batch));
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(config.weights.pixel.size()));
  w.f64s(config.weights.pixel);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.bank.scales.size()));
  w.f64s(model.bank.scales);
  w.f64s(model.bank.subband_weights);

  w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    write_descriptor(w, layer);
    w.f32s(layer.weights);
    w.f32s(layer.biases);
  }
  write_descriptor(w, model.bank.layer);
  w.uint<std::uint64_t>(model.bank.checksum());

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& v = state.velocity[l];
    if (v.weights.size() != model.layers[l].weights.size() ||
        v.biases.size() != model.layers[l].biases.size()) {
      throw ConfigError("optimizer state does not match the model");
    }
    w.f32s(v.weights);
    w.f32s(v.biases);
  }
  w.uint<std::uint64_t>(fnv1a(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  Reader r(bytes.subspan(4));
  const auto version = r.uint<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
  }
  Checkpoint ck;
  ck.epoch = r.uint<std::uint32_t>();
  TrainConfig& cfg = ck.config;
  cfg.learning_rate = r.f64();
  cfg.momentum = r.f64();
  cfg.init_std = r.f64();
  cfg.seed = r.uint<std::uint64_t>();
  cfg.sfl_enabled = r.u8() != 0;
  cfg.mini_batch = static_cast<int>(r.uint<std::uint32_t>());
  const auto n_pl = r.uint<std::uint32_t>();
  cfg.weights.pixel = r.f64s(n_pl);
  const auto n_bands = r.uint<std::uint32_t>();
  cfg.scales = r.f64s(n_bands);
  cfg.weights.subband = r.f64s(n_bands);

  const auto n_layers = r.uint<std::uint32_t>();
  if (n_layers == 0 || n_layers > 256) throw CheckpointError("checkpoint layer count is invalid");
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    ck.model.layers.push_back(read_layer(r));
  }
  const LayerDescriptor bank_desc = read_descriptor(r);
  const auto bank_checksum = r.uint<std::uint64_t>();

  ck.state.velocity.resize(n_layers);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    ck.state.velocity[l].weights = r.f32s(ck.model.layers[l].weights.size());
    ck.state.velocity[l].biases = r.f32s(ck.model.layers[l].biases.size());
  }
  const std::size_t payload_end = 4 + r.position();
  const auto stored = r.uint<std::uint64_t>();
  if (r.remaining() != 0) throw CheckpointError("checkpoint has trailing bytes");
  if (stored != fnv1a(bytes.first(payload_end))) {
    throw CheckpointError("checkpoint checksum mismatch (file is corrupted)");
  }

  try {
    ck.model.bank =
        build_bank<float>(cfg.scales, cfg.weights.subband, static_cast<int>(bank_desc.in));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint bank parameters are invalid: ") + e.what());
  }
  const auto& rebuilt = ck.model.bank.layer;
  if (rebuilt.out_channels != static_cast<int>(bank_desc.out) ||
      rebuilt.half_size != static_cast<int>(bank_desc.half) ||
      rebuilt.padding != bank_desc.padding || rebuilt.stride != bank_desc.stride ||
      rebuilt.activation != bank_desc.activation || bank_desc.trainable) {
    throw CheckpointError("checkpoint bank descriptor does not match its scales");
  }
  if (ck.model.bank.checksum() != bank_checksum) {
    throw CheckpointError("checkpoint bank checksum mismatch");
  }
  try {
    ck.model.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint model is inconsistent: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const CaeModel<float>& model, const OptimizerState<float>& state,
                     std::uint32_t epoch, const TrainConfig& config,
                     const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model, state, epoch, config);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace sfl
