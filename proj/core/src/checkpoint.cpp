#include "parconv/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "parconv/errors.hpp"

namespace parconv {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'N', 'N'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xff));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v & 0xffff));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, sizeof u);
    u32(u);
  }
  void raw(const char* p, std::size_t n) {
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, sizeof v);
    return v;
  }
  void expect_magic() {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, kMagic, 4) != 0) {
      throw FormatError(path_ + ": bad magic, expected \"PCNN\"");
    }
    pos_ += 4;
  }
  void expect_eof() const {
    if (pos_ != bytes_.size()) {
      throw FormatError(path_ + ": " + std::to_string(bytes_.size() - pos_) +
                        " trailing bytes after model data");
    }
  }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(path_ + ": truncated checkpoint (needed " +
                        std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ")");
    }
  }

  std::vector<std::uint8_t> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const Tensor& t) {
  for (const float v : t.data()) w.f32(v);
}

Tensor read_tensor(Reader& r, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = r.f32();
  return t;
}

}  // namespace

// Reconstructs models from checkpoints; friend of Model so it can fill the
// private layer state directly.
class CheckpointReader {
 public:
  static Model read(Reader& r, const std::string& path) {
    const std::uint16_t version = r.u16();
    if (version != kCheckpointVersion) {
      throw FormatError(path + ": unsupported checkpoint version " +
                        std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    }

    NetworkSpec spec;
    spec.layers.clear();
    spec.input_shape = {static_cast<int>(r.u32()), static_cast<int>(r.u32()),
                        static_cast<int>(r.u32())};
    spec.num_classes = static_cast<int>(r.u32());
    spec.group_size = static_cast<int>(r.u32());
    spec.kernel_size = static_cast<int>(r.u32());
    spec.bias = r.u8() != 0;

    StftConfig stft;
    stft.window_size = static_cast<int>(r.u32());
    stft.hop_length = static_cast<int>(r.u32());
    stft.centered = r.u8() != 0;
    MelConfig mel;
    mel.n_mels = spec.input_shape[1];
    mel.f_min_hz = static_cast<double>(r.f32());
    mel.f_max_hz = static_cast<double>(r.f32());
    mel.normalization = r.u8() == 0 ? MelNorm::kArea : MelNorm::kNone;
    mel.log_compress = r.u8() != 0;

    const std::uint32_t n_layers = r.u32();
    std::vector<std::pair<LayerSpec, ConvLayerSpec>> manifest;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
      const auto kind = static_cast<LayerSpec::Kind>(r.u8());
      switch (kind) {
        case LayerSpec::Kind::kParallelConv: {
          ConvLayerSpec cs;
          cs.kind = ConvKind::kParallel;
          cs.d_m = static_cast<int>(r.u32());
          cs.d_n = static_cast<int>(r.u32());
          cs.d_k = static_cast<int>(r.u32());
          cs.groups = static_cast<int>(r.u32());
          cs.bias = r.u8() != 0;
          manifest.emplace_back(LayerSpec::parallel(cs.d_n), cs);
          break;
        }
        case LayerSpec::Kind::kAvgPool:
          manifest.emplace_back(LayerSpec::pool(), ConvLayerSpec{});
          break;
        case LayerSpec::Kind::kGlobalAvgPool:
          manifest.emplace_back(LayerSpec::gap(), ConvLayerSpec{});
          break;
        case LayerSpec::Kind::kFullyConnected:
          manifest.emplace_back(LayerSpec::fc(spec.num_classes), ConvLayerSpec{});
          break;
        default:
          throw FormatError(path + ": unknown layer kind " +
                            std::to_string(static_cast<int>(kind)));
      }
    }
    for (const auto& [layer, _] : manifest) spec.layers.push_back(layer);
    spec.validate();

    Model m;
    m.spec_ = spec;
    m.stft_config = stft;
    m.mel_config = mel;
    int fc_in = spec.input_shape[0];
    for (const auto& [layer, cs] : manifest) {
      if (layer.kind == LayerSpec::Kind::kParallelConv) {
        cs.validate();
        Model::ParallelLayer pl;
        pl.spec = cs;
        pl.w3 = Var(read_tensor(r, {cs.d_n, cs.d_m / cs.groups, cs.d_k, cs.d_k}),
                    true);
        pl.w1 = Var(read_tensor(r, {cs.d_n, cs.d_m, 1, 1}), true);
        if (cs.bias) pl.b = Var(read_tensor(r, {cs.d_n}), true);
        fc_in = cs.d_n;
        m.conv_layers_.push_back(std::move(pl));
      }
    }
    m.fc_.w = Var(read_tensor(r, {spec.num_classes, fc_in}), true);
    m.fc_.b = Var(read_tensor(r, {spec.num_classes}), true);
    r.expect_eof();
    return m;
  }
};

void save_model(const Model& model, const std::string& path) {
  const NetworkSpec& spec = model.spec();

  Writer w;
  w.raw(kMagic, 4);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(spec.input_shape[0]));
  w.u32(static_cast<std::uint32_t>(spec.input_shape[1]));
  w.u32(static_cast<std::uint32_t>(spec.input_shape[2]));
  w.u32(static_cast<std::uint32_t>(spec.num_classes));
  w.u32(static_cast<std::uint32_t>(spec.group_size));
  w.u32(static_cast<std::uint32_t>(spec.kernel_size));
  w.u8(spec.bias ? 1 : 0);

  // Featurization block so inference preprocesses exactly like training.
  w.u32(static_cast<std::uint32_t>(model.stft_config.window_size));
  w.u32(static_cast<std::uint32_t>(model.stft_config.hop_length));
  w.u8(model.stft_config.centered ? 1 : 0);
  w.f32(static_cast<float>(model.mel_config.f_min_hz));
  w.f32(static_cast<float>(model.mel_config.f_max_hz));
  w.u8(model.mel_config.normalization == MelNorm::kArea ? 0 : 1);
  w.u8(model.mel_config.log_compress ? 1 : 0);

  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  std::size_t conv_index = 0;
  for (const LayerSpec& l : spec.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    if (l.kind == LayerSpec::Kind::kParallelConv) {
      const auto& cs = model.conv_layers()[conv_index++].spec;
      w.u32(static_cast<std::uint32_t>(cs.d_m));
      w.u32(static_cast<std::uint32_t>(cs.d_n));
      w.u32(static_cast<std::uint32_t>(cs.d_k));
      w.u32(static_cast<std::uint32_t>(cs.groups));
      w.u8(cs.bias ? 1 : 0);
    }
  }

  for (const auto& layer : model.conv_layers()) {
    write_tensor(w, layer.w3.value());
    write_tensor(w, layer.w1.value());
    if (layer.b.defined()) write_tensor(w, layer.b.value());
  }
  write_tensor(w, model.fc().w.value());
  write_tensor(w, model.fc().b.value());

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(w.bytes().data()),
          static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw IoError("short write to " + path);
}

Model load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path);
  r.expect_magic();
  return CheckpointReader::read(r, path);
}

}  // namespace parconv
