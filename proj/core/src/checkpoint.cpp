#include "nervboost/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

#include "nervboost/bitstream_codec.hpp"
#include "nervboost/errors.hpp"

namespace nervboost {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint tensors are written as raw little-endian f32");

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
  uint8_t raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(const std::vector<uint8_t>& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const uint8_t* take(size_t n) {
    if (in_.size() - pos_ < n) throw DecodeError(DecodeErrorKind::Truncated, "checkpoint ends early");
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<uint8_t>& in_;
  size_t pos_ = 0;
};

void put_tensor(std::vector<uint8_t>& out, const std::string& name, const torch::Tensor& t) {
  put<uint16_t>(out, static_cast<uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put<uint8_t>(out, static_cast<uint8_t>(t.dim()));
  for (auto d : t.sizes()) put<uint32_t>(out, static_cast<uint32_t>(d));
  const auto data = t.detach().to(torch::kFloat32).contiguous();
  const auto* p = reinterpret_cast<const uint8_t*>(data.data_ptr<float>());
  out.insert(out.end(), p, p + data.numel() * sizeof(float));
}

}  // namespace

void save_checkpoint(const std::string& path, const FittedModel& model, const RunConfig& cfg) {
  auto kv = cfg.to_kv();
  kv.set("frames", model.frames);
  kv.set("height", model.height);
  kv.set("width", model.width);
  kv.set("base_width", model.decoder->config().base_width);
  const auto text = kv.to_text();

  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  for (const auto& p : model.decoder->named_parameters()) tensors.emplace_back("dec." + p.key(), p.value());
  if (!model.encoder.is_empty()) {
    for (const auto& p : model.encoder->named_parameters()) {
      tensors.emplace_back("enc." + p.key(), p.value());
    }
  }

  std::vector<uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put<uint16_t>(out, kCheckpointVersion);
  put<uint32_t>(out, static_cast<uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) put_tensor(out, name, t);
  write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  Cursor in(bytes);
  if (std::memcmp(in.take(4), kCheckpointMagic, 4) != 0) {
    throw DecodeError(DecodeErrorKind::BadMagic, path + " is not a checkpoint");
  }
  if (const auto v = in.get<uint16_t>(); v != kCheckpointVersion) {
    throw DecodeError(DecodeErrorKind::UnsupportedVersion, "checkpoint version " + std::to_string(v));
  }
  const auto text_len = in.get<uint32_t>();
  const auto* text_ptr = reinterpret_cast<const char*>(in.take(text_len));
  auto kv = KeyValues::parse(std::string_view(text_ptr, text_len));

  const auto frames = kv.get_int("frames");
  const auto height = kv.get_int("height");
  const auto width = kv.get_int("width");
  const auto base_width = kv.get_double("base_width");
  KeyValues run_kv;
  for (const auto& [k, v] : kv.entries()) {
    if (k != "frames" && k != "height" && k != "width" && k != "base_width") run_kv.set(k, v);
  }

  LoadedCheckpoint out;
  out.cfg = RunConfig::from_kv(run_kv);
  auto dcfg = out.cfg.decoder_config(height, width);
  dcfg.base_width = base_width;
  out.model.frames = frames;
  out.model.height = height;
  out.model.width = width;
  out.model.decoder = DecoderModel(dcfg);
  if (dcfg.hybrid()) {
    EncoderConfig enc;
    enc.strides = out.cfg.strides;
    out.model.encoder = FrameEncoder(enc);
  }

  std::map<std::string, torch::Tensor> targets;
  for (auto& p : out.model.decoder->named_parameters()) targets["dec." + p.key()] = p.value();
  if (!out.model.encoder.is_empty()) {
    for (auto& p : out.model.encoder->named_parameters()) targets["enc." + p.key()] = p.value();
  }

  const auto count = in.get<uint32_t>();
  if (count != targets.size()) {
    throw DecodeError(DecodeErrorKind::CorruptHeader,
                      "checkpoint holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(targets.size()));
  }
  torch::NoGradGuard no_grad;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<uint16_t>();
    const auto* name_ptr = reinterpret_cast<const char*>(in.take(name_len));
    const std::string name(name_ptr, name_len);
    const auto rank = in.get<uint8_t>();
    std::vector<int64_t> shape;
    int64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      shape.push_back(in.get<uint32_t>());
      numel *= shape.back();
    }
    auto it = targets.find(name);
    if (it == targets.end() || it->second.sizes() != c10::IntArrayRef(shape)) {
      throw DecodeError(DecodeErrorKind::CorruptHeader, "unexpected tensor '" + name + "'");
    }
    const auto* data = in.take(static_cast<size_t>(numel) * sizeof(float));
    auto t = torch::empty(shape, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), data, static_cast<size_t>(numel) * sizeof(float));
    it->second.copy_(t);
  }
  if (!in.done()) throw DecodeError(DecodeErrorKind::CorruptHeader, "trailing bytes in checkpoint");
  return out;
}

}  // namespace nervboost
