#include "nervboost/compression.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>

#include "nervboost/errors.hpp"
#include "nervboost/kv_text.hpp"
#include "nervboost/optim.hpp"

namespace nervboost {
namespace {

std::string embedding_name(size_t index) { return "y" + std::to_string(index + 1); }

std::vector<uint32_t> shape_of(const torch::Tensor& t) {
  std::vector<uint32_t> shape;
  for (auto d : t.sizes()) shape.push_back(static_cast<uint32_t>(d));
  return shape;
}

std::vector<int32_t> to_vector(const torch::Tensor& symbols) {
  const auto flat = symbols.contiguous().to(torch::kInt32);
  const auto* p = flat.data_ptr<int32_t>();
  return std::vector<int32_t>(p, p + flat.numel());
}

torch::Tensor dequantize_record(const QuantizedTensorRecord& r) {
  auto symbols = torch::from_blob(const_cast<int32_t*>(r.symbols.data()),
                                  {static_cast<int64_t>(r.symbols.size())}, torch::kInt32);
  std::vector<int64_t> shape(r.shape.begin(), r.shape.end());
  return dequantize(symbols, r.scale, r.offset).reshape(shape);
}

std::string hash_line(const std::string& body) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "cfg_hash=%016" PRIx64 "\n", fnv1a64(body));
  return buf;
}

DecoderModel clone_decoder(const DecoderModel& src) {
  DecoderModel copy(src->config());
  torch::NoGradGuard no_grad;
  const auto from = src->named_parameters();
  for (auto& p : copy->named_parameters()) p.value().copy_(from[p.key()]);
  return copy;
}

struct Transmitted {
  std::string name;
  torch::Tensor value;
};

}  // namespace

torch::Tensor CompressedVideo::decode(int64_t index) {
  torch::NoGradGuard no_grad;
  const double t_norm = normalize_frame_index(static_cast<int>(index + 1), static_cast<int>(frames));
  torch::Tensor embedding;
  if (decoder->config().hybrid()) embedding = embeddings.at(static_cast<size_t>(index));
  auto [input, z] = decoder_inputs(decoder, t_norm, embedding);
  return decode_frame(input, z, decoder, OutputMode::Evaluation);
}

std::vector<QuantizedTensorRecord> quantized_records(DecoderModel& decoder,
                                                     const std::vector<torch::Tensor>& embeddings,
                                                     const std::vector<TensorQuantizer>& quantizers) {
  std::vector<Transmitted> tensors;
  for (auto& p : decoder->named_parameters()) tensors.push_back({p.key(), p.value()});
  for (size_t i = 0; i < embeddings.size(); ++i) tensors.push_back({embedding_name(i), embeddings[i]});
  if (tensors.size() != quantizers.size()) {
    throw ConfigError("quantizer count does not match the transmitted tensors");
  }
  torch::NoGradGuard no_grad;
  std::vector<QuantizedTensorRecord> records;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto& q = quantizers[i];
    const auto& x = tensors[i].value;
    const float scale = q.scale_f32();
    const float offset = q.offset_f32();
    const auto m = fit_entropy_model(x.to(torch::kFloat64), torch::tensor(static_cast<double>(scale), torch::kFloat64),
                                     torch::tensor(static_cast<double>(offset), torch::kFloat64));
    records.push_back(make_record(tensors[i].name, shape_of(x), to_vector(quantize(x, scale, offset)),
                                  scale, offset, static_cast<float>(m.mu.item<double>()),
                                  static_cast<float>(m.sigma.item<double>())));
  }
  return records;
}

std::vector<uint8_t> serialize_compressed(const DecoderConfig& cfg, int64_t frames, int64_t height,
                                          int64_t width,
                                          const std::vector<QuantizedTensorRecord>& records,
                                          const EntropyCoder& coder) {
  KeyValues extra;
  extra.set("frames", frames);
  extra.set("height", height);
  extra.set("width", width);
  std::string text = cfg.to_text() + extra.to_text();
  text += hash_line(text);

  std::vector<int32_t> bytes(text.begin(), text.end());
  for (auto& b : bytes) b = static_cast<uint8_t>(b);
  const double mean = std::accumulate(bytes.begin(), bytes.end(), 0.0) / static_cast<double>(bytes.size());
  double var = 0.0;
  for (auto b : bytes) var += (b - mean) * (b - mean);
  const double sd = std::max(std::sqrt(var / static_cast<double>(bytes.size())), 1.0);

  std::vector<QuantizedTensorRecord> all;
  all.push_back(make_record(kConfigRecordName, {static_cast<uint32_t>(bytes.size())}, bytes, 1.0f,
                            0.0f, static_cast<float>(mean), static_cast<float>(sd)));
  all.insert(all.end(), records.begin(), records.end());
  return encode_bitstream(all, coder);
}

CompressedVideo deserialize_compressed(std::span<const uint8_t> bytes, const EntropyCoder& coder) {
  const auto records = decode_bitstream(bytes, coder);
  if (records.empty() || records.front().name != kConfigRecordName) {
    throw DecodeError(DecodeErrorKind::CorruptHeader, "first record must hold the model config");
  }
  std::string text;
  for (int32_t s : records.front().symbols) text.push_back(static_cast<char>(s));
  const auto cut = text.rfind("cfg_hash=");
  if (cut == std::string::npos) {
    throw DecodeError(DecodeErrorKind::CorruptHeader, "model config carries no hash");
  }
  const std::string body = text.substr(0, cut);
  if (hash_line(body) != text.substr(cut)) {
    throw DecodeError(DecodeErrorKind::ConfigHashMismatch, "model config does not match its hash");
  }

  DecoderConfig cfg;
  KeyValues kv;
  try {
    cfg = DecoderConfig::from_text(body);
    kv = KeyValues::parse(body);
  } catch (const ConfigError& e) {
    throw DecodeError(DecodeErrorKind::CorruptHeader, std::string("model config: ") + e.what());
  }
  CompressedVideo out;
  out.frames = kv.get_int("frames");
  out.height = kv.get_int("height");
  out.width = kv.get_int("width");
  out.decoder = DecoderModel(cfg);

  std::map<std::string, const QuantizedTensorRecord*> by_name;
  for (size_t i = 1; i < records.size(); ++i) by_name[records[i].name] = &records[i];
  const auto find = [&](const std::string& name) -> const QuantizedTensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw DecodeError(DecodeErrorKind::CorruptHeader, "bitstream has no tensor '" + name + "'");
    }
    return *it->second;
  };

  torch::NoGradGuard no_grad;
  for (auto& p : out.decoder->named_parameters()) {
    const auto& r = find(p.key());
    if (shape_of(p.value()) != r.shape) {
      throw DecodeError(DecodeErrorKind::CorruptHeader, "tensor '" + p.key() + "' has the wrong shape");
    }
    p.value().copy_(dequantize_record(r));
  }
  if (cfg.hybrid()) {
    for (int64_t t = 0; t < out.frames; ++t) {
      out.embeddings.push_back(dequantize_record(find(embedding_name(static_cast<size_t>(t)))));
    }
  }
  return out;
}

ParamOverrides dequantized_overrides(DecoderModel& decoder,
                                     const std::vector<QuantizedTensorRecord>& records) {
  std::map<std::string, const QuantizedTensorRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  ParamOverrides overrides;
  for (auto& p : decoder->named_parameters()) {
    auto it = by_name.find(p.key());
    if (it == by_name.end()) throw ConfigError("no record for tensor '" + p.key() + "'");
    overrides[p.value().unsafeGetTensorImpl()] = dequantize_record(*it->second);
  }
  return overrides;
}

CompressResult finetune_compress(const FittedModel& fitted, const VideoClip& clip,
                                 const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  CompressResult res;
  const int64_t T = clip.num_frames();
  const int64_t H = clip.height();
  const int64_t W = clip.width();
  auto decoder = clone_decoder(fitted.decoder);
  const bool hybrid = decoder->config().hybrid();

  std::vector<torch::Tensor> embeddings;
  if (hybrid) {
    FrameEncoder encoder = fitted.encoder;
    torch::NoGradGuard no_grad;
    for (int64_t t = 0; t < T; ++t) {
      embeddings.push_back(encode_frame(clip.frame(t), encoder).squeeze(0).clone());
    }
  }
  for (auto& e : embeddings) e.set_requires_grad(true);

  std::vector<Transmitted> tensors;
  for (auto& p : decoder->named_parameters()) tensors.push_back({p.key(), p.value()});
  for (size_t i = 0; i < embeddings.size(); ++i) tensors.push_back({embedding_name(i), embeddings[i]});
  const size_t num_decoder = tensors.size() - embeddings.size();

  std::vector<TensorQuantizer> quantizers;
  std::vector<torch::Tensor> params;
  for (size_t i = 0; i < tensors.size(); ++i) {
    const auto mode = i < num_decoder ? QuantMode::Symmetric : QuantMode::Asymmetric;
    quantizers.emplace_back(tensors[i].name, tensors[i].value, mode, cfg.bit_width);
    res.transmitted_numel += tensors[i].value.numel();
    params.push_back(tensors[i].value);
    for (auto& qp : quantizers.back().parameters()) params.push_back(qp);
  }
  res.rate_target_bpp = rate_target(res.transmitted_numel, cfg.bit_width, T, H, W);
  const double pixels = static_cast<double>(T * H * W);
  const double kappa = cfg.effective_kappa();
  const auto loss_weights = cfg.effective_loss();

  Adan opt(params);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(cfg.seed);
  std::mt19937_64 rng(cfg.seed);
  std::vector<int64_t> order(static_cast<size_t>(T));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.compress_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (size_t s = 0; s < order.size(); ++s) {
      const auto i = order[s];
      const double lr = learning_rate(epoch + static_cast<double>(s) / static_cast<double>(T),
                                      cfg.compress_epochs, cfg.compress_lr, 0.0);
      ParamOverrides overrides;
      std::vector<torch::Tensor> ste(tensors.size());
      auto bits = torch::zeros({}, torch::kFloat32);
      for (size_t k = 0; k < tensors.size(); ++k) {
        const auto& x = tensors[k].value;
        const auto& q = quantizers[k];
        const auto views = mixed_quantize(x, q.scale(), q.offset(), uniform_noise(x, gen));
        bits = bits + estimate_rate_bits(views.noisy, fit_entropy_model(x, q.scale(), q.offset()));
        if (k < num_decoder) overrides[x.unsafeGetTensorImpl()] = views.ste;
        ste[k] = views.ste;
      }
      const ParamView view(&overrides);
      const double t_norm = normalize_frame_index(static_cast<int>(i + 1), static_cast<int>(T));
      torch::Tensor embedding;
      if (hybrid) embedding = ste[num_decoder + static_cast<size_t>(i)];
      auto [input, z] = decoder_inputs(decoder, t_norm, embedding, view);
      const auto out = decode_frame(input, z, decoder, OutputMode::Training, view);
      const auto rate = bits / pixels;
      const auto loss = cem_loss(distortion_loss(clip.frame(i), out, loss_weights), rate,
                                 res.rate_target_bpp, kappa);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("compression loss became " + std::to_string(value) + " at epoch " +
                               std::to_string(epoch + 1));
      }
      opt.zero_grad();
      loss.backward();
      opt.step(lr);
      loss_sum += value;
      res.last_step_rate_bpp = rate.item<double>();
    }
    res.loss_history.push_back(loss_sum / static_cast<double>(T));
  }

  res.records = quantized_records(decoder, embeddings, quantizers);
  double est_bits = 0.0;
  for (const auto& r : res.records) {
    for (int32_t s : r.symbols) est_bits -= std::log2(std::max(symbol_probability(s, r.mu, r.sigma), kProbMin));
  }
  res.estimated_bpp = est_bits / pixels;

  res.bitstream = serialize_compressed(decoder->config(), T, H, W, res.records);
  res.bpp = bpp(8.0 * static_cast<double>(res.bitstream.size()), T, H, W);
  double payload = 0.0;
  for (auto n : payload_sizes(res.bitstream)) payload += static_cast<double>(n);
  res.payload_bpp = bpp(8.0 * payload, T, H, W);

  // Frames from the bitstream versus the in-memory model run on the same symbols.
  auto decoded = deserialize_compressed(res.bitstream);
  const auto overrides = dequantized_overrides(decoder, res.records);
  const ParamView view(&overrides);
  std::vector<torch::Tensor> from_stream;
  std::vector<torch::Tensor> in_memory;
  bool identical = true;
  {
    torch::NoGradGuard no_grad;
    for (int64_t t = 0; t < T; ++t) {
      from_stream.push_back(decoded.decode(t));
      const double t_norm = normalize_frame_index(static_cast<int>(t + 1), static_cast<int>(T));
      torch::Tensor embedding;
      if (hybrid) {
        const auto& r = res.records[num_decoder + static_cast<size_t>(t)];
        embedding = dequantize_record(r);
      }
      auto [input, z] = decoder_inputs(decoder, t_norm, embedding, view);
      in_memory.push_back(decode_frame(input, z, decoder, OutputMode::Evaluation, view));
      identical = identical && torch::equal(from_stream.back(), in_memory.back());
    }
  }
  const auto stream_frames = torch::cat(from_stream);
  res.psnr = psnr(clip.frames, stream_frames);
  {
    torch::NoGradGuard no_grad;
    res.ms_ssim = ms_ssim(clip.frames, stream_frames).item<double>();
  }
  res.in_memory_psnr = psnr(clip.frames, torch::cat(in_memory));
  res.bit_identical = identical;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace nervboost
