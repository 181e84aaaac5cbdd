#include "nervboost/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "nervboost/cem_quantization.hpp"
#include "nervboost/errors.hpp"
#include "nervboost/optim.hpp"

namespace nervboost {

torch::Tensor make_mask(const MaskSpec& spec, int64_t height, int64_t width, uint64_t seed) {
  auto mask = torch::ones({height, width});
  if (spec.kind == MaskKind::Central) {
    const int64_t mh = height / 4;
    const int64_t mw = width / 4;
    const int64_t top = (height - mh) / 2;
    const int64_t left = (width - mw) / 2;
    mask.slice(0, top, top + mh).slice(1, left, left + mw).zero_();
    return mask;
  }
  const int64_t side = spec.square_size;
  if (side < 1 || side > height || side > width) {
    throw ConfigError("mask squares of side " + std::to_string(side) + " do not fit a " +
                      std::to_string(height) + "x" + std::to_string(width) + " frame");
  }
  if (spec.squares < 0) throw ConfigError("mask square count must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> row(0, height - 1);
  std::uniform_int_distribution<int64_t> col(0, width - 1);
  for (int i = 0; i < spec.squares; ++i) {
    int64_t top = 0;
    int64_t left = 0;
    do {
      top = row(rng);
      left = col(rng);
    } while (top + side > height || left + side > width);
    mask.slice(0, top, top + side).slice(1, left, left + side).zero_();
  }
  return mask;
}

// ---------------------------------------------------------------------------
// RunConfig

double RunConfig::effective_lr() const {
  if (lr > 0.0) return lr;
  return variant == Variant::EnervBoost ? 1.5e-3 : 3e-3;
}

double RunConfig::effective_kappa() const {
  return kappa >= 0.0 ? kappa : default_kappa(variant, boosted);
}

LossWeights RunConfig::effective_loss() const {
  if (!boosted) return LossWeights::l2_only();
  return loss;
}

DecoderConfig RunConfig::decoder_config(int64_t height, int64_t width) const {
  EncoderConfig enc;
  enc.strides = strides;
  const auto shape = embedding_shape(enc, height, width);
  DecoderConfig d;
  d.variant = variant;
  d.strides = strides;
  d.embed_dim = static_cast<int>(shape[0]);
  d.grid_h = static_cast<int>(shape[1]);
  d.grid_w = static_cast<int>(shape[2]);
  d.pe = pe;
  d.modulation = boosted ? Modulation::Tat : Modulation::None;
  d.activation = boosted ? Activation::Sine : Activation::Gelu;
  d.target_params = target_params;
  return d;
}

KeyValues RunConfig::to_kv() const {
  KeyValues kv;
  kv.set("task", task);
  kv.set("variant", std::string(to_string(variant)));
  kv.set("boosted", int64_t{boosted ? 1 : 0});
  kv.set("target_params", target_params);
  kv.set("strides", strides);
  kv.set("epochs", epochs);
  kv.set("lr", effective_lr());
  kv.set("warmup", warmup);
  kv.set("pe_base", pe.base);
  kv.set("pe_bands", pe.bands);
  kv.set("lambda", loss.lambda);
  kv.set("alpha", loss.alpha);
  kv.set("loss_frequency", int64_t{loss.frequency});
  kv.set("loss_l1", int64_t{loss.l1});
  kv.set("loss_ms_ssim", int64_t{loss.ms_ssim});
  kv.set("loss_l2", int64_t{loss.l2});
  kv.set("frequency_mode",
         std::string(loss.frequency_mode == FrequencyMode::Amplitude ? "amplitude" : "complex"));
  kv.set("kappa", effective_kappa());
  kv.set("bit_width", bit_width);
  kv.set("compress_epochs", compress_epochs);
  kv.set("compress_lr", compress_lr);
  kv.set("mask", std::string(mask.kind == MaskKind::Central ? "central" : "disperse"));
  kv.set("mask_squares", mask.squares);
  kv.set("mask_size", mask.square_size);
  kv.set("seed", static_cast<int64_t>(seed));
  kv.set("eval_every", eval_every);
  kv.set("video", video);
  return kv;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  static const std::set<std::string> known{
      "task",         "variant",      "boosted",   "target_params",  "strides",
      "epochs",       "lr",           "warmup",    "pe_base",        "pe_bands",
      "lambda",       "alpha",        "loss_frequency", "loss_l1",   "loss_ms_ssim",
      "loss_l2",      "frequency_mode", "kappa",   "bit_width",      "compress_epochs",
      "compress_lr",  "mask",         "mask_squares", "mask_size",   "seed",
      "eval_every",   "video"};
  for (const auto& [k, v] : kv.entries()) {
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig c;
  c.task = kv.get_string("task", c.task);
  c.variant = parse_variant(kv.get_string("variant", std::string(to_string(c.variant))));
  c.boosted = kv.get_int("boosted", 1) != 0;
  c.target_params = kv.get_int("target_params", c.target_params);
  if (kv.contains("strides")) c.strides = kv.get_int_list("strides");
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.lr = kv.get_double("lr", c.lr);
  c.warmup = kv.get_double("warmup", c.warmup);
  c.pe.base = kv.get_double("pe_base", c.task == "interpolate" ? 1.05 : c.pe.base);
  c.pe.bands = static_cast<int>(kv.get_int("pe_bands", c.pe.bands));
  c.loss.lambda = kv.get_double("lambda", c.loss.lambda);
  c.loss.alpha = kv.get_double("alpha", c.loss.alpha);
  c.loss.frequency = kv.get_int("loss_frequency", 1) != 0;
  c.loss.l1 = kv.get_int("loss_l1", 1) != 0;
  c.loss.ms_ssim = kv.get_int("loss_ms_ssim", 1) != 0;
  c.loss.l2 = kv.get_int("loss_l2", 0) != 0;
  const auto fmode = kv.get_string("frequency_mode", "complex");
  if (fmode != "complex" && fmode != "amplitude") {
    throw ConfigError("frequency_mode must be complex or amplitude");
  }
  c.loss.frequency_mode = fmode == "amplitude" ? FrequencyMode::Amplitude : FrequencyMode::ComplexDifference;
  c.kappa = kv.get_double("kappa", c.kappa);
  c.bit_width = kv.get_double("bit_width", c.bit_width);
  c.compress_epochs = static_cast<int>(kv.get_int("compress_epochs", c.compress_epochs));
  c.compress_lr = kv.get_double("compress_lr", c.compress_lr);
  const auto mk = kv.get_string("mask", "disperse");
  if (mk != "disperse" && mk != "central") throw ConfigError("mask must be disperse or central");
  c.mask.kind = mk == "central" ? MaskKind::Central : MaskKind::Disperse;
  c.mask.squares = static_cast<int>(kv.get_int("mask_squares", c.mask.squares));
  c.mask.square_size = static_cast<int>(kv.get_int("mask_size", c.mask.square_size));
  c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(c.seed)));
  c.eval_every = static_cast<int>(kv.get_int("eval_every", c.eval_every));
  c.video = kv.get_string("video", c.video);
  if (c.epochs < 1) throw ConfigError("epochs must be positive");
  if (c.compress_epochs < 0) throw ConfigError("compress_epochs must be non-negative");
  return c;
}

// ---------------------------------------------------------------------------
// Training

FittedModel init_model(const RunConfig& cfg, int64_t frames, int64_t height, int64_t width) {
  torch::manual_seed(cfg.seed);
  FittedModel m;
  m.frames = frames;
  m.height = height;
  m.width = width;
  m.decoder = build_decoder(cfg.decoder_config(height, width));
  if (m.decoder->config().hybrid()) {
    EncoderConfig enc;
    enc.strides = cfg.strides;
    m.encoder = FrameEncoder(enc);
  }
  return m;
}

torch::Tensor model_input(FittedModel& m, const torch::Tensor& source_frame, int64_t index,
                          const ParamView& view) {
  const double t_norm = normalize_frame_index(static_cast<int>(index + 1), static_cast<int>(m.frames));
  torch::Tensor embedding;
  if (m.decoder->config().hybrid()) embedding = encode_frame(source_frame, m.encoder);
  return decoder_inputs(m.decoder, t_norm, embedding, view).first;
}

torch::Tensor reconstruct(FittedModel& m, const torch::Tensor& source_frame, int64_t index) {
  torch::NoGradGuard no_grad;
  const double t_norm = normalize_frame_index(static_cast<int>(index + 1), static_cast<int>(m.frames));
  torch::Tensor embedding;
  if (m.decoder->config().hybrid()) embedding = encode_frame(source_frame, m.encoder);
  auto [input, z] = decoder_inputs(m.decoder, t_norm, embedding);
  return decode_frame(input, z, m.decoder, OutputMode::Evaluation);
}

namespace {

std::vector<int64_t> all_indices(int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

torch::Tensor visible_frame(const VideoClip& clip, int64_t index, const torch::Tensor& mask) {
  auto f = clip.frame(index);
  return mask.defined() ? f * mask : f;
}

}  // namespace

Quality evaluate(FittedModel& m, const VideoClip& clip, const std::vector<int64_t>& indices,
                 const torch::Tensor& mask) {
  const auto idx = indices.empty() ? all_indices(clip.num_frames()) : indices;
  std::vector<torch::Tensor> outs;
  std::vector<torch::Tensor> refs;
  for (auto i : idx) {
    outs.push_back(reconstruct(m, visible_frame(clip, i, mask), i));
    refs.push_back(clip.frame(i));
  }
  const auto x = torch::cat(refs);
  const auto y = torch::cat(outs);
  torch::NoGradGuard no_grad;
  return {psnr(x, y), ms_ssim(x, y).item<double>()};
}

TrainResult train_model(const VideoClip& clip, const RunConfig& cfg, const TrainSetup& setup) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.model = init_model(cfg, clip.num_frames(), clip.height(), clip.width());
  auto& m = result.model;
  const auto loss_weights = cfg.effective_loss();
  loss_weights.validate();

  std::vector<torch::Tensor> params = m.decoder->parameters();
  if (!m.encoder.is_empty()) {
    for (auto& p : m.encoder->parameters()) params.push_back(p);
  }
  Adan opt(params);

  auto order = setup.train_indices.empty() ? all_indices(clip.num_frames()) : setup.train_indices;
  std::mt19937_64 rng(cfg.seed);
  const auto steps = static_cast<double>(order.size());
  const double lr_max = cfg.effective_lr();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch + 1;
    double loss_sum = 0.0;
    for (size_t s = 0; s < order.size(); ++s) {
      const auto i = order[s];
      const double lr = learning_rate(epoch + static_cast<double>(s) / steps, cfg.epochs, lr_max,
                                      cfg.warmup);
      const auto target = clip.frame(i);
      const double t_norm =
          normalize_frame_index(static_cast<int>(i + 1), static_cast<int>(clip.num_frames()));
      torch::Tensor embedding;
      if (m.decoder->config().hybrid()) {
        embedding = encode_frame(visible_frame(clip, i, setup.mask), m.encoder);
      }
      auto [input, z] = decoder_inputs(m.decoder, t_norm, embedding);
      const auto out = decode_frame(input, z, m.decoder, OutputMode::Training);
      const auto loss = setup.mask.defined()
                            ? masked_distortion_loss(target, out, setup.mask, loss_weights)
                            : distortion_loss(target, out, loss_weights);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("loss became " + std::to_string(value) + " at epoch " +
                               std::to_string(epoch + 1) + ", frame " + std::to_string(i + 1) +
                               ", lr " + std::to_string(lr));
      }
      opt.zero_grad();
      loss.backward();
      opt.step(lr);
      loss_sum += value;
      em.lr = lr;
    }
    em.loss = loss_sum / steps;
    const bool last = epoch + 1 == cfg.epochs;
    if (last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)) {
      const auto q = evaluate(m, clip, setup.train_indices, setup.mask);
      em.psnr = q.psnr;
      em.ms_ssim = q.ms_ssim;
    }
    result.history.push_back(em);
    if (setup.on_epoch) setup.on_epoch(em);
  }
  result.psnr = result.history.back().psnr;
  result.ms_ssim = result.history.back().ms_ssim;
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

InpaintResult run_inpainting(const VideoClip& clip, const RunConfig& cfg) {
  InpaintResult r;
  r.mask = make_mask(cfg.mask, clip.height(), clip.width(), cfg.seed);
  TrainSetup setup;
  setup.mask = r.mask;
  r.train = train_model(clip, cfg, setup);

  std::vector<torch::Tensor> outs;
  for (int64_t i = 0; i < clip.num_frames(); ++i) {
    outs.push_back(reconstruct(r.train.model, visible_frame(clip, i, r.mask), i));
  }
  const auto recon = torch::cat(outs);
  r.full_psnr = psnr(clip.frames, recon);
  r.masked_psnr = region_psnr(clip.frames, recon, (1.0 - r.mask).expand({1, 1, -1, -1}));
  return r;
}

InterpolationSplit interpolation_split(int64_t frames) {
  InterpolationSplit s;
  for (int64_t i = 0; i < frames; ++i) (i % 2 == 0 ? s.train : s.test).push_back(i);
  return s;
}

InterpolationResult run_interpolation(const VideoClip& clip, const RunConfig& cfg) {
  if (clip.num_frames() < 2) throw ConfigError("interpolation needs at least two frames");
  InterpolationResult r;
  r.split = interpolation_split(clip.num_frames());
  TrainSetup setup;
  setup.train_indices = r.split.train;
  r.train = train_model(clip, cfg, setup);
  r.train_psnr = r.train.psnr;
  const auto q = evaluate(r.train.model, clip, r.split.test);
  r.test_psnr = q.psnr;
  r.test_ms_ssim = q.ms_ssim;
  return r;
}

}  // namespace nervboost
