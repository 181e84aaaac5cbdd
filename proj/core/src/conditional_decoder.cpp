#include "nervboost/conditional_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nervboost/errors.hpp"
#include "nervboost/frame_encoder.hpp"
#include "nervboost/kv_text.hpp"

namespace nervboost {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::NervBoost:
      return "nerv_boost";
    case Variant::EnervBoost:
      return "enerv_boost";
    case Variant::HnervBoost:
      return "hnerv_boost";
  }
  return "hnerv_boost";
}

std::string_view to_string(Modulation m) {
  switch (m) {
    case Modulation::Tat:
      return "tat";
    case Modulation::AdaIn:
      return "adain";
    case Modulation::None:
      return "none";
  }
  return "tat";
}

std::string_view to_string(BlockKind k) {
  switch (k) {
    case BlockKind::Stem:
      return "stem";
    case BlockKind::Expand:
      return "expand";
    case BlockKind::Upsample:
      return "upsample";
    case BlockKind::ENervUpsample:
      return "enerv_upsample";
    case BlockKind::Refine:
      return "refine";
    case BlockKind::Residual:
      return "residual";
    case BlockKind::Head:
      return "head";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "nerv_boost" || name == "nerv") return Variant::NervBoost;
  if (name == "enerv_boost" || name == "enerv") return Variant::EnervBoost;
  if (name == "hnerv_boost" || name == "hnerv") return Variant::HnervBoost;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected nerv_boost|enerv_boost|hnerv_boost)");
}

Modulation parse_modulation(std::string_view name) {
  if (name == "tat") return Modulation::Tat;
  if (name == "adain") return Modulation::AdaIn;
  if (name == "none") return Modulation::None;
  throw ConfigError("unknown modulation '" + std::string(name) + "' (expected tat|adain|none)");
}

double default_reduction(Variant v) { return v == Variant::HnervBoost ? 1.2 : 2.0; }

double DecoderConfig::effective_reduction() const {
  return reduction > 0.0 ? reduction : default_reduction(variant);
}

int64_t DecoderConfig::output_height() const {
  return static_cast<int64_t>(grid_h) * stride_product(strides);
}

int64_t DecoderConfig::output_width() const {
  return static_cast<int64_t>(grid_w) * stride_product(strides);
}

std::string DecoderConfig::to_text() const {
  KeyValues kv;
  kv.set("variant", std::string(to_string(variant)));
  kv.set("strides", strides);
  kv.set("base_width", base_width);
  kv.set("reduction", reduction);
  kv.set("min_width", min_width);
  kv.set("embed_dim", embed_dim);
  kv.set("grid_h", grid_h);
  kv.set("grid_w", grid_w);
  kv.set("pe_base", pe.base);
  kv.set("pe_bands", pe.bands);
  kv.set("modulation", std::string(to_string(modulation)));
  kv.set("activation", std::string(to_string(activation)));
  kv.set("sine_omega", sine_omega);
  kv.set("stem_hidden", stem_hidden);
  kv.set("target_params", target_params);
  return kv.to_text();
}

DecoderConfig DecoderConfig::from_text(std::string_view text) {
  const auto kv = KeyValues::parse(text);
  DecoderConfig cfg;
  cfg.variant = parse_variant(kv.get_string("variant"));
  cfg.strides = kv.get_int_list("strides");
  cfg.base_width = kv.get_double("base_width");
  cfg.reduction = kv.get_double("reduction", 0.0);
  cfg.min_width = static_cast<int>(kv.get_int("min_width", kMinChannelWidth));
  cfg.embed_dim = static_cast<int>(kv.get_int("embed_dim", 16));
  cfg.grid_h = static_cast<int>(kv.get_int("grid_h"));
  cfg.grid_w = static_cast<int>(kv.get_int("grid_w"));
  cfg.pe.base = kv.get_double("pe_base", 1.25);
  cfg.pe.bands = static_cast<int>(kv.get_int("pe_bands", 80));
  cfg.modulation = parse_modulation(kv.get_string("modulation", "tat"));
  cfg.activation = parse_activation(kv.get_string("activation", "sine"));
  cfg.sine_omega = kv.get_double("sine_omega", 1.0);
  cfg.stem_hidden = static_cast<int>(kv.get_int("stem_hidden", 256));
  cfg.target_params = kv.get_int("target_params", 0);
  return cfg;
}

// ---------------------------------------------------------------------------
// Layout planning

namespace {

int64_t conv_params(int64_t kernel, int64_t in, int64_t out) { return kernel * kernel * in * out + out; }

int64_t tat_layer_params(int64_t channels) {
  const int64_t head = conv_params(1, kTemporalChannels, 32) + conv_params(1, 32, channels);
  return 2 * head;
}

int64_t residual_params(int64_t channels) {
  return 2 * conv_params(3, channels, channels) + 2 * tat_layer_params(channels);
}

int64_t temporal_net_params(const PEConfig& pe) {
  return conv_params(1, pe.width(), 64) + conv_params(1, 64, kTemporalChannels);
}

void validate(const DecoderConfig& cfg) {
  if (cfg.strides.empty()) throw ConfigError("decoder needs at least one stride");
  stride_product(cfg.strides);
  if (cfg.grid_h < 1 || cfg.grid_w < 1) throw ConfigError("decoder input grid must be positive");
  if (cfg.min_width < 1) throw ConfigError("minimum channel width must be positive");
  if (cfg.embed_dim < 1) throw ConfigError("embedding dimension must be positive");
  if (cfg.effective_reduction() < 1.0) throw ConfigError("channel reduction must be >= 1");
  if (cfg.pe.bands < 1 || !(cfg.pe.base > 1.0)) throw ConfigError("invalid positional encoding");
}

}  // namespace

DecoderPlan plan_decoder(const DecoderConfig& cfg) {
  validate(cfg);
  if (!(cfg.base_width >= 1.0)) {
    throw ConfigError("decoder base width must be >= 1 (solve it from a target size first)");
  }
  const double r = cfg.effective_reduction();
  const auto width_at = [&](double real) {
    return std::max<int64_t>(static_cast<int64_t>(std::floor(real + 1e-9)), cfg.min_width);
  };

  DecoderPlan plan;
  const bool modulated = cfg.modulation != Modulation::None;
  auto add_residual = [&](int64_t c, int stage) {
    if (!modulated) return;
    plan.blocks.push_back({BlockKind::Residual, c, c, 3, 1, stage, residual_params(c)});
  };

  const int n = static_cast<int>(cfg.strides.size());
  const int first_refined = std::max(0, n - 3);
  int64_t channels = 0;
  // Real-valued width levels; integer widths are taken per stage from these.
  double level = cfg.base_width;

  if (cfg.hybrid()) {
    channels = width_at(level);
    plan.blocks.push_back({BlockKind::Expand, cfg.embed_dim, channels, 1, 1, 0,
                           conv_params(1, cfg.embed_dim, channels)});
    add_residual(channels, 0);
  } else {
    channels = width_at(level);
    const int64_t stem_out = channels * cfg.grid_h * cfg.grid_w;
    plan.blocks.push_back({BlockKind::Stem, cfg.pe.width(), channels, 1, 1, 0,
                           conv_params(1, cfg.pe.width(), cfg.stem_hidden) +
                               conv_params(1, cfg.stem_hidden, stem_out)});
  }

  for (int i = 0; i < n; ++i) {
    const int64_t s = cfg.strides[static_cast<size_t>(i)];
    const int stage = i + 1;
    if (cfg.variant == Variant::EnervBoost && i == 0) {
      level *= 3.0;  // Sinusoidal E-NeRV(C1, 1/3, 3, s1)
      const int64_t out = width_at(level);
      const int64_t bottleneck = std::max<int64_t>(channels / 4, 1);
      plan.blocks.push_back({BlockKind::ENervUpsample, channels, out, 3, s, stage,
                             conv_params(3, channels, bottleneck * s * s) +
                                 conv_params(3, bottleneck, out)});
      channels = out;
    } else {
      if (cfg.hybrid() || i > 0) level /= r;
      const int64_t out = width_at(level);
      plan.blocks.push_back(
          {BlockKind::Upsample, channels, out, 3, s, stage, conv_params(3, channels, out * s * s)});
      channels = out;
    }
    add_residual(channels, stage);
    if (i >= first_refined) {
      plan.blocks.push_back(
          {BlockKind::Refine, channels, channels, 3, 1, stage, conv_params(3, channels, channels)});
      add_residual(channels, stage);
    }
  }
  plan.blocks.push_back({BlockKind::Head, channels, 3, 1, 1, 0, conv_params(1, channels, 3)});

  plan.temporal_params = modulated ? temporal_net_params(cfg.pe) : 0;
  plan.total_params = plan.temporal_params;
  for (const auto& b : plan.blocks) plan.total_params += b.params;
  return plan;
}

DecoderConfig solve_base_width(DecoderConfig cfg) {
  validate(cfg);
  if (cfg.target_params <= 0) throw ConfigError("target parameter count must be positive");
  const double target = static_cast<double>(cfg.target_params);

  constexpr double kStep = 1.0 / 32.0;
  double best_width = -1.0;
  double best_error = std::numeric_limits<double>::infinity();
  for (double width = cfg.min_width; width <= 8192.0; width += kStep) {
    DecoderConfig probe = cfg;
    probe.base_width = width;
    const double total = static_cast<double>(plan_decoder(probe).total_params);
    const double err = std::abs(total - target) / target;
    if (err < best_error) {
      best_error = err;
      best_width = width;
    }
    if (total > 1.5 * target) break;
  }
  if (best_width < 0.0 || best_error > kBudgetTolerance) {
    throw ConfigError("no channel width reaches " + std::to_string(cfg.target_params) +
                      " parameters within 3% for variant " + std::string(to_string(cfg.variant)) +
                      " (closest relative error " + std::to_string(best_error) + ")");
  }
  cfg.base_width = best_width;
  return cfg;
}

// ---------------------------------------------------------------------------
// Blocks

torch::Tensor tat_affine(const torch::Tensor& f, const torch::Tensor& gamma,
                         const torch::Tensor& beta) {
  if (f.dim() != 4) throw ShapeError("tat_affine expects [N, C, H, W] features");
  const int64_t c = f.size(1);
  if (gamma.numel() % c != 0 || beta.numel() % c != 0 || gamma.numel() / c > f.size(0) ||
      beta.numel() / c > f.size(0) || gamma.size(gamma.dim() > 1 ? 1 : 0) != c ||
      beta.size(beta.dim() > 1 ? 1 : 0) != c) {
    throw ShapeError("tat_affine channel mismatch: features have " + std::to_string(c) +
                     " channels, gamma " + c10::str(gamma.sizes()) + ", beta " +
                     c10::str(beta.sizes()));
  }
  const auto g = gamma.dim() == 4 ? gamma : gamma.reshape({-1, c, 1, 1});
  const auto b = beta.dim() == 4 ? beta : beta.reshape({-1, c, 1, 1});
  return g * f + b;
}

torch::Tensor adain_modulate(const torch::Tensor& f, const torch::Tensor& mean_t,
                             const torch::Tensor& std_t) {
  if (f.dim() != 4) throw ShapeError("adain_modulate expects [N, C, H, W] features");
  const int64_t c = f.size(1);
  if (mean_t.numel() % c != 0 || std_t.numel() % c != 0) {
    throw ShapeError("adain_modulate channel mismatch");
  }
  const auto mu = f.mean({2, 3}, /*keepdim=*/true);
  const auto sigma = f.std({2, 3}, /*unbiased=*/false, /*keepdim=*/true).clamp_min(kAdaInEpsilon);
  const auto m = mean_t.reshape({-1, c, 1, 1});
  const auto s = std_t.reshape({-1, c, 1, 1});
  return s * (f - mu) / sigma + m;
}

torch::Tensor pixel_shuffle(const torch::Tensor& f, int64_t s) {
  if (s < 1) throw ShapeError("pixel shuffle factor must be >= 1");
  if (f.dim() != 4) throw ShapeError("pixel_shuffle expects [N, C, H, W]");
  if (f.size(1) % (s * s) != 0) {
    throw ShapeError("pixel_shuffle: " + std::to_string(f.size(1)) +
                     " channels not divisible by s^2 = " + std::to_string(s * s));
  }
  if (s == 1) return f;
  return torch::pixel_shuffle(f, s);
}

TatLayerImpl::TatLayerImpl(int64_t channels, int64_t z_channels, int64_t hidden)
    : channels_(channels) {
  gamma1 = register_module("g1", Conv(ConvSpec{z_channels, hidden, 1}));
  gamma2 = register_module("g2", Conv(ConvSpec{hidden, channels, 1}));
  beta1 = register_module("b1", Conv(ConvSpec{z_channels, hidden, 1}));
  beta2 = register_module("b2", Conv(ConvSpec{hidden, channels, 1}));
  gamma2->zero_();
  beta2->zero_();
}

std::pair<torch::Tensor, torch::Tensor> TatLayerImpl::forward(const torch::Tensor& z,
                                                              const ParamView& view) {
  if (!z.defined() || z.dim() != 4 || z.size(1) != gamma1->spec().in_channels) {
    throw ShapeError("TAT layer expects z of shape [N, 32, 1, 1]");
  }
  auto gamma = gamma2->forward(torch::relu(gamma1->forward(z, view)), view) + 1.0;
  auto beta = beta2->forward(torch::relu(beta1->forward(z, view)), view);
  return {gamma, beta};
}

ResidualModulationBlock::ResidualModulationBlock(int64_t channels, Modulation modulation)
    : modulation_(modulation) {
  if (modulation == Modulation::None) throw ConfigError("residual block needs a modulation");
  mod1 = register_module("t1", TatLayer(channels));
  conv1 = register_module("c1", Conv(ConvSpec{channels, channels, 3}));
  mod2 = register_module("t2", TatLayer(channels));
  conv2 = register_module("c2", Conv(ConvSpec{channels, channels, 3}));
  conv2->zero_();
}

torch::Tensor ResidualModulationBlock::modulate(const torch::Tensor& f, TatLayer& layer,
                                                const torch::Tensor& z, const ParamView& view) {
  auto [a, b] = layer->forward(z, view);
  if (modulation_ == Modulation::Tat) return tat_affine(f, a, b);
  return adain_modulate(f, b, a);  // beta head -> mean, gamma head (+1) -> std
}

torch::Tensor ResidualModulationBlock::forward(const torch::Tensor& f, const torch::Tensor& z,
                                               const ParamView& view) {
  auto h = conv1->forward(modulate(f, mod1, z, view), view);
  h = torch::gelu(h);
  h = conv2->forward(modulate(h, mod2, z, view), view);
  return f + h;
}

SNervBlock::SNervBlock(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride,
                       Activation act, double omega)
    : stride_(stride), act_(act), omega_(omega) {
  if (out_channels < 1) throw ConfigError("SNeRV block reduces width below one channel");
  conv = register_module("c", Conv(ConvSpec{in_channels, out_channels * stride * stride, kernel}));
}

torch::Tensor SNervBlock::forward(const torch::Tensor& f, const torch::Tensor&,
                                  const ParamView& view) {
  return activate(nervboost::pixel_shuffle(conv->forward(f, view), stride_), act_, omega_);
}

SinusoidalENervBlock::SinusoidalENervBlock(int64_t in_channels, int64_t out_channels,
                                           int64_t kernel, int64_t stride, Activation act,
                                           double omega)
    : stride_(stride), act_(act), omega_(omega) {
  const int64_t bottleneck = std::max<int64_t>(in_channels / 4, 1);
  if (out_channels < 1) throw ConfigError("E-NeRV block reduces width below one channel");
  expand = register_module("c1", Conv(ConvSpec{in_channels, bottleneck * stride * stride, kernel}));
  mix = register_module("c2", Conv(ConvSpec{bottleneck, out_channels, 3}));
}

torch::Tensor SinusoidalENervBlock::forward(const torch::Tensor& f, const torch::Tensor&,
                                            const ParamView& view) {
  auto h = nervboost::pixel_shuffle(expand->forward(f, view), stride_);
  return activate(mix->forward(h, view), act_, omega_);
}

IndexStem::IndexStem(int64_t pe_width, int64_t hidden, int64_t channels, int64_t grid_h,
                     int64_t grid_w, Activation act, double omega)
    : channels_(channels), grid_h_(grid_h), grid_w_(grid_w), act_(act), omega_(omega) {
  fc1 = register_module("f1", Conv(ConvSpec{pe_width, hidden, 1}));
  fc2 = register_module("f2", Conv(ConvSpec{hidden, channels * grid_h * grid_w, 1}));
}

torch::Tensor IndexStem::forward(const torch::Tensor& pe, const torch::Tensor&,
                                 const ParamView& view) {
  auto x = pe.dim() == 2 ? pe.reshape({pe.size(0), pe.size(1), 1, 1}) : pe;
  x = activate(fc1->forward(x, view), act_, omega_);
  x = activate(fc2->forward(x, view), act_, omega_);
  return x.reshape({x.size(0), channels_, grid_h_, grid_w_});
}

// ---------------------------------------------------------------------------
// Model

DecoderModelImpl::DecoderModelImpl(DecoderConfig cfg) : cfg_(std::move(cfg)) {
  plan_ = plan_decoder(cfg_);
  if (cfg_.modulation != Modulation::None) {
    temporal_ = register_module(
        "z", TemporalEmbedder(cfg_.pe.width(), 64, kTemporalChannels, cfg_.sine_omega));
  }
  int index = 0;
  for (const auto& b : plan_.blocks) {
    std::shared_ptr<DecoderBlock> block;
    switch (b.kind) {
      case BlockKind::Stem:
        block = std::make_shared<IndexStem>(cfg_.pe.width(), cfg_.stem_hidden, b.out_channels,
                                            cfg_.grid_h, cfg_.grid_w, cfg_.activation,
                                            cfg_.sine_omega);
        break;
      case BlockKind::Expand:
      case BlockKind::Upsample:
      case BlockKind::Refine:
        block = std::make_shared<SNervBlock>(b.in_channels, b.out_channels, b.kernel, b.stride,
                                             cfg_.activation, cfg_.sine_omega);
        break;
      case BlockKind::ENervUpsample:
        block = std::make_shared<SinusoidalENervBlock>(b.in_channels, b.out_channels, b.kernel,
                                                       b.stride, cfg_.activation, cfg_.sine_omega);
        break;
      case BlockKind::Residual:
        block = std::make_shared<ResidualModulationBlock>(b.out_channels, cfg_.modulation);
        break;
      case BlockKind::Head:
        head_ = register_module("head", Conv(ConvSpec{b.in_channels, 3, 1}));
        continue;
    }
    blocks_.push_back(register_module(b.kind == BlockKind::Stem ? std::string("stem")
                                                                : "b" + std::to_string(index++),
                                      block));
  }
}

torch::Tensor DecoderModelImpl::forward(const torch::Tensor& input, const torch::Tensor& z,
                                        const ParamView& view) {
  if (input.dim() != 4) throw ShapeError("decoder input must be 4-D, got " + c10::str(input.sizes()));
  if (cfg_.hybrid()) {
    if (input.size(1) != cfg_.embed_dim || input.size(2) != cfg_.grid_h ||
        input.size(3) != cfg_.grid_w) {
      throw ShapeError("decoder expects embedding [N, " + std::to_string(cfg_.embed_dim) + ", " +
                       std::to_string(cfg_.grid_h) + ", " + std::to_string(cfg_.grid_w) +
                       "], got " + c10::str(input.sizes()));
    }
  } else if (input.size(1) != cfg_.pe.width()) {
    throw ShapeError("index-based decoder expects a " + std::to_string(cfg_.pe.width()) +
                     "-channel encoding, got " + c10::str(input.sizes()));
  }
  if (has_temporal_net() && (!z.defined() || z.size(0) != input.size(0))) {
    throw ShapeError("temporal embedding batch does not match the decoder input");
  }
  auto f = input;
  for (auto& block : blocks_) f = block->forward(f, z, view);
  return head_->forward(f, view);
}

torch::Tensor DecoderModelImpl::temporal_embedding(const torch::Tensor& pe, const ParamView& view) {
  if (!has_temporal_net()) return {};
  return temporal_->forward(pe, view);
}

torch::Tensor DecoderModelImpl::encode_time(double t_norm) const {
  return positional_encode_tensor(t_norm, cfg_.pe, dtype());
}

torch::Dtype DecoderModelImpl::dtype() const { return head_->weight.scalar_type(); }

int64_t DecoderModelImpl::numel() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

DecoderModel build_decoder(DecoderConfig cfg) {
  if (cfg.base_width <= 0.0) cfg = solve_base_width(std::move(cfg));
  return DecoderModel(std::move(cfg));
}

torch::Tensor decode_frame(const torch::Tensor& input, const torch::Tensor& z, DecoderModel& model,
                           OutputMode mode, const ParamView& view) {
  auto out = model->forward(input, z, view);
  return mode == OutputMode::Evaluation ? out.clamp(0.0, 1.0) : out;
}

std::pair<torch::Tensor, torch::Tensor> decoder_inputs(DecoderModel& model, double t_norm,
                                                       const torch::Tensor& embedding,
                                                       const ParamView& view) {
  auto pe = model->encode_time(t_norm);
  auto z = model->temporal_embedding(pe, view);
  if (model->config().hybrid()) {
    if (!embedding.defined()) throw ShapeError("hybrid decoder needs a content embedding");
    return {embedding.dim() == 3 ? embedding.unsqueeze(0) : embedding, z};
  }
  return {pe, z};
}

BalanceReport parameter_balance_report(DecoderModel& model) {
  BalanceReport report;
  const auto& plan = model->plan();
  const auto& blocks = model->blocks();

  auto add = [&](const std::string& name, int64_t n, bool stage) {
    for (auto& g : report.groups) {
      if (g.name == name) {
        g.params += n;
        return;
      }
    }
    report.groups.push_back({name, n, stage});
  };

  if (model->has_temporal_net()) {
    int64_t n = 0;
    for (const auto& p : model->temporal_net()->parameters()) n += p.numel();
    add("temporal", n, false);
  }
  size_t block_index = 0;
  for (const auto& b : plan.blocks) {
    int64_t n = 0;
    if (b.kind == BlockKind::Head) {
      n = model->head()->numel();
    } else {
      for (const auto& p : blocks[block_index++]->parameters()) n += p.numel();
    }
    switch (b.kind) {
      case BlockKind::Stem:
        add("stem", n, false);
        break;
      case BlockKind::Expand:
        add("expand", n, false);
        break;
      case BlockKind::Residual:
        add("modulation", n, false);
        break;
      case BlockKind::Head:
        add("head", n, false);
        break;
      default:
        add("stage" + std::to_string(b.stage), n, true);
        break;
    }
  }

  std::vector<double> stage_params;
  for (const auto& g : report.groups) {
    report.total += g.params;
    if (g.upsampling_stage) stage_params.push_back(static_cast<double>(g.params));
  }
  if (!stage_params.empty()) {
    double sum = 0.0;
    for (double v : stage_params) sum += v;
    const double mean_share = 1.0 / static_cast<double>(stage_params.size());
    double var = 0.0;
    for (double v : stage_params) {
      const double d = v / sum - mean_share;
      var += d * d;
    }
    report.stage_share_std = std::sqrt(var / static_cast<double>(stage_params.size()));
    report.stage_cv = report.stage_share_std / mean_share;
  }
  return report;
}

}  // namespace nervboost
