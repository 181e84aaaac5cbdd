#include "nervboost/cem_quantization.hpp"

#include <cmath>
#include <numbers>

#include "nervboost/errors.hpp"

namespace nervboost {
namespace {

void require_finite(const torch::Tensor& x, const char* what) {
  if (!torch::isfinite(x).all().item<bool>()) {
    throw std::domain_error(std::string(what) + ": non-finite input");
  }
}

torch::Tensor normal_cdf(const torch::Tensor& x) {
  return 0.5 * torch::erfc(-x * (1.0 / std::numbers::sqrt2));
}

}  // namespace

torch::Tensor quantize(const torch::Tensor& x, double scale, double offset) {
  if (!(scale > kScaleMin)) throw ConfigError("quantizer scale must exceed 1e-9");
  require_finite(x, "quantize");
  torch::NoGradGuard no_grad;
  return torch::round((x.to(torch::kFloat64) - offset) / scale).to(torch::kInt32);
}

torch::Tensor dequantize(const torch::Tensor& symbols, float scale, float offset) {
  return symbols.to(torch::kFloat32) * scale + offset;
}

int64_t quantize_value(double x, double scale, double offset) {
  if (!(scale > kScaleMin)) throw ConfigError("quantizer scale must exceed 1e-9");
  if (!std::isfinite(x)) throw std::domain_error("quantize: non-finite input");
  return static_cast<int64_t>(std::nearbyint((x - offset) / scale));
}

double dequantize_value(int64_t symbol, double scale, double offset) {
  return static_cast<double>(symbol) * scale + offset;
}

std::pair<double, double> initial_quant_params(const torch::Tensor& x, double bits, QuantMode mode) {
  if (!(bits >= 1.0)) throw ConfigError("bit width must be at least 1");
  torch::NoGradGuard no_grad;
  const auto xd = x.detach().to(torch::kFloat64);
  double offset = 0.0;
  if (mode == QuantMode::Asymmetric) {
    offset = 0.5 * (xd.min().item<double>() + xd.max().item<double>());
  }
  const double spread = (xd - offset).abs().max().item<double>();
  const double scale = 2.0 * spread / (std::exp2(bits) - 1.0);
  return {std::max(scale, 1e-6), offset};
}

MixedViews mixed_quantize(const torch::Tensor& x, const torch::Tensor& scale,
                          const torch::Tensor& offset, const torch::Tensor& noise) {
  if (noise.sizes() != x.sizes()) throw ShapeError("mixed_quantize: noise shape mismatch");
  const auto v = (x - offset) / scale;
  MixedViews out;
  out.noisy = v + noise;
  const auto rounded = v + (torch::round(v) - v).detach();
  out.ste = rounded * scale + offset;
  return out;
}

torch::Tensor uniform_noise(const torch::Tensor& like, torch::Generator& gen) {
  return torch::rand(like.sizes(), gen, like.options().requires_grad(false)) - 0.5;
}

torch::Tensor symbol_likelihood(const torch::Tensor& v, const torch::Tensor& mu,
                                const torch::Tensor& sigma) {
  const auto d = torch::abs(v - mu);
  const auto upper = normal_cdf((0.5 - d) / sigma);
  const auto lower = normal_cdf((-0.5 - d) / sigma);
  return (upper - lower).clamp_min(0.0);
}

double symbol_probability(double v, double mu, double sigma) {
  const double d = std::abs(v - mu);
  const auto phi = [](double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); };
  return std::max(phi((0.5 - d) / sigma) - phi((-0.5 - d) / sigma), 0.0);
}

EntropyModel fit_entropy_model(const torch::Tensor& x, const torch::Tensor& scale,
                               const torch::Tensor& offset) {
  if (x.numel() == 0) throw ShapeError("fit_entropy_model: empty tensor");
  const auto mean = x.mean();
  const auto var = (x - mean).pow(2).mean();
  EntropyModel m;
  m.mu = (mean - offset) / scale;
  m.sigma = (var / scale.pow(2)).clamp_min(kSigmaMin * kSigmaMin).sqrt();
  return m;
}

torch::Tensor estimate_rate_bits(const torch::Tensor& v, const EntropyModel& m) {
  return -torch::log2(symbol_likelihood(v, m.mu, m.sigma).clamp_min(kProbMin)).sum();
}

double rate_target(int64_t transmitted_numel, double bit_width, int64_t frames, int64_t height,
                   int64_t width) {
  if (frames <= 0 || height <= 0 || width <= 0) throw ConfigError("rate target needs a video size");
  return bit_width * static_cast<double>(transmitted_numel) /
         (static_cast<double>(frames) * static_cast<double>(height) * static_cast<double>(width));
}

torch::Tensor cem_loss(const torch::Tensor& distortion, const torch::Tensor& rate_bpp,
                       double rate_target_bpp, double kappa) {
  return distortion + kappa * torch::relu(rate_bpp - rate_target_bpp);
}

double default_kappa(Variant variant, bool boosted) {
  if (!boosted) return 0.05;
  return variant == Variant::HnervBoost ? 0.5 : 0.2;
}

TensorQuantizer::TensorQuantizer(std::string name, const torch::Tensor& init, QuantMode mode,
                                 double bits)
    : name_(std::move(name)), mode_(mode) {
  const auto [scale, offset] = initial_quant_params(init, bits, mode);
  const auto opts = init.options().requires_grad(false);
  log_scale_ = torch::full({}, std::log(scale), opts).set_requires_grad(true);
  offset_ = torch::full({}, offset, opts).set_requires_grad(mode == QuantMode::Asymmetric);
}

torch::Tensor TensorQuantizer::scale() const { return log_scale_.exp().clamp_min(kScaleMin); }

std::vector<torch::Tensor> TensorQuantizer::parameters() const {
  if (mode_ == QuantMode::Asymmetric) return {log_scale_, offset_};
  return {log_scale_};
}

float TensorQuantizer::scale_f32() const {
  return static_cast<float>(std::max(std::exp(log_scale_.item<double>()), kScaleMin));
}

float TensorQuantizer::offset_f32() const { return static_cast<float>(offset_.item<double>()); }

}  // namespace nervboost
