#include "nervboost/objectives.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "nervboost/errors.hpp"

namespace nervboost {
namespace {

constexpr std::array<double, kMsSsimLevels> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void require_same_shape(const torch::Tensor& x, const torch::Tensor& x_hat, const char* what) {
  if (x.sizes() != x_hat.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + c10::str(x.sizes()) + " vs " +
                     c10::str(x_hat.sizes()));
  }
}

torch::Tensor gaussian_window(int64_t channels, const torch::TensorOptions& opts) {
  std::vector<double> g(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double c = i - kSsimWindow / 2;
    g[static_cast<size_t>(i)] = std::exp(-(c * c) / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  auto w = torch::tensor(g, torch::kFloat64).to(opts.dtype());
  return w.reshape({1, 1, 1, kSsimWindow}).repeat({channels, 1, 1, 1});
}

torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& window) {
  const int64_t c = x.size(1);
  const std::vector<int64_t> one{1, 1};
  const std::vector<int64_t> none{0, 0};
  auto h = torch::conv2d(x, window, torch::Tensor(), one, none, one, c);
  return torch::conv2d(h, window.transpose(2, 3), torch::Tensor(), one, none, one, c);
}

// Per-(N, C) SSIM and contrast-structure terms, valid-window Gaussian statistics.
std::pair<torch::Tensor, torch::Tensor> ssim_terms(const torch::Tensor& x, const torch::Tensor& y,
                                                   const torch::Tensor& window) {
  const auto mu_x = blur(x, window);
  const auto mu_y = blur(y, window);
  const auto mu_xx = mu_x * mu_x;
  const auto mu_yy = mu_y * mu_y;
  const auto mu_xy = mu_x * mu_y;
  const auto sigma_xx = blur(x * x, window) - mu_xx;
  const auto sigma_yy = blur(y * y, window) - mu_yy;
  const auto sigma_xy = blur(x * y, window) - mu_xy;

  const auto cs_map = (2 * sigma_xy + kC2) / (sigma_xx + sigma_yy + kC2);
  const auto ssim_map = ((2 * mu_xy + kC1) / (mu_xx + mu_yy + kC1)) * cs_map;
  return {ssim_map.flatten(2).mean(-1), cs_map.flatten(2).mean(-1)};
}

}  // namespace

LossWeights LossWeights::l2_only() {
  LossWeights w;
  w.frequency = false;
  w.l1 = false;
  w.ms_ssim = false;
  w.l2 = true;
  return w;
}

void LossWeights::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("loss weight lambda must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss weight alpha must lie in [0, 1]");
  if (!frequency && !l1 && !ms_ssim && !l2) throw ConfigError("every loss term is disabled");
}

torch::Tensor frequency_l1(const torch::Tensor& x, const torch::Tensor& x_hat, FrequencyMode mode) {
  require_same_shape(x, x_hat, "frequency_l1");
  if (x.dim() < 2) throw ShapeError("frequency_l1 needs at least two dims");
  const auto fx = torch::fft::fft2(x, c10::nullopt, {-2, -1}, "ortho");
  const auto fy = torch::fft::fft2(x_hat, c10::nullopt, {-2, -1}, "ortho");
  if (mode == FrequencyMode::Amplitude) return (torch::abs(fx) - torch::abs(fy)).abs().mean();
  return torch::abs(fx - fy).mean();
}

int ms_ssim_levels(int64_t height, int64_t width, int requested) {
  const int64_t side = std::min(height, width);
  int levels = std::clamp(requested, 1, kMsSsimLevels);
  while (levels > 1 && side < (int64_t{1} << (levels - 1)) * kSsimWindow) --levels;
  return levels;
}

torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& x_hat, int levels) {
  require_same_shape(x, x_hat, "ms_ssim");
  if (x.dim() != 4) throw ShapeError("ms_ssim expects [N, C, H, W]");
  if (x.size(2) < kSsimWindow || x.size(3) < kSsimWindow) {
    throw ShapeError("ms_ssim: image " + c10::str(x.sizes()) + " is smaller than the " +
                     std::to_string(kSsimWindow) + "px window");
  }
  levels = ms_ssim_levels(x.size(2), x.size(3), levels);

  std::vector<double> weights(kMsSsimWeights.begin(), kMsSsimWeights.begin() + levels);
  double total = 0.0;
  for (double w : weights) total += w;
  for (auto& w : weights) w /= total;

  const auto window = gaussian_window(x.size(1), x.options());
  auto a = x;
  auto b = x_hat;
  std::vector<torch::Tensor> factors;
  for (int i = 0; i < levels; ++i) {
    auto [ssim, cs] = ssim_terms(a, b, window);
    if (i + 1 < levels) {
      factors.push_back(torch::relu(cs).pow(weights[static_cast<size_t>(i)]));
      const std::vector<int64_t> pad{a.size(2) % 2, a.size(3) % 2};
      a = torch::avg_pool2d(a, 2, 2, pad);
      b = torch::avg_pool2d(b, 2, 2, pad);
    } else {
      factors.push_back(torch::relu(ssim).pow(weights[static_cast<size_t>(i)]));
    }
  }
  auto value = factors.front();
  for (size_t i = 1; i < factors.size(); ++i) value = value * factors[i];
  return value.mean();
}

torch::Tensor distortion_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                              const LossWeights& w) {
  w.validate();
  require_same_shape(x, x_hat, "distortion_loss");
  auto loss = torch::zeros({}, x_hat.options());
  if (w.frequency) loss = loss + frequency_l1(x, x_hat, w.frequency_mode);
  if (w.l1 && w.alpha > 0.0) loss = loss + w.lambda * w.alpha * (x - x_hat).abs().mean();
  if (w.ms_ssim && w.alpha < 1.0) {
    loss = loss + w.lambda * (1.0 - w.alpha) * (1.0 - ms_ssim(x, x_hat));
  }
  if (w.l2) loss = loss + (x - x_hat).pow(2).mean();
  return loss;
}

torch::Tensor masked_distortion_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                     const torch::Tensor& mask, const LossWeights& w) {
  require_same_shape(x, x_hat, "masked_distortion_loss");
  const int64_t h = x.size(-2);
  const int64_t wd = x.size(-1);
  if (mask.dim() < 2 || mask.size(-2) != h || mask.size(-1) != wd) {
    throw ShapeError("mask " + c10::str(mask.sizes()) + " does not match frame " +
                     c10::str(x.sizes()));
  }
  const auto visible = mask.to(x_hat.device()) > 0.5;
  const auto filled = torch::where(visible, x_hat, x.detach());
  return distortion_loss(x, filled, w);
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const torch::Tensor& x, const torch::Tensor& x_hat) {
  require_same_shape(x, x_hat, "psnr");
  torch::NoGradGuard no_grad;
  const double mse = (x.to(torch::kFloat64) - x_hat.to(torch::kFloat64)).pow(2).mean().item<double>();
  return psnr_from_mse(mse);
}

double region_psnr(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& region) {
  require_same_shape(x, x_hat, "region_psnr");
  torch::NoGradGuard no_grad;
  const auto sel = (region > 0.5).expand_as(x);
  const auto diff = (x.to(torch::kFloat64) - x_hat.to(torch::kFloat64)).masked_select(sel);
  if (diff.numel() == 0) throw ShapeError("region_psnr: empty region");
  return psnr_from_mse(diff.pow(2).mean().item<double>());
}

double bpp(double total_bits, int64_t frames, int64_t height, int64_t width) {
  if (frames <= 0 || height <= 0 || width <= 0) throw ConfigError("bpp needs a positive video size");
  return total_bits / (static_cast<double>(frames) * static_cast<double>(height) *
                       static_cast<double>(width));
}

}  // namespace nervboost
