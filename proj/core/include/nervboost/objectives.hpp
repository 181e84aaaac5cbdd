#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <limits>

namespace nervboost {

enum class FrequencyMode {
  ComplexDifference,  // |FFT(x) - FFT(x_hat)|
  Amplitude,          // ||FFT(x)| - |FFT(x_hat)||
};

/// Weights of L_d = L_freq + lambda * alpha * L1 + lambda * (1 - alpha) * (1 - MS-SSIM).
/// The term switches reproduce the loss ablations; `l2` adds a plain MSE term.
struct LossWeights {
  double lambda = 60.0;
  double alpha = 0.7;
  bool frequency = true;
  bool l1 = true;
  bool ms_ssim = true;
  bool l2 = false;
  FrequencyMode frequency_mode = FrequencyMode::ComplexDifference;

  /// MSE only, the loss of the unboosted baselines.
  static LossWeights l2_only();
  void validate() const;
};

/// Mean complex modulus of the difference of orthonormal 2-D FFTs, taken per channel
/// over the last two dims. Inputs are [..., H, W].
torch::Tensor frequency_l1(const torch::Tensor& x, const torch::Tensor& x_hat,
                           FrequencyMode mode = FrequencyMode::ComplexDifference);

inline constexpr int kMsSsimLevels = 5;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Largest level count <= `requested` whose coarsest scale still fits one window.
int ms_ssim_levels(int64_t height, int64_t width, int requested = kMsSsimLevels);

/// Multi-scale SSIM of [N, C, H, W] images with data range 1. Levels are reduced
/// (with renormalized weights) when the frame is too small for five scales.
torch::Tensor ms_ssim(const torch::Tensor& x, const torch::Tensor& x_hat,
                      int levels = kMsSsimLevels);

torch::Tensor distortion_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                              const LossWeights& w = {});

/// Pixels with mask == 0 are replaced by the (detached) target before the loss, so
/// they contribute neither value nor gradient. mask is [H, W] (or broadcastable),
/// 1 = visible.
torch::Tensor masked_distortion_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                                     const torch::Tensor& mask, const LossWeights& w = {});

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double psnr_from_mse(double mse);
double psnr(const torch::Tensor& x, const torch::Tensor& x_hat);
/// PSNR over the pixels where region != 0 (all channels).
double region_psnr(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& region);

double bpp(double total_bits, int64_t frames, int64_t height, int64_t width);

}  // namespace nervboost
