#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

#include "nervboost/conditional_decoder.hpp"

namespace nervboost {

inline constexpr double kScaleMin = 1e-9;
inline constexpr double kSigmaMin = 1e-6;
inline constexpr double kProbMin = 1e-9;
inline constexpr double kDefaultBitWidth = 4.0;

enum class QuantMode { Symmetric, Asymmetric };

/// round((x - offset) / scale), half to even. Returned as int32.
torch::Tensor quantize(const torch::Tensor& x, double scale, double offset = 0.0);

/// symbols * scale + offset evaluated in f32. Every path that turns stored symbols
/// back into weights goes through here, so the bitstream decoder and the in-memory
/// quantized model agree bit for bit.
torch::Tensor dequantize(const torch::Tensor& symbols, float scale, float offset);

int64_t quantize_value(double x, double scale, double offset = 0.0);
double dequantize_value(int64_t symbol, double scale, double offset = 0.0);

/// Initial (scale, offset): offset = (min + max) / 2 for asymmetric tensors and 0
/// otherwise; scale = 2 max|x - offset| / (2^bits - 1).
std::pair<double, double> initial_quant_params(const torch::Tensor& x, double bits, QuantMode mode);

struct MixedViews {
  torch::Tensor noisy;  // (x - offset) / scale + u, symbol domain, feeds the rate
  torch::Tensor ste;    // dequantized rounding with identity gradient, feeds the forward pass
};

/// `noise` is U(-1/2, 1/2) of x's shape; pass it explicitly for reproducible gradients.
MixedViews mixed_quantize(const torch::Tensor& x, const torch::Tensor& scale,
                          const torch::Tensor& offset, const torch::Tensor& noise);

torch::Tensor uniform_noise(const torch::Tensor& like, torch::Generator& gen);

/// Phi((v + 1/2 - mu) / sigma) - Phi((v - 1/2 - mu) / sigma). Unfloored; the rate floors it at kProbMin.
/// Evaluated on |v - mu| so both tails keep full precision.
torch::Tensor symbol_likelihood(const torch::Tensor& v, const torch::Tensor& mu,
                                const torch::Tensor& sigma);
double symbol_probability(double v, double mu, double sigma);

struct EntropyModel {
  torch::Tensor mu;     // symbol-domain mean
  torch::Tensor sigma;  // symbol-domain std, >= kSigmaMin
};

/// mu = (mean(x) - offset) / scale, sigma = max(std(x) / scale, kSigmaMin), population std.
/// Gradients flow back into x, scale and offset.
EntropyModel fit_entropy_model(const torch::Tensor& x, const torch::Tensor& scale,
                               const torch::Tensor& offset);

/// Sum of -log2 max(p(v), kProbMin) over all elements.
torch::Tensor estimate_rate_bits(const torch::Tensor& v, const EntropyModel& m);

/// B_avg * numel / (T * H * W).
double rate_target(int64_t transmitted_numel, double bit_width, int64_t frames, int64_t height,
                   int64_t width);

/// L_d + kappa * relu(R - R_target).
torch::Tensor cem_loss(const torch::Tensor& distortion, const torch::Tensor& rate_bpp,
                       double rate_target_bpp, double kappa);

/// Rate weight: 0.5 for HNeRV-Boost, 0.2 for the other boosted variants, 0.05 for baselines.
double default_kappa(Variant variant, bool boosted = true);

/// A learnable quantizer attached to one transmitted tensor.
class TensorQuantizer {
 public:
  TensorQuantizer(std::string name, const torch::Tensor& init, QuantMode mode, double bits);

  const std::string& name() const { return name_; }
  QuantMode mode() const { return mode_; }
  /// exp of the stored log-scale, clamped at kScaleMin. Optimizer steps are relative, so a
  /// step larger than the scale itself cannot drive it to zero.
  torch::Tensor scale() const;
  torch::Tensor offset() const { return offset_; }
  /// Trainable leaves: the log-scale, plus the offset for asymmetric tensors.
  std::vector<torch::Tensor> parameters() const;

  /// Values written to the bitstream.
  float scale_f32() const;
  float offset_f32() const;

 private:
  std::string name_;
  QuantMode mode_;
  torch::Tensor log_scale_;
  torch::Tensor offset_;
};

}  // namespace nervboost
