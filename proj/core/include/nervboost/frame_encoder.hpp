#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "nervboost/layers.hpp"

namespace nervboost {

/// Strided ConvNeXt-style encoder producing the per-frame content embedding y_t.
/// `strides` is the decoder stride list; the encoder applies it back to front so
/// that it mirrors the decoder's upsampling.
struct EncoderConfig {
  std::vector<int> strides{5, 3, 2, 2, 2};
  int width = 64;
  int embed_dim = 16;  // d
  int expansion = 4;
};

int stride_product(const std::vector<int>& strides);

/// {d, H / prod(s), W / prod(s)}. Throws ConfigError naming the first stride that
/// does not divide the running resolution.
std::array<int64_t, 3> embedding_shape(const EncoderConfig& cfg, int64_t height, int64_t width);

/// Depthwise 7x7, pointwise expand, GELU, pointwise project, residual add.
class ConvNextBlockImpl : public torch::nn::Module {
 public:
  ConvNextBlockImpl(int channels, int expansion);
  torch::Tensor forward(const torch::Tensor& x);

  Conv depthwise{nullptr};
  Conv expand{nullptr};
  Conv project{nullptr};
};
TORCH_MODULE(ConvNextBlock);

class FrameEncoderImpl : public torch::nn::Module {
 public:
  explicit FrameEncoderImpl(EncoderConfig cfg);

  /// frames: [N, 3, H, W] in [0, 1] -> [N, d, H / prod(s), W / prod(s)].
  torch::Tensor forward(const torch::Tensor& frames);

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<Conv> downsample_;
  std::vector<ConvNextBlock> blocks_;
  Conv projection_{nullptr};
};
TORCH_MODULE(FrameEncoder);

/// Convenience wrapper: validates the resolution and returns y_t for a single frame.
torch::Tensor encode_frame(const torch::Tensor& frame, FrameEncoder& encoder);

}  // namespace nervboost
