#include "nervboost/frame_encoder.hpp"

#include <string>

#include "nervboost/errors.hpp"

namespace nervboost {

int stride_product(const std::vector<int>& strides) {
  int product = 1;
  for (int s : strides) {
    if (s < 1) throw ConfigError("strides must be positive integers");
    product *= s;
  }
  return product;
}

std::array<int64_t, 3> embedding_shape(const EncoderConfig& cfg, int64_t height, int64_t width) {
  if (height <= 0 || width <= 0) throw ConfigError("frame resolution must be positive");
  int64_t h = height;
  int64_t w = width;
  for (auto it = cfg.strides.rbegin(); it != cfg.strides.rend(); ++it) {
    const int s = *it;
    if (s < 1) throw ConfigError("strides must be positive integers");
    if (h % s != 0 || w % s != 0) {
      throw ConfigError("resolution " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by the stride product " +
                        std::to_string(stride_product(cfg.strides)) + ": stride " +
                        std::to_string(s) + " does not divide the intermediate size " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    h /= s;
    w /= s;
  }
  return {cfg.embed_dim, h, w};
}

ConvNextBlockImpl::ConvNextBlockImpl(int channels, int expansion) {
  depthwise = register_module(
      "dw", Conv(ConvSpec{channels, channels, 7, 1, -1, /*groups=*/channels}));
  expand = register_module("pw1", Conv(ConvSpec{channels, channels * expansion, 1}));
  project = register_module("pw2", Conv(ConvSpec{channels * expansion, channels, 1}));
}

torch::Tensor ConvNextBlockImpl::forward(const torch::Tensor& x) {
  auto h = depthwise->forward(x);
  h = torch::gelu(expand->forward(h));
  return x + project->forward(h);
}

FrameEncoderImpl::FrameEncoderImpl(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  stride_product(cfg_.strides);
  int in_channels = 3;
  int stage = 0;
  for (auto it = cfg_.strides.rbegin(); it != cfg_.strides.rend(); ++it, ++stage) {
    const int s = *it;
    downsample_.push_back(register_module(
        "down" + std::to_string(stage), Conv(ConvSpec{in_channels, cfg_.width, s, s, 0})));
    blocks_.push_back(
        register_module("cnx" + std::to_string(stage), ConvNextBlock(cfg_.width, cfg_.expansion)));
    in_channels = cfg_.width;
  }
  projection_ = register_module("proj", Conv(ConvSpec{in_channels, cfg_.embed_dim, 1}));
}

torch::Tensor FrameEncoderImpl::forward(const torch::Tensor& frames) {
  if (frames.dim() != 4 || frames.size(1) != 3) {
    throw ShapeError("encoder expects [N, 3, H, W] frames, got " + c10::str(frames.sizes()));
  }
  embedding_shape(cfg_, frames.size(2), frames.size(3));
  auto x = frames;
  for (size_t i = 0; i < downsample_.size(); ++i) {
    x = blocks_[i]->forward(downsample_[i]->forward(x));
  }
  return projection_->forward(x);
}

torch::Tensor encode_frame(const torch::Tensor& frame, FrameEncoder& encoder) {
  auto x = frame.dim() == 3 ? frame.unsqueeze(0) : frame;
  return encoder->forward(x);
}

}  // namespace nervboost
