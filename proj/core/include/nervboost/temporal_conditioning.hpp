#pragma once

#include <torch/torch.h>

#include <vector>

#include "nervboost/layers.hpp"

namespace nervboost {

/// Frequency positional encoding of a normalized frame index.
struct PEConfig {
  double base = 1.25;  // b, must be > 1
  int bands = 80;      // l

  int width() const { return 2 * bands; }
};

/// Maps frame t in {1, ..., T} to t / T in (0, 1].
double normalize_frame_index(int t, int num_frames);

/// (sin(b^0 pi t), cos(b^0 pi t), ..., sin(b^{l-1} pi t), cos(b^{l-1} pi t)).
/// Throws std::out_of_range for t_norm outside (0, 1].
std::vector<double> positional_encode(double t_norm, const PEConfig& cfg);

/// Same encoding as a [1, 2l, 1, 1] tensor, ready for 1x1 convolutions.
torch::Tensor positional_encode_tensor(double t_norm, const PEConfig& cfg,
                                       torch::Dtype dtype = torch::kFloat32);

inline constexpr int kTemporalChannels = 32;

struct TemporalEmbedding {
  torch::Tensor z;  // [N, 32, 1, 1]
  double t_norm = 0.0;
};

/// The z_t generator: 1x1 conv (2l -> 64), SINE, 1x1 conv (64 -> 32), SINE.
class TemporalEmbedderImpl : public torch::nn::Module {
 public:
  explicit TemporalEmbedderImpl(int input_width, int hidden = 64, int output = kTemporalChannels,
                                double omega = 1.0);

  /// pe: [N, input_width, 1, 1] (a [N, input_width] matrix is reshaped).
  torch::Tensor forward(const torch::Tensor& pe, const ParamView& view = {});

  int input_width() const { return input_width_; }

  Conv fc1{nullptr};
  Conv fc2{nullptr};

 private:
  int input_width_;
  double omega_;
};
TORCH_MODULE(TemporalEmbedder);

TemporalEmbedding temporal_embed(double t_norm, const PEConfig& cfg, TemporalEmbedder& net,
                                 const ParamView& view = {});

}  // namespace nervboost
