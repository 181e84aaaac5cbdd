#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>

namespace nervboost {

/// Frames as one [T, 3, H, W] f32 tensor in [0, 1]; frame t (1-based) sits at index t - 1.
struct VideoClip {
  torch::Tensor frames;
  std::string name;

  int64_t num_frames() const { return frames.size(0); }
  int64_t height() const { return frames.size(2); }
  int64_t width() const { return frames.size(3); }
  torch::Tensor frame(int64_t index) const { return frames[index].unsqueeze(0); }
};

/// Loads every *.png in `dir`, ordered by file name. All frames must share a resolution.
VideoClip load_video(const std::string& dir);

/// [3, H, W] (or [1, 3, H, W]) in [0, 1] -> 8-bit RGB PNG.
void save_png(const std::string& path, const torch::Tensor& frame);
torch::Tensor read_png(const std::string& path);

struct SynthSpec {
  int64_t frames = 8;
  int64_t height = 120;
  int64_t width = 240;
  int sprites = 3;
};

/// Translating sinusoidal gradients with textured sprites moving across them.
/// Fully determined by (spec, seed).
VideoClip synth_video(const SynthSpec& spec, uint64_t seed);

/// "synth:T=8,H=120,W=240,seed=7" style descriptor or a directory of PNGs.
VideoClip open_video(const std::string& source);

}  // namespace nervboost
