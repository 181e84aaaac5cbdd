#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nervboost/conditional_decoder.hpp"
#include "nervboost/frame_encoder.hpp"
#include "nervboost/kv_text.hpp"
#include "nervboost/objectives.hpp"
#include "nervboost/video_io.hpp"

namespace nervboost {

enum class MaskKind { Disperse, Central };

struct MaskSpec {
  MaskKind kind = MaskKind::Disperse;
  int squares = 5;
  int square_size = 50;
};

/// [H, W] f32 mask, 1 = visible. Disperse squares take top-left corners drawn
/// uniformly over the frame, redrawing any square that would leave it.
torch::Tensor make_mask(const MaskSpec& spec, int64_t height, int64_t width, uint64_t seed);

/// Everything that determines one run.
struct RunConfig {
  std::string task = "regress";
  Variant variant = Variant::HnervBoost;
  /// false selects the ablated baseline: no temporal modulation, GELU blocks, MSE loss.
  bool boosted = true;
  int64_t target_params = 300'000;
  std::vector<int> strides{5, 3, 2, 2, 2};
  int epochs = 150;
  double lr = 0.0;  // <= 0 picks the variant default
  double warmup = 0.1;
  PEConfig pe;
  LossWeights loss;
  double kappa = -1.0;  // < 0 picks the variant default
  double bit_width = 4.0;
  int compress_epochs = 100;
  double compress_lr = 5e-4;
  MaskSpec mask;
  uint64_t seed = 1;
  int eval_every = 0;  // 0: evaluate only after the last epoch
  std::string video = "synth:T=8,H=120,W=240,seed=7";

  double effective_lr() const;
  double effective_kappa() const;
  /// Modulation / activation / loss implied by `boosted`.
  DecoderConfig decoder_config(int64_t height, int64_t width) const;
  LossWeights effective_loss() const;

  KeyValues to_kv() const;
  /// Unknown keys are rejected. Interpolation runs default to PE base 1.05.
  static RunConfig from_kv(const KeyValues& kv);
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
  double ms_ssim = std::numeric_limits<double>::quiet_NaN();
};

/// A fitted decoder plus (for hybrid variants) its encoder.
struct FittedModel {
  DecoderModel decoder{nullptr};
  FrameEncoder encoder{nullptr};
  int64_t frames = 0, height = 0, width = 0;
};

struct TrainResult {
  FittedModel model;
  std::vector<EpochMetrics> history;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  double seconds = 0.0;
};

/// Progress hook, called after every epoch.
using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainSetup {
  std::vector<int64_t> train_indices;  // 0-based frame indices; empty = all frames
  torch::Tensor mask;                  // optional [H, W], 1 = visible
  EpochCallback on_epoch;
};

FittedModel init_model(const RunConfig& cfg, int64_t frames, int64_t height, int64_t width);

/// Batch-1 Adan overfitting with warm-up + cosine schedule. Throws TrainingDiverged
/// on a non-finite loss.
TrainResult train_model(const VideoClip& clip, const RunConfig& cfg, const TrainSetup& setup = {});

/// Decoder input for 0-based frame `index`: PE for index-based models, encoder output
/// (from `source`, defaults to the clip frame) for hybrid ones.
torch::Tensor model_input(FittedModel& m, const torch::Tensor& source_frame, int64_t index,
                          const ParamView& view = {});

/// Evaluation-mode reconstruction [1, 3, H, W] of 0-based frame `index`.
torch::Tensor reconstruct(FittedModel& m, const torch::Tensor& source_frame, int64_t index);

struct Quality {
  double psnr = 0.0;
  double ms_ssim = 0.0;
};
Quality evaluate(FittedModel& m, const VideoClip& clip, const std::vector<int64_t>& indices = {},
                 const torch::Tensor& mask = {});

struct InpaintResult {
  TrainResult train;
  torch::Tensor mask;
  double masked_psnr = 0.0;  // over the hidden pixels only
  double full_psnr = 0.0;
};
InpaintResult run_inpainting(const VideoClip& clip, const RunConfig& cfg);

struct InterpolationSplit {
  std::vector<int64_t> train;  // 0-based indices of odd (1-based) frames
  std::vector<int64_t> test;   // even frames
};
InterpolationSplit interpolation_split(int64_t frames);

struct InterpolationResult {
  TrainResult train;
  InterpolationSplit split;
  double train_psnr = 0.0;
  double test_psnr = 0.0;
  double test_ms_ssim = 0.0;
};
InterpolationResult run_interpolation(const VideoClip& clip, const RunConfig& cfg);

}  // namespace nervboost
