#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "nervboost/bitstream_codec.hpp"
#include "nervboost/cem_quantization.hpp"
#include "nervboost/pipeline.hpp"

namespace nervboost {

inline constexpr char kConfigRecordName[] = "@cfg";

/// What the bitstream carries: the decoder, its temporal generator, and one
/// embedding per frame for hybrid models.
struct CompressedVideo {
  DecoderModel decoder{nullptr};
  std::vector<torch::Tensor> embeddings;  // [d, h, w] each; empty for index-based models
  int64_t frames = 0, height = 0, width = 0;

  /// Evaluation-mode frame for 0-based `index`.
  torch::Tensor decode(int64_t index);
};

/// Symbols and entropy-model scalars for every transmitted tensor. Decoder tensors
/// are named after the module path; embeddings are "y1", "y2", ...
std::vector<QuantizedTensorRecord> quantized_records(DecoderModel& decoder,
                                                     const std::vector<torch::Tensor>& embeddings,
                                                     const std::vector<TensorQuantizer>& quantizers);

std::vector<uint8_t> serialize_compressed(const DecoderConfig& cfg, int64_t frames, int64_t height,
                                          int64_t width,
                                          const std::vector<QuantizedTensorRecord>& records,
                                          const EntropyCoder& coder = reference_coder());

/// Rebuilds the decoder with weights equal to the dequantized symbols. Throws
/// DecodeError on a config hash mismatch or missing tensors.
CompressedVideo deserialize_compressed(std::span<const uint8_t> bytes,
                                       const EntropyCoder& coder = reference_coder());

/// Replacement tensors holding dequantized records, for running the in-memory model
/// through the same weights the bitstream carries.
ParamOverrides dequantized_overrides(DecoderModel& decoder,
                                     const std::vector<QuantizedTensorRecord>& records);

struct CompressResult {
  std::vector<uint8_t> bitstream;
  std::vector<QuantizedTensorRecord> records;
  int64_t transmitted_numel = 0;
  double bpp = 0.0;                // from the serialized byte length
  double payload_bpp = 0.0;        // entropy-coded payload only
  double estimated_bpp = 0.0;      // -sum log2 p over the final integer symbols
  double last_step_rate_bpp = 0.0; // noisy-view rate of the final training step
  double rate_target_bpp = 0.0;
  double psnr = 0.0;               // decoded from the bitstream
  double ms_ssim = 0.0;
  double in_memory_psnr = 0.0;     // in-memory model with dequantized weights
  bool bit_identical = false;      // bitstream frames == in-memory quantized frames
  std::vector<double> loss_history;
  double seconds = 0.0;
};

/// CEM fine-tuning of a fitted model followed by serialization. Runs
/// cfg.compress_epochs epochs at cfg.compress_lr with cosine decay; embeddings are
/// taken from the encoder once and then trained as free tensors.
CompressResult finetune_compress(const FittedModel& fitted, const VideoClip& clip,
                                 const RunConfig& cfg);

}  // namespace nervboost
