#pragma once

#include <torch/torch.h>

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nervboost/layers.hpp"
#include "nervboost/temporal_conditioning.hpp"

namespace nervboost {

enum class Variant { NervBoost, EnervBoost, HnervBoost };
/// How the temporal embedding enters the decoder. `None` removes the residual
/// modulation blocks entirely (and with them the z_t generator).
enum class Modulation { Tat, AdaIn, None };

std::string_view to_string(Variant v);
std::string_view to_string(Modulation m);
Variant parse_variant(std::string_view name);
Modulation parse_modulation(std::string_view name);

inline constexpr int kMinChannelWidth = 12;
inline constexpr double kBudgetTolerance = 0.03;

struct DecoderConfig {
  Variant variant = Variant::HnervBoost;
  std::vector<int> strides{5, 3, 2, 2, 2};
  /// C_1. Real valued; stage widths are floor(C_1 / r^i) clamped at min_width.
  /// Values <= 0 mean "solve from target_params".
  double base_width = 0.0;
  /// Channel reduction factor between stages; <= 0 selects the variant default.
  double reduction = 0.0;
  int min_width = kMinChannelWidth;
  int embed_dim = 16;
  /// Spatial size of the decoder input (embedding grid or stem grid).
  int grid_h = 9;
  int grid_w = 16;
  PEConfig pe;
  Modulation modulation = Modulation::Tat;
  Activation activation = Activation::Sine;
  double sine_omega = 1.0;
  int stem_hidden = 256;
  int64_t target_params = 0;

  double effective_reduction() const;
  bool hybrid() const { return variant == Variant::HnervBoost; }
  int64_t output_height() const;
  int64_t output_width() const;

  std::string to_text() const;
  static DecoderConfig from_text(std::string_view text);
};

double default_reduction(Variant v);

enum class BlockKind { Stem, Expand, Upsample, ENervUpsample, Refine, Residual, Head };
std::string_view to_string(BlockKind k);

struct BlockPlan {
  BlockKind kind = BlockKind::Upsample;
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 3;
  int64_t stride = 1;
  int stage = 0;  // 1-based upsampling stage; 0 for stem/expand/head
  int64_t params = 0;
};

struct DecoderPlan {
  std::vector<BlockPlan> blocks;
  int64_t temporal_params = 0;
  int64_t total_params = 0;  // decoder (theta) + temporal generator (psi)
};

/// Layer-by-layer layout and parameter counts for a config with base_width set.
DecoderPlan plan_decoder(const DecoderConfig& cfg);

/// Returns cfg with base_width chosen so the plan's total lands within +-3% of
/// target_params. Throws ConfigError when no width reaches the budget.
DecoderConfig solve_base_width(DecoderConfig cfg);

// ---------------------------------------------------------------------------
// Building blocks

/// gamma * f + beta, broadcast per channel over space. No normalization.
torch::Tensor tat_affine(const torch::Tensor& f, const torch::Tensor& gamma,
                         const torch::Tensor& beta);

inline constexpr double kAdaInEpsilon = 1e-5;

/// sigma_t * (f - mu(f)) / max(sigma(f), eps) + mu_t, statistics over space per channel.
torch::Tensor adain_modulate(const torch::Tensor& f, const torch::Tensor& mean_t,
                             const torch::Tensor& std_t);

/// Sub-pixel rearrangement [N, C*s*s, h, w] -> [N, C, h*s, w*s].
torch::Tensor pixel_shuffle(const torch::Tensor& f, int64_t s);

/// Two independent 1x1-conv heads (32 -> 32, ReLU, 32 -> C) over z_t. The gamma head
/// output is offset by +1 and both final convs start at zero, so a fresh layer is
/// the identity transform.
class TatLayerImpl : public torch::nn::Module {
 public:
  explicit TatLayerImpl(int64_t channels, int64_t z_channels = kTemporalChannels,
                        int64_t hidden = 32);

  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& z,
                                                  const ParamView& view = {});
  int64_t channels() const { return channels_; }

  Conv gamma1{nullptr}, gamma2{nullptr}, beta1{nullptr}, beta2{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(TatLayer);

/// Common interface for everything in the decoder trunk.
class DecoderBlock : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& f, const torch::Tensor& z,
                                const ParamView& view) = 0;
};

/// f + Conv(Mod(GELU(Conv(Mod(f))))) where Mod is TAT or AdaIN driven by z_t.
class ResidualModulationBlock : public DecoderBlock {
 public:
  ResidualModulationBlock(int64_t channels, Modulation modulation);
  torch::Tensor forward(const torch::Tensor& f, const torch::Tensor& z,
                        const ParamView& view) override;

  TatLayer mod1{nullptr}, mod2{nullptr};
  Conv conv1{nullptr}, conv2{nullptr};

 private:
  torch::Tensor modulate(const torch::Tensor& f, TatLayer& layer, const torch::Tensor& z,
                         const ParamView& view);
  Modulation modulation_;
};

/// Conv(C, C_out*s*s, k) -> PixelShuffle(s) -> activation.
class SNervBlock : public DecoderBlock {
 public:
  SNervBlock(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride,
             Activation act, double omega = 1.0);
  torch::Tensor forward(const torch::Tensor& f, const torch::Tensor& z,
                        const ParamView& view) override;

  Conv conv{nullptr};

 private:
  int64_t stride_;
  Activation act_;
  double omega_;
};

/// Conv(C, (C/4)*s*s, k) -> PixelShuffle(s) -> Conv(C/4, C_out, 3) -> activation.
class SinusoidalENervBlock : public DecoderBlock {
 public:
  SinusoidalENervBlock(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride,
                       Activation act, double omega = 1.0);
  torch::Tensor forward(const torch::Tensor& f, const torch::Tensor& z,
                        const ParamView& view) override;

  Conv expand{nullptr}, mix{nullptr};

 private:
  int64_t stride_;
  Activation act_;
  double omega_;
};

/// Index-based stem: PE(t) -> 1x1 conv -> act -> 1x1 conv -> act -> reshape to [C1, gh, gw].
class IndexStem : public DecoderBlock {
 public:
  IndexStem(int64_t pe_width, int64_t hidden, int64_t channels, int64_t grid_h, int64_t grid_w,
            Activation act, double omega = 1.0);
  torch::Tensor forward(const torch::Tensor& pe, const torch::Tensor& z,
                        const ParamView& view) override;

  Conv fc1{nullptr}, fc2{nullptr};

 private:
  int64_t channels_, grid_h_, grid_w_;
  Activation act_;
  double omega_;
};

// ---------------------------------------------------------------------------
// Whole decoder

class DecoderModelImpl : public torch::nn::Module {
 public:
  explicit DecoderModelImpl(DecoderConfig cfg);

  /// input: y_t [N, d, gh, gw] for hybrid models, PE(t) [N, 2l, 1, 1] otherwise.
  /// z: [N, 32, 1, 1] (ignored when modulation is None). Returns unclamped [N, 3, H, W].
  torch::Tensor forward(const torch::Tensor& input, const torch::Tensor& z,
                        const ParamView& view = {});

  /// z_t for a batch of encodings; undefined tensor when there is no generator.
  torch::Tensor temporal_embedding(const torch::Tensor& pe, const ParamView& view = {});

  /// PE(t_norm) in the model's dtype.
  torch::Tensor encode_time(double t_norm) const;

  const DecoderConfig& config() const { return cfg_; }
  const DecoderPlan& plan() const { return plan_; }
  const std::vector<std::shared_ptr<DecoderBlock>>& blocks() const { return blocks_; }
  TemporalEmbedder& temporal_net() { return temporal_; }
  bool has_temporal_net() const { return !temporal_.is_empty(); }
  Conv& head() { return head_; }
  torch::Dtype dtype() const;

  /// Parameter count of every registered tensor.
  int64_t numel() const;

 private:
  DecoderConfig cfg_;
  DecoderPlan plan_;
  TemporalEmbedder temporal_{nullptr};
  std::vector<std::shared_ptr<DecoderBlock>> blocks_;
  Conv head_{nullptr};
};
TORCH_MODULE(DecoderModel);

/// Solves C_1 when needed, then instantiates the layout from plan_decoder.
DecoderModel build_decoder(DecoderConfig cfg);

enum class OutputMode { Training, Evaluation };

/// x_hat = F(input, z). Evaluation mode clamps to [0, 1]; training returns raw values.
torch::Tensor decode_frame(const torch::Tensor& input, const torch::Tensor& z, DecoderModel& model,
                           OutputMode mode = OutputMode::Evaluation, const ParamView& view = {});

/// Decoder input and z_t for frame t_norm; `embedding` is required for hybrid models.
std::pair<torch::Tensor, torch::Tensor> decoder_inputs(DecoderModel& model, double t_norm,
                                                       const torch::Tensor& embedding = {},
                                                       const ParamView& view = {});

struct ParameterGroup {
  std::string name;
  int64_t params = 0;
  bool upsampling_stage = false;
};

struct BalanceReport {
  std::vector<ParameterGroup> groups;
  int64_t total = 0;
  /// Population std and coefficient of variation of the upsampling stages' shares.
  double stage_share_std = 0.0;
  double stage_cv = 0.0;
};

BalanceReport parameter_balance_report(DecoderModel& model);

}  // namespace nervboost
