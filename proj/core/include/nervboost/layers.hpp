#pragma once

#include <torch/torch.h>

#include <string>
#include <string_view>
#include <unordered_map>

namespace nervboost {

/// Replacement tensors keyed by the parameter they stand in for. Used to run a
/// forward pass through quantized (straight-through) weights while the module
/// keeps its continuous master copies.
using ParamOverrides = std::unordered_map<const c10::TensorImpl*, torch::Tensor>;

class ParamView {
 public:
  ParamView() = default;
  explicit ParamView(const ParamOverrides* overrides) : overrides_(overrides) {}

  torch::Tensor operator()(const torch::Tensor& param) const {
    if (overrides_ != nullptr) {
      auto it = overrides_->find(param.unsafeGetTensorImpl());
      if (it != overrides_->end()) return it->second;
    }
    return param;
  }

 private:
  const ParamOverrides* overrides_ = nullptr;
};

enum class Activation { Sine, Gelu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

/// sin(omega * x). omega = 1 is the default everywhere in this project.
torch::Tensor sine(const torch::Tensor& x, double omega = 1.0);
torch::Tensor activate(const torch::Tensor& x, Activation act, double omega = 1.0);

struct ConvSpec {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel = 1;
  int64_t stride = 1;
  int64_t padding = -1;  // -1 selects "same" padding, kernel / 2
  int64_t groups = 1;
};

/// 2-D convolution whose weights can be swapped through a ParamView.
/// Initialized like torch.nn.Conv2d: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
class ConvImpl : public torch::nn::Module {
 public:
  explicit ConvImpl(const ConvSpec& spec);

  torch::Tensor forward(const torch::Tensor& x, const ParamView& view = {});
  void zero_();

  const ConvSpec& spec() const { return spec_; }
  int64_t numel() const { return weight.numel() + bias.numel(); }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  ConvSpec spec_;
};
TORCH_MODULE(Conv);

}  // namespace nervboost
