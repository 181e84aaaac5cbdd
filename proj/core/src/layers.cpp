#include "nervboost/layers.hpp"

#include <cmath>

#include "nervboost/errors.hpp"

namespace nervboost {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Sine:
      return "sine";
    case Activation::Gelu:
      return "gelu";
  }
  return "sine";
}

Activation parse_activation(std::string_view name) {
  if (name == "sine") return Activation::Sine;
  if (name == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected sine|gelu)");
}

torch::Tensor sine(const torch::Tensor& x, double omega) {
  if (omega == 1.0) return torch::sin(x);
  return torch::sin(x * omega);
}

torch::Tensor activate(const torch::Tensor& x, Activation act, double omega) {
  return act == Activation::Sine ? sine(x, omega) : torch::gelu(x);
}

ConvImpl::ConvImpl(const ConvSpec& spec) : spec_(spec) {
  if (spec_.in_channels <= 0 || spec_.out_channels <= 0 || spec_.kernel <= 0 || spec_.stride <= 0) {
    throw ConfigError("conv layer needs positive channels, kernel and stride");
  }
  if (spec_.in_channels % spec_.groups != 0 || spec_.out_channels % spec_.groups != 0) {
    throw ConfigError("conv channels must be divisible by groups");
  }
  if (spec_.padding < 0) spec_.padding = spec_.kernel / 2;

  const int64_t in_per_group = spec_.in_channels / spec_.groups;
  weight = register_parameter(
      "w", torch::empty({spec_.out_channels, in_per_group, spec_.kernel, spec_.kernel}));
  bias = register_parameter("b", torch::empty({spec_.out_channels}));

  const double fan_in = static_cast<double>(in_per_group * spec_.kernel * spec_.kernel);
  const double bound = 1.0 / std::sqrt(fan_in);
  torch::NoGradGuard no_grad;
  weight.uniform_(-bound, bound);
  bias.uniform_(-bound, bound);
}

torch::Tensor ConvImpl::forward(const torch::Tensor& x, const ParamView& view) {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels) {
    throw ShapeError("conv expects [N, " + std::to_string(spec_.in_channels) + ", H, W] input, got " +
                     c10::str(x.sizes()));
  }
  return torch::conv2d(x, view(weight), view(bias), spec_.stride, spec_.padding, /*dilation=*/1,
                       spec_.groups);
}

void ConvImpl::zero_() {
  torch::NoGradGuard no_grad;
  weight.zero_();
  bias.zero_();
}

}  // namespace nervboost
