#include "nervboost/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nervboost/errors.hpp"

namespace nervboost {

double learning_rate(double progress, int total_epochs, double lr_max, double warmup) {
  if (total_epochs <= 0) throw ConfigError("schedule needs a positive epoch count");
  if (!(warmup >= 0.0 && warmup < 1.0)) throw ConfigError("warm-up fraction must lie in [0, 1)");
  const double total = total_epochs;
  const double warm = warmup * total;
  progress = std::clamp(progress, 0.0, total);
  if (progress < warm) return lr_max * progress / warm;
  const double span = total - warm;
  return 0.5 * lr_max * (1.0 + std::cos(std::numbers::pi * (progress - warm) / span));
}

Adan::Adan(std::vector<torch::Tensor> params, AdanOptions opts)
    : params_(std::move(params)), state_(params_.size()), opts_(opts) {}

void Adan::zero_grad() {
  for (auto& p : params_) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
}

void Adan::step(double lr) {
  torch::NoGradGuard no_grad;
  ++steps_;
  const double k = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(opts_.beta1, k);
  const double bc2 = 1.0 - std::pow(opts_.beta2, k);
  const double bc3 = 1.0 - std::pow(opts_.beta3, k);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.grad().defined()) continue;
    const auto& g = p.grad();
    auto& s = state_[i];
    if (!s.m.defined()) {
      s.m = torch::zeros_like(p);
      s.v = torch::zeros_like(p);
      s.n = torch::zeros_like(p);
      s.prev_grad = g.clone();
    }
    const auto diff = g - s.prev_grad;
    s.m.mul_(opts_.beta1).add_(g, 1.0 - opts_.beta1);
    s.v.mul_(opts_.beta2).add_(diff, 1.0 - opts_.beta2);
    const auto update = g + opts_.beta2 * diff;
    s.n.mul_(opts_.beta3).addcmul_(update, update, 1.0 - opts_.beta3);
    const auto denom = (s.n / bc3).sqrt_().add_(opts_.eps);
    const auto direction = (s.m / bc1 + opts_.beta2 * s.v / bc2) / denom;
    if (opts_.weight_decay != 0.0) p.mul_(1.0 - lr * opts_.weight_decay);
    p.add_(direction, -lr);
    s.prev_grad.copy_(g);
  }
}

}  // namespace nervboost
