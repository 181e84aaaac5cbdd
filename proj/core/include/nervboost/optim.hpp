#pragma once

#include <torch/torch.h>

#include <vector>

namespace nervboost {

/// Linear warm-up from 0 to lr_max over the first `warmup` fraction of the run, then
/// cosine decay to 0. `progress` is measured in (fractional) epochs.
double learning_rate(double progress, int total_epochs, double lr_max, double warmup = 0.1);

struct AdanOptions {
  double beta1 = 0.98;
  double beta2 = 0.92;
  double beta3 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adaptive Nesterov momentum. The previous gradient starts equal to the first one,
/// so the gradient-difference terms vanish on step one.
class Adan {
 public:
  explicit Adan(std::vector<torch::Tensor> params, AdanOptions opts = {});

  void step(double lr);
  void zero_grad();
  const std::vector<torch::Tensor>& params() const { return params_; }
  int64_t steps() const { return steps_; }

 private:
  struct State {
    torch::Tensor m, v, n, prev_grad;
  };
  std::vector<torch::Tensor> params_;
  std::vector<State> state_;
  AdanOptions opts_;
  int64_t steps_ = 0;
};

}  // namespace nervboost
