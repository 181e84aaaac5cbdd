#include "nervboost/temporal_conditioning.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nervboost/errors.hpp"

namespace nervboost {

double normalize_frame_index(int t, int num_frames) {
  if (num_frames <= 0 || t < 1 || t > num_frames) {
    throw std::out_of_range("frame index " + std::to_string(t) + " outside 1.." +
                            std::to_string(num_frames));
  }
  return static_cast<double>(t) / static_cast<double>(num_frames);
}

std::vector<double> positional_encode(double t_norm, const PEConfig& cfg) {
  if (!(t_norm > 0.0 && t_norm <= 1.0)) {
    throw std::out_of_range("normalized frame index must lie in (0, 1], got " +
                            std::to_string(t_norm));
  }
  if (cfg.bands < 1) throw ConfigError("positional encoding needs at least one band");
  if (!(cfg.base > 1.0)) throw ConfigError("positional encoding base must exceed 1");

  std::vector<double> out;
  out.reserve(static_cast<size_t>(cfg.width()));
  for (int j = 0; j < cfg.bands; ++j) {
    const double phase = std::pow(cfg.base, j) * std::numbers::pi * t_norm;
    out.push_back(std::sin(phase));
    out.push_back(std::cos(phase));
  }
  return out;
}

torch::Tensor positional_encode_tensor(double t_norm, const PEConfig& cfg, torch::Dtype dtype) {
  const auto values = positional_encode(t_norm, cfg);
  auto pe = torch::tensor(values, torch::TensorOptions().dtype(torch::kFloat64));
  return pe.to(dtype).reshape({1, cfg.width(), 1, 1});
}

TemporalEmbedderImpl::TemporalEmbedderImpl(int input_width, int hidden, int output, double omega)
    : input_width_(input_width), omega_(omega) {
  fc1 = register_module("fc1", Conv(ConvSpec{input_width, hidden, 1}));
  fc2 = register_module("fc2", Conv(ConvSpec{hidden, output, 1}));
}

torch::Tensor TemporalEmbedderImpl::forward(const torch::Tensor& pe, const ParamView& view) {
  auto x = pe;
  if (x.dim() == 2) x = x.reshape({x.size(0), x.size(1), 1, 1});
  if (x.dim() != 4 || x.size(1) != input_width_) {
    throw ShapeError("temporal embedder expects " + std::to_string(input_width_) +
                     " encoding channels, got " + c10::str(pe.sizes()));
  }
  x = sine(fc1->forward(x, view), omega_);
  return sine(fc2->forward(x, view), omega_);
}

TemporalEmbedding temporal_embed(double t_norm, const PEConfig& cfg, TemporalEmbedder& net,
                                 const ParamView& view) {
  const auto dtype = net->fc1->weight.scalar_type();
  auto pe = positional_encode_tensor(t_norm, cfg, dtype);
  return {net->forward(pe, view), t_norm};
}

}  // namespace nervboost
