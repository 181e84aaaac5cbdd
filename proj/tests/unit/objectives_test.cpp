#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "nervboost/errors.hpp"
#include "nervboost/objectives.hpp"
#include "test_support.hpp"

using namespace nervboost;
using nervboost::fixtures::rand_image;

namespace {

// Direct O(H^2 W^2) DFT with 1/sqrt(HW) scaling, one channel.
std::vector<std::complex<double>> dft2(const double* x, int h, int w) {
  std::vector<std::complex<double>> out(static_cast<size_t>(h * w));
  for (int k = 0; k < h; ++k)
    for (int l = 0; l < w; ++l) {
      std::complex<double> acc = 0.0;
      for (int m = 0; m < h; ++m)
        for (int n = 0; n < w; ++n) {
          const double ang = -2.0 * std::numbers::pi * (double(k * m) / h + double(l * n) / w);
          acc += x[m * w + n] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[static_cast<size_t>(k * w + l)] = acc / std::sqrt(double(h * w));
    }
  return out;
}

// Plain scalar MS-SSIM: 2-D Gaussian window applied directly, valid region only,
// 2x2 average pooling with zero padding on odd sides.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<size_t>(y * w + x)]; }
};

Plane pool(const Plane& p) {
  const int py = p.h % 2, px = p.w % 2;
  Plane o;
  o.h = (p.h + 2 * py - 2) / 2 + 1;
  o.w = (p.w + 2 * px - 2) / 2 + 1;
  o.v.assign(static_cast<size_t>(o.h * o.w), 0.0);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x) {
      double s = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int yy = 2 * y - py + dy, xx = 2 * x - px + dx;
          if (yy >= 0 && yy < p.h && xx >= 0 && xx < p.w) s += p.at(yy, xx);
        }
      o.v[static_cast<size_t>(y * o.w + x)] = s / 4.0;
    }
  return o;
}

std::pair<double, double> ssim_cs(const Plane& a, const Plane& b) {
  double g[11], gs = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 1e-4, c2 = 9e-4;
  double ssim_sum = 0.0, cs_sum = 0.0;
  const int oh = a.h - 10, ow = a.w - 10;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double k = g[i] * g[j], u = a.at(y + i, x + j), v = b.at(y + i, x + j);
          ma += k * u;
          mb += k * v;
          saa += k * u * u;
          sbb += k * v * v;
          sab += k * u * v;
        }
      saa -= ma * ma;
      sbb -= mb * mb;
      sab -= ma * mb;
      const double cs = (2 * sab + c2) / (saa + sbb + c2);
      cs_sum += cs;
      ssim_sum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1) * cs;
    }
  return {ssim_sum / (oh * ow), cs_sum / (oh * ow)};
}

double reference_ms_ssim(const torch::Tensor& x, const torch::Tensor& y) {
  const double all_w[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const int h = static_cast<int>(x.size(2)), w = static_cast<int>(x.size(3));
  int levels = 5;
  while (levels > 1 && std::min(h, w) < (1 << (levels - 1)) * 11) --levels;
  double wsum = 0.0;
  for (int i = 0; i < levels; ++i) wsum += all_w[i];

  const auto xd = x.to(torch::kFloat64).contiguous();
  const auto yd = y.to(torch::kFloat64).contiguous();
  double total = 0.0;
  int count = 0;
  for (int64_t n = 0; n < x.size(0); ++n)
    for (int64_t c = 0; c < x.size(1); ++c) {
      Plane a{h, w, {}}, b{h, w, {}};
      const double* pa = xd[n][c].data_ptr<double>();
      const double* pb = yd[n][c].data_ptr<double>();
      a.v.assign(pa, pa + h * w);
      b.v.assign(pb, pb + h * w);
      double value = 1.0;
      for (int l = 0; l < levels; ++l) {
        const auto [ssim, cs] = ssim_cs(a, b);
        const double term = l + 1 < levels ? cs : ssim;
        value *= std::pow(std::max(term, 0.0), all_w[l] / wsum);
        a = pool(a);
        b = pool(b);
      }
      total += value;
      ++count;
    }
  return total / count;
}

}  // namespace

TEST(FrequencyL1, MatchesDirectDft) {
  for (auto mode : {FrequencyMode::ComplexDifference, FrequencyMode::Amplitude}) {
    const auto x = rand_image({2, 3, 5, 7}, 1).to(torch::kFloat64);
    const auto y = rand_image({2, 3, 5, 7}, 2).to(torch::kFloat64);
    double acc = 0.0;
    int count = 0;
    for (int n = 0; n < 2; ++n)
      for (int c = 0; c < 3; ++c) {
        const auto fx = dft2(x[n][c].contiguous().data_ptr<double>(), 5, 7);
        const auto fy = dft2(y[n][c].contiguous().data_ptr<double>(), 5, 7);
        for (size_t i = 0; i < fx.size(); ++i, ++count) {
          acc += mode == FrequencyMode::Amplitude ? std::abs(std::abs(fx[i]) - std::abs(fy[i]))
                                                  : std::abs(fx[i] - fy[i]);
        }
      }
    EXPECT_NEAR(frequency_l1(x, y, mode).item<double>(), acc / count, 1e-12);
  }
}

TEST(FrequencyL1, UnitImpulseSpreadsEvenly) {
  // A single unit pixel has |F| = 1/sqrt(HW) at every frequency.
  auto x = torch::zeros({1, 1, 4, 9}, torch::kFloat64);
  x[0][0][2][3] = 1.0;
  EXPECT_NEAR(frequency_l1(x, torch::zeros_like(x)).item<double>(), 1.0 / 6.0, 1e-15);
}

TEST(MsSsim, LevelsShrinkForSmallFrames) {
  EXPECT_EQ(ms_ssim_levels(1080, 1920), 5);
  EXPECT_EQ(ms_ssim_levels(176, 400), 5);
  EXPECT_EQ(ms_ssim_levels(175, 400), 4);
  EXPECT_EQ(ms_ssim_levels(160, 320), 4);
  EXPECT_EQ(ms_ssim_levels(120, 240), 4);
  EXPECT_EQ(ms_ssim_levels(44, 60), 3);
  EXPECT_EQ(ms_ssim_levels(11, 11), 1);
}

TEST(MsSsim, MatchesScalarReferenceAt160x320) {
  const auto x = rand_image({1, 3, 160, 320}, 3).to(torch::kFloat64);
  const auto noise = rand_image({1, 3, 160, 320}, 4).to(torch::kFloat64);
  const auto y = (x * 0.8 + noise * 0.2).clamp(0, 1);
  const double ref = reference_ms_ssim(x, y);
  EXPECT_NEAR(ms_ssim(x, y).item<double>(), ref, 1e-6);
  // Single precision agrees to f32 accuracy.
  EXPECT_NEAR(ms_ssim(x.to(torch::kFloat32), y.to(torch::kFloat32)).item<float>(), ref, 1e-5);
}

TEST(MsSsim, OddSidesUseZeroPaddedPooling) {
  const auto x = rand_image({2, 1, 45, 47}, 5).to(torch::kFloat64);
  const auto y = (x + 0.1 * rand_image({2, 1, 45, 47}, 6).to(torch::kFloat64)).clamp(0, 1);
  EXPECT_NEAR(ms_ssim(x, y).item<double>(), reference_ms_ssim(x, y), 1e-9);
}

TEST(MsSsim, RejectsFramesSmallerThanWindow) {
  EXPECT_THROW(ms_ssim(torch::rand({1, 3, 10, 40}), torch::rand({1, 3, 10, 40})), ShapeError);
}

TEST(DistortionLoss, DefaultWeights) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(w.lambda, 60.0);
  EXPECT_DOUBLE_EQ(w.alpha, 0.7);
  EXPECT_TRUE(w.frequency && w.l1 && w.ms_ssim);
  EXPECT_FALSE(w.l2);
  const auto l2 = LossWeights::l2_only();
  EXPECT_TRUE(l2.l2);
  EXPECT_FALSE(l2.frequency || l2.l1 || l2.ms_ssim);
}

TEST(DistortionLoss, IdenticalFramesGiveExactZero) {
  const auto x = rand_image({1, 3, 48, 64}, 7);
  for (int term = 0; term < 4; ++term) {
    LossWeights w;
    w.frequency = term == 0;
    w.l1 = term == 1;
    w.ms_ssim = term == 2;
    w.l2 = term == 3;
    if (term == 2) w.alpha = 0.0;
    EXPECT_EQ(distortion_loss(x, x, w).item<float>(), 0.0f) << "term " << term;
  }
  EXPECT_EQ(distortion_loss(x, x).item<float>(), 0.0f);
  EXPECT_EQ(ms_ssim(x, x).item<float>(), 1.0f);
}

TEST(DistortionLoss, ComposesWeightedTerms) {
  const auto x = rand_image({1, 3, 48, 64}, 8).to(torch::kFloat64);
  const auto y = rand_image({1, 3, 48, 64}, 9).to(torch::kFloat64);
  LossWeights w;
  w.lambda = 3.0;
  w.alpha = 0.25;
  const double expect = frequency_l1(x, y).item<double>() +
                        3.0 * 0.25 * (x - y).abs().mean().item<double>() +
                        3.0 * 0.75 * (1.0 - ms_ssim(x, y).item<double>());
  EXPECT_NEAR(distortion_loss(x, y, w).item<double>(), expect, 1e-12);
  EXPECT_NEAR(distortion_loss(x, y, LossWeights::l2_only()).item<double>(),
              (x - y).pow(2).mean().item<double>(), 1e-15);
}

TEST(DistortionLoss, FiniteDifferenceGradient) {
  const auto x = rand_image({1, 3, 24, 32}, 10).to(torch::kFloat64);
  auto y = (0.6 * x + 0.4 * rand_image({1, 3, 24, 32}, 11).to(torch::kFloat64)).requires_grad_();
  auto loss = distortion_loss(x, y);
  loss.backward();
  const auto grad = y.grad().clone();
  torch::NoGradGuard g;
  std::mt19937_64 rng(12);
  auto flat = y.view(-1);
  for (int trial = 0; trial < 10; ++trial) {
    const int64_t i = static_cast<int64_t>(rng() % static_cast<uint64_t>(flat.numel()));
    const double h = 1e-6, orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = distortion_loss(x, y).item<double>();
    flat[i] = orig - h;
    const double down = distortion_loss(x, y).item<double>();
    flat[i] = orig;
    const double fd = (up - down) / (2 * h);
    const double an = grad.view(-1)[i].item<double>();
    // The L1 kink makes tiny |x - y| unreliable; those pixels are not drawn here.
    EXPECT_LE(std::abs(fd - an), 1e-2 * std::max(std::abs(fd), 1e-6)) << "element " << i;
  }
}

TEST(MaskedLoss, HiddenPixelsGetExactlyZeroGradient) {
  const auto x = rand_image({1, 3, 32, 32}, 13);
  auto y = rand_image({1, 3, 32, 32}, 14).requires_grad_();
  auto mask = torch::ones({32, 32});
  mask.index_put_({torch::indexing::Slice(8, 20), torch::indexing::Slice(4, 30)}, 0.0);
  masked_distortion_loss(x, y, mask).backward();
  const auto hidden = (mask < 0.5).expand({1, 3, 32, 32});
  EXPECT_TRUE(torch::all(y.grad().masked_select(hidden) == 0).item<bool>());
  EXPECT_TRUE(torch::any(y.grad().masked_select(~hidden) != 0).item<bool>());
}

TEST(MaskedLoss, HiddenValuesDoNotChangeTheLoss) {
  const auto x = rand_image({1, 3, 32, 32}, 15);
  auto mask = torch::ones({32, 32});
  mask.index_put_({torch::indexing::Slice(0, 16)}, 0.0);
  auto y1 = rand_image({1, 3, 32, 32}, 16);
  auto y2 = y1.clone();
  y2.index_put_({torch::indexing::Slice(), torch::indexing::Slice(), torch::indexing::Slice(0, 16)}, 5.0);
  EXPECT_EQ(masked_distortion_loss(x, y1, mask).item<float>(),
            masked_distortion_loss(x, y2, mask).item<float>());
  EXPECT_THROW(masked_distortion_loss(x, y1, torch::ones({16, 32})), ShapeError);
}

TEST(Psnr, KnownValues) {
  EXPECT_DOUBLE_EQ(psnr_from_mse(0.01), 20.0);
  EXPECT_DOUBLE_EQ(psnr_from_mse(1.0), 0.0);
  EXPECT_TRUE(std::isinf(psnr_from_mse(0.0)));
  const auto x = torch::zeros({1, 3, 4, 4});
  EXPECT_NEAR(psnr(x, x + 0.1), 20.0, 1e-5);
  auto region = torch::zeros({4, 4});
  region[0][0] = 1;
  auto y = x.clone();
  y.index_put_({0, torch::indexing::Slice(), 0, 0}, 0.01);
  EXPECT_NEAR(region_psnr(x, y, region), 40.0, 1e-4);
  EXPECT_TRUE(std::isinf(region_psnr(x, y, 1 - region)));
}

TEST(Psnr, BitsPerPixel) {
  EXPECT_DOUBLE_EQ(bpp(8.0 * 120 * 240, 8, 120, 240), 1.0);
  EXPECT_THROW(bpp(1.0, 0, 1, 1), ConfigError);
}

TEST(LossWeights, Validation) {
  LossWeights w;
  w.alpha = 1.5;
  EXPECT_THROW(w.validate(), ConfigError);
  w = LossWeights{};
  w.frequency = w.l1 = w.ms_ssim = false;
  EXPECT_THROW(w.validate(), ConfigError);
}
