// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Optional arguments select criteria by name.
#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "nervboost/bitstream_codec.hpp"
#include "nervboost/cem_quantization.hpp"
#include "nervboost/compression.hpp"
#include "nervboost/conditional_decoder.hpp"
#include "nervboost/objectives.hpp"
#include "nervboost/pipeline.hpp"
#include "record_fuzz.hpp"
#include "test_support.hpp"

using namespace nervboost;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

void fail(Outcome& o, const std::string& why) {
  if (o.pass) o.detail.clear();
  o.pass = false;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += why;
}

// Simpson integral of the standard normal density.
double gaussian_mass(double a, double b) {
  const int steps = 20000;
  const auto pdf = [](double x) { return std::exp(-x * x / 2) / std::sqrt(2 * 3.14159265358979323846); };
  const double h = (b - a) / steps;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < steps; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

double rel_error(double fd, double an) {
  return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
}

// ---------------------------------------------------------------------------

Outcome codec_round_trip() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  size_t records = 0, bytes = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = fixtures::fuzz_record_set(rng);
    const auto stream = encode_bitstream(set);
    if (decode_bitstream(stream) != set) return {false, "set " + std::to_string(trial) + " decoded differently"};
    records += set.size();
    bytes += stream.size();
  }
  const double t = seconds_since(t0);
  Outcome o{true, "1000 sets, " + std::to_string(records) + " records, " + std::to_string(bytes) +
                      " bytes bit-exact in " + fmt("%.1f s", t)};
  if (t >= 60.0) fail(o, fmt("took %.1f s (limit 60 s)", t));
  return o;
}

Outcome cem_consistency() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  Outcome o;
  double worst = 0.0, worst_raw = 0.0;
  int cases = 0;
  for (int trial = 0; trial < 24; ++trial) {
    const int64_t n = 65536 + static_cast<int64_t>(rng() % 131072);
    const double sigma_s = std::exp(std::uniform_real_distribution<double>(0.0, std::log(64.0))(rng));
    const double x_std = std::exp(std::uniform_real_distribution<double>(-6.0, 1.0)(rng));
    const double scale = x_std / sigma_s;
    const double offset = trial % 2 ? std::uniform_real_distribution<double>(-1, 1)(rng) : 0.0;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(rng());
    torch::Tensor x;
    switch (trial % 3) {
      case 0:
        x = at::normal(0.0, x_std, {n}, gen, torch::kFloat32);
        break;
      case 1:  // Laplace with the same std
        x = -(x_std / std::sqrt(2.0)) * torch::sign(at::rand({n}, gen) - 0.5) *
            torch::log1p(-2 * (at::rand({n}, gen) - 0.5).abs().clamp_max(0.4999999));
        break;
      default:  // uniform with the same std
        x = (at::rand({n}, gen) - 0.5) * (x_std * std::sqrt(12.0));
        break;
    }
    x = x + static_cast<float>(offset) + 0.3f * static_cast<float>(x_std);

    const auto sym = quantize(x, scale, offset);
    const auto m = fit_entropy_model(x.to(torch::kFloat64), torch::tensor(scale, torch::kFloat64),
                                     torch::tensor(offset, torch::kFloat64));
    const float mu = static_cast<float>(m.mu.item<double>());
    const float sg = static_cast<float>(m.sigma.item<double>());
    if (sg < 1.0f) continue;
    std::vector<int32_t> v(sym.data_ptr<int32_t>(), sym.data_ptr<int32_t>() + n);
    const auto rec = make_record("t", {static_cast<uint32_t>(n)}, v, static_cast<float>(scale),
                                 static_cast<float>(offset), mu, sg);
    const auto stream = encode_bitstream({rec});
    const double actual = 8.0 * static_cast<double>(payload_sizes(stream).front());
    const EntropyModel fm{torch::tensor(static_cast<double>(mu), torch::kFloat64),
                          torch::tensor(static_cast<double>(sg), torch::kFloat64)};
    const double estimate = estimate_rate_bits(sym.to(torch::kFloat64), fm).item<double>();
    // The coded CDF only spans [s_min, s_max]; the mass outside it is the renormalization slack.
    const auto [lo_s, hi_s] = std::minmax_element(v.begin(), v.end());
    double inside = 0.0;
    for (int32_t k = *lo_s; k <= *hi_s; ++k) inside += symbol_probability(k, mu, sg);
    const double reference = estimate + static_cast<double>(n) * std::log2(inside);
    const double err = actual / reference - 1.0;
    worst = std::max(worst, std::abs(err));
    worst_raw = std::max(worst_raw, std::abs(actual / estimate - 1.0));
    ++cases;
    if (std::abs(err) > 0.02) {
      fail(o, "n=" + std::to_string(n) + fmt(" sigma_s=%.2f", sg) + fmt(" off by %.2f%%", 100 * err));
    }
  }
  if (cases < 12) fail(o, "only " + std::to_string(cases) + " qualifying tensors");
  const double t = seconds_since(t0);
  if (o.pass) o.detail = std::to_string(cases) + " tensors, worst deviation " + fmt("%.3f%%", 100 * worst) +
                        fmt(" (%.3f%% before range renormalization)", 100 * worst_raw) + fmt(" in %.1f s", t);
  if (t >= 60.0) fail(o, fmt("took %.1f s", t));
  return o;
}

Outcome entropy_validity() {
  Outcome o;
  const double p0 = symbol_probability(0.0, 0.0, 1.0);
  const double oracle = gaussian_mass(-0.5, 0.5);
  if (std::abs(p0 - 0.382925) > 1e-5 || std::abs(p0 - oracle) > 1e-9) {
    fail(o, fmt("p(0|0,1) = %.7f", p0));
  }
  std::mt19937_64 rng(5);
  double lo = 2.0, hi = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double mu = std::uniform_real_distribution<double>(-100, 100)(rng);
    const double sigma = std::exp(std::uniform_real_distribution<double>(std::log(kSigmaMin), 6.0)(rng));
    const auto a = static_cast<int64_t>(std::floor(mu - 8 * sigma));
    const auto b = static_cast<int64_t>(std::ceil(mu + 8 * sigma));
    const auto v = torch::arange(a, b + 1, torch::kFloat64);
    const double total = symbol_likelihood(v, torch::tensor(mu, torch::kFloat64),
                                           torch::tensor(sigma, torch::kFloat64))
                             .sum()
                             .item<double>();
    lo = std::min(lo, total);
    hi = std::max(hi, total);
  }
  if (lo < 0.999 || hi > 1.0 + 1e-6) fail(o, fmt("mass range [%.9f, ", lo) + fmt("%.9f]", hi));
  if (o.pass) o.detail = fmt("p(0|0,1) = %.7f, ", p0) + fmt("mass over +-8 sigma in [%.9f, ", lo) + fmt("%.9f]", hi);
  return o;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;

  // Rate path: scale and offset through the noisy view. With the model fitted on the same
  // tensor the rate is invariant to the offset, so the offset is also checked against a frozen
  // model where its gradient is non-trivial.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(31);
  const auto x = at::normal(0.2, 0.9, {4096}, gen, torch::kFloat64);
  const auto noise = at::rand({4096}, gen, torch::kFloat64) - 0.5;
  const auto frozen = fit_entropy_model(x, torch::tensor(0.1, torch::kFloat64), torch::tensor(0.05, torch::kFloat64));
  int rate_points = 0;
  for (bool fitted : {true, false}) {
    const auto rate = [&](const torch::Tensor& s, const torch::Tensor& off) {
      const auto mv = mixed_quantize(x, s, off, noise);
      return estimate_rate_bits(mv.noisy, fitted ? fit_entropy_model(x, s, off) : frozen);
    };
    for (double s0 : {0.02, 0.15, 0.6}) {
      for (double o0 : {-0.3, 0.0, 0.4}) {
        auto s = torch::tensor(s0, torch::kFloat64).requires_grad_();
        auto off = torch::tensor(o0, torch::kFloat64).requires_grad_();
        rate(s, off).backward();
        const auto f = [&](double a, double b) {
          return rate(torch::tensor(a, torch::kFloat64), torch::tensor(b, torch::kFloat64)).item<double>();
        };
        const double hs = 1e-6 * s0, ho = 1e-6 * s0;
        const double fd_s = (f(s0 + hs, o0) - f(s0 - hs, o0)) / (2 * hs);
        const double fd_o = (f(s0, o0 + ho) - f(s0, o0 - ho)) / (2 * ho);
        const double an_s = s.grad().item<double>(), an_o = off.grad().item<double>();
        const double es = rel_error(fd_s, an_s);
        // Fitted model: both sides must vanish next to the scale gradient.
        const double eo = fitted ? std::max(std::abs(fd_o), std::abs(an_o)) / std::abs(an_s) : rel_error(fd_o, an_o);
        worst = std::max({worst, es, eo});
        rate_points += 2;
        if (es > 1e-2 || eo > 1e-2) {
          fail(o, std::string(fitted ? "fitted" : "frozen") + fmt(" rate gradient at scale %.2f", s0) +
                      fmt(" off by %.3g", std::max(es, eo)));
        }
      }
    }
  }

  // Distortion path: ten random decoder weights, f64 model.
  auto cfg = fixtures::tiny_hybrid();
  cfg.strides = {2, 2, 2};
  DecoderModel model(cfg);
  fixtures::randomize(*model, 41, 0.15);
  model->to(torch::kFloat64);
  const auto input = fixtures::rand_image({1, cfg.embed_dim, cfg.grid_h, cfg.grid_w}, 42).to(torch::kFloat64);
  const auto target = fixtures::rand_image({1, 3, 32, 48}, 43).to(torch::kFloat64);
  const auto loss_at = [&] {
    const auto [in, z] = decoder_inputs(model, 0.375, input);
    return distortion_loss(target, decode_frame(in, z, model, OutputMode::Training));
  };
  model->zero_grad();
  loss_at().backward();
  auto params = model->parameters();
  std::mt19937_64 rng(44);
  for (int k = 0; k < 10; ++k) {
    auto& p = params[rng() % params.size()];
    const int64_t i = static_cast<int64_t>(rng() % static_cast<uint64_t>(p.numel()));
    const double an = p.grad().view(-1)[i].item<double>();
    torch::NoGradGuard ng;
    auto flat = p.view(-1);
    const double orig = flat[i].item<double>(), h = 1e-6;
    flat[i] = orig + h;
    const double up = loss_at().item<double>();
    flat[i] = orig - h;
    const double down = loss_at().item<double>();
    flat[i] = orig;
    const double e = rel_error((up - down) / (2 * h), an);
    worst = std::max(worst, e);
    if (e > 1e-2) fail(o, "decoder weight " + std::to_string(k) + fmt(" off by %.3g", e));
  }
  const double t = seconds_since(t0);
  if (o.pass) o.detail = std::to_string(rate_points) + " rate derivatives + 10 decoder weights, worst relative error " + fmt("%.2e", worst) + fmt(" in %.1f s", t);
  if (t >= 300.0) fail(o, fmt("took %.1f s", t));
  return o;
}

Outcome loss_identities() {
  Outcome o;
  const LossWeights defaults;
  if (defaults.lambda != 60.0 || defaults.alpha != 0.7) fail(o, "default lambda/alpha not 60/0.7");
  const auto x = fixtures::rand_image({2, 3, 64, 96}, 5);
  const char* names[] = {"frequency", "l1", "ms-ssim"};
  for (int term = 0; term < 3; ++term) {
    LossWeights w;
    w.frequency = term == 0;
    w.l1 = term == 1;
    w.ms_ssim = term == 2;
    if (term == 2) w.alpha = 0.0;
    if (distortion_loss(x, x, w).item<float>() != 0.0f) fail(o, std::string(names[term]) + " term of L(x, x) is not 0");
  }
  if (distortion_loss(x, x).item<float>() != 0.0f) fail(o, "combined L(x, x) is not 0");

  auto y = fixtures::rand_image({2, 3, 64, 96}, 6).requires_grad_();
  const auto mask = make_mask(MaskSpec{MaskKind::Disperse, 5, 12}, 64, 96, 7);
  masked_distortion_loss(x, y, mask).backward();
  const auto hidden = (mask < 0.5).expand({2, 3, 64, 96});
  const auto leaked = y.grad().masked_select(hidden).abs().max().item<float>();
  if (leaked != 0.0f) fail(o, fmt("masked pixels carry gradient %.3g", leaked));
  if (o.pass) o.detail = "L(x, x) = 0 for every term, masked gradient 0, lambda = 60, alpha = 0.7";
  return o;
}

Outcome shape_identity() {
  Outcome o;
  std::mt19937_64 rng(8);
  int checked = 0;
  const Variant variants[] = {Variant::NervBoost, Variant::EnervBoost, Variant::HnervBoost};
  for (int trial = 0; trial < 40; ++trial) {
    auto cfg = fixtures::tiny_hybrid();
    cfg.variant = variants[trial % 3];
    cfg.modulation = trial % 4 == 3 ? Modulation::AdaIn : Modulation::Tat;
    cfg.strides.clear();
    for (size_t i = 0, n = 1 + rng() % 4; i < n; ++i) cfg.strides.push_back(1 + static_cast<int>(rng() % 3));
    cfg.grid_h = 1 + static_cast<int>(rng() % 3);
    cfg.grid_w = 1 + static_cast<int>(rng() % 3);
    cfg.base_width = 12 + static_cast<double>(rng() % 40) / 4.0;
    cfg.stem_hidden = 16;
    torch::manual_seed(trial);
    DecoderModel m(cfg);
    const int64_t n = 1 + static_cast<int64_t>(rng() % 2);
    int64_t up = 1;
    for (int s : cfg.strides) up *= s;
    const auto in = cfg.hybrid() ? fixtures::rand_image({n, cfg.embed_dim, cfg.grid_h, cfg.grid_w}, trial)
                                 : fixtures::rand_image({n, cfg.pe.width(), 1, 1}, trial);
    const auto z1 = fixtures::rand_image({n, 32, 1, 1}, 1000 + trial) * 2 - 1;
    const auto z2 = fixtures::rand_image({n, 32, 1, 1}, 2000 + trial) * 2 - 1;
    const auto a = decode_frame(in, z1, m);
    if (a.sizes() != c10::IntArrayRef({n, 3, cfg.grid_h * up, cfg.grid_w * up})) {
      fail(o, "shape " + c10::str(a.sizes()) + " for " + std::string(to_string(cfg.variant)));
    }
    if (!torch::equal(a, decode_frame(in, z2, m))) fail(o, "fresh model depends on z_t");
    ++checked;
  }
  PEConfig pe;
  if (pe.base != 1.25 || pe.bands != 80 || positional_encode(0.5, pe).size() != 160) {
    fail(o, "positional encoding defaults");
  }
  if (o.pass) o.detail = std::to_string(checked) + " random configs, z-invariant at init, PE length 160 (b = 1.25, l = 80)";
  return o;
}

Outcome parameter_budget() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst = 0.0;
  int built = 0;
  const std::vector<int64_t> targets{300'000, 500'000, 750'000, 1'000'000, 1'500'000, 2'000'000, 2'500'000, 3'000'000};
  struct Layout {
    Variant v;
    int gh, gw;
  };
  // 120x240 clips for all variants, 1080p grids where the index stem fits the budget.
  const std::vector<Layout> layouts{{Variant::NervBoost, 1, 2},
                                    {Variant::EnervBoost, 1, 2},
                                    {Variant::HnervBoost, 1, 2},
                                    {Variant::HnervBoost, 9, 16}};
  for (const auto& l : layouts) {
    for (auto target : targets) {
      DecoderConfig cfg;
      cfg.variant = l.v;
      cfg.grid_h = l.gh;
      cfg.grid_w = l.gw;
      cfg.target_params = target;
      auto m = build_decoder(cfg);
      const double err = std::abs(static_cast<double>(m->numel()) - target) / target;
      worst = std::max(worst, err);
      ++built;
      if (err > kBudgetTolerance) {
        fail(o, std::string(to_string(l.v)) + " at " + std::to_string(target) + fmt(" off by %.2f%%", 100 * err));
      }
    }
  }
  double cv_h = 0, cv_n = 0;
  for (auto v : {Variant::HnervBoost, Variant::NervBoost}) {
    DecoderConfig cfg;
    cfg.variant = v;
    cfg.grid_h = 9;
    cfg.grid_w = 16;
    cfg.target_params = 3'000'000;
    auto m = build_decoder(cfg);
    (v == Variant::HnervBoost ? cv_h : cv_n) = parameter_balance_report(m).stage_cv;
  }
  if (!(cv_h < cv_n)) fail(o, fmt("HNeRV-Boost stage CV %.3f", cv_h) + fmt(" not below NeRV-Boost %.3f", cv_n));
  const double t = seconds_since(t0);
  if (o.pass) {
    o.detail = std::to_string(built) + " decoders within " + fmt("%.2f%%", 100 * worst) +
               fmt(", stage CV %.3f (HNeRV-Boost)", cv_h) + fmt(" < %.3f (NeRV-Boost)", cv_n) + fmt(" in %.1f s", t);
  }
  if (t >= 60.0) fail(o, fmt("took %.1f s", t));
  return o;
}

// Shared by the boosting and RD criteria so the boosted model is trained once.
struct BoostRun {
  RunConfig cfg;
  VideoClip clip;
  TrainResult result;
};

BoostRun& boosted_run() {
  static BoostRun run = [] {
    BoostRun r;
    r.cfg.video = "synth:T=8,H=120,W=240,seed=7";
    r.clip = open_video(r.cfg.video);
    r.result = train_model(r.clip, r.cfg);
    return r;
  }();
  return run;
}

Outcome boosting_margin() {
  const auto t0 = Clock::now();
  auto& boosted = boosted_run();
  RunConfig base = boosted.cfg;
  base.boosted = false;
  const auto baseline = train_model(boosted.clip, base);
  const double margin = boosted.result.psnr - baseline.psnr;
  const double t = seconds_since(t0);
  Outcome o{margin >= 0.3, fmt("HNeRV-Boost %.2f dB", boosted.result.psnr) + fmt(" vs baseline %.2f dB", baseline.psnr) +
                              fmt(", margin %+.2f dB", margin) + " (" + std::to_string(boosted.result.model.decoder->numel()) +
                              " vs " + std::to_string(baseline.model.decoder->numel()) + " params)" + fmt(" in %.0f s", t)};
  if (t >= 1800.0) fail(o, fmt("took %.0f s (limit 30 min)", t));
  return o;
}

Outcome rd_sanity() {
  const auto t0 = Clock::now();
  auto& run = boosted_run();
  Outcome o;
  std::string points;
  double prev_bpp = -1, prev_psnr = -1;
  for (double bits : {2.0, 4.0, 8.0}) {
    RunConfig cfg = run.cfg;
    cfg.bit_width = bits;
    const auto r = finetune_compress(run.result.model, run.clip, cfg);
    points += fmt(" B=%.0f:", bits) + fmt(" %.4f bpp", r.bpp) + fmt(" %.2f dB", r.psnr);
    if (!(r.bpp > prev_bpp && r.psnr > prev_psnr)) fail(o, fmt("B=%.0f breaks monotonicity", bits));
    if (!r.bit_identical || r.psnr != r.in_memory_psnr) {
      fail(o, fmt("B=%.0f bitstream PSNR ", bits) + fmt("%.6f", r.psnr) + fmt(" != in-memory %.6f", r.in_memory_psnr));
    }
    prev_bpp = r.bpp;
    prev_psnr = r.psnr;
  }
  const double t = seconds_since(t0);
  if (o.pass) o.detail = "monotone," + points + ", bitstream PSNR == in-memory PSNR" + fmt(" in %.0f s", t);
  else o.detail += " |" + points;
  if (t >= 1200.0) fail(o, fmt("took %.0f s (limit 20 min)", t));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"codec_round_trip", codec_round_trip},   {"cem_consistency", cem_consistency},
      {"entropy_validity", entropy_validity},   {"gradient_suite", gradient_suite},
      {"loss_identities", loss_identities},     {"shape_identity", shape_identity},
      {"parameter_budget", parameter_budget},   {"boosting_margin", boosting_margin},
      {"rd_sanity", rd_sanity},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("[%s] %-18s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
