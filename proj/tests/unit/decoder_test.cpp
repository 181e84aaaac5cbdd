#include <gtest/gtest.h>

#include <random>

#include "nervboost/conditional_decoder.hpp"
#include "nervboost/errors.hpp"
#include "nervboost/frame_encoder.hpp"
#include "test_support.hpp"

using namespace nervboost;
using nervboost::fixtures::rand_image;
using nervboost::fixtures::randomize;
using nervboost::fixtures::tiny_hybrid;
using nervboost::fixtures::tiny_index;

namespace {

DecoderConfig random_config(std::mt19937_64& rng) {
  const Variant variants[] = {Variant::NervBoost, Variant::EnervBoost, Variant::HnervBoost};
  const Modulation mods[] = {Modulation::Tat, Modulation::AdaIn, Modulation::None};
  DecoderConfig cfg = tiny_hybrid();
  cfg.variant = variants[rng() % 3];
  cfg.modulation = mods[rng() % 3];
  cfg.activation = rng() % 2 ? Activation::Sine : Activation::Gelu;
  cfg.strides.clear();
  const int stages = 1 + static_cast<int>(rng() % 4);
  for (int i = 0; i < stages; ++i) cfg.strides.push_back(1 + static_cast<int>(rng() % 3));
  cfg.grid_h = 1 + static_cast<int>(rng() % 3);
  cfg.grid_w = 1 + static_cast<int>(rng() % 3);
  cfg.embed_dim = 1 + static_cast<int>(rng() % 6);
  cfg.base_width = 12.0 + static_cast<double>(rng() % 64) / 8.0;
  cfg.pe.bands = 1 + static_cast<int>(rng() % 8);
  cfg.stem_hidden = 8;
  return cfg;
}

torch::Tensor input_for(const DecoderConfig& cfg, int64_t n, uint64_t seed) {
  if (cfg.hybrid()) return rand_image({n, cfg.embed_dim, cfg.grid_h, cfg.grid_w}, seed);
  return rand_image({n, cfg.pe.width(), 1, 1}, seed) * 2 - 1;
}

torch::Tensor z_for(const DecoderModel& m, int64_t n, uint64_t seed) {
  if (m->config().modulation == Modulation::None) return {};
  return rand_image({n, 32, 1, 1}, seed) * 2 - 1;
}

}  // namespace

TEST(PixelShuffle, MatchesIndexFormula) {
  for (int64_t s : {1, 2, 3}) {
    const int64_t n = 2, c = 3, h = 2, w = 3;
    const auto in = torch::arange(n * c * s * s * h * w, torch::kFloat32).reshape({n, c * s * s, h, w});
    const auto out = nervboost::pixel_shuffle(in, s);
    ASSERT_EQ(out.sizes(), (std::vector<int64_t>{n, c, h * s, w * s}));
    const auto a = in.accessor<float, 4>();
    const auto b = out.accessor<float, 4>();
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h * s; ++y)
          for (int64_t x = 0; x < w * s; ++x)
            ASSERT_EQ(b[ni][ci][y][x], a[ni][ci * s * s + (y % s) * s + (x % s)][y / s][x / s]);
  }
  EXPECT_THROW(nervboost::pixel_shuffle(torch::zeros({1, 5, 2, 2}), 2), ShapeError);
}

TEST(TatAffine, PerChannelScaleAndShift) {
  const auto f = rand_image({2, 3, 4, 5}, 1);
  const auto g = rand_image({2, 3, 1, 1}, 2);
  const auto b = rand_image({2, 3, 1, 1}, 3);
  const auto out = tat_affine(f, g, b);
  const auto fa = f.accessor<float, 4>(), ga = g.accessor<float, 4>(), ba = b.accessor<float, 4>();
  const auto oa = out.accessor<float, 4>();
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
          EXPECT_FLOAT_EQ(oa[n][c][y][x], ga[n][c][0][0] * fa[n][c][y][x] + ba[n][c][0][0]);
  EXPECT_THROW(tat_affine(f, torch::ones({2, 4, 1, 1}), b), ShapeError);
}

TEST(AdaIn, OutputCarriesTargetStatistics) {
  const auto f = rand_image({1, 4, 8, 8}, 4) * 3 + 1;
  const auto mean_t = torch::tensor({0.5f, -1.0f, 2.0f, 0.0f});
  const auto std_t = torch::tensor({1.0f, 0.5f, 2.0f, 3.0f});
  const auto out = adain_modulate(f, mean_t, std_t);
  for (int c = 0; c < 4; ++c) {
    const auto ch = out[0][c].to(torch::kFloat64);
    EXPECT_NEAR(ch.mean().item<double>(), mean_t[c].item<float>(), 1e-5);
    const double var = (ch - ch.mean()).pow(2).mean().item<double>();
    EXPECT_NEAR(std::sqrt(var), std_t[c].item<float>(), 1e-4);
  }
}

TEST(TatLayer, FreshLayerIsIdentity) {
  TatLayer layer(7);
  const auto [gamma, beta] = layer->forward(rand_image({3, 32, 1, 1}, 5));
  EXPECT_TRUE(torch::equal(gamma, torch::ones({3, 7, 1, 1})));
  EXPECT_TRUE(torch::equal(beta, torch::zeros({3, 7, 1, 1})));
}

TEST(DecoderPlan, HandCountedUnmodulatedLayout) {
  // expand 4->16 (80), stage 1 16->13 x4 (7540) + refine 13 (1534),
  // stage 2 13->12 x4 (5664) + refine 12 (1308), head 12->3 (39).
  auto cfg = tiny_hybrid(Modulation::None);
  const auto plan = plan_decoder(cfg);
  EXPECT_EQ(plan.temporal_params, 0);
  EXPECT_EQ(plan.total_params, 80 + 7540 + 1534 + 5664 + 1308 + 39);
  ASSERT_EQ(plan.blocks.size(), 6u);
  EXPECT_EQ(plan.blocks[1].out_channels, 13);
  EXPECT_EQ(plan.blocks[3].out_channels, 12);
}

TEST(DecoderPlan, ModulatedLayoutAddsResidualAndTemporalCounts) {
  auto cfg = tiny_hybrid(Modulation::Tat);
  const auto plain = plan_decoder(tiny_hybrid(Modulation::None));
  const auto plan = plan_decoder(cfg);
  const auto conv = [](int64_t k, int64_t i, int64_t o) { return k * k * i * o + o; };
  const auto tat = [&](int64_t c) { return 2 * (conv(1, 32, 32) + conv(1, 32, c)); };
  const auto res = [&](int64_t c) { return 2 * conv(3, c, c) + 2 * tat(c); };
  const int64_t temporal = conv(1, 12, 64) + conv(1, 64, 32);
  EXPECT_EQ(plan.temporal_params, temporal);
  // residual after expand (16), after stage 1 and its refine (13, 13), after stage 2 and its refine (12, 12)
  EXPECT_EQ(plan.total_params,
            plain.total_params + temporal + res(16) + 2 * res(13) + 2 * res(12));
}

TEST(DecoderPlan, PlanMatchesInstantiatedModel) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto cfg = random_config(rng);
    DecoderModel m(cfg);
    EXPECT_EQ(m->numel(), m->plan().total_params) << cfg.to_text();
    const auto report = parameter_balance_report(m);
    EXPECT_EQ(report.total, m->numel());
  }
}

TEST(DecoderPlan, WidthsNeverDropBelowMinimum) {
  auto cfg = tiny_hybrid();
  cfg.strides = {2, 2, 2, 2, 2, 2};
  cfg.base_width = 12.5;
  for (const auto& b : plan_decoder(cfg).blocks) {
    if (b.kind != BlockKind::Head) {
      EXPECT_GE(b.out_channels, kMinChannelWidth);
    }
  }
}

TEST(DecoderPlan, ENervFirstStageTriplesWidth) {
  auto cfg = tiny_index(Variant::EnervBoost);
  cfg.base_width = 20.0;
  const auto plan = plan_decoder(cfg);
  ASSERT_EQ(plan.blocks[1].kind, BlockKind::ENervUpsample);
  EXPECT_EQ(plan.blocks[1].out_channels, 60);
  // Stage 2 halves from the tripled level.
  const auto next = std::find_if(plan.blocks.begin() + 2, plan.blocks.end(),
                                 [](const BlockPlan& b) { return b.kind == BlockKind::Upsample; });
  ASSERT_NE(next, plan.blocks.end());
  EXPECT_EQ(next->out_channels, 30);
}

TEST(Decoder, ShapeLawOverRandomConfigs) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto cfg = random_config(rng);
    DecoderModel m(cfg);
    const int64_t n = 1 + static_cast<int64_t>(rng() % 2);
    int64_t up = 1;
    for (int s : cfg.strides) up *= s;
    const auto out = decode_frame(input_for(cfg, n, trial), z_for(m, n, trial + 100), m);
    EXPECT_EQ(out.sizes(), (std::vector<int64_t>{n, 3, cfg.grid_h * up, cfg.grid_w * up}))
        << cfg.to_text();
    EXPECT_GE(out.min().item<float>(), 0.0f);
    EXPECT_LE(out.max().item<float>(), 1.0f);
    EXPECT_EQ(m->config().output_height(), cfg.grid_h * up);
    EXPECT_EQ(m->config().output_width(), cfg.grid_w * up);
  }
}

TEST(Decoder, FreshModelIgnoresTemporalEmbedding) {
  for (auto mod : {Modulation::Tat, Modulation::AdaIn}) {
    for (auto cfg : {tiny_hybrid(mod), tiny_index(Variant::NervBoost), tiny_index(Variant::EnervBoost)}) {
      cfg.modulation = mod;
      torch::manual_seed(3);
      DecoderModel m(cfg);
      const auto in = input_for(cfg, 1, 7);
      const auto a = m->forward(in, rand_image({1, 32, 1, 1}, 8));
      const auto b = m->forward(in, rand_image({1, 32, 1, 1}, 9) * -3);
      EXPECT_TRUE(torch::equal(a, b)) << cfg.to_text();
    }
  }
}

TEST(Decoder, TrainedModelDependsOnTemporalEmbedding) {
  DecoderModel m(tiny_hybrid());
  randomize(*m, 5);
  const auto in = input_for(m->config(), 1, 7);
  const auto a = m->forward(in, rand_image({1, 32, 1, 1}, 8));
  const auto b = m->forward(in, rand_image({1, 32, 1, 1}, 9));
  EXPECT_GT((a - b).abs().max().item<float>(), 1e-4f);
}

TEST(Decoder, TrainingModeIsUnclamped) {
  DecoderModel m(tiny_hybrid());
  randomize(*m, 6, 1.0);
  const auto in = input_for(m->config(), 1, 2);
  const auto z = z_for(m, 1, 3);
  const auto raw = decode_frame(in, z, m, OutputMode::Training);
  EXPECT_TRUE(torch::equal(decode_frame(in, z, m), raw.clamp(0, 1)));
  EXPECT_TRUE((raw < 0).any().item<bool>() || (raw > 1).any().item<bool>());
}

TEST(Decoder, RejectsMismatchedInputs) {
  DecoderModel m(tiny_hybrid());
  EXPECT_THROW(m->forward(torch::zeros({1, 4, 5, 6}), torch::zeros({1, 32, 1, 1})), ShapeError);
  EXPECT_THROW(m->forward(torch::zeros({1, 4, 4, 6}), torch::Tensor()), ShapeError);
  EXPECT_THROW(decoder_inputs(m, 0.5), ShapeError);
}

TEST(Decoder, InputsForIndexModelAreThePositionalEncoding) {
  DecoderModel m(tiny_index(Variant::NervBoost));
  const auto [in, z] = decoder_inputs(m, 0.5);
  EXPECT_TRUE(torch::equal(in, positional_encode_tensor(0.5, m->config().pe)));
  EXPECT_EQ(z.sizes(), (std::vector<int64_t>{1, 32, 1, 1}));
}

TEST(DecoderConfig, TextRoundTrip) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = random_config(rng);
    cfg.base_width = 12.0 + static_cast<double>(rng() % 1000) / 33.0;
    cfg.target_params = static_cast<int64_t>(rng() % 5'000'000);
    const auto back = DecoderConfig::from_text(cfg.to_text());
    EXPECT_EQ(back.to_text(), cfg.to_text());
    EXPECT_EQ(back.base_width, cfg.base_width);
  }
}

TEST(DecoderConfig, NameParsing) {
  EXPECT_EQ(parse_variant("hnerv_boost"), Variant::HnervBoost);
  EXPECT_EQ(parse_variant("nerv"), Variant::NervBoost);
  EXPECT_EQ(parse_modulation("adain"), Modulation::AdaIn);
  EXPECT_THROW(parse_variant("mlp"), ConfigError);
  EXPECT_THROW(parse_modulation("film"), ConfigError);
}

TEST(Budget, SolvedWidthLandsWithinTolerance) {
  for (auto v : {Variant::NervBoost, Variant::EnervBoost, Variant::HnervBoost}) {
    for (int64_t target : {300'000, 1'000'000, 3'000'000}) {
      DecoderConfig cfg;
      cfg.variant = v;
      cfg.grid_h = 1;
      cfg.grid_w = 2;
      cfg.target_params = target;
      const auto solved = solve_base_width(cfg);
      const double total = static_cast<double>(plan_decoder(solved).total_params);
      EXPECT_LE(std::abs(total - target) / target, kBudgetTolerance)
          << to_string(v) << " " << target;
    }
  }
}

TEST(Budget, UnreachableTargetIsAConfigError) {
  DecoderConfig cfg;
  cfg.grid_h = 1;
  cfg.grid_w = 2;
  cfg.target_params = 1000;
  EXPECT_THROW(solve_base_width(cfg), ConfigError);
  cfg.target_params = 0;
  EXPECT_THROW(solve_base_width(cfg), ConfigError);
}

TEST(Budget, BuildDecoderSolvesWhenWidthIsUnset) {
  DecoderConfig cfg;
  cfg.grid_h = 1;
  cfg.grid_w = 2;
  cfg.target_params = 300'000;
  auto m = build_decoder(cfg);
  EXPECT_GT(m->config().base_width, 0.0);
  EXPECT_NEAR(static_cast<double>(m->numel()), 300'000.0, 0.03 * 300'000.0);
}

TEST(Balance, StageSharesMatchDirectCount) {
  DecoderModel m(tiny_hybrid());
  const auto r = parameter_balance_report(m);
  std::vector<double> stages;
  for (const auto& g : r.groups) {
    if (g.upsampling_stage) stages.push_back(static_cast<double>(g.params));
  }
  ASSERT_EQ(stages.size(), 2u);
  const double total = stages[0] + stages[1];
  const double d = stages[0] / total - 0.5;
  EXPECT_NEAR(r.stage_share_std, std::abs(d), 1e-12);
  EXPECT_NEAR(r.stage_cv, 2 * std::abs(d), 1e-12);
}
