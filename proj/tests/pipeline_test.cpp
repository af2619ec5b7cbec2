#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "moi/pipeline.hpp"
#include "moi/toy_lm.hpp"
#include "test_support.hpp"

using namespace moi;

namespace {

const Model& default_model() {
  static const Model m = init_random(ModelConfig{});
  return m;
}

GenConfig config(MixMode mode, double beta = 1.0, std::uint64_t seed = 17) {
  GenConfig cfg;
  cfg.mix = {mode, beta};
  cfg.sampler = {0.8, 0.95, seed};
  cfg.max_tokens = 24;
  return cfg;
}

const std::vector<TokenId> kPrompt = bytes_to_tokens("hello");

}  // namespace

TEST(Generate, DeterministicForFixedSeed) {
  for (MixMode mode : {MixMode::standard, MixMode::direct_mixture, MixMode::moi}) {
    auto a = generate(default_model(), kPrompt, config(mode));
    auto b = generate(default_model(), kPrompt, config(mode));
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.steps, b.steps);
    EXPECT_EQ(a.generated_tokens, a.steps.size());
    EXPECT_EQ(a.prompt_tokens, kPrompt.size());
  }
}

TEST(Generate, FirstTokenIndependentOfMode) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = generate(default_model(), kPrompt, config(MixMode::standard, 1.0, seed));
    const auto d = generate(default_model(), kPrompt, config(MixMode::direct_mixture, 1.0, seed));
    const auto m = generate(default_model(), kPrompt, config(MixMode::moi, 0.25, seed));
    EXPECT_EQ(s.tokens.front(), d.tokens.front());
    EXPECT_EQ(s.tokens.front(), m.tokens.front());
  }
}

TEST(Generate, RecordsHoldValidWeightsPerMode) {
  const std::size_t vocab = default_model().vocab();
  for (MixMode mode : {MixMode::standard, MixMode::direct_mixture, MixMode::moi}) {
    const auto r = generate(default_model(), kPrompt, config(mode, 2.0));
    for (const auto& s : r.steps) {
      EXPECT_NO_THROW(validate(s.mixing_weights(), vocab));
      EXPECT_NO_THROW(validate(s.distribution(vocab)));
      EXPECT_GE(s.entropy, 0.0);
      EXPECT_LE(s.entropy, 1.0);
      EXPECT_TRUE(std::binary_search(s.support.begin(), s.support.end(), s.token));
      if (mode == MixMode::standard) EXPECT_EQ(s.mixing_weights().at(s.token), 1.0);
      if (mode == MixMode::direct_mixture) EXPECT_EQ(s.weights, s.probs);
      if (mode == MixMode::moi) {
        const double p_y = s.distribution(vocab).at(s.token);
        EXPECT_NEAR(s.mixing_weights().at(s.token), (s.entropy * p_y + 3.0 - s.entropy) / 3.0, 1e-12);
      }
    }
  }
}

TEST(Generate, LargeBetaStaysOnDiscretePath) {
  const auto& table = default_model().embeddings();
  double max_row = 0.0;
  for (float x : table.values()) max_row = std::max(max_row, double(std::abs(x)));
  const auto r = generate(default_model(), kPrompt, config(MixMode::moi, 1e9));
  for (const auto& s : r.steps) {
    const auto h = mix_embeddings(table, s.mixing_weights());
    const auto e = table.row(s.token);
    for (std::size_t j = 0; j < h.size(); ++j) EXPECT_LE(std::abs(double(h[j]) - e[j]), 1e-7 * max_row);
  }
  EXPECT_EQ(r.tokens, generate(default_model(), kPrompt, config(MixMode::standard, 1.0)).tokens);
}

TEST(Generate, OneHotModelCollapsesMoiToStandard) {
  const test::OneHotStubModel stub(32, 8, 300);
  for (double beta : {0.01, 1.0, 100.0}) {
    GenConfig s = config(MixMode::standard);
    GenConfig m = config(MixMode::moi, beta);
    s.max_tokens = m.max_tokens = 64;
    const std::vector<TokenId> prompt = {1, 2, 3};
    EXPECT_EQ(generate(stub, prompt, s).tokens, generate(stub, prompt, m).tokens);
    // Direct mixture also degenerates to one-hot feedback here.
    GenConfig d = config(MixMode::direct_mixture);
    d.max_tokens = 64;
    EXPECT_EQ(generate(stub, prompt, s).tokens, generate(stub, prompt, d).tokens);
  }
}

TEST(Generate, StopTokenIsEmittedRecordedAndEnds) {
  const auto free_run = generate(default_model(), kPrompt, config(MixMode::moi));
  const TokenId stop = free_run.tokens.at(3);
  auto cfg = config(MixMode::moi);
  cfg.stop_tokens = {stop};
  const auto r = generate(default_model(), kPrompt, cfg);
  const auto first = std::find(free_run.tokens.begin(), free_run.tokens.end(), stop) - free_run.tokens.begin();
  ASSERT_EQ(r.tokens.size(), static_cast<std::size_t>(first) + 1);
  EXPECT_EQ(r.tokens.back(), stop);
  EXPECT_EQ(r.steps.back().token, stop);
  // Passthrough feeds stop tokens back one-hot even in moi mode.
  EXPECT_EQ(r.steps.back().mixing_weights().at(stop), 1.0);
}

TEST(Generate, SpecialPassthroughForcesOneHot) {
  auto cfg = config(MixMode::moi, 0.25);
  for (TokenId i = 0; i < 256; ++i) cfg.special_tokens.insert(i);
  const auto passthrough = generate(default_model(), kPrompt, cfg);
  for (const auto& s : passthrough.steps) EXPECT_EQ(s.mixing_weights().at(s.token), 1.0);
  EXPECT_EQ(passthrough.tokens, generate(default_model(), kPrompt, config(MixMode::standard)).tokens);

  cfg.special_passthrough = false;
  const auto mixed = generate(default_model(), kPrompt, cfg);
  EXPECT_TRUE(std::any_of(mixed.steps.begin(), mixed.steps.end(),
                          [](const StepRecord& s) { return s.mixing_weights().at(s.token) < 1.0; }));
}

TEST(Generate, RawSoftmaxPriorSource) {
  auto cfg = config(MixMode::moi);
  cfg.prior_source = PriorSource::raw_softmax;
  const auto r = generate(default_model(), kPrompt, cfg);
  for (const auto& s : r.steps) EXPECT_EQ(s.support.size(), 256u);
  // Truncated prior keeps the support small.
  const auto t = generate(default_model(), kPrompt, config(MixMode::moi));
  EXPECT_LT(t.steps.front().support.size(), 256u);
}

TEST(Generate, Errors) {
  auto cfg = config(MixMode::moi);
  cfg.max_tokens = 252;
  EXPECT_THROW(generate(default_model(), kPrompt, cfg), CapacityError);
  EXPECT_THROW(generate(default_model(), std::vector<TokenId>{1, 300}, config(MixMode::moi)), IndexError);
  EXPECT_THROW(generate(default_model(), std::vector<TokenId>{}, config(MixMode::moi)), InvalidInputError);
  cfg = config(MixMode::moi, -1.0);
  EXPECT_THROW(generate(default_model(), kPrompt, cfg), InvalidConfigError);
  cfg = config(MixMode::moi);
  cfg.max_tokens = 0;
  EXPECT_THROW(generate(default_model(), kPrompt, cfg), InvalidConfigError);
}

TEST(GreedyDecode, MatchesNearZeroTemperatureSampling) {
  auto cfg = config(MixMode::standard);
  cfg.sampler = {0.01, 1.0, 5};
  cfg.max_tokens = 16;
  EXPECT_EQ(generate(default_model(), kPrompt, cfg).tokens,
            greedy_decode(default_model(), std::span<const TokenId>(kPrompt), 16));
}
