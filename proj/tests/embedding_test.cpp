#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "moi/embedding.hpp"
#include "moi/mix_core.hpp"
#include "test_support.hpp"

using namespace moi;

namespace {

EmbeddingTable identity2() { return EmbeddingTable(2, 2, {1, 0, 0, 1}); }

// Table and expected mixture from tests/oracles/embedding_oracle.py.
EmbeddingTable fixed4x8() {
  return EmbeddingTable(4, 8,
                        {0.0012f,  0.2987f,  -0.2741f, -0.8906f, -0.4547f, -0.9916f, 0.0601f,  1.3402f,
                         -0.4922f, -0.6205f, 0.4898f,  0.3569f,  0.1054f,  -0.9305f, -0.0293f, 0.6953f,
                         -1.3442f, -0.4576f, -1.9012f, -1.2895f, -1.8417f, -0.2351f, -1.2674f, 0.2713f,
                         0.1568f,  -0.1869f, -2.5168f, -0.5387f, -0.0485f, 0.1133f,  -1.5301f, -0.4778f});
}

}  // namespace

TEST(EmbeddingTable, LookupRows) {
  auto t = identity2();
  EXPECT_EQ(lookup(t, 0), (MixedEmbedding{1, 0}));
  EXPECT_EQ(lookup(t, 1), (MixedEmbedding{0, 1}));
  EXPECT_THROW(lookup(t, 2), IndexError);
  EXPECT_THROW(lookup(t, -1), IndexError);
}

TEST(EmbeddingTable, RejectsBadShapes) {
  EXPECT_THROW(EmbeddingTable(1, 2, {1, 2}), ShapeError);
  EXPECT_THROW(EmbeddingTable(2, 2, {1, 2, 3}), ShapeError);
  EXPECT_THROW(EmbeddingTable(2, 1, {1, NAN}), InvalidInputError);
}

TEST(MixEmbeddings, OneHotIsBitExactLookup) {
  auto t = test::random_table(1, 16, 8);
  for (TokenId i = 0; i < 16; ++i) EXPECT_EQ(mix_embeddings(t, one_hot_weights(i, 16)), lookup(t, i));
}

TEST(MixEmbeddings, Midpoint) {
  auto t = EmbeddingTable(2, 3, {1, 2, 3, 3, 6, -1});
  auto h = mix_embeddings(t, MixingWeights{{0, 1}, {0.5, 0.5}});
  EXPECT_EQ(h, (MixedEmbedding{2, 4, 1}));
}

TEST(MixEmbeddings, WorkedPosteriorOnFixedTable) {
  auto w = posterior_mix_weights(ProbabilityVector::dense({0.7, 0.2, 0.05, 0.05}), 0, 1.0);
  auto h = mix_embeddings(fixed4x8(), w);
  const std::vector<double> expected = {-0.04849620908498764, 0.22142848372459412, -0.2868908941745758,
                                        -0.8129467368125916,  -0.4349119961261749, -0.958518385887146,
                                        0.008645869791507721, 1.2543226480484009};
  ASSERT_EQ(h.size(), 8u);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(h[j], expected[j], 1e-6);
}

TEST(MixEmbeddings, OutOfRangeId) {
  EXPECT_THROW(mix_embeddings(identity2(), MixingWeights{{0, 2}, {0.5, 0.5}}), IndexError);
}

TEST(MixEmbeddings, DeviationBoundAndLinearity) {
  Rng rng(12);
  const std::size_t v = 12;
  auto t = test::random_table(8, v, 6);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = ProbabilityVector::dense(test::random_simplex(rng, v));
    const auto y = static_cast<TokenId>(rng.below(v));
    const double beta = 0.1 + 4.0 * rng.uniform();
    auto w = posterior_mix_weights(p, y, beta);
    auto h = mix_embeddings(t, w);
    auto ey = t.row(y);
    double spread = 0.0;
    for (TokenId i = 0; i < static_cast<TokenId>(v); ++i) {
      auto ei = t.row(i);
      for (std::size_t j = 0; j < 6; ++j) spread = std::max(spread, std::abs(double(ei[j]) - ey[j]));
    }
    double dev = 0.0;
    for (std::size_t j = 0; j < 6; ++j) dev = std::max(dev, std::abs(double(h[j]) - ey[j]));
    EXPECT_LE(dev, (1.0 - w.at(y)) * spread + 1e-6);

    // Linearity across two weight vectors.
    auto w2 = posterior_mix_weights(p, static_cast<TokenId>((y + 1) % v), beta);
    const double lambda = rng.uniform();
    MixingWeights blend;
    for (TokenId i = 0; i < static_cast<TokenId>(v); ++i) {
      const double x = lambda * w.at(i) + (1 - lambda) * w2.at(i);
      if (x != 0.0) {
        blend.ids.push_back(i);
        blend.weights.push_back(x);
      }
    }
    auto hb = mix_embeddings(t, blend);
    auto h2 = mix_embeddings(t, w2);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(hb[j], lambda * h[j] + (1 - lambda) * h2[j], 1e-5);
  }
}
