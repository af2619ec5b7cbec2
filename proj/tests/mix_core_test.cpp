#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "moi/mix_core.hpp"
#include "moi/rng.hpp"
#include "test_support.hpp"

using namespace moi;

namespace {

// Values computed with mpmath at 40 digits (tests/oracles/mix_oracle.py).
constexpr double kWorkedEntropy = 0.62838982472351973633;
const std::vector<double> kWorkedAlpha = {0.43987287730646381543, 0.12567796494470394727,
                                          0.031419491236175986817, 0.031419491236175986817};
constexpr double kWorkedCount = 1.3716101752764802637;
const std::vector<double> kWorkedWeights = {0.90574152629147203955, 0.062838982472351973633,
                                            0.015709745618087993408, 0.015709745618087993408};

ProbabilityVector worked() { return ProbabilityVector::dense({0.7, 0.2, 0.05, 0.05}); }

}  // namespace

TEST(NormalizedEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(normalized_entropy(ProbabilityVector::dense({0.25, 0.25, 0.25, 0.25})), 1.0);
  EXPECT_EQ(normalized_entropy(ProbabilityVector::dense({0, 0, 0, 1})), 0.0);
  EXPECT_NEAR(normalized_entropy(ProbabilityVector::dense({0.5, 0.5, 0, 0})), 0.5, 1e-15);
  EXPECT_NEAR(normalized_entropy(worked()), kWorkedEntropy, 1e-14);
}

TEST(NormalizedEntropy, NormalizerIsFullVocabularyNotSupport) {
  // Two equal tokens kept out of 256: log 2 / log 256.
  auto p = ProbabilityVector::sparse(256, {{3, 0.5}, {9, 0.5}});
  EXPECT_NEAR(normalized_entropy(p), 0.125, 1e-15);
}

TEST(NormalizedEntropy, Errors) {
  EXPECT_THROW(normalized_entropy(ProbabilityVector::dense({1.0})), InvalidVocabularyError);
  EXPECT_THROW(normalized_entropy(ProbabilityVector::dense({0.5, 0.6})), InvalidInputError);
  EXPECT_THROW(normalized_entropy(ProbabilityVector::dense({1.5, -0.5})), InvalidInputError);
  EXPECT_THROW(normalized_entropy(ProbabilityVector::sparse(4, {{7, 1.0}})), IndexError);
}

TEST(NormalizedEntropy, PermutationInvariantAndMaximalAtUniform) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 2 + rng.below(15);
    auto probs = test::random_simplex(rng, v);
    auto shuffled = probs;
    for (std::size_t i = v; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const double h = normalized_entropy(ProbabilityVector::dense(probs));
    EXPECT_NEAR(h, normalized_entropy(ProbabilityVector::dense(shuffled)), 1e-14);
    EXPECT_LE(h, 1.0);
    EXPECT_GE(h, 0.0);
  }
}

TEST(DirichletPrior, ScalesDistributionByEntropy) {
  auto uniform = ProbabilityVector::dense({0.25, 0.25, 0.25, 0.25});
  auto a = dirichlet_prior(uniform, 1.0);
  for (double x : a.alpha) EXPECT_DOUBLE_EQ(x, 0.25);

  auto zero = dirichlet_prior(worked(), 0.0);
  for (double x : zero.alpha) EXPECT_EQ(x, 0.0);

  auto w = dirichlet_prior(worked(), normalized_entropy(worked()));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.alpha[i], kWorkedAlpha[i], 1e-14);
  EXPECT_NEAR(w.total(), kWorkedEntropy, 1e-9);
}

TEST(PseudoCounts, SingleWeightedObservation) {
  auto c = pseudo_counts(2, 1.0, 1.0);
  EXPECT_EQ(c.at(2), 1.0);
  EXPECT_EQ(c.at(0), 0.0);
  EXPECT_EQ(c.total(), 1.0);

  EXPECT_EQ(pseudo_counts(0, 0.0, 1.0).at(0), 2.0);
  EXPECT_NEAR(pseudo_counts(0, kWorkedEntropy, 1.0).at(0), kWorkedCount, 1e-15);

  EXPECT_THROW(pseudo_counts(0, 0.5, 0.0), InvalidConfigError);
  EXPECT_THROW(pseudo_counts(0, 0.5, -1.0), InvalidConfigError);
  EXPECT_THROW(pseudo_counts(0, 1.5, 1.0), InvalidInputError);
}

TEST(PosteriorMixWeights, WorkedExample) {
  auto w = posterior_mix_weights(worked(), 0, 1.0);
  ASSERT_EQ(w.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.weights[i], kWorkedWeights[i], 1e-14);
}

TEST(PosteriorMixWeights, Limits) {
  // Confident: collapses onto the sampled token.
  for (double beta : {0.01, 1.0, 8.0}) {
    auto w = posterior_mix_weights(ProbabilityVector::dense({0, 0, 0, 1}), 3, beta);
    EXPECT_EQ(w.at(3), 1.0);
    EXPECT_EQ(w.at(0), 0.0);
  }
  // Maximally uncertain: (p + beta y) / (beta + 1).
  auto w = posterior_mix_weights(ProbabilityVector::dense({0.25, 0.25, 0.25, 0.25}), 2, 1.0);
  EXPECT_DOUBLE_EQ(w.at(0), 0.125);
  EXPECT_DOUBLE_EQ(w.at(1), 0.125);
  EXPECT_DOUBLE_EQ(w.at(2), 0.625);
  EXPECT_DOUBLE_EQ(w.at(3), 0.125);
}

TEST(PosteriorMixWeights, SampledTokenOutsideSupportIsAdded) {
  auto p = ProbabilityVector::sparse(8, {{1, 0.5}, {4, 0.5}});
  auto w = posterior_mix_weights(p, 6, 2.0);
  EXPECT_EQ(w.ids, (std::vector<TokenId>{1, 4, 6}));
  EXPECT_NEAR(std::accumulate(w.weights.begin(), w.weights.end(), 0.0), 1.0, 1e-12);
  EXPECT_NO_THROW(validate(w, 8));
}

TEST(PosteriorMixWeights, Errors) {
  EXPECT_THROW(posterior_mix_weights(worked(), 4, 1.0), IndexError);
  EXPECT_THROW(posterior_mix_weights(worked(), -1, 1.0), IndexError);
  EXPECT_THROW(posterior_mix_weights(worked(), 0, 0.0), InvalidConfigError);
}

TEST(PosteriorMixWeights, MatchesBruteForceConjugateUpdate) {
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t v = 2 + rng.below(15);
    const auto probs = test::random_simplex(rng, v);
    const auto y = static_cast<TokenId>(rng.below(v));
    const double beta = 0.25 + 7.75 * rng.uniform();
    const auto expected = test::brute_force_posterior(probs, y, beta);
    const auto w = posterior_mix_weights(ProbabilityVector::dense(probs), y, beta);
    for (std::size_t i = 0; i < v; ++i) {
      ASSERT_NEAR(w.at(static_cast<TokenId>(i)), expected[i], 1e-12) << "trial " << trial;
    }
  }
}

TEST(PosteriorMixWeights, ValidAndMonotoneInBeta) {
  Rng rng(5);
  const std::vector<double> betas = {0.01, 0.25, 0.5, 1, 2, 4, 8, 1e6};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t v = 2 + rng.below(15);
    auto p = ProbabilityVector::dense(test::random_simplex(rng, v));
    const auto y = static_cast<TokenId>(rng.below(v));
    double prev = -1.0;
    for (double beta : betas) {
      auto w = posterior_mix_weights(p, y, beta);
      EXPECT_NO_THROW(validate(w, v));
      EXPECT_GE(w.at(y), prev);
      prev = w.at(y);
    }
    EXPECT_LE(std::abs(posterior_mix_weights(p, y, 1e9).at(y) - 1.0), 2e-9);
  }
}

TEST(PosteriorMixWeights, PermutationEquivariant) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t v = 2 + rng.below(15);
    const auto probs = test::random_simplex(rng, v);
    std::vector<std::size_t> perm(v);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = v; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<double> permuted(v);
    for (std::size_t i = 0; i < v; ++i) permuted[perm[i]] = probs[i];
    const auto y = static_cast<TokenId>(rng.below(v));
    const double beta = 0.5 + rng.uniform();
    auto w = posterior_mix_weights(ProbabilityVector::dense(probs), y, beta);
    auto wp = posterior_mix_weights(ProbabilityVector::dense(permuted), static_cast<TokenId>(perm[y]), beta);
    for (std::size_t i = 0; i < v; ++i) {
      EXPECT_NEAR(w.at(static_cast<TokenId>(i)), wp.at(static_cast<TokenId>(perm[i])), 1e-14);
    }
  }
}

TEST(BaselineWeights, DirectAndOneHot) {
  auto d = direct_mix_weights(worked());
  EXPECT_EQ(d.weights, worked().probs);
  auto u = direct_mix_weights(ProbabilityVector::dense({0.25, 0.25, 0.25, 0.25}));
  for (double x : u.weights) EXPECT_EQ(x, 0.25);

  auto o = one_hot_weights(3, 8);
  EXPECT_EQ(o.ids, std::vector<TokenId>{3});
  EXPECT_EQ(o.weights, std::vector<double>{1.0});
  EXPECT_EQ(one_hot_weights(0, 2).at(0), 1.0);
  EXPECT_EQ(one_hot_weights(7, 8).at(7), 1.0);
  EXPECT_THROW(one_hot_weights(8, 8), IndexError);
}

TEST(MixMode, ParsesNames) {
  EXPECT_EQ(parse_mix_mode("direct"), MixMode::direct_mixture);
  EXPECT_EQ(parse_mix_mode(to_string(MixMode::moi)), MixMode::moi);
  EXPECT_THROW(parse_mix_mode("greedy"), InvalidConfigError);
}
