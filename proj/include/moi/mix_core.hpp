#pragma once

// Entropy-scaled Dirichlet posterior over token ids and the baseline
// weight rules. All probability math is carried in double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "moi/error.hpp"

namespace moi {

using TokenId = std::int32_t;

inline constexpr double kSumTolerance = 1e-9;

// Categorical distribution over a vocabulary of `vocab` ids, stored sparse.
// Ids are strictly ascending; ids absent from `ids` have probability zero.
struct ProbabilityVector {
  std::size_t vocab = 0;
  std::vector<TokenId> ids;
  std::vector<double> probs;

  static ProbabilityVector dense(std::span<const double> values) {
    ProbabilityVector p;
    p.vocab = values.size();
    p.ids.reserve(values.size());
    p.probs.assign(values.begin(), values.end());
    for (std::size_t i = 0; i < values.size(); ++i) p.ids.push_back(static_cast<TokenId>(i));
    return p;
  }

  static ProbabilityVector dense(std::initializer_list<double> values) {
    return dense(std::span<const double>(values.begin(), values.size()));
  }

  // Pairs may arrive in any order; duplicates are rejected by validate().
  static ProbabilityVector sparse(std::size_t vocab,
                                  std::vector<std::pair<TokenId, double>> entries) {
    std::sort(entries.begin(), entries.end());
    ProbabilityVector p;
    p.vocab = vocab;
    for (const auto& [id, prob] : entries) {
      p.ids.push_back(id);
      p.probs.push_back(prob);
    }
    return p;
  }

  std::size_t size() const { return ids.size(); }

  double at(TokenId id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return 0.0;
    return probs[static_cast<std::size_t>(it - ids.begin())];
  }
};

// Convex-combination weights over token ids (ascending ids, implicit zeros).
struct MixingWeights {
  std::vector<TokenId> ids;
  std::vector<double> weights;

  std::size_t size() const { return ids.size(); }

  double at(TokenId id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return 0.0;
    return weights[static_cast<std::size_t>(it - ids.begin())];
  }
};

// Dirichlet concentration; alpha[i] pairs with ids[i].
struct ConcentrationVector {
  std::vector<TokenId> ids;
  std::vector<double> alpha;

  double total() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
  }
};

// A single weighted observation of the sampled token.
struct PseudoCounts {
  TokenId token = 0;
  double count = 0.0;

  double at(TokenId id) const { return id == token ? count : 0.0; }
  double total() const { return count; }
};

enum class MixMode { standard, direct_mixture, moi };

inline std::string to_string(MixMode mode) {
  switch (mode) {
    case MixMode::standard: return "standard";
    case MixMode::direct_mixture: return "direct_mixture";
    case MixMode::moi: return "moi";
  }
  return "unknown";
}

inline MixMode parse_mix_mode(const std::string& text) {
  if (text == "standard") return MixMode::standard;
  if (text == "direct" || text == "direct_mixture") return MixMode::direct_mixture;
  if (text == "moi") return MixMode::moi;
  throw InvalidConfigError("unknown mix mode '" + text + "'");
}

struct MixConfig {
  MixMode mode = MixMode::moi;
  double beta = 1.0;

  void validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
      throw InvalidConfigError("beta must be a positive finite real");
    }
  }
};

namespace detail {

template <class Ids, class Values>
void validate_sparse(std::size_t vocab, const Ids& ids, const Values& values,
                     const char* what) {
  if (ids.size() != values.size()) {
    throw InvalidInputError(std::string(what) + ": id/value length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError(std::string(what) + ": token id " + std::to_string(ids[i]) +
                       " outside vocabulary of " + std::to_string(vocab));
    }
    if (i > 0 && ids[i] <= ids[i - 1]) {
      throw InvalidInputError(std::string(what) + ": ids must be strictly ascending");
    }
    if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
      throw InvalidInputError(std::string(what) + ": negative or non-finite entry");
    }
    sum += values[i];
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInputError(std::string(what) + ": entries sum to " + std::to_string(sum));
  }
}

inline void check_token(TokenId token, std::size_t vocab) {
  if (token < 0 || static_cast<std::size_t>(token) >= vocab) {
    throw IndexError("token id " + std::to_string(token) + " outside vocabulary of " +
                     std::to_string(vocab));
  }
}

}  // namespace detail

inline void validate(const ProbabilityVector& p) {
  detail::validate_sparse(p.vocab, p.ids, p.probs, "probability vector");
}

inline void validate(const MixingWeights& w, std::size_t vocab) {
  detail::validate_sparse(vocab, w.ids, w.weights, "mixing weights");
}

// Shannon entropy divided by log(vocab), with 0 log 0 = 0. The normalizer is
// the full vocabulary size even when `p` only carries a truncated support.
inline double normalized_entropy(const ProbabilityVector& p) {
  if (p.vocab < 2) {
    throw InvalidVocabularyError("normalized entropy needs a vocabulary of at least 2");
  }
  validate(p);
  double acc = 0.0;
  for (double prob : p.probs) {
    if (prob > 0.0) acc -= prob * std::log(prob);
  }
  const double h = acc / std::log(static_cast<double>(p.vocab));
  return std::clamp(h, 0.0, 1.0);
}

inline void check_entropy(double h) {
  if (!(h >= 0.0 && h <= 1.0)) throw InvalidInputError("entropy must lie in [0, 1]");
}

inline ConcentrationVector dirichlet_prior(const ProbabilityVector& p, double h) {
  validate(p);
  check_entropy(h);
  ConcentrationVector c;
  c.ids = p.ids;
  c.alpha.reserve(p.probs.size());
  for (double prob : p.probs) c.alpha.push_back(h * prob);
  return c;
}

inline PseudoCounts pseudo_counts(TokenId sampled, double h, double beta) {
  MixConfig{MixMode::moi, beta}.validate();
  check_entropy(h);
  return PseudoCounts{sampled, beta + 1.0 - h};
}

// Posterior mean of Dir(h * p + counts):
//   w_i = (h p_i + (beta + 1 - h) [i == sampled]) / (beta + 1).
// `h` must be normalized_entropy(p); the two-argument overload computes it.
inline MixingWeights posterior_mix_weights(const ProbabilityVector& p, TokenId sampled,
                                           double beta, double h) {
  MixConfig{MixMode::moi, beta}.validate();
  validate(p);
  check_entropy(h);
  detail::check_token(sampled, p.vocab);

  MixingWeights w;
  w.ids.reserve(p.ids.size() + 1);
  w.weights.reserve(p.ids.size() + 1);
  const double denom = beta + 1.0;
  const double evidence = beta + 1.0 - h;
  bool placed = false;
  auto push = [&](TokenId id, double prob) {
    double num = h * prob;
    if (id == sampled) {
      num += evidence;
      placed = true;
    }
    w.ids.push_back(id);
    w.weights.push_back(num / denom);
  };
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    if (!placed && sampled < p.ids[i]) push(sampled, 0.0);
    push(p.ids[i], p.probs[i]);
  }
  if (!placed) push(sampled, 0.0);

  double sum = 0.0;
  for (double x : w.weights) sum += x;
  if (std::abs(sum - 1.0) > 1e-12) {
    for (double& x : w.weights) x /= sum;
  }
  return w;
}

inline MixingWeights posterior_mix_weights(const ProbabilityVector& p, TokenId sampled,
                                           double beta) {
  return posterior_mix_weights(p, sampled, beta, normalized_entropy(p));
}

// Direct Mixture baseline: the distribution itself is the weight vector.
inline MixingWeights direct_mix_weights(const ProbabilityVector& p) {
  validate(p);
  return MixingWeights{p.ids, p.probs};
}

inline MixingWeights one_hot_weights(TokenId sampled, std::size_t vocab) {
  detail::check_token(sampled, vocab);
  return MixingWeights{{sampled}, {1.0}};
}

}  // namespace moi
