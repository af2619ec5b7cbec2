#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "moi/error.hpp"
#include "moi/mix_core.hpp"
#include "moi/rng.hpp"

namespace moi {

struct SamplerConfig {
  double temperature = 0.6;
  double top_p = 0.95;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw InvalidConfigError("temperature must be a positive finite real");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidConfigError("top_p must lie in (0, 1]");
  }
};

// The nucleus kept by top_p_truncate. `support` is ordered by descending
// probability with ties broken by ascending id; `probs` is aligned with it.
struct TruncatedDistribution {
  std::size_t vocab = 0;
  std::vector<TokenId> support;
  std::vector<double> probs;

  // Same distribution re-keyed by ascending id.
  ProbabilityVector as_probability_vector() const {
    std::vector<std::pair<TokenId, double>> entries;
    entries.reserve(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) entries.emplace_back(support[i], probs[i]);
    return ProbabilityVector::sparse(vocab, std::move(entries));
  }
};

// softmax(logits / T) with max subtraction. Returned dense over all ids.
template <class Real>
ProbabilityVector apply_temperature(std::span<const Real> logits, double temperature) {
  SamplerConfig{temperature, 1.0, 0}.validate();
  if (logits.empty()) throw InvalidInputError("empty logits");
  double max_z = -INFINITY;
  for (Real x : logits) {
    if (!std::isfinite(static_cast<double>(x))) throw InvalidInputError("non-finite logit");
    max_z = std::max(max_z, static_cast<double>(x) / temperature);
  }
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(static_cast<double>(logits[i]) / temperature - max_z);
    sum += probs[i];
  }
  for (double& x : probs) x /= sum;
  return ProbabilityVector::dense(probs);
}

template <class Real>
ProbabilityVector apply_temperature(const std::vector<Real>& logits, double temperature) {
  return apply_temperature(std::span<const Real>(logits), temperature);
}

// Smallest descending-probability prefix whose mass reaches top_p,
// renormalized. Zero-probability entries are never kept.
inline TruncatedDistribution top_p_truncate(const ProbabilityVector& p, double top_p) {
  validate(p);
  SamplerConfig{1.0, top_p, 0}.validate();

  std::vector<std::size_t> order;
  order.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.probs[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (p.probs[a] != p.probs[b]) return p.probs[a] > p.probs[b];
    return p.ids[a] < p.ids[b];
  });

  TruncatedDistribution d;
  d.vocab = p.vocab;
  double kept = 0.0;
  for (std::size_t idx : order) {
    d.support.push_back(p.ids[idx]);
    d.probs.push_back(p.probs[idx]);
    kept += p.probs[idx];
    if (kept >= top_p) break;
  }
  for (double& x : d.probs) x /= kept;
  return d;
}

// Inverse-CDF draw over the ordered support using exactly one uniform
// double (53 bits of one mt19937_64 output). The first token whose running
// cumulative mass exceeds u is returned; rounding slack falls to the last.
inline TokenId sample_categorical(const TruncatedDistribution& d, Rng& rng) {
  if (d.support.empty()) throw InvalidInputError("empty support");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < d.support.size(); ++i) {
    cum += d.probs[i];
    if (u < cum) return d.support[i];
  }
  return d.support.back();
}

// Lowest id among the maximal logits.
template <class Real>
TokenId argmax_token(std::span<const Real> logits) {
  if (logits.empty()) throw InvalidInputError("empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace moi
