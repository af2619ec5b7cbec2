#pragma once

// The closed decoding loop: each sampled token is emitted as usual, but the
// next input is a mixture of token embeddings chosen by the configured rule.

#include <chrono>
#include <concepts>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "moi/embedding.hpp"
#include "moi/error.hpp"
#include "moi/mix_core.hpp"
#include "moi/rng.hpp"
#include "moi/sampler.hpp"

namespace moi {

// Anything that maps a stream of d-dimensional inputs to next-token logits
// and exposes the embedding table those inputs are built from.
template <class M>
concept LanguageModel = requires(const M& m, typename M::State& s, std::span<const float> x) {
  { m.embeddings() } -> std::convertible_to<const EmbeddingTable&>;
  { m.context() } -> std::convertible_to<std::size_t>;
  { m.new_state() } -> std::same_as<typename M::State>;
  { m.forward_step(s, x) } -> std::convertible_to<std::vector<float>>;
};

enum class PriorSource { sampled_dist, raw_softmax };

inline std::string to_string(PriorSource source) {
  return source == PriorSource::sampled_dist ? "sampled_dist" : "raw_softmax";
}

inline PriorSource parse_prior_source(const std::string& text) {
  if (text == "sampled_dist") return PriorSource::sampled_dist;
  if (text == "raw_softmax") return PriorSource::raw_softmax;
  throw InvalidConfigError("unknown prior source '" + text + "'");
}

struct GenConfig {
  MixConfig mix;
  SamplerConfig sampler;
  std::size_t max_tokens = 64;
  std::set<TokenId> stop_tokens;
  // Structural tokens that, like stop tokens, are fed back one-hot when
  // special_passthrough is set.
  std::set<TokenId> special_tokens;
  PriorSource prior_source = PriorSource::sampled_dist;
  bool special_passthrough = true;

  void validate() const {
    mix.validate();
    sampler.validate();
    if (max_tokens < 1) throw InvalidConfigError("max_tokens must be at least 1");
  }

  bool is_passthrough(TokenId token) const {
    return special_passthrough && (stop_tokens.contains(token) || special_tokens.contains(token));
  }
};

// One decoding step. `weights` is aligned with `support`, which lists the
// prior-source distribution's ids in ascending order (plus the sampled
// token with probability zero if it fell outside that distribution).
struct StepRecord {
  std::size_t step = 0;
  TokenId token = 0;
  double entropy = 0.0;
  std::vector<TokenId> support;
  std::vector<double> probs;
  std::vector<double> weights;
  MixMode mode = MixMode::moi;
  std::optional<double> beta;
  std::optional<std::size_t> vocab;

  ProbabilityVector distribution(std::size_t full_vocab) const {
    return ProbabilityVector{full_vocab, support, probs};
  }
  MixingWeights mixing_weights() const { return MixingWeights{support, weights}; }

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::vector<StepRecord> steps;
  double prefill_seconds = 0.0;
  double decode_seconds = 0.0;
  std::size_t prompt_tokens = 0;
  std::size_t generated_tokens = 0;
};

// Weights fed back after sampling `sampled` from `prior` with entropy `h`.
inline MixingWeights feedback_weights(const GenConfig& cfg, const ProbabilityVector& prior,
                                      TokenId sampled, double h) {
  if (cfg.is_passthrough(sampled)) return one_hot_weights(sampled, prior.vocab);
  switch (cfg.mix.mode) {
    case MixMode::standard: return one_hot_weights(sampled, prior.vocab);
    case MixMode::direct_mixture: return direct_mix_weights(prior);
    case MixMode::moi: return posterior_mix_weights(prior, sampled, cfg.mix.beta, h);
  }
  throw InvalidConfigError("unknown mix mode");
}

namespace detail {

inline StepRecord make_record(std::size_t step, TokenId token, double h,
                              const ProbabilityVector& prior, const MixingWeights& w,
                              const GenConfig& cfg) {
  StepRecord r;
  r.step = step;
  r.token = token;
  r.entropy = h;
  r.mode = cfg.mix.mode;
  r.beta = cfg.mix.beta;
  r.vocab = prior.vocab;
  r.support = prior.ids;
  r.probs = prior.probs;
  auto it = std::lower_bound(r.support.begin(), r.support.end(), token);
  if (it == r.support.end() || *it != token) {
    const auto pos = it - r.support.begin();
    r.support.insert(it, token);
    r.probs.insert(r.probs.begin() + pos, 0.0);
  }
  r.weights.assign(r.support.size(), 0.0);
  for (std::size_t k = 0; k < w.ids.size(); ++k) {
    auto at = std::lower_bound(r.support.begin(), r.support.end(), w.ids[k]);
    r.weights[static_cast<std::size_t>(at - r.support.begin())] = w.weights[k];
  }
  return r;
}

template <class LM>
void check_prompt(const LM& model, std::span<const TokenId> prompt, std::size_t max_tokens) {
  if (prompt.empty()) throw InvalidInputError("prompt must contain at least one token");
  for (TokenId t : prompt) detail::check_token(t, model.embeddings().vocab());
  if (prompt.size() + max_tokens > model.context()) {
    throw CapacityError("prompt of " + std::to_string(prompt.size()) + " plus " +
                        std::to_string(max_tokens) + " new tokens exceeds context of " +
                        std::to_string(model.context()));
  }
}

}  // namespace detail

template <LanguageModel LM>
GenerationResult generate(const LM& model, std::span<const TokenId> prompt, const GenConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  detail::check_prompt(model, prompt, cfg.max_tokens);
  const EmbeddingTable& table = model.embeddings();

  GenerationResult result;
  result.prompt_tokens = prompt.size();
  Rng rng(cfg.sampler.seed);
  auto state = model.new_state();

  const auto t0 = Clock::now();
  std::vector<float> logits;
  for (TokenId t : prompt) logits = model.forward_step(state, table.row(t));
  const auto t1 = Clock::now();

  for (std::size_t step = 0; step < cfg.max_tokens; ++step) {
    const ProbabilityVector raw = apply_temperature(std::span<const float>(logits),
                                                    cfg.sampler.temperature);
    const TruncatedDistribution nucleus = top_p_truncate(raw, cfg.sampler.top_p);
    const TokenId token = sample_categorical(nucleus, rng);

    const ProbabilityVector prior = cfg.prior_source == PriorSource::sampled_dist
                                        ? nucleus.as_probability_vector()
                                        : raw;
    const double h = normalized_entropy(prior);
    const MixingWeights w = feedback_weights(cfg, prior, token, h);

    result.steps.push_back(detail::make_record(step, token, h, prior, w, cfg));
    result.tokens.push_back(token);
    if (cfg.stop_tokens.contains(token)) break;
    if (step + 1 < cfg.max_tokens) {
      const MixedEmbedding next = mix_embeddings(table, w);
      logits = model.forward_step(state, next);
    }
  }
  const auto t2 = Clock::now();

  result.generated_tokens = result.tokens.size();
  result.prefill_seconds = std::chrono::duration<double>(t1 - t0).count();
  result.decode_seconds = std::chrono::duration<double>(t2 - t1).count();
  return result;
}

template <LanguageModel LM>
GenerationResult generate(const LM& model, const std::vector<TokenId>& prompt, const GenConfig& cfg) {
  return generate(model, std::span<const TokenId>(prompt), cfg);
}

// Argmax decoding with discrete one-hot feedback.
template <LanguageModel LM>
std::vector<TokenId> greedy_decode(const LM& model, std::span<const TokenId> prompt,
                                   std::size_t max_tokens, const std::set<TokenId>& stop_tokens = {}) {
  detail::check_prompt(model, prompt, max_tokens);
  const EmbeddingTable& table = model.embeddings();
  auto state = model.new_state();
  std::vector<float> logits;
  for (TokenId t : prompt) logits = model.forward_step(state, table.row(t));
  std::vector<TokenId> out;
  for (std::size_t step = 0; step < max_tokens; ++step) {
    const TokenId token = argmax_token(std::span<const float>(logits));
    out.push_back(token);
    if (stop_tokens.contains(token)) break;
    if (step + 1 < max_tokens) logits = model.forward_step(state, table.row(token));
  }
  return out;
}

// Byte-level tokenization for the default 256-entry vocabulary.
inline std::vector<TokenId> bytes_to_tokens(std::string_view text) {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<TokenId>(c));
  return out;
}

}  // namespace moi
