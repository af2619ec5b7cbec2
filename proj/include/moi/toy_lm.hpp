#pragma once

// A small decoder-only transformer that consumes continuous input vectors.
//
// Layout per block: pre-LN causal self-attention and a pre-LN GELU MLP, both
// residual. Output logits reuse the token embedding table (weight tying).
// All reductions run in a fixed order in float; build with
// -ffp-contract=off so results do not depend on FMA availability.

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "moi/embedding.hpp"
#include "moi/error.hpp"
#include "moi/rng.hpp"

namespace moi {

struct ModelConfig {
  std::size_t vocab = 256;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t context = 256;
  std::uint64_t init_seed = 42;
  // Multiplies the tied-head logits. The N(0, 0.02) init alone yields
  // near-uniform next-token distributions.
  float logit_scale = 10.0f;

  void validate() const {
    if (vocab < 2) throw InvalidConfigError("vocab must be at least 2");
    if (dim < 1 || heads < 1) throw InvalidConfigError("dim and heads must be positive");
    if (dim % heads != 0) throw InvalidConfigError("dim must be divisible by heads");
    if (context < 1) throw InvalidConfigError("context must be at least 1");
    if (!(logit_scale > 0.0f) || !std::isfinite(logit_scale)) {
      throw InvalidConfigError("logit_scale must be positive and finite");
    }
  }

  std::size_t head_dim() const { return dim / heads; }
  std::size_t hidden() const { return 4 * dim; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

enum class TensorInit { normal, ones, zeros };

// Every parameter tensor in storage order. Layer-norm gains start at one and
// layer-norm shifts at zero; everything else is N(0, 0.02).
inline std::vector<std::pair<TensorSpec, TensorInit>> tensor_manifest(const ModelConfig& c) {
  const std::size_t d = c.dim;
  const std::size_t f = c.hidden();
  std::vector<std::pair<TensorSpec, TensorInit>> m;
  m.push_back({{"tok_emb", {c.vocab, d}}, TensorInit::normal});
  m.push_back({{"pos_emb", {c.context, d}}, TensorInit::normal});
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    m.push_back({{p + "ln1.gain", {d}}, TensorInit::ones});
    m.push_back({{p + "ln1.bias", {d}}, TensorInit::zeros});
    m.push_back({{p + "attn.qkv", {d, 3 * d}}, TensorInit::normal});
    m.push_back({{p + "attn.qkv_bias", {3 * d}}, TensorInit::normal});
    m.push_back({{p + "attn.out", {d, d}}, TensorInit::normal});
    m.push_back({{p + "attn.out_bias", {d}}, TensorInit::normal});
    m.push_back({{p + "ln2.gain", {d}}, TensorInit::ones});
    m.push_back({{p + "ln2.bias", {d}}, TensorInit::zeros});
    m.push_back({{p + "mlp.fc", {d, f}}, TensorInit::normal});
    m.push_back({{p + "mlp.fc_bias", {f}}, TensorInit::normal});
    m.push_back({{p + "mlp.proj", {f, d}}, TensorInit::normal});
    m.push_back({{p + "mlp.proj_bias", {d}}, TensorInit::normal});
  }
  m.push_back({{"ln_f.gain", {d}}, TensorInit::ones});
  m.push_back({{"ln_f.bias", {d}}, TensorInit::zeros});
  return m;
}

// Per-session incremental cache of attention keys and values.
class DecoderState {
 public:
  explicit DecoderState(const ModelConfig& c)
      : context_(c.context),
        keys_(c.layers, std::vector<float>(c.context * c.dim)),
        values_(c.layers, std::vector<float>(c.context * c.dim)) {}

  std::size_t length() const { return length_; }
  std::size_t capacity() const { return context_; }

 private:
  friend class Model;
  std::size_t context_ = 0;
  std::size_t length_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
};

class Model {
  struct Block {
    std::vector<float> ln1_gain, ln1_bias, qkv, qkv_bias, attn_out, attn_out_bias;
    std::vector<float> ln2_gain, ln2_bias, fc, fc_bias, proj, proj_bias;

    // Manifest order.
    template <class Self>
    static auto fields_of(Self& b) {
      return std::array{&b.ln1_gain, &b.ln1_bias, &b.qkv, &b.qkv_bias, &b.attn_out, &b.attn_out_bias,
                        &b.ln2_gain, &b.ln2_bias, &b.fc,  &b.fc_bias,  &b.proj,     &b.proj_bias};
    }
  };

 public:
  using State = DecoderState;
  using TensorMap = std::map<std::string, std::vector<float>>;

  // Builds a model from named tensors; every manifest entry must be present
  // with the manifest's element count.
  Model(const ModelConfig& config, TensorMap tensors) : config_(config) {
    config_.validate();
    auto take = [&](const TensorSpec& spec) {
      auto it = tensors.find(spec.name);
      if (it == tensors.end()) throw ParseError("missing tensor '" + spec.name + "'");
      if (it->second.size() != spec.numel()) {
        throw ShapeError("tensor '" + spec.name + "' has " + std::to_string(it->second.size()) +
                         " values, expected " + std::to_string(spec.numel()));
      }
      for (float v : it->second) {
        if (!std::isfinite(v)) throw InvalidInputError("non-finite value in '" + spec.name + "'");
      }
      return std::move(it->second);
    };
    const auto manifest = tensor_manifest(config_);
    std::size_t i = 0;
    embeddings_ = EmbeddingTable(config_.vocab, config_.dim, take(manifest[i++].first));
    positions_ = take(manifest[i++].first);
    blocks_.resize(config_.layers);
    for (auto& b : blocks_) {
      for (auto* field : Block::fields_of(b)) *field = take(manifest[i++].first);
    }
    ln_f_gain_ = take(manifest[i++].first);
    ln_f_bias_ = take(manifest[i++].first);
  }

  const ModelConfig& config() const { return config_; }
  const EmbeddingTable& embeddings() const { return embeddings_; }
  std::size_t vocab() const { return config_.vocab; }
  std::size_t context() const { return config_.context; }

  State new_state() const { return State(config_); }

  // Tensors in manifest order, for serialization and checksums.
  std::vector<std::pair<TensorSpec, std::span<const float>>> tensors() const {
    const auto manifest = tensor_manifest(config_);
    std::vector<std::span<const float>> views;
    views.push_back(embeddings_.values());
    views.push_back(positions_);
    for (auto& b : blocks_) {
      for (const auto* field : Block::fields_of(b)) views.push_back(*field);
    }
    views.push_back(ln_f_gain_);
    views.push_back(ln_f_bias_);
    std::vector<std::pair<TensorSpec, std::span<const float>>> out;
    for (std::size_t i = 0; i < manifest.size(); ++i) out.emplace_back(manifest[i].first, views[i]);
    return out;
  }

  // Appends one position holding `input` and returns next-token logits.
  std::vector<float> forward_step(State& state, std::span<const float> input) const {
    const std::size_t d = config_.dim;
    if (input.size() != d) {
      throw ShapeError("input has dimension " + std::to_string(input.size()) + ", expected " +
                       std::to_string(d));
    }
    if (state.context_ != config_.context || state.keys_.size() != config_.layers) {
      throw InvalidInputError("decoder state belongs to a different model shape");
    }
    const std::size_t pos = state.length_;
    if (pos >= config_.context) {
      throw CapacityError("context of " + std::to_string(config_.context) + " positions exhausted");
    }

    std::vector<float> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = input[j] + positions_[pos * d + j];

    const std::size_t heads = config_.heads;
    const std::size_t hd = config_.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    std::vector<float> a(d), qkv(3 * d), att(d), proj(d), hidden(config_.hidden());
    std::vector<float> scores(pos + 1);

    for (std::size_t l = 0; l < config_.layers; ++l) {
      const Block& b = blocks_[l];
      layer_norm(x, b.ln1_gain, b.ln1_bias, a);
      matvec(a, b.qkv, b.qkv_bias, qkv);
      float* k_cache = state.keys_[l].data();
      float* v_cache = state.values_[l].data();
      for (std::size_t j = 0; j < d; ++j) {
        k_cache[pos * d + j] = qkv[d + j];
        v_cache[pos * d + j] = qkv[2 * d + j];
      }
      for (std::size_t h = 0; h < heads; ++h) {
        const float* q = qkv.data() + h * hd;
        float max_s = -INFINITY;
        for (std::size_t t = 0; t <= pos; ++t) {
          const float* k = k_cache + t * d + h * hd;
          float s = 0.0f;
          for (std::size_t j = 0; j < hd; ++j) s += q[j] * k[j];
          scores[t] = s * scale;
          max_s = std::max(max_s, scores[t]);
        }
        float denom = 0.0f;
        for (std::size_t t = 0; t <= pos; ++t) {
          scores[t] = std::exp(scores[t] - max_s);
          denom += scores[t];
        }
        for (std::size_t j = 0; j < hd; ++j) {
          float acc = 0.0f;
          for (std::size_t t = 0; t <= pos; ++t) acc += scores[t] * v_cache[t * d + h * hd + j];
          att[h * hd + j] = acc / denom;
        }
      }
      matvec(att, b.attn_out, b.attn_out_bias, proj);
      for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];

      layer_norm(x, b.ln2_gain, b.ln2_bias, a);
      matvec(a, b.fc, b.fc_bias, hidden);
      for (float& v : hidden) v = gelu(v);
      matvec(hidden, b.proj, b.proj_bias, proj);
      for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];
    }
    state.length_ = pos + 1;

    layer_norm(x, ln_f_gain_, ln_f_bias_, a);
    std::vector<float> logits(config_.vocab);
    for (std::size_t i = 0; i < config_.vocab; ++i) {
      auto e = embeddings_.row(static_cast<TokenId>(i));
      float s = 0.0f;
      for (std::size_t j = 0; j < d; ++j) s += a[j] * e[j];
      logits[i] = s * config_.logit_scale;
    }
    return logits;
  }

 private:
  static void layer_norm(std::span<const float> x, std::span<const float> gain,
                         std::span<const float> bias, std::span<float> out) {
    const float n = static_cast<float>(x.size());
    float mean = 0.0f;
    for (float v : x) mean += v;
    mean /= n;
    float var = 0.0f;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= n;
    const float inv = 1.0f / std::sqrt(var + 1e-5f);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean) * inv * gain[j] + bias[j];
  }

  // out = in * W + bias with W stored row-major [in.size(), out.size()].
  static void matvec(std::span<const float> in, std::span<const float> w,
                     std::span<const float> bias, std::span<float> out) {
    const std::size_t n = out.size();
    for (std::size_t j = 0; j < n; ++j) out[j] = bias[j];
    for (std::size_t k = 0; k < in.size(); ++k) {
      const float xk = in[k];
      const float* row = w.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += xk * row[j];
    }
  }

  static float gelu(float v) {
    constexpr float c = 0.7978845608028654f;  // sqrt(2 / pi)
    return 0.5f * v * (1.0f + std::tanh(c * (v + 0.044715f * v * v * v)));
  }

  ModelConfig config_;
  EmbeddingTable embeddings_;
  std::vector<float> positions_;
  std::vector<Block> blocks_;
  std::vector<float> ln_f_gain_;
  std::vector<float> ln_f_bias_;
};

// Draws every parameter from one mt19937_64 stream seeded by init_seed, in
// manifest order. Same seed, same bits.
inline Model init_random(const ModelConfig& config) {
  config.validate();
  Rng rng(config.init_seed);
  Model::TensorMap tensors;
  for (const auto& [spec, init] : tensor_manifest(config)) {
    std::vector<float> values(spec.numel());
    for (float& v : values) {
      switch (init) {
        case TensorInit::normal: v = static_cast<float>(0.02 * rng.gaussian()); break;
        case TensorInit::ones: v = 1.0f; break;
        case TensorInit::zeros: v = 0.0f; break;
      }
    }
    tensors.emplace(spec.name, std::move(values));
  }
  return Model(config, std::move(tensors));
}

// FNV-1a over the raw bits of every tensor in manifest order.
inline std::uint64_t parameter_checksum(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [spec, values] : model.tensors()) {
    for (float v : values) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int k = 0; k < 4; ++k) {
        h ^= (bits >> (8 * k)) & 0xffu;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

// Feeds `inputs` through a fresh state; returns the logits after each one.
template <class LM>
std::vector<std::vector<float>> forward_sequence(const LM& model,
                                                 const std::vector<MixedEmbedding>& inputs) {
  auto state = model.new_state();
  std::vector<std::vector<float>> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(model.forward_step(state, x));
  return out;
}

}  // namespace moi
