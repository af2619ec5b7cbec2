#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moi/error.hpp"
#include "moi/mix_core.hpp"

namespace moi {

using MixedEmbedding = std::vector<float>;

// Immutable V x d row-major table of 32-bit token embeddings.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(std::size_t vocab, std::size_t dim, std::vector<float> values)
      : vocab_(vocab), dim_(dim), values_(std::move(values)) {
    if (vocab_ < 2 || dim_ < 1) throw ShapeError("embedding table needs vocab >= 2 and dim >= 1");
    if (values_.size() != vocab_ * dim_) {
      throw ShapeError("embedding table holds " + std::to_string(values_.size()) +
                       " values, expected " + std::to_string(vocab_ * dim_));
    }
    for (float v : values_) {
      if (!std::isfinite(v)) throw InvalidInputError("non-finite embedding entry");
    }
  }

  std::size_t vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  std::span<const float> values() const { return values_; }

  std::span<const float> row(TokenId id) const {
    detail::check_token(id, vocab_);
    return std::span<const float>(values_).subspan(static_cast<std::size_t>(id) * dim_, dim_);
  }

 private:
  std::size_t vocab_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

inline MixedEmbedding lookup(const EmbeddingTable& table, TokenId id) {
  auto r = table.row(id);
  return MixedEmbedding(r.begin(), r.end());
}

// h = sum_i w_i e_i over the sparse support, ascending id order, accumulated
// in double and narrowed once at the end.
inline MixedEmbedding mix_embeddings(const EmbeddingTable& table, const MixingWeights& w) {
  if (w.ids.size() != w.weights.size()) throw InvalidInputError("mixing weights length mismatch");
  std::vector<double> acc(table.dim(), 0.0);
  for (std::size_t k = 0; k < w.ids.size(); ++k) {
    const double weight = w.weights[k];
    auto r = table.row(w.ids[k]);
    if (weight == 0.0) continue;
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += weight * static_cast<double>(r[j]);
  }
  return MixedEmbedding(acc.begin(), acc.end());
}

}  // namespace moi
