#pragma once

// Length normalization and averaging of prompt embedding matrices.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "moi/error.hpp"

namespace moi {

// L x d row-major matrix, one embedding per prompt position.
class PromptMatrix {
 public:
  PromptMatrix() = default;

  PromptMatrix(std::size_t rows, std::size_t dim, std::vector<double> values)
      : rows_(rows), dim_(dim), values_(std::move(values)) {
    if (rows_ < 1 || dim_ < 1) throw InvalidInputError("prompt matrix needs at least one row and column");
    if (values_.size() != rows_ * dim_) throw ShapeError("prompt matrix size does not match its shape");
    for (double v : values_) {
      if (!std::isfinite(v)) throw InvalidInputError("non-finite prompt embedding entry");
    }
  }

  static PromptMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw InvalidInputError("prompt matrix needs at least one row");
    const std::size_t dim = rows.front().size();
    std::vector<double> values;
    values.reserve(rows.size() * dim);
    for (const auto& r : rows) {
      if (r.size() != dim) throw ShapeError("ragged prompt matrix rows");
      values.insert(values.end(), r.begin(), r.end());
    }
    return PromptMatrix(rows.size(), dim, std::move(values));
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }

  friend bool operator==(const PromptMatrix&, const PromptMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// Resamples along the sequence axis. Input row k sits at k/(L-1) on [0, 1];
// output row j is the piecewise-linear interpolant at j/(target-1). A
// single-row input is repeated, and a single-row target takes row 0.
inline PromptMatrix interpolate_length(const PromptMatrix& m, std::size_t target) {
  if (target < 1) throw RangeError("target length must be at least 1");
  const std::size_t length = m.rows();
  const std::size_t d = m.dim();
  std::vector<double> out(target * d);
  for (std::size_t j = 0; j < target; ++j) {
    double* dst = out.data() + j * d;
    if (length == 1 || target == 1) {
      auto src = m.row(0);
      std::copy(src.begin(), src.end(), dst);
      continue;
    }
    // Exact rational position j * (L-1) / (target-1) = k + rem / (target-1).
    const std::size_t num = j * (length - 1);
    const std::size_t k = num / (target - 1);
    const std::size_t rem = num % (target - 1);
    auto a = m.row(k);
    if (rem == 0) {
      std::copy(a.begin(), a.end(), dst);
      continue;
    }
    const double f = static_cast<double>(rem) / static_cast<double>(target - 1);
    auto b = m.row(k + 1);
    for (std::size_t c = 0; c < d; ++c) dst[c] = (1.0 - f) * a[c] + f * b[c];
  }
  return PromptMatrix(target, d, std::move(out));
}

// Elementwise mean of every prompt resampled to `target` rows; target 0
// means the longest prompt's length.
inline PromptMatrix blend_prompts(const std::vector<PromptMatrix>& prompts, std::size_t target = 0) {
  if (prompts.empty()) throw InvalidInputError("cannot blend an empty prompt list");
  const std::size_t d = prompts.front().dim();
  std::size_t longest = 0;
  for (const auto& p : prompts) {
    if (p.dim() != d) throw ShapeError("prompts disagree on embedding dimension");
    longest = std::max(longest, p.rows());
  }
  if (target == 0) target = longest;

  std::vector<double> acc(target * d, 0.0);
  for (const auto& p : prompts) {
    const PromptMatrix r = interpolate_length(p, target);
    auto v = r.values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double n = static_cast<double>(prompts.size());
  for (double& x : acc) x /= n;
  return PromptMatrix(target, d, std::move(acc));
}

// {"dim": d, "rows": [[...], ...]}
inline nlohmann::json to_json(const PromptMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return {{"dim", m.dim()}, {"rows", rows}};
}

inline PromptMatrix prompt_matrix_from_json(const nlohmann::json& j) {
  try {
    const auto dim = j.at("dim").get<std::size_t>();
    const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
    PromptMatrix m = PromptMatrix::from_rows(rows);
    if (m.dim() != dim) throw ShapeError("declared dim does not match row length");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed prompt matrix: ") + e.what());
  }
}

// Accepts a single matrix object or {"prompts": [matrix, ...]}.
inline std::vector<PromptMatrix> read_prompt_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open prompt file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::vector<PromptMatrix> out;
  if (j.contains("prompts")) {
    for (const auto& item : j.at("prompts")) out.push_back(prompt_matrix_from_json(item));
  } else {
    out.push_back(prompt_matrix_from_json(j));
  }
  return out;
}

inline void write_prompt_file(const PromptMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << to_json(m).dump() << '\n';
}

}  // namespace moi
