#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "aligncap/rng.hpp"
#include "aligncap/tensor.hpp"

namespace aligncap {

// Differentiable primitives. Every op treats its operands as rows x cols
// matrices (see Tensor::rows/cols) unless stated otherwise.

/// [m x k] * [k x n]. Both operands must be rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Elementwise sum. `b` may match `a`'s shape, be a length-cols vector
/// (broadcast over rows), or hold a single element (broadcast everywhere).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product with the same broadcasting rules as add().
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);

/// Stable log(1 + exp(x)) = max(x, 0) + log1p(exp(-|x|)).
double softplus(double x);
double sigmoid(double x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column-wise mean over rows: [r x d] -> [1 x d].
Tensor mean_rows(const Tensor& a);

/// Row softmax with max subtraction. With `causal_offset`, row r only sees
/// columns c <= r + offset; masked entries are exactly zero.
Tensor softmax(const Tensor& x, std::optional<std::size_t> causal_offset = std::nullopt);

/// Per-row normalization followed by `gain` and `bias` (both length cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Inverted dropout. Identity when `training` is false or p == 0. Masks are
/// drawn from `rng`, one draw per element.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

/// Row lookup: out[i] = table[ids[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Sparse linear row mixing: out[r] = sum_k weight_k * src[index_k].
struct RowMix {
  std::vector<std::vector<std::pair<std::size_t, double>>> terms;
};
Tensor mix_rows(const Tensor& src, const RowMix& mix);

/// Packs scalar tensors into a tensor of the given shape.
Tensor stack_scalars(std::span<const Tensor> scalars, Shape shape);

/// Mean token-level cross entropy of row logits against target ids.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Sum of elementwise products, as a scalar.
Tensor dot(const Tensor& a, const Tensor& b);

}  // namespace aligncap
