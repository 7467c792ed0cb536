#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xmodal/tensor.hpp"

// Differentiable tensor ops. Each op computes its forward value eagerly and
// records a backward closure on the tape when an input requires gradients.
// Broadcasting is limited to a shared trailing operand (weights, biases,
// position tables) over leading batch dimensions.
namespace xmodal::ops {

// a[..., m, k] x b[k, n] -> [..., m, n] (b shared across the leading dims), or
// a[B, m, k] x b[B, k, n] -> [B, m, n]. With transpose_b, b is read as its
// last-two-axes transpose.
template <typename T>
BasicTensor<T> matmul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b, bool transpose_b = false);

template <typename T>
BasicTensor<T> add(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

// x + b where b's shape is a trailing suffix of x's shape.
template <typename T>
BasicTensor<T> add_broadcast(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(BasicTape<T>& tape, const BasicTensor<T>& x, double factor);

template <typename T>
BasicTensor<T> mul(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

// Subgradient at 0 is 0.
template <typename T>
BasicTensor<T> relu(BasicTape<T>& tape, const BasicTensor<T>& x);

// Normalizes over the last axis, then applies gain and bias.
template <typename T>
BasicTensor<T> layer_norm(BasicTape<T>& tape, const BasicTensor<T>& x, const BasicTensor<T>& gain,
                          const BasicTensor<T>& bias, double eps);

// softmax(x / tau) over the last axis.
template <typename T>
BasicTensor<T> softmax_with_temperature(BasicTape<T>& tape, const BasicTensor<T>& logits, double tau);

template <typename T>
BasicTensor<T> log_softmax_with_temperature(BasicTape<T>& tape, const BasicTensor<T>& logits, double tau);

// Scales each last-axis row to unit L2 norm. Zero rows are an error.
template <typename T>
BasicTensor<T> l2_normalize(BasicTape<T>& tape, const BasicTensor<T>& x);

// Mean over the second-to-last axis: [..., N, c] -> [..., c].
template <typename T>
BasicTensor<T> mean_rows(BasicTape<T>& tape, const BasicTensor<T>& x);

// Sum of all elements, accumulated in double. Returns a scalar.
template <typename T>
BasicTensor<T> sum(BasicTape<T>& tape, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> dot(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> cosine_similarity(BasicTape<T>& tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> reshape(BasicTape<T>& tape, const BasicTensor<T>& x, Shape shape);

// Concatenates along axis 0; trailing extents must agree.
template <typename T>
BasicTensor<T> concat_rows(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& parts);

// [B, N, c] -> [B*heads, N, c/heads] and back.
template <typename T>
BasicTensor<T> split_heads(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t heads);
template <typename T>
BasicTensor<T> merge_heads(BasicTape<T>& tape, const BasicTensor<T>& x, std::size_t heads);

// Rows of table[V, c] selected by ids -> [ids.size(), c].
template <typename T>
BasicTensor<T> gather_rows(BasicTape<T>& tape, const BasicTensor<T>& table, std::span<const std::uint32_t> ids);

// Row r of the result is when_true's row r if mask[r], otherwise when_false's.
// Rows are last-axis vectors.
template <typename T>
BasicTensor<T> select_rows(BasicTape<T>& tape, std::span<const std::uint8_t> mask, const BasicTensor<T>& when_true,
                           const BasicTensor<T>& when_false);

// sum_l weights[l] * xs[l]; all xs share one shape.
template <typename T>
BasicTensor<T> weighted_sum(BasicTape<T>& tape, const std::vector<BasicTensor<T>>& xs, const BasicTensor<T>& weights);

// -mean_r logp[r, targets[r]] over rows whose target is non-negative,
// accumulated in double. logp is [..., C]; targets has one entry per row.
template <typename T>
BasicTensor<T> nll(BasicTape<T>& tape, const BasicTensor<T>& logp, std::span<const std::int64_t> targets);

}  // namespace xmodal::ops
