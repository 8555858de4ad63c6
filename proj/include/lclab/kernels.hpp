#pragma once

#include <cstdint>
#include <span>

#include "lclab/tensor.hpp"

// Dense kernels for the decoder forward pass.
//
// Every reduction runs in a fixed left-to-right order and each output element
// is produced by exactly one thread, so the OpenMP kernels return bit-identical
// results for any thread count. The `serial` namespace holds plain loop
// reference versions of the parallel kernels; tests check the two agree bitwise
// and bench/ compares their throughput.
namespace lclab::kernels {

// [m x k] x [k x n] -> [m x n]. Each c[i][j] accumulates a[i][0..k) in order.
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax with max subtraction. Normalizer accumulated in double.
Tensor softmax_rows(const Tensor& x);
void softmax_inplace(std::span<float> row);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps) for a rank-1 x.
Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps);
// rms_norm applied to every row of a rank-2 x.
Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, float eps);

// Rotates consecutive pairs (x[2j], x[2j+1]) of row r by
// positions[r] * theta^(-2j/d). Throws ConfigError for odd d.
Tensor rope_apply(const Tensor& x, std::span<const std::int64_t> positions, double theta);
// Same rotation applied independently to each d_model/n_heads slice of a row.
Tensor rope_apply_heads(const Tensor& x, std::size_t n_heads, std::span<const std::int64_t> positions,
                        double theta);

// Multi-head causal attention over projected q, k, v of shape [t x d_model].
// Row i of head h attends to rows 0..i with scores dot(q, k) / sqrt(d_head).
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads);
// Attention for a subset of query rows: q row r sits at position positions[r]
// and attends to k, v rows 0..positions[r].
Tensor causal_attention_rows(const Tensor& q, std::span<const std::size_t> positions, const Tensor& k,
                             const Tensor& v, std::size_t n_heads);

Tensor transpose(const Tensor& x);

// silu(gate) * up, elementwise.
Tensor swiglu(const Tensor& gate, const Tensor& up);

// In-place a += b.
void add_inplace(Tensor& a, const Tensor& b);

// Sets the OpenMP team size used by the parallel kernels (n < 1 keeps the
// current value) and disables nested teams. Returns the effective count.
int set_threads(int n);
int max_threads();

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, float eps);
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads);

}  // namespace serial

}  // namespace lclab::kernels
