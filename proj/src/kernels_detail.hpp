#pragma once

// Row primitives shared by the serial and OpenMP kernels so both perform the
// same floating-point operations in the same order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace lclab::kernels::detail {

inline void softmax_row(std::span<float> row) {
  if (row.empty()) return;
  float mx = row[0];
  for (float v : row) mx = std::max(mx, v);
  double sum = 0.0;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (float& v : row) v = static_cast<float>(v / sum);
}

inline void rms_norm_row(std::span<const float> x, std::span<const float> gain, float eps,
                         std::span<float> out) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(gain[i] * (x[i] * inv));
  }
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

}  // namespace lclab::kernels::detail
