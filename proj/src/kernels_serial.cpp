#include <cmath>
#include <string>
#include <vector>

#include "kernels_detail.hpp"
#include "lclab/errors.hpp"
#include "lclab/kernels.hpp"

namespace lclab::kernels::serial {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y = x;
  for (std::size_t r = 0; r < y.rows(); ++r) detail::softmax_row(y.row(r));
  return y;
}

Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, float eps) {
  if (gain.numel() != x.cols()) throw DimensionError("rms_norm: gain length != row length");
  Tensor y({x.rows(), x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) detail::rms_norm_row(x.row(r), gain.data(), eps, y.row(r));
  return y;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  if (q.shape() != k.shape() || q.shape() != v.shape() || q.rank() != 2) {
    throw DimensionError("attention: q, k, v shapes differ");
  }
  const std::size_t t = q.rows(), d_model = q.cols();
  if (n_heads == 0 || d_model % n_heads != 0) throw ConfigError("attention: d_model not divisible by n_heads");
  const std::size_t dh = d_model / n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor out({t, d_model});
  std::vector<float> scores(t);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        float dot = 0.0f;
        for (std::size_t d = 0; d < dh; ++d) dot += q(i, off + d) * k(j, off + d);
        scores[j] = dot * scale;
      }
      detail::softmax_row(std::span<float>(scores.data(), i + 1));
      for (std::size_t d = 0; d < dh; ++d) {
        float acc = 0.0f;
        for (std::size_t j = 0; j <= i; ++j) acc += scores[j] * v(j, off + d);
        out(i, off + d) = acc;
      }
    }
  }
  return out;
}

}  // namespace lclab::kernels::serial
