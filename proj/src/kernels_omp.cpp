#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kernels_detail.hpp"
#include "lclab/errors.hpp"
#include "lclab/kernels.hpp"

namespace lclab::kernels {

namespace {

using Index = std::int64_t;

void require_matrix(const Tensor& x, const char* what) {
  if (x.rank() != 2) throw DimensionError(std::string(what) + ": expected a rank-2 tensor");
}

}  // namespace

int set_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
  omp_set_max_active_levels(1);
  return omp_get_max_threads();
}

int max_threads() { return omp_get_max_threads(); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions disagree");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const float* A = a.data().data();
  const float* B = b.data().data();
  float* C = c.data().data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    float* crow = C + i * n;
    const float* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  Tensor y = x;
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(y.rows()); ++r) detail::softmax_row(y.row(r));
  return y;
}

void softmax_inplace(std::span<float> row) { detail::softmax_row(row); }

Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps) {
  if (x.rank() != 1 || gain.shape() != x.shape()) throw DimensionError("rms_norm: x and gain must be equal-length vectors");
  Tensor y(x.shape());
  detail::rms_norm_row(x.data(), gain.data(), eps, y.data());
  return y;
}

Tensor rms_norm_rows(const Tensor& x, const Tensor& gain, float eps) {
  require_matrix(x, "rms_norm_rows");
  if (gain.numel() != x.cols()) throw DimensionError("rms_norm: gain length != row length");
  Tensor y({x.rows(), x.cols()});
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(x.rows()); ++r) {
    detail::rms_norm_row(x.row(r), gain.data(), eps, y.row(r));
  }
  return y;
}

Tensor rope_apply_heads(const Tensor& x, std::size_t n_heads, std::span<const std::int64_t> positions,
                        double theta) {
  require_matrix(x, "rope");
  if (n_heads == 0 || x.cols() % n_heads != 0) throw ConfigError("rope: row length not divisible by head count");
  const std::size_t dh = x.cols() / n_heads;
  if (dh % 2 != 0) throw ConfigError("rope: head dimension must be even");
  if (positions.size() != x.rows()) throw DimensionError("rope: one position per row required");
  for (std::int64_t p : positions) {
    if (p < 0) throw ConfigError("rope: positions must be non-negative");
  }
  std::vector<double> inv_freq(dh / 2);
  for (std::size_t j = 0; j < dh / 2; ++j) {
    inv_freq[j] = std::pow(theta, -2.0 * static_cast<double>(j) / static_cast<double>(dh));
  }
  Tensor y = x;
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(x.rows()); ++r) {
    auto row = y.row(r);
    const double pos = static_cast<double>(positions[r]);
    for (std::size_t j = 0; j < dh / 2; ++j) {
      const double angle = pos * inv_freq[j];
      const double c = std::cos(angle), s = std::sin(angle);
      for (std::size_t h = 0; h < n_heads; ++h) {
        float& x0 = row[h * dh + 2 * j];
        float& x1 = row[h * dh + 2 * j + 1];
        const double a = x0, b = x1;
        x0 = static_cast<float>(a * c - b * s);
        x1 = static_cast<float>(a * s + b * c);
      }
    }
  }
  return y;
}

Tensor rope_apply(const Tensor& x, std::span<const std::int64_t> positions, double theta) {
  return rope_apply_heads(x, 1, positions, theta);
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor y({c, r});
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < static_cast<Index>(c); ++j) {
    for (std::size_t i = 0; i < r; ++i) y(j, i) = x(i, j);
  }
  return y;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads) {
  if (q.shape() != k.shape() || q.rank() != 2) throw DimensionError("attention: q, k, v shapes differ");
  std::vector<std::size_t> positions(q.rows());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  return causal_attention_rows(q, positions, k, v, n_heads);
}

Tensor causal_attention_rows(const Tensor& q, std::span<const std::size_t> positions, const Tensor& k,
                             const Tensor& v, std::size_t n_heads) {
  if (k.shape() != v.shape() || k.rank() != 2 || q.rank() != 2 || q.cols() != k.cols()) {
    throw DimensionError("attention: q, k, v shapes differ");
  }
  if (positions.size() != q.rows()) throw DimensionError("attention: one position per query row required");
  const std::size_t t = k.rows(), d_model = k.cols(), m = q.rows();
  for (std::size_t p : positions) {
    if (p >= t) throw DimensionError("attention: query position beyond key rows");
  }
  if (n_heads == 0 || d_model % n_heads != 0) throw ConfigError("attention: d_model not divisible by n_heads");
  const std::size_t dh = d_model / n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Tensor kt = transpose(k);  // [d_model x t]; head h owns rows h*dh..h*dh+dh
  // Per-head contiguous values: vh[h][j][d].
  std::vector<float> vh(t * d_model);
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t d = 0; d < dh; ++d) vh[(h * t + j) * dh + d] = v.data()[j * d_model + h * dh + d];
    }
  }
  Tensor out({m, d_model});
  const Index total = static_cast<Index>(n_heads * m);

#pragma omp parallel
  {
    std::vector<float> scores(t);
    std::vector<float> acc(dh);
#pragma omp for schedule(dynamic, 8)
    for (Index task = 0; task < total; ++task) {
      // Head-major, longest rows first within a head.
      const std::size_t h = static_cast<std::size_t>(task) / m;
      const std::size_t i = m - 1 - static_cast<std::size_t>(task) % m;
      const std::size_t off = h * dh;
      const std::size_t n = positions[i] + 1;
      float* __restrict s = scores.data();
      const float* qrow = q.data().data() + i * d_model + off;
      const float* kbase = kt.data().data() + off * t;
      constexpr std::size_t kJ = 16;
      std::size_t j0 = 0;
      for (; j0 + kJ <= n; j0 += kJ) {
        float blk[kJ] = {};
        for (std::size_t d = 0; d < dh; ++d) {
          const float qd = qrow[d];
          const float* krow = kbase + d * t + j0;
          for (std::size_t u = 0; u < kJ; ++u) blk[u] += qd * krow[u];
        }
        for (std::size_t u = 0; u < kJ; ++u) s[j0 + u] = blk[u] * scale;
      }
      for (std::size_t j = j0; j < n; ++j) {
        float acc_s = 0.0f;
        for (std::size_t d = 0; d < dh; ++d) acc_s += qrow[d] * kbase[d * t + j];
        s[j] = acc_s * scale;
      }
      detail::softmax_row(std::span<float>(s, n));
      float* __restrict o = acc.data();
      const float* vbase = vh.data() + h * t * dh;
      constexpr std::size_t kD = 16;
      std::size_t d0 = 0;
      for (; d0 + kD <= dh; d0 += kD) {
        float blk[kD] = {};
        for (std::size_t j = 0; j < n; ++j) {
          const float a = s[j];
          const float* vrow = vbase + j * dh + d0;
          for (std::size_t u = 0; u < kD; ++u) blk[u] += a * vrow[u];
        }
        for (std::size_t u = 0; u < kD; ++u) o[d0 + u] = blk[u];
      }
      for (std::size_t d = d0; d < dh; ++d) {
        float acc_o = 0.0f;
        for (std::size_t j = 0; j < n; ++j) acc_o += s[j] * vbase[j * dh + d];
        o[d] = acc_o;
      }
      float* dst = out.data().data() + i * d_model + off;
      for (std::size_t d = 0; d < dh; ++d) dst[d] = o[d];
    }
  }
  return out;
}

Tensor swiglu(const Tensor& gate, const Tensor& up) {
  if (gate.shape() != up.shape()) throw DimensionError("swiglu: gate/up shapes differ");
  Tensor y(gate.shape());
  const auto g = gate.data();
  const auto u = up.data();
  auto out = y.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(out.size()); ++i) out[i] = detail::silu(g[i]) * u[i];
  return y;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add: shapes differ");
  auto x = a.data();
  const auto y = b.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(x.size()); ++i) x[i] += y[i];
}

}  // namespace lclab::kernels
