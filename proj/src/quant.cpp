#include "lclab/quant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lclab/errors.hpp"

namespace lclab {

SaliencyMetric parse_saliency_metric(const std::string& s) {
  if (s == "max_abs") return SaliencyMetric::kMaxAbs;
  if (s == "l2") return SaliencyMetric::kL2;
  throw ConfigError("unknown saliency metric '" + s + "'");
}

const char* to_string(SaliencyMetric m) { return m == SaliencyMetric::kMaxAbs ? "max_abs" : "l2"; }

void QuantSpec::validate() const {
  auto supported = [](int b) { return b == 3 || b == 4 || b == 8; };
  if (!supported(weight_bits)) throw ConfigError("weight_bits must be 3, 4 or 8");
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  if (activation_bits != 0 && activation_bits != 8) throw ConfigError("activation_bits must be 8 (or 0 for none)");
  if (!(salient_fraction >= 0.0 && salient_fraction < 1.0)) throw ConfigError("salient_fraction must be in [0, 1)");
  if (salient_fraction > 0.0) {
    if (!supported(salient_bits)) throw ConfigError("salient_bits must be 3, 4 or 8");
    if (salient_bits <= weight_bits) throw ConfigError("salient_bits must exceed weight_bits");
  }
}

int symmetric_qmax(int bits) {
  if (bits < 2 || bits > 8) throw ConfigError("bit width must be in [2, 8]");
  return (1 << (bits - 1)) - 1;
}

double QuantizedGroup::scale() const noexcept {
  return bits == 0 ? 0.0 : static_cast<double>(max_abs) / ((1 << (bits - 1)) - 1);
}

float QuantizedGroup::dequant(std::size_t i) const noexcept {
  // q * max_abs / qmax maps q = +-qmax back to +-max_abs exactly, which makes
  // re-quantizing the dequantized group reproduce it bit for bit.
  const int qmax = (1 << (bits - 1)) - 1;
  return static_cast<float>(static_cast<double>(q[i]) * max_abs / qmax);
}

std::vector<float> QuantizedGroup::dequantize() const {
  std::vector<float> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = dequant(i);
  return out;
}

QuantizedGroup quantize_group(std::span<const float> w, int bits) {
  const int qmax = symmetric_qmax(bits);
  QuantizedGroup g;
  g.bits = bits;
  g.q.assign(w.size(), 0);
  float m = 0.0f;
  for (float v : w) m = std::max(m, std::fabs(v));
  g.max_abs = m;
  if (m == 0.0f) return g;
  for (std::size_t i = 0; i < w.size(); ++i) {
    // nearbyint under the default FE_TONEAREST mode rounds half to even.
    const double r = std::nearbyint(static_cast<double>(w[i]) * qmax / m);
    g.q[i] = static_cast<std::int8_t>(std::clamp(r, -static_cast<double>(qmax), static_cast<double>(qmax)));
  }
  return g;
}

namespace {

std::size_t groups_per_row(std::size_t cols, std::size_t group_size) { return (cols + group_size - 1) / group_size; }

void require_matrix(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("weight quantization expects a rank-2 tensor");
}

// Fake-quantizes group g of `w` into `out` at `bits`.
void fake_quant_group(const Tensor& w, Tensor& out, std::size_t group_size, std::size_t g, int bits) {
  const std::size_t per_row = groups_per_row(w.cols(), group_size);
  const std::size_t r = g / per_row;
  const std::size_t c0 = (g % per_row) * group_size;
  const std::size_t len = std::min(group_size, w.cols() - c0);
  const auto src = w.row(r).subspan(c0, len);
  const QuantizedGroup qg = quantize_group(src, bits);
  auto dst = out.row(r).subspan(c0, len);
  for (std::size_t i = 0; i < len; ++i) dst[i] = qg.dequant(i);
}

Tensor fake_quant_all(const Tensor& w, std::size_t group_size, const std::vector<int>& bits_per_group) {
  Tensor out(w.shape());
  const auto n = static_cast<std::int64_t>(bits_per_group.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t g = 0; g < n; ++g) fake_quant_group(w, out, group_size, static_cast<std::size_t>(g), bits_per_group[g]);
  return out;
}

}  // namespace

Tensor quantize_weights(const Tensor& w, const QuantSpec& spec) {
  require_matrix(w);
  symmetric_qmax(spec.weight_bits);
  if (spec.group_size < 1) throw ConfigError("group_size must be >= 1");
  const std::size_t n_groups = w.rows() * groups_per_row(w.cols(), spec.group_size);
  return fake_quant_all(w, spec.group_size, std::vector<int>(n_groups, spec.weight_bits));
}

std::vector<std::size_t> select_salient_groups(const Tensor& w, std::size_t group_size, double fraction,
                                               SaliencyMetric metric) {
  require_matrix(w);
  if (group_size < 1) throw ConfigError("group_size must be >= 1");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("salient fraction must be in [0, 1)");
  const std::size_t per_row = groups_per_row(w.cols(), group_size);
  const std::size_t n_groups = w.rows() * per_row;
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_groups)));
  if (k == 0) return {};

  std::vector<double> score(n_groups, 0.0);
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t c0 = (g % per_row) * group_size;
    const auto src = w.row(g / per_row).subspan(c0, std::min(group_size, w.cols() - c0));
    double s = 0.0;
    for (float v : src) {
      if (metric == SaliencyMetric::kMaxAbs) {
        s = std::max(s, static_cast<double>(std::fabs(v)));
      } else {
        s += static_cast<double>(v) * v;
      }
    }
    score[g] = s;
  }
  std::vector<std::size_t> idx(n_groups);
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) { return score[a] > score[b] || (score[a] == score[b] && a < b); };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor quantize_mixed(const Tensor& w, const QuantSpec& spec) {
  spec.validate();
  require_matrix(w);
  const std::size_t n_groups = w.rows() * groups_per_row(w.cols(), spec.group_size);
  std::vector<int> bits(n_groups, spec.weight_bits);
  for (std::size_t g : select_salient_groups(w, spec.group_size, spec.salient_fraction, spec.saliency)) {
    bits[g] = spec.salient_bits;
  }
  return fake_quant_all(w, spec.group_size, bits);
}

Tensor quantize_activations_per_token(const Tensor& x, int bits) {
  if (bits < 2 || bits > 16) throw ConfigError("activation bits must be in [2, 16]");
  if (x.rank() != 2) throw DimensionError("activation quantization expects [tokens x features]");
  Tensor y = x;
  const double levels = std::ldexp(1.0, bits) - 1.0;
  const auto rows = static_cast<std::int64_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    auto row = y.row(static_cast<std::size_t>(r));
    const auto [lo_it, hi_it] = std::minmax_element(row.begin(), row.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) continue;
    const double scale = (hi - lo) / levels;
    const double zero = std::nearbyint(-lo / scale);
    for (float& v : row) {
      const double q = std::clamp(std::nearbyint(v / scale) + zero, 0.0, levels);
      v = static_cast<float>((q - zero) * scale);
    }
  }
  return y;
}

Checkpoint apply_quant(const Checkpoint& ckpt, const QuantSpec& spec) {
  spec.validate();
  Checkpoint out = ckpt;
  for (const auto& name : projection_names(ckpt.config)) {
    const Tensor& w = ckpt.tensor(name);
    out.tensors[name] = spec.salient_fraction > 0.0 ? quantize_mixed(w, spec) : quantize_weights(w, spec);
  }
  return out;
}

}  // namespace lclab
