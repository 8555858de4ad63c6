#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lclab/model.hpp"

namespace lclab {

enum class SaliencyMetric { kMaxAbs, kL2 };

struct QuantSpec {
  int weight_bits = 4;              // 3, 4 or 8
  std::size_t group_size = 128;     // along the input dimension
  int activation_bits = 0;          // 0 = weight-only, 8 = per-token activation quantization
  double salient_fraction = 0.0;    // in [0, 1)
  int salient_bits = 8;
  SaliencyMetric saliency = SaliencyMetric::kMaxAbs;

  void validate() const;
};

// Symmetric group: dequantized value q * max_abs / qmax with
// qmax = 2^(bits-1) - 1, so the step ("scale") is max_abs / qmax.
struct QuantizedGroup {
  int bits = 0;
  float max_abs = 0.0f;
  std::vector<std::int8_t> q;

  double scale() const noexcept;
  float dequant(std::size_t i) const noexcept;
  std::vector<float> dequantize() const;
};

int symmetric_qmax(int bits);

// q_i = round_half_even(w_i * qmax / max|w|). An all-zero group gets scale 0.
QuantizedGroup quantize_group(std::span<const float> w, int bits);

// Fake-quantizes every row group-by-group at spec.weight_bits (salient
// settings are ignored). The last group of a row may be partial.
Tensor quantize_weights(const Tensor& w, const QuantSpec& spec);

// Row-major group indices of the ceil(fraction * n_groups) groups with the
// largest saliency; ties go to the lower index. Returned ascending.
std::vector<std::size_t> select_salient_groups(const Tensor& w, std::size_t group_size, double fraction,
                                               SaliencyMetric metric = SaliencyMetric::kMaxAbs);

// Salient groups at spec.salient_bits, everything else at spec.weight_bits.
Tensor quantize_mixed(const Tensor& w, const QuantSpec& spec);

// Asymmetric min-max fake quantization of each row (token):
// scale = (max - min) / (2^bits - 1), zero = round(-min / scale).
// Constant rows are returned unchanged.
Tensor quantize_activations_per_token(const Tensor& x, int bits = 8);

// Quantizes every projection matrix of the checkpoint per `spec`.
Checkpoint apply_quant(const Checkpoint& ckpt, const QuantSpec& spec);

SaliencyMetric parse_saliency_metric(const std::string& s);
const char* to_string(SaliencyMetric m);

}  // namespace lclab
