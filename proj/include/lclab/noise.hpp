#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lclab/stats.hpp"

namespace lclab {

// How the noisy hidden state h_t is formed from per-position scalars q, k, v
// with key/value noise eps_k, eps_v ~ N(0, sigma^2):
//   kPerTerm       each term weighted by a softmax over its own single score,
//                  which is identically 1, so h_t = sum_{i<=t} (v_i + eps_v,i)
//                  and key noise has no effect.
//   kFirstOrder    clean h_t plus the linearized error
//                  sum_i (a_ti eps_v,i + da_ti/dk_i v_i eps_k,i), with a_t the
//                  joint softmax over i <= t and da_ti/dk_i = a_ti (1 - a_ti) q_t / sqrt(d_k).
//   kFullAttention exact joint-softmax attention with noisy keys and values.
enum class Interpretation { kPerTerm, kFirstOrder, kFullAttention };

const char* to_string(Interpretation i);
Interpretation parse_interpretation(std::string_view s);

struct VectorDist {
  enum class Kind { kNormal, kUniform };
  Kind kind = Kind::kNormal;
  // Multiplier applied to unit-variance draws. <= 0 means 1/sqrt(d_k).
  double scale = 0.0;
};

struct NoiseSimConfig {
  std::size_t t_max = 1024;
  double sigma = 0.1;
  std::size_t d_k = 1;
  std::size_t trials = 10000;
  Interpretation interpretation = Interpretation::kPerTerm;
  VectorDist vector_dist;
  std::uint64_t seed = 0;
  // Queries forced to zero, making every attention weight 1/t.
  bool force_uniform = false;
  bool key_noise = true;
  bool value_noise = true;
  // Positions evaluated: t_points if non-empty, else t_stride, 2 t_stride, ... <= t_max.
  std::size_t t_stride = 1;
  std::vector<std::size_t> t_points;

  void validate() const;
  std::vector<std::size_t> evaluation_points() const;
};

struct NoiseCurve {
  Interpretation interpretation = Interpretation::kPerTerm;
  std::vector<std::size_t> t;
  std::vector<double> variance;      // unbiased sample variance of h_t(noisy) - h_t(clean)
  std::vector<double> ci_halfwidth;  // 95% normal-approximation half-width
  std::size_t trials = 0;

  friend bool operator==(const NoiseCurve&, const NoiseCurve&) = default;
};

// Trial n draws from Rng(derive_seed(seed, n)), so curves do not depend on the
// thread count. Per position the stream order is q, k, v, eps_k, eps_v for
// every interpretation, which lets different interpretations share draws.
NoiseCurve simulate(const NoiseSimConfig& config);

// OLS of variance against t.
LinearFit fit_linear(const NoiseCurve& curve);

struct InterpretationResult {
  Interpretation interpretation;
  NoiseCurve curve;
  LinearFit fit;
};

// All three interpretations on the same seed.
std::vector<InterpretationResult> compare_interpretations(const NoiseSimConfig& config);

inline constexpr const char* kNoiseCsvHeader = "interpretation,t,variance,ci_halfwidth";
std::string write_noise_csv(std::span<const NoiseCurve> curves);
// Curves come back grouped by interpretation in first-appearance order.
// `trials` is not stored in the CSV and reads back as 0.
std::vector<NoiseCurve> read_noise_csv(std::string_view text);

}  // namespace lclab
