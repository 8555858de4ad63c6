#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lclab/model.hpp"
#include "lclab/prune.hpp"
#include "lclab/quant.hpp"
#include "lclab/stats.hpp"

namespace lclab {

struct IdentitySpec {};

// One labeled compression method of a sweep.
struct CompressionSpec {
  std::string label;
  std::variant<IdentitySpec, PruneSpec, QuantSpec> method;
};

// A compressed checkpoint plus the runtime activation treatment it needs.
struct CompressedModel {
  Checkpoint ckpt;
  int activation_bits = 0;  // 0: activations untouched

  ForwardOptions forward_options() const;
};

// Applies `spec` to `base`. Wanda calibrates on `calibration`; random pruning
// without an explicit seed derives one from `seed`.
CompressedModel compress(const Checkpoint& base, const CompressionSpec& spec,
                         std::span<const TokenSequence> calibration, std::uint64_t seed);

// Stable softmax at temperature 1, in double precision.
std::vector<double> logits_to_probs(std::span<const float> logits);

// KL(p || q) = sum_i p_i ln(p_i / q_i) in nats. Terms with p_i == 0 or
// p_i == q_i contribute exactly 0; q_i is clamped below at 1e-10. Throws
// DimensionError on a length mismatch and InputError when either input is not
// normalized to within 1e-4.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct EvalMode {
  enum class Kind { kLast, kTailK };
  Kind kind = Kind::kLast;
  std::size_t k = 1;  // positions averaged in tail_k mode

  // Positions (within a length-L prefix) whose next-token KL is averaged.
  std::size_t first_position(std::size_t length) const;
};

struct EvalSample {
  std::string id;
  TokenSequence tokens;
};

struct KlStats {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation, 0 for n = 1
  std::size_t n = 0;
};

// Truncates each sample to its first `length` tokens, runs both models
// teacher-forced and averages KL(compressed || base) over the positions
// selected by `mode`. Samples shorter than `length` are skipped with a
// warning; throws EmptyEvaluationError if none remain.
KlStats eval_kl_at_length(const Checkpoint& base, const CompressedModel& compressed,
                          std::span<const EvalSample> samples, std::size_t length, EvalMode mode);

struct SweepRecord {
  std::string method_label;
  std::size_t context_length = 0;
  double kl_mean = 0.0;
  double kl_std = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const SweepRecord&, const SweepRecord&) = default;
};

struct SweepOptions {
  std::vector<std::size_t> lengths;
  EvalMode mode;
  std::uint64_t seed = 0;
  // Called after each method finishes, for progress reporting.
  std::function<void(const CompressionSpec&, double seconds)> on_method_done;
};

// Evaluates every spec against `base` at every length. Each sample runs one
// forward pass per model at its longest usable length; shorter lengths read
// the matching rows of that pass, which by causality equal the logits of the
// truncated input bit for bit. The base model's distributions are computed
// once and shared by all specs.
std::vector<SweepRecord> run_sweeps(const Checkpoint& base, std::span<const CompressionSpec> specs,
                                    std::span<const EvalSample> samples,
                                    std::span<const TokenSequence> calibration, const SweepOptions& options);

std::vector<SweepRecord> run_sweep(const Checkpoint& base, const CompressionSpec& spec,
                                   std::span<const std::size_t> lengths, std::span<const EvalSample> samples,
                                   std::span<const TokenSequence> calibration, std::uint64_t seed,
                                   EvalMode mode = {});

// OLS of kl_mean against context_length.
LinearFit fit_slope(std::span<const SweepRecord> records);

inline constexpr const char* kSweepCsvHeader = "method_label,context_length,kl_mean,kl_std,n_samples";
std::string write_sweep_csv(std::span<const SweepRecord> records);
std::vector<SweepRecord> read_sweep_csv(std::string_view text);

// Writes a one-line warning to stderr. Thread-safe.
void log_warning(const std::string& message);

}  // namespace lclab
