#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lclab/model.hpp"

namespace lclab {

enum class PruneMethod { kMagnitude, kWanda, kRandom };
enum class Granularity { kPerRow, kPerLayer };

struct PruneSpec {
  PruneMethod method = PruneMethod::kMagnitude;
  double ratio = 0.0;  // in [0, 1)
  // Unset means the method default: per_layer for magnitude, per_row for Wanda.
  std::optional<Granularity> granularity;
  // Required for random pruning.
  std::optional<std::uint64_t> seed;
  // Also prune tok_embeddings and output. Off by default.
  bool include_embeddings = false;

  void validate() const;
  Granularity effective_granularity() const;
};

// Weight name -> per-input-column L2 norm of its activations over every
// calibration token.
using CalibrationNorms = std::map<std::string, std::vector<double>>;

CalibrationNorms calibrate(const Checkpoint& ckpt, std::span<const TokenSequence> calibration);

// Zeroes floor(ratio * group_size) smallest-|w| entries per comparison group
// (a row, or the whole matrix). Ties: the lower flat index goes first. Other
// entries are copied unchanged.
Tensor prune_magnitude(const Tensor& w, double ratio, Granularity granularity);

// Wanda score |W_ij| * col_norms[j], compared within each output row.
Tensor prune_wanda(const Tensor& w, std::span<const double> col_norms, double ratio);

// Zeroes floor(ratio * numel) entries picked by a seeded Fisher-Yates shuffle.
Tensor prune_random(const Tensor& w, double ratio, std::uint64_t seed);

// Prunes every attention and feed-forward projection (plus embeddings/output
// when requested). Norm gains are never touched. Wanda needs `norms`.
Checkpoint apply_prune(const Checkpoint& ckpt, const PruneSpec& spec, const CalibrationNorms* norms = nullptr);

const char* to_string(PruneMethod m);
const char* to_string(Granularity g);
PruneMethod parse_prune_method(const std::string& s);
Granularity parse_granularity(const std::string& s);

}  // namespace lclab
