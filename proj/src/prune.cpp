#include "lclab/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lclab/errors.hpp"
#include "lclab/rng.hpp"

namespace lclab {

const char* to_string(PruneMethod m) {
  switch (m) {
    case PruneMethod::kMagnitude: return "magnitude";
    case PruneMethod::kWanda: return "wanda";
    case PruneMethod::kRandom: return "random";
  }
  return "?";
}

const char* to_string(Granularity g) { return g == Granularity::kPerRow ? "per_row" : "per_layer"; }

PruneMethod parse_prune_method(const std::string& s) {
  if (s == "magnitude") return PruneMethod::kMagnitude;
  if (s == "wanda") return PruneMethod::kWanda;
  if (s == "random") return PruneMethod::kRandom;
  throw ConfigError("unknown prune method '" + s + "'");
}

Granularity parse_granularity(const std::string& s) {
  if (s == "per_row") return Granularity::kPerRow;
  if (s == "per_layer") return Granularity::kPerLayer;
  throw ConfigError("unknown granularity '" + s + "'");
}

void PruneSpec::validate() const {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("prune ratio must be in [0, 1)");
  if (method == PruneMethod::kRandom && !seed) throw ConfigError("random pruning requires a seed");
  if (method == PruneMethod::kWanda && granularity == Granularity::kPerLayer) {
    throw ConfigError("wanda compares scores per output row");
  }
  if (method == PruneMethod::kWanda && include_embeddings) {
    throw ConfigError("wanda has no activation norms for the embedding table");
  }
}

Granularity PruneSpec::effective_granularity() const {
  if (granularity) return *granularity;
  return method == PruneMethod::kMagnitude ? Granularity::kPerLayer : Granularity::kPerRow;
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("prune ratio must be in [0, 1)");
}

std::size_t prune_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
}

// Zeroes the `k` entries of `values` with the lowest score; equal scores are
// ordered by position.
template <typename ScoreFn>
void zero_lowest(std::span<float> values, std::size_t k, ScoreFn score) {
  if (k == 0) return;
  std::vector<double> s(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) s[i] = score(i);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto before = [&](std::size_t a, std::size_t b) { return s[a] < s[b] || (s[a] == s[b] && a < b); };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  for (std::size_t i = 0; i < k; ++i) values[idx[i]] = 0.0f;
}

}  // namespace

CalibrationNorms calibrate(const Checkpoint& ckpt, std::span<const TokenSequence> calibration) {
  if (calibration.empty()) throw ConfigError("calibration set is empty");
  const PreparedModel model(ckpt);
  std::map<std::string, std::vector<double>> sumsq;
  ForwardOptions opts;
  opts.hook = [&](const ActivationSite& site, const Tensor& x) {
    std::vector<double> acc(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const auto row = x.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) acc[c] += static_cast<double>(row[c]) * row[c];
    }
    for (const auto& name : site.consumers) {
      auto& dst = sumsq[name];
      if (dst.empty()) dst.assign(acc.size(), 0.0);
      for (std::size_t c = 0; c < acc.size(); ++c) dst[c] += acc[c];
    }
  };
  for (const auto& seq : calibration) model.forward(seq, opts);
  for (auto& [name, v] : sumsq) {
    for (double& x : v) x = std::sqrt(x);
  }
  return sumsq;
}

Tensor prune_magnitude(const Tensor& w, double ratio, Granularity granularity) {
  check_ratio(ratio);
  Tensor out = w;
  if (granularity == Granularity::kPerLayer || w.rank() != 2) {
    auto v = out.data();
    zero_lowest(v, prune_count(ratio, v.size()), [&](std::size_t i) { return std::fabs(w.data()[i]); });
    return out;
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto src = w.row(r);
    zero_lowest(out.row(r), prune_count(ratio, src.size()), [&](std::size_t i) { return std::fabs(src[i]); });
  }
  return out;
}

Tensor prune_wanda(const Tensor& w, std::span<const double> col_norms, double ratio) {
  check_ratio(ratio);
  if (w.rank() != 2 || col_norms.size() != w.cols()) {
    throw DimensionError("wanda: norm vector length must equal the weight input dimension");
  }
  Tensor out = w;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto src = w.row(r);
    zero_lowest(out.row(r), prune_count(ratio, src.size()),
                [&](std::size_t j) { return std::fabs(static_cast<double>(src[j])) * col_norms[j]; });
  }
  return out;
}

Tensor prune_random(const Tensor& w, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  Tensor out = w;
  Rng rng(seed);
  for (std::size_t flat : fisher_yates_prefix(rng, w.numel(), prune_count(ratio, w.numel()))) {
    out.data()[flat] = 0.0f;
  }
  return out;
}

Checkpoint apply_prune(const Checkpoint& ckpt, const PruneSpec& spec, const CalibrationNorms* norms) {
  spec.validate();
  if (spec.method == PruneMethod::kWanda && norms == nullptr) {
    throw ConfigError("wanda pruning requires calibration norms");
  }
  std::vector<std::string> targets = projection_names(ckpt.config);
  if (spec.include_embeddings) {
    targets.push_back("tok_embeddings");
    targets.push_back("output");
  }
  std::vector<Tensor> pruned(targets.size());
  const auto n = static_cast<std::int64_t>(targets.size());
  const Granularity gran = spec.effective_granularity();

  // Exceptions cannot cross the parallel region; resolve norm lookups first.
  std::vector<const std::vector<double>*> target_norms(targets.size(), nullptr);
  if (spec.method == PruneMethod::kWanda) {
    for (std::size_t i = 0; i < targets.size(); ++i) {
      auto it = norms->find(targets[i]);
      if (it == norms->end()) throw ConfigError("no calibration norms for '" + targets[i] + "'");
      if (it->second.size() != ckpt.tensor(targets[i]).cols()) {
        throw DimensionError("calibration norms for '" + targets[i] + "' have the wrong length");
      }
      target_norms[i] = &it->second;
    }
  }
  for (const auto& name : targets) ckpt.tensor(name);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const Tensor& w = ckpt.tensors.at(targets[i]);
    switch (spec.method) {
      case PruneMethod::kMagnitude: pruned[i] = prune_magnitude(w, spec.ratio, gran); break;
      case PruneMethod::kWanda: pruned[i] = prune_wanda(w, *target_norms[i], spec.ratio); break;
      case PruneMethod::kRandom:
        pruned[i] = prune_random(w, spec.ratio, derive_seed(*spec.seed, static_cast<std::uint64_t>(i)));
        break;
    }
  }
  Checkpoint out = ckpt;
  for (std::size_t i = 0; i < targets.size(); ++i) out.tensors[targets[i]] = std::move(pruned[i]);
  return out;
}

}  // namespace lclab
