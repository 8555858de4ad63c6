#include "lclab/noise.hpp"

#include <algorithm>
#include <cmath>

#include "lclab/csv.hpp"
#include "lclab/errors.hpp"
#include "lclab/rng.hpp"

namespace lclab {

const char* to_string(Interpretation i) {
  switch (i) {
    case Interpretation::kPerTerm: return "per_term";
    case Interpretation::kFirstOrder: return "first_order";
    case Interpretation::kFullAttention: return "full_attention";
  }
  return "?";
}

Interpretation parse_interpretation(std::string_view s) {
  if (s == "per_term") return Interpretation::kPerTerm;
  if (s == "first_order") return Interpretation::kFirstOrder;
  if (s == "full_attention") return Interpretation::kFullAttention;
  throw ConfigError("unknown interpretation '" + std::string(s) + "'");
}

void NoiseSimConfig::validate() const {
  if (t_max < 2) throw ConfigError("noise sim: t_max must be >= 2");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("noise sim: sigma must be a finite value >= 0");
  if (d_k < 1) throw ConfigError("noise sim: d_k must be >= 1");
  if (trials < 100) throw ConfigError("noise sim: trials must be >= 100");
  if (t_stride < 1) throw ConfigError("noise sim: t_stride must be >= 1");
  for (std::size_t i = 0; i < t_points.size(); ++i) {
    if (t_points[i] < 1 || t_points[i] > t_max) throw ConfigError("noise sim: t_points must lie in [1, t_max]");
    if (i > 0 && t_points[i] <= t_points[i - 1]) throw ConfigError("noise sim: t_points must be strictly increasing");
  }
}

std::vector<std::size_t> NoiseSimConfig::evaluation_points() const {
  if (!t_points.empty()) return t_points;
  std::vector<std::size_t> pts;
  for (std::size_t t = t_stride; t <= t_max; t += t_stride) pts.push_back(t);
  return pts;
}

namespace {

constexpr std::size_t kTrialsPerBlock = 64;

struct Streams {
  std::vector<double> q, k, v, ek, ev;
};

void draw_streams(const NoiseSimConfig& c, std::uint64_t trial, Streams& s) {
  Rng rng(derive_seed(c.seed, trial));
  const double scale = c.vector_dist.scale > 0.0 ? c.vector_dist.scale : 1.0 / std::sqrt(static_cast<double>(c.d_k));
  auto draw = [&]() {
    if (c.vector_dist.kind == VectorDist::Kind::kNormal) return rng.normal() * scale;
    // Uniform on [-sqrt(3), sqrt(3)) has unit variance.
    return (2.0 * rng.uniform() - 1.0) * std::sqrt(3.0) * scale;
  };
  const double sk = c.key_noise ? c.sigma : 0.0;
  const double sv = c.value_noise ? c.sigma : 0.0;
  for (std::size_t i = 0; i < c.t_max; ++i) {
    s.q[i] = draw();
    s.k[i] = draw();
    s.v[i] = draw();
    s.ek[i] = sk * rng.normal();
    s.ev[i] = sv * rng.normal();
    if (c.force_uniform) s.q[i] = 0.0;
  }
}

// Softmax of scores[0..n) into weights, double precision.
void softmax(const double* scores, std::size_t n, double* weights) {
  double mx = scores[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, scores[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = std::exp(scores[i] - mx);
    sum += weights[i];
  }
  for (std::size_t i = 0; i < n; ++i) weights[i] /= sum;
}

// Error h_t(noisy) - h_t(clean) at every evaluation point for one trial.
void trial_errors(const NoiseSimConfig& c, const Streams& s, std::span<const std::size_t> points,
                  std::vector<double>& scratch, std::vector<double>& out) {
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(c.d_k));
  switch (c.interpretation) {
    case Interpretation::kPerTerm: {
      double clean = 0.0, noisy = 0.0;
      std::size_t next = 0;
      for (std::size_t t = 1; t <= c.t_max && next < points.size(); ++t) {
        const std::size_t i = t - 1;
        clean += s.v[i];
        noisy += s.v[i] + s.ev[i];
        if (t == points[next]) out[next++] = noisy - clean;
      }
      break;
    }
    case Interpretation::kFirstOrder: {
      double* score = scratch.data();
      double* a = scratch.data() + c.t_max;
      for (std::size_t p = 0; p < points.size(); ++p) {
        const std::size_t t = points[p];
        const double qs = s.q[t - 1] * inv_sqrt_dk;
        for (std::size_t i = 0; i < t; ++i) score[i] = qs * s.k[i];
        softmax(score, t, a);
        double err = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
          err += a[i] * s.ev[i] + a[i] * (1.0 - a[i]) * qs * s.v[i] * s.ek[i];
        }
        out[p] = err;
      }
      break;
    }
    case Interpretation::kFullAttention: {
      double* score = scratch.data();
      double* a = scratch.data() + c.t_max;
      double* score_n = scratch.data() + 2 * c.t_max;
      double* a_n = scratch.data() + 3 * c.t_max;
      for (std::size_t p = 0; p < points.size(); ++p) {
        const std::size_t t = points[p];
        const double qs = s.q[t - 1] * inv_sqrt_dk;
        for (std::size_t i = 0; i < t; ++i) {
          score[i] = qs * s.k[i];
          score_n[i] = qs * (s.k[i] + s.ek[i]);
        }
        softmax(score, t, a);
        softmax(score_n, t, a_n);
        double clean = 0.0, noisy = 0.0;
        for (std::size_t i = 0; i < t; ++i) {
          clean += a[i] * s.v[i];
          noisy += a_n[i] * (s.v[i] + s.ev[i]);
        }
        out[p] = noisy - clean;
      }
      break;
    }
  }
}

}  // namespace

NoiseCurve simulate(const NoiseSimConfig& config) {
  config.validate();
  const auto points = config.evaluation_points();
  const std::size_t n_blocks = (config.trials + kTrialsPerBlock - 1) / kTrialsPerBlock;
  std::vector<std::vector<RunningStats>> block_stats(n_blocks, std::vector<RunningStats>(points.size()));

#pragma omp parallel
  {
    Streams s;
    s.q.resize(config.t_max);
    s.k.resize(config.t_max);
    s.v.resize(config.t_max);
    s.ek.resize(config.t_max);
    s.ev.resize(config.t_max);
    std::vector<double> scratch(4 * config.t_max);
    std::vector<double> err(points.size());
#pragma omp for schedule(dynamic, 1)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
      auto& stats = block_stats[static_cast<std::size_t>(b)];
      const std::size_t begin = static_cast<std::size_t>(b) * kTrialsPerBlock;
      const std::size_t end = std::min(begin + kTrialsPerBlock, config.trials);
      for (std::size_t trial = begin; trial < end; ++trial) {
        draw_streams(config, trial, s);
        trial_errors(config, s, points, scratch, err);
        for (std::size_t p = 0; p < points.size(); ++p) stats[p].add(err[p]);
      }
    }
  }

  std::vector<RunningStats> total(points.size());
  for (const auto& block : block_stats) {
    for (std::size_t p = 0; p < points.size(); ++p) total[p].merge(block[p]);
  }
  NoiseCurve curve;
  curve.interpretation = config.interpretation;
  curve.t = points;
  curve.trials = config.trials;
  const double rel_se = std::sqrt(2.0 / static_cast<double>(config.trials - 1));
  for (const auto& st : total) {
    const double var = st.sample_variance();
    curve.variance.push_back(var);
    curve.ci_halfwidth.push_back(1.96 * var * rel_se);
  }
  return curve;
}

LinearFit fit_linear(const NoiseCurve& curve) {
  std::vector<double> xs(curve.t.begin(), curve.t.end());
  return fit_line(xs, curve.variance);
}

std::vector<InterpretationResult> compare_interpretations(const NoiseSimConfig& config) {
  std::vector<InterpretationResult> out;
  for (auto interp : {Interpretation::kPerTerm, Interpretation::kFirstOrder, Interpretation::kFullAttention}) {
    NoiseSimConfig c = config;
    c.interpretation = interp;
    NoiseCurve curve = simulate(c);
    const LinearFit fit = fit_linear(curve);
    out.push_back({interp, std::move(curve), fit});
  }
  return out;
}

std::string write_noise_csv(std::span<const NoiseCurve> curves) {
  std::string out = std::string(kNoiseCsvHeader) + "\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.t.size(); ++i) {
      out += std::string(to_string(c.interpretation)) + "," + std::to_string(c.t[i]) + "," +
             csv::format_double(c.variance[i]) + "," + csv::format_double(c.ci_halfwidth[i]) + "\n";
    }
  }
  return out;
}

std::vector<NoiseCurve> read_noise_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw InputError("noise csv: empty input");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kNoiseCsvHeader) throw InputError("noise csv: unexpected header '" + header + "'");
  std::vector<NoiseCurve> curves;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw InputError("noise csv: row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
    Interpretation interp;
    try {
      interp = parse_interpretation(r[0]);
    } catch (const ConfigError& e) {
      throw InputError(std::string("noise csv: ") + e.what());
    }
    auto it = std::find_if(curves.begin(), curves.end(), [&](const NoiseCurve& c) { return c.interpretation == interp; });
    if (it == curves.end()) {
      curves.push_back({});
      curves.back().interpretation = interp;
      it = curves.end() - 1;
    }
    it->t.push_back(static_cast<std::size_t>(csv::parse_int(r[1])));
    it->variance.push_back(csv::parse_double(r[2]));
    it->ci_halfwidth.push_back(csv::parse_double(r[3]));
  }
  return curves;
}

}  // namespace lclab
