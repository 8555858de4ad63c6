#include "lclab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>

#include "lclab/csv.hpp"
#include "lclab/errors.hpp"
#include "lclab/rng.hpp"

namespace lclab {

namespace {

constexpr double kProbClamp = 1e-10;
constexpr double kNormTolerance = 1e-4;

// Runs body(i) for i in [0, n) across the OpenMP team and rethrows the first
// exception any iteration raised.
template <typename Body>
void parallel_for_each(std::size_t n, Body body) {
  std::exception_ptr failure;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

KlStats aggregate(std::span<const double> values) {
  KlStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

using ProbRows = std::vector<std::vector<double>>;

ProbRows probs_at(const Tensor& logits, std::size_t first, std::size_t last) {
  ProbRows rows;
  for (std::size_t p = first; p < last; ++p) rows.push_back(logits_to_probs(logits.row(p)));
  return rows;
}

double mean_kl(const ProbRows& compressed, const ProbRows& base) {
  double sum = 0.0;
  for (std::size_t i = 0; i < compressed.size(); ++i) sum += kl_divergence(compressed[i], base[i]);
  return sum / static_cast<double>(compressed.size());
}

void check_lengths(std::span<const std::size_t> lengths, const ModelConfig& config) {
  if (lengths.empty()) throw ConfigError("sweep needs at least one context length");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] == 0) throw ConfigError("context lengths must be positive");
    if (i > 0 && lengths[i] <= lengths[i - 1]) throw ConfigError("context lengths must be strictly increasing");
    if (lengths[i] > config.max_context) {
      throw ContextLengthError("context length " + std::to_string(lengths[i]) + " exceeds max_context " +
                               std::to_string(config.max_context));
    }
  }
}

}  // namespace

void log_warning(const std::string& message) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "lclab: warning: " << message << '\n';
}

ForwardOptions CompressedModel::forward_options() const {
  ForwardOptions opts;
  if (activation_bits > 0) {
    const int bits = activation_bits;
    opts.transform = [bits](const ActivationSite&, Tensor& x) { x = quantize_activations_per_token(x, bits); };
  }
  return opts;
}

CompressedModel compress(const Checkpoint& base, const CompressionSpec& spec,
                         std::span<const TokenSequence> calibration, std::uint64_t seed) {
  CompressedModel out;
  if (std::holds_alternative<IdentitySpec>(spec.method)) {
    out.ckpt = base;
  } else if (const auto* p = std::get_if<PruneSpec>(&spec.method)) {
    PruneSpec ps = *p;
    if (ps.method == PruneMethod::kRandom && !ps.seed) ps.seed = derive_seed(seed, 0x72616e64);
    if (ps.method == PruneMethod::kWanda) {
      const CalibrationNorms norms = calibrate(base, calibration);
      out.ckpt = apply_prune(base, ps, &norms);
    } else {
      out.ckpt = apply_prune(base, ps);
    }
  } else {
    const auto& qs = std::get<QuantSpec>(spec.method);
    out.ckpt = apply_quant(base, qs);
    out.activation_bits = qs.activation_bits;
  }
  return out;
}

std::vector<double> logits_to_probs(std::span<const float> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: distributions differ in length");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sp += p[i];
    sq += q[i];
  }
  if (std::fabs(sp - 1.0) > kNormTolerance || std::fabs(sq - 1.0) > kNormTolerance) {
    throw InputError("kl_divergence: inputs must each sum to 1 within 1e-4");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0 || p[i] == q[i]) continue;
    kl += p[i] * std::log(p[i] / std::max(q[i], kProbClamp));
  }
  // Rounding can leave a near-zero divergence a few ulps below zero.
  return std::max(kl, 0.0);
}

std::size_t EvalMode::first_position(std::size_t length) const {
  if (kind == Kind::kLast) return length - 1;
  return length - std::min(std::max<std::size_t>(k, 1), length);
}

KlStats eval_kl_at_length(const Checkpoint& base, const CompressedModel& compressed,
                          std::span<const EvalSample> samples, std::size_t length, EvalMode mode) {
  if (length == 0) throw ConfigError("context length must be positive");
  std::vector<const EvalSample*> usable;
  for (const auto& s : samples) {
    if (s.tokens.size() >= length) {
      usable.push_back(&s);
    } else {
      log_warning("sample '" + s.id + "' has " + std::to_string(s.tokens.size()) + " tokens, skipped at length " +
                  std::to_string(length));
    }
  }
  if (usable.empty()) throw EmptyEvaluationError("no sample reaches length " + std::to_string(length));

  const PreparedModel base_model(base);
  const PreparedModel comp_model(compressed.ckpt);
  const ForwardOptions comp_opts = compressed.forward_options();
  const std::size_t first = mode.first_position(length);
  std::vector<double> values(usable.size());
  parallel_for_each(usable.size(), [&](std::size_t i) {
    const std::span<const std::int32_t> prefix(usable[i]->tokens.data(), length);
    const Tensor lb = base_model.forward(prefix);
    const Tensor lc = comp_model.forward(prefix, comp_opts);
    values[i] = mean_kl(probs_at(lc, first, length), probs_at(lb, first, length));
  });
  return aggregate(values);
}

std::vector<SweepRecord> run_sweeps(const Checkpoint& base, std::span<const CompressionSpec> specs,
                                    std::span<const EvalSample> samples,
                                    std::span<const TokenSequence> calibration, const SweepOptions& options) {
  base.validate();
  const auto& lengths = options.lengths;
  check_lengths(lengths, base.config);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (specs[i].label == specs[j].label) throw ConfigError("duplicate method label '" + specs[i].label + "'");
    }
  }
  for (const auto& s : samples) validate_tokens(s.tokens, base.config.vocab_size);

  // usable[s] = number of leading lengths that sample s can serve.
  const std::size_t n_samples = samples.size();
  std::vector<std::size_t> usable(n_samples, 0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    while (usable[s] < lengths.size() && lengths[usable[s]] <= samples[s].tokens.size()) ++usable[s];
  }
  for (std::size_t li = 0; li < lengths.size(); ++li) {
    std::size_t skipped = 0;
    for (std::size_t s = 0; s < n_samples; ++s) skipped += usable[s] <= li;
    if (skipped == n_samples) {
      throw EmptyEvaluationError("no sample reaches length " + std::to_string(lengths[li]));
    }
    if (skipped > 0) {
      log_warning(std::to_string(skipped) + " sample(s) shorter than " + std::to_string(lengths[li]) +
                  " tokens skipped at that length");
    }
  }

  // Runs `model` once per sample and hands back the probability rows needed
  // for each usable length. Only those rows go through the last layer.
  auto collect = [&](const PreparedModel& model, ForwardOptions opts) {
    std::vector<std::vector<ProbRows>> rows(n_samples);
    parallel_for_each(n_samples, [&](std::size_t s) {
      if (usable[s] == 0) return;
      const std::size_t longest = lengths[usable[s] - 1];
      std::vector<char> needed(longest, 0);
      for (std::size_t li = 0; li < usable[s]; ++li) {
        for (std::size_t p = options.mode.first_position(lengths[li]); p < lengths[li]; ++p) needed[p] = 1;
      }
      ForwardOptions local = opts;
      std::vector<std::size_t> slot(longest, 0);
      for (std::size_t p = 0; p < longest; ++p) {
        if (needed[p]) {
          slot[p] = local.output_rows.size();
          local.output_rows.push_back(p);
        }
      }
      const Tensor logits = model.forward(std::span<const std::int32_t>(samples[s].tokens.data(), longest), local);
      rows[s].resize(usable[s]);
      for (std::size_t li = 0; li < usable[s]; ++li) {
        for (std::size_t p = options.mode.first_position(lengths[li]); p < lengths[li]; ++p) {
          rows[s][li].push_back(logits_to_probs(logits.row(slot[p])));
        }
      }
    });
    return rows;
  };

  const PreparedModel base_model(base);
  const auto base_rows = collect(base_model, {});

  std::vector<SweepRecord> records;
  for (const auto& spec : specs) {
    const auto t0 = std::chrono::steady_clock::now();
    if (std::holds_alternative<IdentitySpec>(spec.method)) {
      // The identity model is the base model; its rows are already known.
      for (std::size_t li = 0; li < lengths.size(); ++li) {
        std::vector<double> values;
        for (std::size_t s = 0; s < n_samples; ++s) {
          if (li < usable[s]) values.push_back(mean_kl(base_rows[s][li], base_rows[s][li]));
        }
        const KlStats st = aggregate(values);
        records.push_back({spec.label, lengths[li], st.mean, st.std, st.n});
      }
      if (options.on_method_done) {
        options.on_method_done(spec, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      continue;
    }
    const CompressedModel comp = compress(base, spec, calibration, options.seed);
    const PreparedModel comp_model(comp.ckpt);
    const auto comp_rows = collect(comp_model, comp.forward_options());
    for (std::size_t li = 0; li < lengths.size(); ++li) {
      std::vector<double> values;
      for (std::size_t s = 0; s < n_samples; ++s) {
        if (li < usable[s]) values.push_back(mean_kl(comp_rows[s][li], base_rows[s][li]));
      }
      const KlStats st = aggregate(values);
      records.push_back({spec.label, lengths[li], st.mean, st.std, st.n});
    }
    if (options.on_method_done) {
      options.on_method_done(spec, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
  }
  return records;
}

std::vector<SweepRecord> run_sweep(const Checkpoint& base, const CompressionSpec& spec,
                                   std::span<const std::size_t> lengths, std::span<const EvalSample> samples,
                                   std::span<const TokenSequence> calibration, std::uint64_t seed, EvalMode mode) {
  SweepOptions opts;
  opts.lengths.assign(lengths.begin(), lengths.end());
  opts.mode = mode;
  opts.seed = seed;
  return run_sweeps(base, std::span<const CompressionSpec>(&spec, 1), samples, calibration, opts);
}

LinearFit fit_slope(std::span<const SweepRecord> records) {
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    xs.push_back(static_cast<double>(r.context_length));
    ys.push_back(r.kl_mean);
  }
  return fit_line(xs, ys);
}

std::string write_sweep_csv(std::span<const SweepRecord> records) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : records) {
    out += csv::escape(r.method_label) + "," + std::to_string(r.context_length) + "," + csv::format_double(r.kl_mean) +
           "," + csv::format_double(r.kl_std) + "," + std::to_string(r.n_samples) + "\n";
  }
  return out;
}

std::vector<SweepRecord> read_sweep_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw InputError("sweep csv: empty input");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kSweepCsvHeader) throw InputError("sweep csv: unexpected header '" + header + "'");
  std::vector<SweepRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5) throw InputError("sweep csv: row " + std::to_string(i) + " has " + std::to_string(r.size()) + " fields");
    SweepRecord rec;
    rec.method_label = r[0];
    rec.context_length = static_cast<std::size_t>(csv::parse_int(r[1]));
    rec.kl_mean = csv::parse_double(r[2]);
    rec.kl_std = csv::parse_double(r[3]);
    rec.n_samples = static_cast<std::size_t>(csv::parse_int(r[4]));
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace lclab
