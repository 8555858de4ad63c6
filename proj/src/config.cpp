#include "lclab/config.hpp"

#include <fstream>
#include <sstream>

#include "lclab/checkpoint_io.hpp"
#include "lclab/errors.hpp"
#include "lclab/json_io.hpp"
#include "lclab/rng.hpp"
#include "lclab/tokens.hpp"

namespace lclab {

using nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

// Rethrows json type/lookup errors as ConfigError with some context.
template <typename Fn>
auto config_guard(const char* context, Fn fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(context) + ": " + e.what());
  }
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

CompressionSpec parse_compression_spec(const json& j) {
  return config_guard("method", [&] {
    CompressionSpec spec;
    spec.label = j.at("label").get<std::string>();
    if (spec.label.empty()) throw ConfigError("method label must be non-empty");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "identity") {
      reject_unknown_keys(j, {"label", "kind"}, "identity method");
      spec.method = IdentitySpec{};
    } else if (kind == "prune") {
      reject_unknown_keys(j, {"label", "kind", "method", "ratio", "granularity", "seed", "include_embeddings"},
                          "prune method");
      PruneSpec p;
      p.method = parse_prune_method(j.at("method").get<std::string>());
      p.ratio = j.at("ratio").get<double>();
      if (j.contains("granularity")) p.granularity = parse_granularity(j.at("granularity").get<std::string>());
      if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
      p.include_embeddings = j.value("include_embeddings", false);
      if (p.method != PruneMethod::kRandom || p.seed) p.validate();
      spec.method = p;
    } else if (kind == "quant") {
      reject_unknown_keys(j, {"label", "kind", "weight_bits", "group_size", "activation_bits", "salient_fraction",
                              "salient_bits", "saliency"},
                          "quant method");
      QuantSpec q;
      q.weight_bits = j.at("weight_bits").get<int>();
      q.group_size = j.value("group_size", q.group_size);
      q.activation_bits = j.value("activation_bits", q.activation_bits);
      q.salient_fraction = j.value("salient_fraction", q.salient_fraction);
      q.salient_bits = j.value("salient_bits", q.salient_bits);
      if (j.contains("saliency")) q.saliency = parse_saliency_metric(j.at("saliency").get<std::string>());
      q.validate();
      spec.method = q;
    } else {
      throw ConfigError("unknown method kind '" + kind + "'");
    }
    return spec;
  });
}

json compression_spec_to_json(const CompressionSpec& spec) {
  json j = {{"label", spec.label}};
  if (std::holds_alternative<IdentitySpec>(spec.method)) {
    j["kind"] = "identity";
  } else if (const auto* p = std::get_if<PruneSpec>(&spec.method)) {
    j["kind"] = "prune";
    j["method"] = to_string(p->method);
    j["ratio"] = p->ratio;
    if (p->granularity) j["granularity"] = to_string(*p->granularity);
    if (p->seed) j["seed"] = *p->seed;
    if (p->include_embeddings) j["include_embeddings"] = true;
  } else {
    const auto& q = std::get<QuantSpec>(spec.method);
    j["kind"] = "quant";
    j["weight_bits"] = q.weight_bits;
    j["group_size"] = q.group_size;
    if (q.activation_bits) j["activation_bits"] = q.activation_bits;
    if (q.salient_fraction > 0.0) {
      j["salient_fraction"] = q.salient_fraction;
      j["salient_bits"] = q.salient_bits;
      j["saliency"] = to_string(q.saliency);
    }
  }
  return j;
}

std::uint64_t ExperimentConfig::model_seed() const { return model.seed ? *model.seed : derive_seed(seed, 1); }

std::uint64_t ExperimentConfig::sample_seed() const { return samples.seed ? *samples.seed : derive_seed(seed, 2); }

void ExperimentConfig::validate(const ModelConfig& model_config) const {
  if (methods.empty()) throw ConfigError("experiment: at least one method required");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (methods[i].label == methods[j].label) throw ConfigError("experiment: duplicate label '" + methods[i].label + "'");
    }
  }
  if (lengths.empty()) throw ConfigError("experiment: lengths must be non-empty");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] == 0) throw ConfigError("experiment: lengths must be positive");
    if (i > 0 && lengths[i] <= lengths[i - 1]) throw ConfigError("experiment: lengths must be strictly increasing");
  }
  if (lengths.back() > model_config.max_context) {
    throw ConfigError("experiment: length " + std::to_string(lengths.back()) + " exceeds max_context " +
                      std::to_string(model_config.max_context));
  }
  if (n_samples == 0) throw ConfigError("experiment: n_samples must be >= 1");
  if (calibration.length == 0 || calibration.length > model_config.max_context) {
    throw ConfigError("experiment: calibration length must be in [1, max_context]");
  }
  if (mode.kind == EvalMode::Kind::kTailK && mode.k == 0) throw ConfigError("experiment: tail_k needs k >= 1");
}

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base_dir) {
  return config_guard("experiment", [&] {
    reject_unknown_keys(j, {"model", "methods", "lengths", "samples", "n_samples", "calibration", "eval_mode",
                            "output_dir", "seed"},
                        "experiment");
    ExperimentConfig c;
    c.seed = j.value("seed", std::uint64_t{0});

    const json& m = j.at("model");
    reject_unknown_keys(m, {"generate", "load"}, "model");
    if (m.contains("load") == m.contains("generate")) throw ConfigError("model: exactly one of generate/load");
    if (m.contains("load")) {
      c.model.load = resolve(base_dir, m.at("load").get<std::string>());
    } else {
      const json& g = m.at("generate");
      reject_unknown_keys(g, {"config", "toy", "seed"}, "model.generate");
      if (g.contains("config")) c.model.config = g.at("config").get<ModelConfig>();
      if (g.contains("toy")) c.model.toy = g.at("toy").get<ToyModelOptions>();
      if (g.contains("seed")) c.model.seed = g.at("seed").get<std::uint64_t>();
    }

    for (const auto& mj : j.at("methods")) c.methods.push_back(parse_compression_spec(mj));
    if (j.contains("lengths")) c.lengths = j.at("lengths").get<std::vector<std::size_t>>();

    if (j.contains("samples")) {
      const json& s = j.at("samples");
      reject_unknown_keys(s, {"token_file", "synthetic"}, "samples");
      if (s.contains("token_file") == s.contains("synthetic")) throw ConfigError("samples: exactly one of token_file/synthetic");
      if (s.contains("token_file")) {
        c.samples.token_file = resolve(base_dir, s.at("token_file").get<std::string>());
      } else {
        const json& syn = s.at("synthetic");
        reject_unknown_keys(syn, {"style", "seed"}, "samples.synthetic");
        const auto style = syn.value("style", std::string("text"));
        if (style == "text") {
          c.samples.synthetic = SampleSource::Synthetic::kText;
        } else if (style == "uniform") {
          c.samples.synthetic = SampleSource::Synthetic::kUniform;
        } else {
          throw ConfigError("samples.synthetic.style must be text or uniform");
        }
        if (syn.contains("seed")) c.samples.seed = syn.at("seed").get<std::uint64_t>();
      }
    }
    c.n_samples = j.value("n_samples", c.n_samples);
    if (j.contains("calibration")) {
      const json& cal = j.at("calibration");
      reject_unknown_keys(cal, {"n_sequences", "length"}, "calibration");
      c.calibration.n_sequences = cal.value("n_sequences", c.calibration.n_sequences);
      c.calibration.length = cal.value("length", c.calibration.length);
    }
    if (j.contains("eval_mode")) {
      const json& em = j.at("eval_mode");
      if (em.is_string() && em.get<std::string>() == "last") {
        c.mode = {};
      } else if (em.is_object() && em.contains("tail_k")) {
        reject_unknown_keys(em, {"tail_k"}, "eval_mode");
        c.mode.kind = EvalMode::Kind::kTailK;
        c.mode.k = em.at("tail_k").get<std::size_t>();
      } else {
        throw ConfigError("eval_mode must be \"last\" or {\"tail_k\": k}");
      }
    }
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    return c;
  });
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json_file(path), path.parent_path());
}

NoiseRunConfig parse_noise_config(const json& j, const std::filesystem::path& base_dir) {
  return config_guard("noise config", [&] {
    reject_unknown_keys(j, {"t_max", "sigma", "d_k", "trials", "interpretations", "vector_dist", "seed",
                            "force_uniform", "key_noise", "value_noise", "t_stride", "t_points", "output_dir"},
                        "noise config");
    NoiseRunConfig r;
    NoiseSimConfig& s = r.sim;
    s.t_max = j.value("t_max", s.t_max);
    s.sigma = j.value("sigma", s.sigma);
    s.d_k = j.value("d_k", s.d_k);
    s.trials = j.value("trials", s.trials);
    s.seed = j.value("seed", s.seed);
    s.force_uniform = j.value("force_uniform", s.force_uniform);
    s.key_noise = j.value("key_noise", s.key_noise);
    s.value_noise = j.value("value_noise", s.value_noise);
    s.t_stride = j.value("t_stride", s.t_stride);
    if (j.contains("t_points")) s.t_points = j.at("t_points").get<std::vector<std::size_t>>();
    if (j.contains("vector_dist")) {
      const json& vd = j.at("vector_dist");
      reject_unknown_keys(vd, {"kind", "scale"}, "vector_dist");
      const auto kind = vd.value("kind", std::string("normal"));
      if (kind == "normal") {
        s.vector_dist.kind = VectorDist::Kind::kNormal;
      } else if (kind == "uniform") {
        s.vector_dist.kind = VectorDist::Kind::kUniform;
      } else {
        throw ConfigError("vector_dist.kind must be normal or uniform");
      }
      s.vector_dist.scale = vd.value("scale", 0.0);
    }
    if (j.contains("interpretations")) {
      r.interpretations.clear();
      for (const auto& name : j.at("interpretations")) r.interpretations.push_back(parse_interpretation(name.get<std::string>()));
      if (r.interpretations.empty()) throw ConfigError("interpretations must be non-empty");
    }
    if (j.contains("output_dir")) r.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    s.validate();
    return r;
  });
}

NoiseRunConfig load_noise_config(const std::filesystem::path& path) {
  return parse_noise_config(read_json_file(path), path.parent_path());
}

Checkpoint materialize_model(const ExperimentConfig& config) {
  if (config.model.load) return load_checkpoint(*config.model.load);
  return gen_toy_model(config.model.config, config.model_seed(), config.model.toy);
}

namespace {

constexpr std::uint64_t kCalibrationStream = 1'000'000;

TokenSequence synthetic_sequence(SampleSource::Synthetic style, std::uint64_t seed, std::size_t length,
                                 std::size_t vocab_size) {
  if (style == SampleSource::Synthetic::kUniform) {
    Rng rng(seed);
    TokenSequence t(length);
    for (auto& id : t) id = static_cast<std::int32_t>(rng.uniform_below(vocab_size));
    return t;
  }
  if (vocab_size < 256) throw ConfigError("synthetic text samples need vocab_size >= 256; use style \"uniform\"");
  TokenSequence t = tokenize_bytes(synthetic_text(seed, length), vocab_size);
  t.resize(length);
  return t;
}

}  // namespace

SampleSet build_samples(const ExperimentConfig& config, const ModelConfig& model_config) {
  SampleSet set;
  const std::size_t eval_len = config.lengths.back();
  if (config.samples.token_file) {
    auto seqs = load_token_file(*config.samples.token_file, model_config.vocab_size);
    std::size_t i = 0;
    for (; i < seqs.size() && set.eval.size() < config.n_samples; ++i) {
      if (seqs[i].size() > eval_len) seqs[i].resize(eval_len);
      set.eval.push_back({"line-" + std::to_string(i + 1), std::move(seqs[i])});
    }
    for (; i < seqs.size() && set.calibration.size() < config.calibration.n_sequences; ++i) {
      if (seqs[i].size() > config.calibration.length) seqs[i].resize(config.calibration.length);
      set.calibration.push_back(std::move(seqs[i]));
    }
    return set;
  }
  const std::uint64_t seed = config.sample_seed();
  for (std::size_t i = 0; i < config.n_samples; ++i) {
    set.eval.push_back({"synthetic-" + std::to_string(i),
                        synthetic_sequence(config.samples.synthetic, derive_seed(seed, i), eval_len,
                                           model_config.vocab_size)});
  }
  for (std::size_t i = 0; i < config.calibration.n_sequences; ++i) {
    set.calibration.push_back(synthetic_sequence(config.samples.synthetic, derive_seed(seed, kCalibrationStream + i),
                                                 config.calibration.length, model_config.vocab_size));
  }
  return set;
}

}  // namespace lclab
