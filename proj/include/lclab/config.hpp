#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lclab/harness.hpp"
#include "lclab/model.hpp"
#include "lclab/noise.hpp"

namespace lclab {

// Experiment and noise configuration files. The JSON schema is documented in
// docs/config.md; relative paths resolve against the config file's directory.

struct ModelSource {
  std::optional<std::filesystem::path> load;  // set: read this checkpoint
  ModelConfig config;                         // otherwise generate
  ToyModelOptions toy;
  std::optional<std::uint64_t> seed;          // unset: derived from the master seed
};

struct SampleSource {
  enum class Synthetic { kText, kUniform };
  std::optional<std::filesystem::path> token_file;
  Synthetic synthetic = Synthetic::kText;
  std::optional<std::uint64_t> seed;
};

struct CalibrationConfig {
  std::size_t n_sequences = 8;
  std::size_t length = 512;
};

struct ExperimentConfig {
  ModelSource model;
  std::vector<CompressionSpec> methods;
  std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096};
  SampleSource samples;
  std::size_t n_samples = 20;
  CalibrationConfig calibration;
  EvalMode mode;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;

  std::uint64_t model_seed() const;
  std::uint64_t sample_seed() const;
  // Throws ConfigError: empty or duplicate labels, lengths not strictly
  // increasing or beyond max_context, n_samples == 0.
  void validate(const ModelConfig& model_config) const;
};

CompressionSpec parse_compression_spec(const nlohmann::json& j);
nlohmann::json compression_spec_to_json(const CompressionSpec& spec);

ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Noise config file: NoiseSimConfig fields plus an "interpretations" list
// (default: all three).
struct NoiseRunConfig {
  NoiseSimConfig sim;
  std::vector<Interpretation> interpretations{Interpretation::kPerTerm, Interpretation::kFirstOrder,
                                              Interpretation::kFullAttention};
  std::filesystem::path output_dir = "out";
};

NoiseRunConfig parse_noise_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
NoiseRunConfig load_noise_config(const std::filesystem::path& path);

Checkpoint materialize_model(const ExperimentConfig& config);

struct SampleSet {
  std::vector<EvalSample> eval;
  std::vector<TokenSequence> calibration;
};

// Eval samples long enough for the largest sweep length plus a disjoint
// calibration set. Synthetic samples come from separate RNG streams; from a
// token file, the first n_samples lines evaluate and the following lines
// calibrate.
SampleSet build_samples(const ExperimentConfig& config, const ModelConfig& model_config);

nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace lclab
