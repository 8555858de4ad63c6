#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lclab/tensor.hpp"

namespace lclab {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t d_head = 32;
  std::size_t d_ff = 384;
  std::size_t vocab_size = 256;
  double rope_theta = 10000.0;
  std::size_t max_context = 4096;
  float norm_eps = 1e-5f;

  // Throws ConfigError unless d_model == n_heads * d_head, d_head is even,
  // vocab_size >= 2 and every count is >= 1.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using TokenSequence = std::vector<std::int32_t>;

// Throws IngestionError on an empty sequence or an id outside [0, vocab_size).
void validate_tokens(std::span<const std::int32_t> tokens, std::size_t vocab_size);

struct TensorSpec {
  std::string name;
  Shape shape;
};

// Names follow the LLaMA layout:
//   tok_embeddings [vocab x d_model]
//   layers.N.attention_norm, layers.N.ffn_norm [d_model]
//   layers.N.attention.{wq,wk,wv,wo} [d_model x d_model]   (out x in)
//   layers.N.feed_forward.{w1,w3} [d_ff x d_model]           (gate, up)
//   layers.N.feed_forward.w2 [d_model x d_ff]                (down)
//   norm [d_model], output [vocab x d_model]
std::vector<TensorSpec> expected_tensors(const ModelConfig& config);

// The attention and feed-forward projection matrices, in layer order.
std::vector<std::string> projection_names(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;
  // Throws CheckpointError if any expected tensor is missing, misshapen or
  // non-finite, or if an unexpected tensor is present.
  void validate() const;
};

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

// A point in the forward pass where activations enter one or more linear
// layers. `consumers` lists the weight names that multiply this activation.
struct ActivationSite {
  std::string_view name;
  std::span<const std::string> consumers;
};

// Observer for linear-layer inputs, called once per site per forward.
using ActivationHook = std::function<void(const ActivationSite&, const Tensor&)>;
// In-place rewrite of a linear-layer input (fake activation quantization).
using ActivationTransform = std::function<void(const ActivationSite&, Tensor&)>;

struct ForwardOptions {
  ActivationHook hook;
  ActivationTransform transform;
  // When non-empty (strictly increasing, each < t), forward returns only these
  // logit rows and the last layer skips every other query row. Hooks on that
  // layer's later sites then see the reduced tensors.
  std::vector<std::size_t> output_rows;
};

// Checkpoint plus transposed projection weights, ready for repeated forwards.
// Holds a copy of every tensor it needs; the source checkpoint may go away.
class PreparedModel {
 public:
  explicit PreparedModel(const Checkpoint& ckpt);

  const ModelConfig& config() const noexcept { return config_; }

  // Logits [t x vocab] for teacher-forced `tokens`. Row i depends only on
  // tokens[0..i]. Throws ContextLengthError when t > max_context.
  Tensor forward(std::span<const std::int32_t> tokens, const ForwardOptions& options = {}) const;

 private:
  struct Layer {
    Tensor attention_norm, ffn_norm;
    Tensor wq_t, wk_t, wv_t, wo_t, w1_t, w3_t, w2_t;
    std::vector<std::string> qkv_consumers, o_consumers, up_consumers, down_consumers;
    std::string qkv_site, o_site, up_site, down_site;
  };

  ModelConfig config_;
  Tensor embeddings_;
  Tensor final_norm_;
  Tensor output_t_;
  std::vector<Layer> layers_;
};

Tensor forward(const Checkpoint& ckpt, std::span<const std::int32_t> tokens, const ForwardOptions& options = {});

struct ToyModelOptions {
  double init_std = 0.02;
  // Fraction of each projection matrix's entries multiplied by outlier_scale.
  double outlier_fraction = 0.005;
  double outlier_scale = 20.0;
};

// Deterministic LLaMA-style checkpoint: every weight N(0, init_std^2), norm
// gains 1, then a fixed-count outlier injection per projection matrix.
// Identical (config, seed, options) produce bit-identical checkpoints.
Checkpoint gen_toy_model(const ModelConfig& config, std::uint64_t seed, const ToyModelOptions& options = {});

}  // namespace lclab
