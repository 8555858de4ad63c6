#include "lclab/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lclab/errors.hpp"
#include "lclab/kernels.hpp"
#include "lclab/rng.hpp"

namespace lclab {

void ModelConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_head < 1 || d_ff < 1 || max_context < 1) {
    throw ConfigError("model config: all counts must be >= 1");
  }
  if (vocab_size < 2) throw ConfigError("model config: vocab_size must be >= 2");
  if (d_model != n_heads * d_head) throw ConfigError("model config: d_model must equal n_heads * d_head");
  if (d_head % 2 != 0) throw ConfigError("model config: d_head must be even for rotary embeddings");
  if (!(rope_theta > 0.0) || !(norm_eps > 0.0f)) throw ConfigError("model config: rope_theta and norm_eps must be positive");
}

void validate_tokens(std::span<const std::int32_t> tokens, std::size_t vocab_size) {
  if (tokens.empty()) throw IngestionError("empty token sequence");
  for (std::int32_t id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
      throw IngestionError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size));
    }
  }
}

namespace {

std::string layer_name(std::size_t l, const char* suffix) {
  return "layers." + std::to_string(l) + "." + suffix;
}

}  // namespace

std::vector<TensorSpec> expected_tensors(const ModelConfig& c) {
  std::vector<TensorSpec> specs;
  specs.push_back({"tok_embeddings", {c.vocab_size, c.d_model}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    specs.push_back({layer_name(l, "attention_norm"), {c.d_model}});
    specs.push_back({layer_name(l, "attention.wq"), {c.d_model, c.d_model}});
    specs.push_back({layer_name(l, "attention.wk"), {c.d_model, c.d_model}});
    specs.push_back({layer_name(l, "attention.wv"), {c.d_model, c.d_model}});
    specs.push_back({layer_name(l, "attention.wo"), {c.d_model, c.d_model}});
    specs.push_back({layer_name(l, "ffn_norm"), {c.d_model}});
    specs.push_back({layer_name(l, "feed_forward.w1"), {c.d_ff, c.d_model}});
    specs.push_back({layer_name(l, "feed_forward.w3"), {c.d_ff, c.d_model}});
    specs.push_back({layer_name(l, "feed_forward.w2"), {c.d_model, c.d_ff}});
  }
  specs.push_back({"norm", {c.d_model}});
  specs.push_back({"output", {c.vocab_size, c.d_model}});
  return specs;
}

std::vector<std::string> projection_names(const ModelConfig& c) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (const char* s : {"attention.wq", "attention.wk", "attention.wv", "attention.wo", "feed_forward.w1",
                          "feed_forward.w3", "feed_forward.w2"}) {
      names.push_back(layer_name(l, s));
    }
  }
  return names;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

void Checkpoint::validate() const {
  config.validate();
  const auto specs = expected_tensors(config);
  for (const auto& spec : specs) {
    const Tensor& t = tensor(spec.name);
    if (t.shape() != spec.shape) throw CheckpointError("tensor '" + spec.name + "' has the wrong shape");
    if (!t.all_finite()) throw CheckpointError("tensor '" + spec.name + "' contains NaN or Inf");
  }
  if (tensors.size() != specs.size()) throw CheckpointError("checkpoint contains unexpected tensors");
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config == b.config) || a.tensors.size() != b.tensors.size()) return false;
  for (auto ia = a.tensors.begin(), ib = b.tensors.begin(); ia != a.tensors.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) return false;
  }
  return true;
}

PreparedModel::PreparedModel(const Checkpoint& ckpt) : config_(ckpt.config) {
  ckpt.validate();
  embeddings_ = ckpt.tensor("tok_embeddings");
  final_norm_ = ckpt.tensor("norm");
  output_t_ = kernels::transpose(ckpt.tensor("output"));
  layers_.resize(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    Layer& L = layers_[l];
    L.attention_norm = ckpt.tensor(layer_name(l, "attention_norm"));
    L.ffn_norm = ckpt.tensor(layer_name(l, "ffn_norm"));
    L.wq_t = kernels::transpose(ckpt.tensor(layer_name(l, "attention.wq")));
    L.wk_t = kernels::transpose(ckpt.tensor(layer_name(l, "attention.wk")));
    L.wv_t = kernels::transpose(ckpt.tensor(layer_name(l, "attention.wv")));
    L.wo_t = kernels::transpose(ckpt.tensor(layer_name(l, "attention.wo")));
    L.w1_t = kernels::transpose(ckpt.tensor(layer_name(l, "feed_forward.w1")));
    L.w3_t = kernels::transpose(ckpt.tensor(layer_name(l, "feed_forward.w3")));
    L.w2_t = kernels::transpose(ckpt.tensor(layer_name(l, "feed_forward.w2")));
    L.qkv_consumers = {layer_name(l, "attention.wq"), layer_name(l, "attention.wk"), layer_name(l, "attention.wv")};
    L.o_consumers = {layer_name(l, "attention.wo")};
    L.up_consumers = {layer_name(l, "feed_forward.w1"), layer_name(l, "feed_forward.w3")};
    L.down_consumers = {layer_name(l, "feed_forward.w2")};
    L.qkv_site = layer_name(l, "attention.input");
    L.o_site = layer_name(l, "attention.output");
    L.up_site = layer_name(l, "feed_forward.input");
    L.down_site = layer_name(l, "feed_forward.hidden");
  }
}

Tensor PreparedModel::forward(std::span<const std::int32_t> tokens, const ForwardOptions& options) const {
  if (tokens.size() > config_.max_context) {
    throw ContextLengthError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_context " +
                             std::to_string(config_.max_context));
  }
  validate_tokens(tokens, config_.vocab_size);
  const std::size_t t = tokens.size();
  const std::size_t d = config_.d_model;

  Tensor x({t, d});
  for (std::size_t i = 0; i < t; ++i) {
    const auto src = embeddings_.row(static_cast<std::size_t>(tokens[i]));
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  std::vector<std::int64_t> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<std::int64_t>(i);

  // Hook sees the activation as it will be multiplied, i.e. after any transform.
  auto linear_input = [&](const std::string& site, const std::vector<std::string>& consumers, Tensor& act) {
    const ActivationSite s{site, consumers};
    if (options.transform) options.transform(s, act);
    if (options.hook) options.hook(s, act);
  };

  const auto& keep = options.output_rows;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] >= t || (i > 0 && keep[i] <= keep[i - 1])) {
      throw DimensionError("forward: output_rows must be strictly increasing and below the sequence length");
    }
  }
  auto gather = [](const Tensor& src, std::span<const std::size_t> rows) {
    Tensor out({rows.size(), src.cols()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = src.row(rows[r]);
      std::copy(row.begin(), row.end(), out.row(r).begin());
    }
    return out;
  };

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& L = layers_[li];
    const bool subset = !keep.empty() && li + 1 == layers_.size();
    Tensor h = kernels::rms_norm_rows(x, L.attention_norm, config_.norm_eps);
    linear_input(L.qkv_site, L.qkv_consumers, h);
    Tensor k = kernels::rope_apply_heads(kernels::matmul(h, L.wk_t), config_.n_heads, positions, config_.rope_theta);
    Tensor v = kernels::matmul(h, L.wv_t);
    Tensor attn;
    if (subset) {
      std::vector<std::int64_t> qpos(keep.begin(), keep.end());
      Tensor q = kernels::rope_apply_heads(kernels::matmul(gather(h, keep), L.wq_t), config_.n_heads, qpos,
                                           config_.rope_theta);
      attn = kernels::causal_attention_rows(q, keep, k, v, config_.n_heads);
      x = gather(x, keep);
    } else {
      Tensor q = kernels::rope_apply_heads(kernels::matmul(h, L.wq_t), config_.n_heads, positions, config_.rope_theta);
      attn = kernels::causal_attention(q, k, v, config_.n_heads);
    }
    linear_input(L.o_site, L.o_consumers, attn);
    kernels::add_inplace(x, kernels::matmul(attn, L.wo_t));

    Tensor f = kernels::rms_norm_rows(x, L.ffn_norm, config_.norm_eps);
    linear_input(L.up_site, L.up_consumers, f);
    Tensor hidden = kernels::swiglu(kernels::matmul(f, L.w1_t), kernels::matmul(f, L.w3_t));
    linear_input(L.down_site, L.down_consumers, hidden);
    kernels::add_inplace(x, kernels::matmul(hidden, L.w2_t));
  }
  if (layers_.empty() && !keep.empty()) x = gather(x, keep);
  Tensor xn = kernels::rms_norm_rows(x, final_norm_, config_.norm_eps);
  return kernels::matmul(xn, output_t_);
}

Tensor forward(const Checkpoint& ckpt, std::span<const std::int32_t> tokens, const ForwardOptions& options) {
  return PreparedModel(ckpt).forward(tokens, options);
}

Checkpoint gen_toy_model(const ModelConfig& config, std::uint64_t seed, const ToyModelOptions& options) {
  config.validate();
  if (!(options.init_std >= 0.0) || !(options.outlier_fraction >= 0.0 && options.outlier_fraction < 1.0)) {
    throw ConfigError("toy model: init_std must be >= 0 and outlier_fraction in [0, 1)");
  }
  Checkpoint ckpt;
  ckpt.config = config;
  const auto specs = expected_tensors(config);
  const auto projections = projection_names(config);
  for (std::size_t idx = 0; idx < specs.size(); ++idx) {
    const auto& spec = specs[idx];
    Tensor t(spec.shape);
    if (spec.shape.size() == 1) {
      for (float& v : t.data()) v = 1.0f;
    } else {
      Rng rng(derive_seed(seed, idx));
      for (float& v : t.data()) v = static_cast<float>(options.init_std * rng.normal());
      const bool is_projection = std::find(projections.begin(), projections.end(), spec.name) != projections.end();
      if (is_projection && options.outlier_fraction > 0.0) {
        const auto count = static_cast<std::size_t>(std::llround(options.outlier_fraction * static_cast<double>(t.numel())));
        Rng pick(derive_seed(derive_seed(seed, idx), 1));
        for (std::size_t flat : fisher_yates_prefix(pick, t.numel(), count)) {
          t.data()[flat] = static_cast<float>(t.data()[flat] * options.outlier_scale);
        }
      }
    }
    ckpt.tensors.emplace(spec.name, std::move(t));
  }
  return ckpt;
}

}  // namespace lclab
