#include "lclab/json_io.hpp"

#include <algorithm>
#include <string>

#include "lclab/errors.hpp"

namespace lclab {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(std::string(context) + ": unknown key '" + item.key() + "'");
  }
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"n_layers", c.n_layers}, {"d_model", c.d_model},       {"n_heads", c.n_heads},
           {"d_head", c.d_head},     {"d_ff", c.d_ff},             {"vocab_size", c.vocab_size},
           {"rope_theta", c.rope_theta}, {"max_context", c.max_context}, {"norm_eps", c.norm_eps}};
}

void from_json(const json& j, ModelConfig& c) {
  reject_unknown_keys(j, {"n_layers", "d_model", "n_heads", "d_head", "d_ff", "vocab_size", "rope_theta",
                          "max_context", "norm_eps"},
                      "model config");
  ModelConfig d;
  c.n_layers = j.value("n_layers", d.n_layers);
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.d_head = j.contains("d_head") ? j.at("d_head").get<std::size_t>()
                                  : (c.n_heads > 0 ? c.d_model / c.n_heads : d.d_head);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.rope_theta = j.value("rope_theta", d.rope_theta);
  c.max_context = j.value("max_context", d.max_context);
  c.norm_eps = j.value("norm_eps", d.norm_eps);
}

void to_json(json& j, const ToyModelOptions& o) {
  j = json{{"init_std", o.init_std}, {"outlier_fraction", o.outlier_fraction}, {"outlier_scale", o.outlier_scale}};
}

void from_json(const json& j, ToyModelOptions& o) {
  reject_unknown_keys(j, {"init_std", "outlier_fraction", "outlier_scale"}, "toy model options");
  ToyModelOptions d;
  o.init_std = j.value("init_std", d.init_std);
  o.outlier_fraction = j.value("outlier_fraction", d.outlier_fraction);
  o.outlier_scale = j.value("outlier_scale", d.outlier_scale);
}

}  // namespace lclab
