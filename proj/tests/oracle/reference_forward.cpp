#include "oracle/reference_forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lclab::oracle {

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

Vec linear(const Tensor& w, const Vec& x) {
  const std::size_t out = w.shape()[0], in = w.shape()[1];
  Vec y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) y[o] += static_cast<double>(w(o, i)) * x[i];
  }
  return y;
}

Vec rms(const Vec& x, const Tensor& gain, double eps) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain.data()[i] * x[i] / std::sqrt(ms + eps);
  return y;
}

void rope(Vec& x, std::size_t n_heads, std::size_t pos, double theta) {
  const std::size_t dh = x.size() / n_heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t j = 0; j < dh / 2; ++j) {
      const double ang = static_cast<double>(pos) * std::pow(theta, -2.0 * j / static_cast<double>(dh));
      const double a = x[h * dh + 2 * j], b = x[h * dh + 2 * j + 1];
      x[h * dh + 2 * j] = a * std::cos(ang) - b * std::sin(ang);
      x[h * dh + 2 * j + 1] = a * std::sin(ang) + b * std::cos(ang);
    }
  }
}

std::string L(std::size_t l, const char* s) { return "layers." + std::to_string(l) + "." + s; }

}  // namespace

std::vector<std::vector<double>> reference_forward(const Checkpoint& ckpt, const TokenSequence& tokens) {
  const ModelConfig& c = ckpt.config;
  const std::size_t t = tokens.size(), d = c.d_model, dh = d / c.n_heads;
  const double eps = c.norm_eps;

  Mat x(t, Vec(d));
  const Tensor& emb = ckpt.tensor("tok_embeddings");
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i][j] = emb(tokens[i], j);
  }

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    Mat q(t), k(t), v(t);
    for (std::size_t i = 0; i < t; ++i) {
      const Vec h = rms(x[i], ckpt.tensor(L(l, "attention_norm")), eps);
      q[i] = linear(ckpt.tensor(L(l, "attention.wq")), h);
      k[i] = linear(ckpt.tensor(L(l, "attention.wk")), h);
      v[i] = linear(ckpt.tensor(L(l, "attention.wv")), h);
      rope(q[i], c.n_heads, i, c.rope_theta);
      rope(k[i], c.n_heads, i, c.rope_theta);
    }
    for (std::size_t i = 0; i < t; ++i) {
      Vec attn(d, 0.0);
      for (std::size_t hd = 0; hd < c.n_heads; ++hd) {
        Vec s(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t e = 0; e < dh; ++e) dot += q[i][hd * dh + e] * k[j][hd * dh + e];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& sj : s) z += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t e = 0; e < dh; ++e) attn[hd * dh + e] += s[j] / z * v[j][hd * dh + e];
        }
      }
      const Vec o = linear(ckpt.tensor(L(l, "attention.wo")), attn);
      for (std::size_t j = 0; j < d; ++j) x[i][j] += o[j];
    }
    for (std::size_t i = 0; i < t; ++i) {
      const Vec f = rms(x[i], ckpt.tensor(L(l, "ffn_norm")), eps);
      const Vec g = linear(ckpt.tensor(L(l, "feed_forward.w1")), f);
      const Vec u = linear(ckpt.tensor(L(l, "feed_forward.w3")), f);
      Vec hidden(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) hidden[j] = g[j] / (1.0 + std::exp(-g[j])) * u[j];
      const Vec down = linear(ckpt.tensor(L(l, "feed_forward.w2")), hidden);
      for (std::size_t j = 0; j < d; ++j) x[i][j] += down[j];
    }
  }

  Mat logits(t);
  for (std::size_t i = 0; i < t; ++i) logits[i] = linear(ckpt.tensor("output"), rms(x[i], ckpt.tensor("norm"), eps));
  return logits;
}

}  // namespace lclab::oracle
