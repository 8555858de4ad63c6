#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "lclab/errors.hpp"
#include "lclab/quant.hpp"
#include "lclab/rng.hpp"

using namespace lclab;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double spread = 1.0) {
  Rng rng(seed);
  Tensor t({r, c});
  for (float& v : t.data()) v = static_cast<float>(spread * rng.normal());
  return t;
}

double mse(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

// Half a step plus the float rounding of the dequantized value itself.
double bound(const QuantizedGroup& g) {
  return g.scale() / 2.0 + std::nextafter(g.max_abs, std::numeric_limits<float>::infinity()) - g.max_abs;
}

QuantSpec spec_bits(int bits, std::size_t group) {
  QuantSpec s;
  s.weight_bits = bits;
  s.group_size = group;
  return s;
}

}  // namespace

TEST_CASE("hand-computed 3-bit group") {
  const std::vector<float> w{0.1f, -0.4f, 0.35f, 0.2f};
  const QuantizedGroup g = quantize_group(w, 3);
  CHECK(g.scale() == doctest::Approx(0.4 / 3.0).epsilon(1e-7));
  CHECK(g.q == std::vector<std::int8_t>{1, -3, 3, 2});
  const auto d = g.dequantize();
  CHECK(d[0] == doctest::Approx(0.13333).epsilon(1e-4));
  CHECK(d[1] == -0.4f);
  CHECK(d[2] == 0.4f);
  CHECK(d[3] == doctest::Approx(0.26667).epsilon(1e-4));
}

TEST_CASE("all-zero group") {
  const std::vector<float> w(5, 0.0f);
  const QuantizedGroup g = quantize_group(w, 4);
  CHECK(g.scale() == 0.0);
  for (float v : g.dequantize()) CHECK(v == 0.0f);
  for (auto q : g.q) CHECK(q == 0);
}

TEST_CASE("codes stay in range and half steps round to even") {
  CHECK(symmetric_qmax(3) == 3);
  CHECK(symmetric_qmax(4) == 7);
  CHECK(symmetric_qmax(8) == 127);
  // 0.5 and 1.5 steps of a 4-bit group with max 7.
  const QuantizedGroup g = quantize_group(std::vector<float>{7.0f, 0.5f, 1.5f, -2.5f}, 4);
  CHECK(g.q == std::vector<std::int8_t>{7, 0, 2, -2});
  for (int bits : {3, 4, 8}) {
    const Tensor w = random_matrix(1, 500, static_cast<std::uint64_t>(bits));
    const QuantizedGroup q = quantize_group(w.data(), bits);
    for (auto c : q.q) CHECK(std::abs(c) <= symmetric_qmax(bits));
  }
}

TEST_CASE("round-trip error within half a step") {
  for (int bits : {3, 4, 8}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed * 10 + bits);
      const std::size_t n = 1 + rng.uniform_below(300);
      const Tensor w = random_matrix(1, n, seed + 99, 0.01 + 10.0 * rng.uniform());
      const QuantizedGroup g = quantize_group(w.data(), bits);
      const auto d = g.dequantize();
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(static_cast<double>(w.data()[i]) - d[i]) <= bound(g));
    }
  }
}

TEST_CASE("8-bit error bound on unit dynamic range") {
  Tensor w = random_matrix(16, 256, 4);
  for (float& v : w.data()) v = std::clamp(v, -1.0f, 1.0f);
  w(0, 0) = 1.0f;
  const Tensor q = quantize_weights(w, spec_bits(8, 128));
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t g = 0; g < 2; ++g) {
      float m = 0.0f;
      for (std::size_t c = g * 128; c < (g + 1) * 128; ++c) m = std::max(m, std::abs(w(r, c)));
      for (std::size_t c = g * 128; c < (g + 1) * 128; ++c) {
        CHECK(std::abs(w(r, c) - q(r, c)) <= m / 254.0 * (1.0 + 1e-5));
      }
    }
  }
}

TEST_CASE("fake quantization is idempotent") {
  for (int bits : {3, 4, 8}) {
    for (std::size_t group : {1u, 7u, 128u}) {
      const Tensor w = random_matrix(9, 300, bits * 1000 + group);
      const Tensor once = quantize_weights(w, spec_bits(bits, group));
      CHECK(bitwise_equal(quantize_weights(once, spec_bits(bits, group)), once));
    }
  }
}

TEST_CASE("partial last group") {
  const Tensor w({1, 5}, {1.0f, -0.5f, 0.25f, 8.0f, -0.1f});
  const Tensor q = quantize_weights(w, spec_bits(4, 3));
  // Second group [8, -0.1] has its own scale 8/7.
  CHECK(q(0, 3) == 8.0f);
  CHECK(q(0, 4) == 0.0f);
  CHECK(q(0, 0) == 1.0f);
}

TEST_CASE("error shrinks with more bits") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Tensor w = random_matrix(8, 256, seed);
    const double e3 = mse(w, quantize_weights(w, spec_bits(3, 128)));
    const double e4 = mse(w, quantize_weights(w, spec_bits(4, 128)));
    const double e8 = mse(w, quantize_weights(w, spec_bits(8, 128)));
    CHECK(e3 > e4);
    CHECK(e4 >= e8);
  }
}

TEST_CASE("salient group selection") {
  const Tensor w({1, 4}, {1, 9, 3, 9});
  CHECK(select_salient_groups(w, 1, 0.5) == std::vector<std::size_t>{1, 3});
  CHECK(select_salient_groups(w, 1, 0.0).empty());
  CHECK(select_salient_groups(w, 1, 0.01).size() == 1);

  const Tensor big = random_matrix(10, 1000, 1);
  const auto sel = select_salient_groups(big, 10, 0.02);
  CHECK(sel.size() == 20);
  CHECK(std::is_sorted(sel.begin(), sel.end()));

  Tensor scaled = big;
  for (float& v : scaled.data()) v *= 3.5f;
  CHECK(select_salient_groups(scaled, 10, 0.02) == sel);
  CHECK(select_salient_groups(big, 10, 0.02, SaliencyMetric::kL2).size() == 20);

  // Every selected group's max is at least every unselected group's max.
  const std::set<std::size_t> chosen(sel.begin(), sel.end());
  float min_sel = 1e30f, max_rest = 0.0f;
  for (std::size_t g = 0; g < 1000; ++g) {
    float m = 0.0f;
    for (std::size_t c = 0; c < 10; ++c) m = std::max(m, std::abs(big.data()[g * 10 + c]));
    if (chosen.count(g)) {
      min_sel = std::min(min_sel, m);
    } else {
      max_rest = std::max(max_rest, m);
    }
  }
  CHECK(min_sel >= max_rest);
}

TEST_CASE("mixed precision covers every group once") {
  const Tensor w = random_matrix(12, 200, 2);
  QuantSpec mixed = spec_bits(3, 16);
  mixed.salient_fraction = 0.1;
  const Tensor q = quantize_mixed(w, mixed);
  const Tensor q3 = quantize_weights(w, spec_bits(3, 16));
  const Tensor q8 = quantize_weights(w, spec_bits(8, 16));
  const auto sel = select_salient_groups(w, 16, 0.1);
  const std::set<std::size_t> chosen(sel.begin(), sel.end());
  const std::size_t groups_per_row = 13;
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t c = 0; c < 200; ++c) {
      const bool salient = chosen.count(r * groups_per_row + c / 16) > 0;
      CHECK(q(r, c) == (salient ? q8(r, c) : q3(r, c)));
    }
  }

  QuantSpec none = spec_bits(3, 16);
  CHECK(bitwise_equal(quantize_mixed(w, none), q3));
  QuantSpec all = spec_bits(3, 16);
  all.salient_fraction = 0.999;
  CHECK(bitwise_equal(quantize_mixed(w, all), q8));
}

TEST_CASE("mixed precision lowers error on outlier toy weights") {
  ModelConfig c;
  c.n_layers = 1;
  QuantSpec mixed = spec_bits(3, 128);
  mixed.salient_fraction = 0.02;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Checkpoint ckpt = gen_toy_model(c, seed);
    const Tensor& w = ckpt.tensor("layers.0.feed_forward.w1");
    CHECK(mse(w, quantize_mixed(w, mixed)) < mse(w, quantize_weights(w, spec_bits(3, 128))));
  }
}

TEST_CASE("per-token activation quantization") {
  const Tensor constant({2, 3}, {4, 4, 4, -1, -1, -1});
  CHECK(bitwise_equal(quantize_activations_per_token(constant), constant));

  Tensor ramp({1, 256});
  for (std::size_t i = 0; i < 256; ++i) ramp(0, i) = static_cast<float>(i);
  CHECK(bitwise_equal(quantize_activations_per_token(ramp), ramp));
  const Tensor ends({1, 2}, {0, 255});
  CHECK(bitwise_equal(quantize_activations_per_token(ends), ends));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_matrix(6, 100, seed, 5.0);
    const Tensor y = quantize_activations_per_token(x);
    for (std::size_t r = 0; r < 6; ++r) {
      const auto row = x.row(r);
      const auto [mn, mx] = std::minmax_element(row.begin(), row.end());
      const double scale = (static_cast<double>(*mx) - *mn) / 255.0;
      for (std::size_t c = 0; c < 100; ++c) CHECK(std::abs(x(r, c) - y(r, c)) <= scale / 2.0 * (1.0 + 1e-4));
    }
  }
}

TEST_CASE("spec validation and apply_quant scope") {
  QuantSpec s;
  s.weight_bits = 5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = QuantSpec{};
  s.group_size = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = QuantSpec{};
  s.salient_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_bits(8, 128);
  s.salient_fraction = 0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);

  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_head = 8;
  c.d_ff = 24;
  c.vocab_size = 32;
  const Checkpoint base = gen_toy_model(c, 3);
  const Checkpoint q = apply_quant(base, spec_bits(3, 8));
  for (const auto& name : projection_names(c)) {
    CHECK(bitwise_equal(q.tensor(name), quantize_weights(base.tensor(name), spec_bits(3, 8))));
  }
  CHECK(bitwise_equal(q.tensor("output"), base.tensor("output")));
  CHECK(bitwise_equal(q.tensor("tok_embeddings"), base.tensor("tok_embeddings")));
}
