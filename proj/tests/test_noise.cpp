#include <doctest.h>

#include <cmath>

#include "lclab/errors.hpp"
#include "lclab/kernels.hpp"
#include "lclab/noise.hpp"

using namespace lclab;

namespace {

NoiseSimConfig base_config(Interpretation i) {
  NoiseSimConfig c;
  c.interpretation = i;
  c.t_max = 200;
  c.trials = 2000;
  c.sigma = 0.1;
  c.seed = 5;
  c.t_stride = 10;
  return c;
}

}  // namespace

TEST_CASE("zero sigma gives an exactly zero curve") {
  for (auto i : {Interpretation::kPerTerm, Interpretation::kFirstOrder, Interpretation::kFullAttention}) {
    NoiseSimConfig c = base_config(i);
    c.sigma = 0.0;
    const NoiseCurve curve = simulate(c);
    REQUIRE(curve.t.size() == 20);
    for (std::size_t k = 0; k < curve.t.size(); ++k) {
      CHECK(curve.variance[k] == 0.0);
      CHECK(curve.ci_halfwidth[k] == 0.0);
    }
  }
}

TEST_CASE("per-term variance grows as t sigma^2") {
  NoiseSimConfig c = base_config(Interpretation::kPerTerm);
  c.trials = 10000;
  c.t_points = {1, 10, 100};
  const NoiseCurve curve = simulate(c);
  for (std::size_t k = 0; k < 3; ++k) {
    const double expect = static_cast<double>(curve.t[k]) * 0.01;
    CHECK(std::abs(curve.variance[k] - expect) <= 3.0 * curve.ci_halfwidth[k]);
  }
  CHECK(curve.t == std::vector<std::size_t>{1, 10, 100});
}

TEST_CASE("per-term ignores key noise") {
  NoiseSimConfig c = base_config(Interpretation::kPerTerm);
  const NoiseCurve both = simulate(c);
  c.key_noise = false;
  CHECK(simulate(c) == both);
  c.value_noise = false;
  c.key_noise = true;
  for (double v : simulate(c).variance) CHECK(v == 0.0);
}

TEST_CASE("doubling sigma quadruples per-term variance") {
  NoiseSimConfig c = base_config(Interpretation::kPerTerm);
  const NoiseCurve a = simulate(c);
  c.sigma = 0.2;
  const NoiseCurve b = simulate(c);
  for (std::size_t k = 0; k < a.t.size(); ++k) {
    CHECK(std::abs(b.variance[k] - 4.0 * a.variance[k]) <= 3.0 * (b.ci_halfwidth[k] + 4.0 * a.ci_halfwidth[k]));
  }
}

TEST_CASE("uniform attention with value noise decays as sigma^2 / t") {
  NoiseSimConfig c = base_config(Interpretation::kFullAttention);
  c.force_uniform = true;
  c.key_noise = false;
  c.trials = 4000;
  c.t_points = {10, 100, 1000};
  c.t_max = 1000;
  const NoiseCurve curve = simulate(c);
  for (std::size_t k = 0; k < 3; ++k) {
    const double expect = 0.01 / static_cast<double>(curve.t[k]);
    CHECK(std::abs(curve.variance[k] - expect) <= 3.0 * curve.ci_halfwidth[k]);
  }
  CHECK(curve.variance[0] > curve.variance[2]);
}

TEST_CASE("first order agrees with full attention for small noise") {
  NoiseSimConfig c = base_config(Interpretation::kFirstOrder);
  c.sigma = 1e-4;
  c.d_k = 4;
  c.t_points = {5, 50, 150};
  const NoiseCurve fo = simulate(c);
  c.interpretation = Interpretation::kFullAttention;
  const NoiseCurve fa = simulate(c);
  for (std::size_t k = 0; k < 3; ++k) CHECK(fo.variance[k] == doctest::Approx(fa.variance[k]).epsilon(1e-2));
}

TEST_CASE("simulation is deterministic and thread independent") {
  const NoiseSimConfig c = base_config(Interpretation::kFullAttention);
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  const NoiseCurve a = simulate(c);
  kernels::set_threads(6);
  const NoiseCurve b = simulate(c);
  kernels::set_threads(saved);
  CHECK(a == b);
  NoiseSimConfig other = c;
  other.seed = 6;
  CHECK_FALSE(simulate(other) == a);
}

TEST_CASE("fit_linear and compare_interpretations") {
  NoiseSimConfig c = base_config(Interpretation::kPerTerm);
  const auto results = compare_interpretations(c);
  REQUIRE(results.size() == 3);
  CHECK(results[0].interpretation == Interpretation::kPerTerm);
  CHECK(results[0].fit.slope == doctest::Approx(0.01).epsilon(0.1));
  for (const auto& r : results) {
    c.interpretation = r.interpretation;
    CHECK(r.curve == simulate(c));
    const LinearFit f = fit_linear(r.curve);
    CHECK(f.slope == r.fit.slope);
  }
}

TEST_CASE("config validation and evaluation points") {
  NoiseSimConfig c;
  c.t_max = 10;
  c.t_stride = 4;
  CHECK(c.evaluation_points() == std::vector<std::size_t>{4, 8});
  c.t_points = {3, 10};
  CHECK(c.evaluation_points() == std::vector<std::size_t>{3, 10});
  c.t_points = {11};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NoiseSimConfig{};
  c.trials = 50;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NoiseSimConfig{};
  c.t_max = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = NoiseSimConfig{};
  c.sigma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_interpretation("first_order") == Interpretation::kFirstOrder);
  CHECK_THROWS_AS(parse_interpretation("both"), ConfigError);
}

TEST_CASE("noise csv round trip") {
  NoiseSimConfig c = base_config(Interpretation::kPerTerm);
  c.trials = 200;
  std::vector<NoiseCurve> curves;
  for (const auto& r : compare_interpretations(c)) {
    curves.push_back(r.curve);
    curves.back().trials = 0;
  }
  const std::string text = write_noise_csv(curves);
  CHECK(text.rfind(std::string(kNoiseCsvHeader) + "\n", 0) == 0);
  CHECK(read_noise_csv(text) == curves);
  CHECK(write_noise_csv(read_noise_csv(text)) == text);
  CHECK_THROWS_AS(read_noise_csv("t,variance\n"), InputError);
}
