// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only if
// every criterion passes.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lclab/csv.hpp"
#include "lclab/harness.hpp"
#include "lclab/kernels.hpp"
#include "lclab/noise.hpp"
#include "lclab/prune.hpp"
#include "lclab/quant.hpp"
#include "lclab/report.hpp"
#include "lclab/rng.hpp"

using namespace lclab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail = "failed: " + what;
      pass = false;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double spread) {
  Tensor t({r, c});
  for (float& v : t.data()) v = static_cast<float>(spread * rng.normal());
  return t;
}

std::vector<bool> zero_mask(const Tensor& t) {
  std::vector<bool> m;
  for (float v : t.data()) m.push_back(v == 0.0f);
  return m;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LCLAB_CLI_PATH) + " " + args;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome c1_theory_linearity() {
  Outcome o;
  NoiseSimConfig c;
  c.interpretation = Interpretation::kPerTerm;
  c.sigma = 0.1;
  c.trials = 10000;
  c.t_max = 1024;
  c.t_stride = 1;
  c.seed = 1;
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  const auto t0 = Clock::now();
  const NoiseCurve curve = simulate(c);
  const double secs = seconds_since(t0);
  kernels::set_threads(saved);
  const LinearFit f = fit_linear(curve);
  o.require(curve.t.size() == 1024, "curve covers t = 1..1024");
  o.require(std::abs(f.slope - 0.01) <= 0.05 * 0.01, "slope within 5% of 0.01");
  o.require(f.r2 >= 0.99, "r2 >= 0.99");
  o.require(secs < 60.0, "runtime under 60 s single-threaded");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("slope=") + fmt(f.slope) + " r2=" + fmt(f.r2) +
              " single-thread time=" + fmt(secs) + "s";
  return o;
}

Outcome c2_uniform_control() {
  Outcome o;
  NoiseSimConfig c;
  c.interpretation = Interpretation::kFullAttention;
  c.sigma = 0.1;
  c.trials = 10000;
  c.t_max = 1000;
  c.t_points = {10, 100, 1000};
  c.force_uniform = true;
  c.key_noise = false;
  c.seed = 2;
  const NoiseCurve curve = simulate(c);
  std::string d;
  for (std::size_t k = 0; k < curve.t.size(); ++k) {
    const double expect = 0.01 / static_cast<double>(curve.t[k]);
    const double z = std::abs(curve.variance[k] - expect) / curve.ci_halfwidth[k];
    o.require(z <= 3.0, "t=" + std::to_string(curve.t[k]) + " within 3 CI half-widths");
    d += " t=" + std::to_string(curve.t[k]) + ":var=" + fmt(curve.variance[k]) + ",expect=" + fmt(expect) +
         ",dev/ci=" + fmt(z);
  }
  NoiseSimConfig per_term = c;
  per_term.interpretation = Interpretation::kPerTerm;
  const NoiseCurve pt = simulate(per_term);
  o.require(pt.variance.back() > 100.0 * curve.variance.back(), "per-term and joint-softmax readings diverge");
  o.detail += (o.detail.empty() ? d.substr(1) : ";" + d) + " per_term@1000=" + fmt(pt.variance.back());
  return o;
}

Outcome c3_kl_oracle() {
  Outcome o;
  Rng rng(3);
  double worst = 0.0;
  auto dist = [&](std::size_t n, double floor) {
    std::vector<double> p(n);
    double s = 0.0;
    for (auto& v : p) s += v = floor + rng.uniform();
    for (auto& v : p) v /= s;
    return p;
  };
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.uniform_below(8);
    auto p = dist(n, 0.0);
    const auto q = dist(n, 1e-3);
    if (i % 4 == 0 && n > 1) {
      p[rng.uniform_below(n)] = 0.0;
      double s = 0.0;
      for (double v : p) s += v;
      for (auto& v : p) v /= s;
    }
    double brute = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (p[k] != 0.0) brute += p[k] * std::log(p[k] / q[k]);
    }
    const double kl = kl_divergence(p, q);
    worst = std::max(worst, std::abs(kl - brute));
    o.require(kl >= 0.0, "non-negative");
    o.require(kl_divergence(p, p) == 0.0, "KL(p,p) == 0");
  }
  o.require(worst <= 1e-12, "brute-force agreement to 1e-12");
  const double a = kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75});
  const double b = kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5});
  o.require(std::abs(a - 0.14384) <= 1e-4, "hand value 0.14384");
  o.require(std::abs(b - 0.69315) <= 1e-4, "hand value 0.69315");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("max |kl-brute|=") + fmt(worst) + " hand=" + fmt(a) +
              "," + fmt(b);
  return o;
}

Outcome c4_quantizer() {
  Outcome o;
  Rng rng(4);
  std::string d;
  for (int bits : {3, 4, 8}) {
    // 10^6 values as 7813 groups of 128, spreads spanning four decades.
    std::size_t values = 0;
    double worst_ratio = 0.0;
    while (values < 1'000'000) {
      const double spread = std::pow(10.0, rng.uniform() * 4.0 - 2.0);
      std::vector<float> w(128);
      for (float& v : w) v = static_cast<float>(spread * rng.normal());
      const QuantizedGroup g = quantize_group(w, bits);
      const auto deq = g.dequantize();
      const double half = g.scale() / 2.0;
      // Exact-arithmetic bound plus the float rounding of the stored value.
      const double ulp = std::nextafter(g.max_abs, std::numeric_limits<float>::infinity()) - g.max_abs;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double err = std::abs(static_cast<double>(w[i]) - deq[i]);
        worst_ratio = std::max(worst_ratio, err / half);
        o.require(err <= half + ulp, std::to_string(bits) + "-bit round-trip bound");
      }
      values += w.size();
    }
    d += " " + std::to_string(bits) + "-bit max err/(scale/2)=" + fmt(worst_ratio);
  }

  for (int m = 0; m < 100; ++m) {
    const Tensor w = random_matrix(16, 256, rng, 0.05 + rng.uniform());
    QuantSpec s;
    s.group_size = 128;
    std::map<int, Tensor> q;
    for (int bits : {3, 4, 8}) {
      s.weight_bits = bits;
      q[bits] = quantize_weights(w, s);
      o.require(bitwise_equal(quantize_weights(q[bits], s), q[bits]), "idempotence");
    }
    for (std::size_t r = 0; r < 16; ++r) {
      for (std::size_t g0 = 0; g0 < 256; g0 += 128) {
        std::map<int, double> mse;
        for (int bits : {3, 4, 8}) {
          for (std::size_t c = g0; c < g0 + 128; ++c) {
            const double e = static_cast<double>(w(r, c)) - q[bits](r, c);
            mse[bits] += e * e;
          }
        }
        o.require(mse[8] <= mse[4] && mse[4] <= mse[3], "per-group MSE monotone in bits");
      }
    }
  }

  const QuantizedGroup hand = quantize_group(std::vector<float>{0.1f, -0.4f, 0.35f, 0.2f}, 3);
  o.require(hand.q == std::vector<std::int8_t>{1, -3, 3, 2}, "hand example q = [1,-3,3,2]");
  o.require(std::abs(hand.scale() - 0.4 / 3.0) <= 1e-7, "hand example scale 0.4/3");
  const auto hd = hand.dequantize();
  o.require(hd[1] == -0.4f && hd[2] == 0.4f && std::abs(hd[0] - 0.13333) < 1e-4 && std::abs(hd[3] - 0.26667) < 1e-4,
            "hand example dequantized values");
  o.detail += (o.detail.empty() ? d.substr(1) : ";" + d);
  return o;
}

Outcome c5_pruning() {
  Outcome o;
  Rng rng(5);
  for (int m = 0; m < 100; ++m) {
    const std::size_t r = 1 + rng.uniform_below(32), c = 1 + rng.uniform_below(96);
    const double ratio = rng.uniform() * 0.95;
    const Tensor w = random_matrix(r, c, rng, 1.0);
    std::vector<double> norms(c), ones(c, 1.0);
    for (auto& n : norms) n = rng.uniform() * 4.0;
    const auto per_row = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(c)));
    const auto per_layer = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(r * c)));

    const Tensor mr = prune_magnitude(w, ratio, Granularity::kPerRow);
    const Tensor ml = prune_magnitude(w, ratio, Granularity::kPerLayer);
    const Tensor wa = prune_wanda(w, norms, ratio);
    const std::uint64_t seed = rng.next_u64();
    const Tensor rd = prune_random(w, ratio, seed);
    for (std::size_t i = 0; i < r; ++i) {
      const auto a = mr.row(i), b = wa.row(i);
      o.require(static_cast<std::size_t>(std::count(a.begin(), a.end(), 0.0f)) == per_row, "magnitude per_row count");
      o.require(static_cast<std::size_t>(std::count(b.begin(), b.end(), 0.0f)) == per_row, "wanda per_row count");
    }
    o.require(static_cast<std::size_t>(std::count(ml.data().begin(), ml.data().end(), 0.0f)) == per_layer,
              "magnitude per_layer count");
    o.require(static_cast<std::size_t>(std::count(rd.data().begin(), rd.data().end(), 0.0f)) == per_layer,
              "random count");
    o.require(bitwise_equal(rd, prune_random(w, ratio, seed)), "random seed determinism");

    const float scale = static_cast<float>(0.01 + 100.0 * rng.uniform());
    Tensor s = w;
    for (float& v : s.data()) v *= scale;
    o.require(zero_mask(prune_magnitude(s, ratio, Granularity::kPerRow)) == zero_mask(mr), "magnitude scale invariance");
    o.require(zero_mask(prune_magnitude(s, ratio, Granularity::kPerLayer)) == zero_mask(ml), "magnitude scale invariance");
    o.require(zero_mask(prune_wanda(s, norms, ratio)) == zero_mask(wa), "wanda scale invariance");
    o.require(zero_mask(prune_wanda(w, ones, ratio)) == zero_mask(mr), "wanda unit norms == magnitude per_row");
  }
  const Tensor big = random_matrix(10, 100, rng, 1.0);
  const Tensor p = prune_random(big, 0.1, 11);
  o.require(std::count(p.data().begin(), p.data().end(), 0.0f) == 100, "1000 elements at 10% -> 100 zeros");
  if (o.pass) o.detail = "100 random matrices: counts, scaling masks, unit-norm wanda, random determinism";
  return o;
}

Outcome c6_causality_determinism() {
  Outcome o;
  Rng rng(6);
  for (int pair = 0; pair < 50; ++pair) {
    ModelConfig c;
    c.n_layers = 1 + rng.uniform_below(3);
    c.n_heads = 1 + rng.uniform_below(4);
    c.d_head = 2 * (1 + rng.uniform_below(8));
    c.d_model = c.n_heads * c.d_head;
    c.d_ff = 8 + rng.uniform_below(64);
    c.vocab_size = 2 + rng.uniform_below(300);
    c.max_context = 512;
    const Checkpoint ckpt = gen_toy_model(c, rng.next_u64());
    const PreparedModel model(ckpt);
    TokenSequence seq(2 + rng.uniform_below(300));
    for (auto& t : seq) t = static_cast<std::int32_t>(rng.uniform_below(c.vocab_size));
    const Tensor full = model.forward(seq);
    const std::size_t len = 1 + rng.uniform_below(seq.size());
    const Tensor part = model.forward(std::span<const std::int32_t>(seq.data(), len));
    o.require(std::memcmp(part.data().data(), full.data().data(), part.numel() * sizeof(float)) == 0,
              "prefix rows bitwise equal (pair " + std::to_string(pair) + ")");
  }

  const fs::path root = LCLAB_SOURCE_DIR;
  const fs::path a = fs::current_path() / "acceptance_c6_t1", b = fs::current_path() / "acceptance_c6_t8";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string cfg = (root / "configs/quick.json").string();
  const int ra = run_cli("sweep --config " + cfg + " --out " + a.string() + " --threads 1 >/dev/null 2>&1");
  const int rb = run_cli("sweep --config " + cfg + " --out " + b.string() + " --threads 8 >/dev/null 2>&1");
  o.require(ra == 0 && rb == 0, "CLI sweeps succeed");
  if (ra == 0 && rb == 0) {
    o.require(read_text_file(a / "sweep.csv") == read_text_file(b / "sweep.csv"), "sweep CSV identical at 1 and 8 threads");
    o.require(read_text_file(a / "sweep.svg") == read_text_file(b / "sweep.svg"), "sweep SVG identical at 1 and 8 threads");
  }
  if (o.pass) o.detail = "50 prefix pairs bitwise; configs/quick.json sweep.csv identical at --threads 1 and 8";
  return o;
}

Outcome c7_salient_groups() {
  Outcome o;
  QuantSpec uniform;
  uniform.weight_bits = 3;
  uniform.group_size = 128;
  QuantSpec mixed = uniform;
  mixed.salient_fraction = 0.02;
  mixed.salient_bits = 8;
  QuantSpec eight = uniform;
  eight.weight_bits = 8;

  const ModelConfig config;
  int wins = 0;
  std::string ratios;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Checkpoint ckpt = gen_toy_model(config, seed);
    double err_u = 0.0, err_m = 0.0;
    for (const auto& name : projection_names(config)) {
      const Tensor& w = ckpt.tensor(name);
      const std::size_t per_row = (w.cols() + 127) / 128, n_groups = w.rows() * per_row;
      const auto sel = select_salient_groups(w, 128, 0.02);
      o.require(sel.size() == static_cast<std::size_t>(std::ceil(0.02 * static_cast<double>(n_groups))),
                "ceil(0.02 n_groups) selected");
      const Tensor qm = quantize_mixed(w, mixed), qu = quantize_weights(w, uniform);
      if (seed == 0) {
        const Tensor q8 = quantize_weights(w, eight);
        const std::set<std::size_t> chosen(sel.begin(), sel.end());
        std::vector<int> cover(n_groups, 0);
        for (std::size_t g = 0; g < n_groups; ++g) {
          const bool salient = chosen.count(g) > 0;
          const Tensor& ref = salient ? q8 : qu;
          const std::size_t r = g / per_row, c0 = (g % per_row) * 128, c1 = std::min(w.cols(), c0 + 128);
          bool same = true;
          for (std::size_t c = c0; c < c1; ++c) same = same && qm(r, c) == ref(r, c);
          cover[g] += same;
        }
        o.require(std::all_of(cover.begin(), cover.end(), [](int v) { return v == 1; }),
                  "salient/non-salient partition covers every group once");
      }
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const double du = static_cast<double>(w.data()[i]) - qu.data()[i];
        const double dm = static_cast<double>(w.data()[i]) - qm.data()[i];
        err_u += du * du;
        err_m += dm * dm;
      }
    }
    wins += err_m < err_u;
    if (seed < 3) ratios += " seed" + std::to_string(seed) + ":mixed/uniform=" + fmt(err_m / err_u);
  }
  o.require(wins >= 19, "mixed MSE < uniform MSE in >= 19/20 seeds");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("mixed better in ") + std::to_string(wins) + "/20 seeds;" + ratios;
  return o;
}

Outcome c8_trend_run() {
  Outcome o;
  const fs::path root = LCLAB_SOURCE_DIR;
  const fs::path out = fs::current_path() / "acceptance_trend";
  fs::remove_all(out);
  const auto t0 = Clock::now();
  const int rc = run_cli("sweep --config " + (root / "configs/trend.json").string() + " --out " + out.string() +
                         " >/dev/null 2>" + (fs::current_path() / "acceptance_trend.log").string());
  const double secs = seconds_since(t0);
  o.require(rc == 0, "trend sweep exits 0");
  if (rc != 0) return o;

  const auto records = read_sweep_csv(read_text_file(out / "sweep.csv"));
  const std::vector<std::string> labels{"identity", "magnitude-50%", "wanda-50%", "random-10%",
                                        "3-bit",    "4-bit",         "8-bit",     "3-bit+2%@8-bit"};
  const std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096};
  std::map<std::string, std::map<std::size_t, SweepRecord>> by;
  for (const auto& r : records) by[r.method_label][r.context_length] = r;
  for (const auto& l : labels) {
    for (std::size_t len : lengths) o.require(by[l].count(len) == 1, "record for " + l + " @" + std::to_string(len));
  }
  for (std::size_t len : lengths) {
    o.require(by["identity"][len].kl_mean == 0.0 && by["identity"][len].kl_std == 0.0, "identity KL == 0");
    o.require(by["8-bit"][len].kl_mean <= by["3-bit"][len].kl_mean, "8-bit <= 3-bit at " + std::to_string(len));
    o.require(by["identity"][len].n_samples == 20, "20 samples");
  }
  const std::string slopes = read_text_file(out / "slopes.csv");
  const auto rows = csv::parse(slopes);
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) seen.insert(rows[i][0]);
  for (const auto& l : labels) o.require(seen.count(l) == 1, "slope row for " + l);
  o.require(fs::exists(out / "report.txt") && fs::exists(out / "sweep.svg"), "report and chart written");
  o.require(secs < 900.0, "under 15 minutes");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("time=") + fmt(secs) + "s threads=" +
              std::to_string(kernels::max_threads()) + " 8-bit@4096=" + fmt(by["8-bit"][4096].kl_mean) +
              " 3-bit@4096=" + fmt(by["3-bit"][4096].kl_mean) + " output=" + out.string();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion filter, e.g. `acceptance 1 3 4`.
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"theory linearity (per_term)", c1_theory_linearity},
      {"forced-uniform full-attention control", c2_uniform_control},
      {"KL oracle", c3_kl_oracle},
      {"quantizer suite", c4_quantizer},
      {"pruning suite", c5_pruning},
      {"causality and determinism", c6_causality_determinism},
      {"salient-group remedy", c7_salient_groups},
      {"qualitative trend run", c8_trend_run},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s C%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
