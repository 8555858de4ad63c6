// lclab: generate toy models, compress checkpoints, run KL context sweeps and
// the attention-noise simulator, and summarize results.
//
// Exit codes: 0 success, 2 usage/config error, 3 I/O or input-file error,
// 4 internal error. Failures print exactly one line to stderr:
//   lclab: error: code=<n> kind=<kind> message="<text>"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "lclab/checkpoint_io.hpp"
#include "lclab/config.hpp"
#include "lclab/errors.hpp"
#include "lclab/json_io.hpp"
#include "lclab/kernels.hpp"
#include "lclab/report.hpp"
#include "lclab/tokens.hpp"

namespace {

using namespace lclab;
namespace fs = std::filesystem;

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("LCLAB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("LCLAB_THREADS must be a positive integer, got '") + env + "'");
  }
  return 0;
}

struct GenModelArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_model(const GenModelArgs& a) {
  ModelConfig cfg;
  ToyModelOptions toy;
  std::uint64_t seed = 0;
  if (!a.config.empty()) {
    const auto j = read_json_file(a.config);
    try {
      reject_unknown_keys(j, {"config", "toy", "seed"}, "model file");
      if (j.contains("config")) cfg = j.at("config").get<ModelConfig>();
      if (j.contains("toy")) toy = j.at("toy").get<ToyModelOptions>();
      seed = j.value("seed", seed);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("model file: ") + e.what());
    }
  }
  if (a.seed) seed = *a.seed;
  save_checkpoint(gen_toy_model(cfg, seed, toy), a.out);
  std::cerr << "lclab: wrote " << a.out << "\n";
  return 0;
}

struct CompressArgs {
  std::string model;
  std::string config;
  std::string out;
  std::string calib;
  std::uint64_t seed = 0;
  std::size_t calib_sequences = 8;
  std::size_t calib_length = 512;
};

int cmd_compress(const CompressArgs& a) {
  const Checkpoint base = load_checkpoint(a.model);
  const CompressionSpec spec = parse_compression_spec(read_json_file(a.config));
  std::vector<TokenSequence> calibration;
  if (!a.calib.empty()) {
    calibration = load_token_file(a.calib, base.config.vocab_size);
  } else {
    ExperimentConfig ec;
    ec.seed = a.seed;
    ec.n_samples = 0;
    ec.lengths = {1};
    ec.calibration = {a.calib_sequences, std::min(a.calib_length, base.config.max_context)};
    if (base.config.vocab_size < 256) ec.samples.synthetic = SampleSource::Synthetic::kUniform;
    calibration = build_samples(ec, base.config).calibration;
  }
  const CompressedModel c = compress(base, spec, calibration, a.seed);
  if (c.activation_bits > 0) {
    std::cerr << "lclab: note: activation quantization is a runtime setting and is not stored in the checkpoint\n";
  }
  save_checkpoint(c.ckpt, a.out);
  std::cerr << "lclab: wrote " << a.out << "\n";
  return 0;
}

struct SweepArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.seed) cfg.seed = *a.seed;
  const Checkpoint base = materialize_model(cfg);
  cfg.validate(base.config);
  const SampleSet samples = build_samples(cfg, base.config);

  OutputDirLock lock(cfg.output_dir);
  SweepOptions opts;
  opts.lengths = cfg.lengths;
  opts.mode = cfg.mode;
  opts.seed = cfg.seed;
  opts.on_method_done = [](const CompressionSpec& s, double sec) {
    std::cerr << "lclab: " << s.label << " done in " << sec << " s\n";
  };
  const auto records = run_sweeps(base, cfg.methods, samples.eval, samples.calibration, opts);
  const auto slopes = slope_table(records);
  write_text_file(cfg.output_dir / "sweep.csv", write_sweep_csv(records));
  write_text_file(cfg.output_dir / "sweep.svg", render_sweep_svg(records));
  write_text_file(cfg.output_dir / "slopes.csv", write_slope_csv(slopes));
  const std::string text = render_slope_text(slopes, "token") + "\n" + describe_trends(records, cfg.methods);
  write_text_file(cfg.output_dir / "report.txt", text);
  std::cout << text;
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
  NoiseRunConfig cfg = load_noise_config(a.config);
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.seed) cfg.sim.seed = *a.seed;
  OutputDirLock lock(cfg.output_dir);
  std::vector<NoiseCurve> curves;
  for (auto interp : cfg.interpretations) {
    NoiseSimConfig c = cfg.sim;
    c.interpretation = interp;
    curves.push_back(simulate(c));
  }
  const auto slopes = slope_table(curves);
  write_text_file(cfg.output_dir / "noise.csv", write_noise_csv(curves));
  write_text_file(cfg.output_dir / "noise.svg", render_noise_svg(curves));
  write_text_file(cfg.output_dir / "noise_slopes.csv", write_slope_csv(slopes));
  const std::string text = render_slope_text(slopes, "step");
  write_text_file(cfg.output_dir / "noise_report.txt", text);
  std::cout << text;
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<SweepRecord> sweep;
  std::vector<NoiseCurve> noise;
  for (const auto& path : a.inputs) {
    const std::string text = read_text_file(path);
    const auto first_line = text.substr(0, text.find('\n'));
    const auto trimmed = !first_line.empty() && first_line.back() == '\r' ? first_line.substr(0, first_line.size() - 1) : first_line;
    if (trimmed == kSweepCsvHeader) {
      auto r = read_sweep_csv(text);
      sweep.insert(sweep.end(), r.begin(), r.end());
    } else if (trimmed == kNoiseCsvHeader) {
      auto c = read_noise_csv(text);
      noise.insert(noise.end(), c.begin(), c.end());
    } else {
      throw InputError(path + ": not a sweep or noise CSV");
    }
  }
  std::vector<SlopeRow> rows = slope_table(sweep);
  const auto noise_rows = slope_table(noise);
  rows.insert(rows.end(), noise_rows.begin(), noise_rows.end());
  std::string text;
  if (!sweep.empty()) text += render_slope_text(slope_table(sweep), "token");
  if (!noise.empty()) text += (text.empty() ? "" : "\n") + render_slope_text(noise_rows, "step");
  if (!a.out.empty()) {
    OutputDirLock lock(a.out);
    write_text_file(fs::path(a.out) / "slopes.csv", write_slope_csv(rows));
    write_text_file(fs::path(a.out) / "report.txt", text);
    if (!sweep.empty()) write_text_file(fs::path(a.out) / "merged_sweep.csv", write_sweep_csv(sweep));
  }
  std::cout << text;
  return 0;
}

struct Failure {
  int code;
  const char* kind;
};

Failure classify(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContextLengthError*>(&e) ||
      dynamic_cast<const EmptyEvaluationError*>(&e)) {
    return {2, "usage"};
  }
  if (dynamic_cast<const IoError*>(&e)) return {3, "io"};
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const IngestionError*>(&e) ||
      dynamic_cast<const InputError*>(&e)) {
    return {3, "input"};
  }
  return {4, "internal"};
}

int fail(int code, const char* kind, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  std::cerr << "lclab: error: code=" << code << " kind=" << kind << " message=\"" << message << "\"\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot compression vs context length laboratory"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (fallback: LCLAB_THREADS)");

  GenModelArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a deterministic toy checkpoint");
  gen_cmd->add_option("--config", gen.config, "Model JSON {config, toy, seed}");
  gen_cmd->add_option("--out", gen.out, "Output checkpoint path")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the generator seed");

  CompressArgs comp;
  auto* comp_cmd = app.add_subcommand("compress", "Apply one compression method to a checkpoint");
  comp_cmd->add_option("--model", comp.model, "Input checkpoint")->required();
  comp_cmd->add_option("--config", comp.config, "Method JSON")->required();
  comp_cmd->add_option("--out", comp.out, "Output checkpoint path")->required();
  comp_cmd->add_option("--calib", comp.calib, "Token file for Wanda calibration (default: synthetic)");
  comp_cmd->add_option("--seed", comp.seed, "Seed for synthetic calibration and random pruning");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a KL context-length sweep");
  sweep_cmd->add_option("--config", sweep.config, "Experiment JSON")->required();
  sweep_cmd->add_option("--out", sweep.out, "Output directory (overrides output_dir)");
  sweep_cmd->add_option("--seed", sweep.seed, "Override the master seed");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run the attention-noise Monte Carlo simulator");
  sim_cmd->add_option("--config", sim.config, "Noise JSON")->required();
  sim_cmd->add_option("--out", sim.out, "Output directory (overrides output_dir)");
  sim_cmd->add_option("--seed", sim.seed, "Override the simulator seed");

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Fit slopes over sweep or noise CSVs");
  rep_cmd->add_option("csv", rep.inputs, "Input CSV files")->required();
  rep_cmd->add_option("--out", rep.out, "Directory for slopes.csv and report.txt");

  for (auto* sub : {gen_cmd, comp_cmd, sweep_cmd, sim_cmd, rep_cmd}) {
    sub->add_option("--threads", threads, "OpenMP threads (fallback: LCLAB_THREADS)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(2, "usage", e.what());
  }

  try {
    kernels::set_threads(resolve_threads(threads));
    if (*gen_cmd) return cmd_gen_model(gen);
    if (*comp_cmd) return cmd_compress(comp);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*sim_cmd) return cmd_simulate(sim);
    if (*rep_cmd) return cmd_report(rep);
  } catch (const std::exception& e) {
    const Failure f = classify(e);
    return fail(f.code, f.kind, e.what());
  }
  return fail(4, "internal", "no subcommand dispatched");
}
