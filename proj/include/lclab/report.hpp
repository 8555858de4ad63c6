#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lclab/harness.hpp"
#include "lclab/noise.hpp"

namespace lclab {

struct SlopeRow {
  std::string label;
  LinearFit fit;
  std::size_t n_points = 0;
};

// One OLS fit per label (sweep) or interpretation (noise), in first-appearance
// order. Labels with fewer than two distinct x values are skipped.
std::vector<SlopeRow> slope_table(std::span<const SweepRecord> records);
std::vector<SlopeRow> slope_table(std::span<const NoiseCurve> curves);

inline constexpr const char* kSlopeCsvHeader = "method,slope,r2";
std::string write_slope_csv(std::span<const SlopeRow> rows);
std::string render_slope_text(std::span<const SlopeRow> rows, const std::string& x_unit);

// Context-length observations that hold for the reference model family but
// are not guaranteed on a random toy model; reported, never asserted.
std::string describe_trends(std::span<const SweepRecord> records, std::span<const CompressionSpec> specs);

// Line charts with one <polyline> per label. The sweep chart uses a log2
// context-length axis and draws +-kl_std whiskers; the noise chart is linear.
std::string render_sweep_svg(std::span<const SweepRecord> records);
std::string render_noise_svg(std::span<const NoiseCurve> curves);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Exclusive claim on an output directory via an O_EXCL lockfile, released on
// destruction. Throws IoError if another run holds it.
class OutputDirLock {
 public:
  explicit OutputDirLock(const std::filesystem::path& dir);
  ~OutputDirLock();
  OutputDirLock(const OutputDirLock&) = delete;
  OutputDirLock& operator=(const OutputDirLock&) = delete;

 private:
  std::filesystem::path lock_path_;
};

}  // namespace lclab
