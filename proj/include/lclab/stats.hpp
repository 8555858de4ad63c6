#pragma once

#include <cstddef>
#include <span>

namespace lclab {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  // 1 - SS_res / SS_tot; defined as 1 when every y is identical.
  double r2 = 0.0;
};

// Ordinary least squares y = slope * x + intercept. Needs >= 2 points and at
// least two distinct x values.
LinearFit fit_line(std::span<const double> xs, std::span<const double> ys);

// Welford accumulator with Chan's pairwise merge, for order-fixed reductions.
class RunningStats {
 public:
  void add(double x);
  void merge(const RunningStats& other);

  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  // Unbiased (n - 1) sample variance; 0 when n < 2.
  double sample_variance() const noexcept;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace lclab
