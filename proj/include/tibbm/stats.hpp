#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace tibbm {

/// Streaming mean/variance (Welford) with deterministic pairwise merge.
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const RunningStats& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }

  [[nodiscard]] std::uint64_t count() const noexcept { return n_; }
  [[nodiscard]] double mean() const noexcept { return mean_; }
  [[nodiscard]] double variance() const noexcept {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }
  [[nodiscard]] double stderr_mean() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Monte Carlo estimate: sample mean with its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t n = 0;
};

inline Estimate to_estimate(const RunningStats& s) {
  return {s.mean(), s.stderr_mean(), s.count()};
}

/// Sample median (mean of the middle pair for even sizes). Empty input -> NaN.
double median(std::vector<double> xs);

/// Linear interpolation quantile (type 7), q in [0,1].
double quantile(std::vector<double> xs, double q);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
};

/// Ordinary least squares y = intercept + slope x. Needs >= 2 distinct x.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

/// Two-sample-free Kolmogorov-Smirnov statistic of `xs` against a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf);

}  // namespace tibbm

#include <algorithm>

template <class Cdf>
double tibbm::ks_statistic(std::vector<double> xs, Cdf cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}
