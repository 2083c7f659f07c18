#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tibbm {

enum class ProfileKind { constant, affine, exponential_decay, tabulated };

std::string to_string(ProfileKind kind);

/// Diffusivity profile sigma: [0,1] -> (0, inf). Particles at physical time t
/// of a horizon-T run diffuse with variance rate sigma(t/T)^2.
///
/// Kinds and their parameters:
///   constant           {c}          sigma(u) = c
///   affine             {a, b}       sigma(u) = a + b u
///   exponential_decay  {a, r}       sigma(u) = a exp(-r u)
///   tabulated          knots        monotone cubic (PCHIP) through (u_i, sigma_i)
///
/// Instances are immutable and cheap to copy; all queries are thread-safe.
class SigmaProfile {
 public:
  static SigmaProfile constant(double c);
  static SigmaProfile affine(double intercept, double slope);
  static SigmaProfile exponential_decay(double amplitude, double rate);
  static SigmaProfile tabulated(std::vector<std::pair<double, double>> knots);

  [[nodiscard]] ProfileKind kind() const noexcept { return kind_; }
  [[nodiscard]] const std::vector<double>& params() const noexcept { return params_; }
  [[nodiscard]] std::vector<std::pair<double, double>> knots() const;

  [[nodiscard]] double sigma_min() const noexcept { return sigma_min_; }
  [[nodiscard]] double sigma_max() const noexcept { return sigma_max_; }
  /// Largest delta >= 0 with sigma' <= -delta on [0,1]; 0 if not decreasing.
  [[nodiscard]] double decreasing_margin() const noexcept { return margin_; }
  [[nodiscard]] bool monotone_decreasing() const noexcept { return margin_ > 0.0; }
  /// sup |sigma'| on [0,1].
  [[nodiscard]] double max_abs_deriv() const noexcept { return max_abs_deriv_; }

  [[nodiscard]] double eval(double u) const;
  [[nodiscard]] double deriv(double u) const;

  /// int_0^t sigma(u) du.
  [[nodiscard]] double integral_sigma(double t) const;
  /// int_0^t sigma(u)^2 du.
  [[nodiscard]] double integral_sigma_sq(double t) const;
  /// int_{u1}^{u2} sigma(u)^{-2} du.
  [[nodiscard]] double integral_inv_sigma_sq(double u1, double u2) const;

  /// Variance clock tau(t) = int_0^t sigma(s/T)^2 ds = T int_0^{t/T} sigma^2.
  [[nodiscard]] double clock(double t, double horizon) const;

 private:
  SigmaProfile() = default;
  void finish();
  [[nodiscard]] std::size_t segment(double u) const;
  [[nodiscard]] double segment_integral(std::size_t seg, double a, double b, int power) const;
  [[nodiscard]] double tabulated_integral(double t, int power) const;

  ProfileKind kind_ = ProfileKind::constant;
  std::vector<double> params_;
  // Tabulated only: knot abscissae, values, PCHIP slopes, cumulative integrals
  // of sigma and sigma^2 at the knots.
  std::vector<double> ku_, ks_, kd_, cum1_, cum2_;
  double sigma_min_ = 0.0;
  double sigma_max_ = 0.0;
  double margin_ = 0.0;
  double max_abs_deriv_ = 0.0;
};

struct ProfileReport {
  double grid_min = 0.0;
  double grid_max = 0.0;
  double margin = 0.0;  // min over grid cells of -(sigma(u2)-sigma(u1))/(u2-u1), clipped at 0
  bool monotone_decreasing = false;
  double max_fd_error = 0.0;  // max |deriv - centered difference| over interior grid points
  std::vector<std::string> failures;

  [[nodiscard]] bool ok() const noexcept { return failures.empty(); }
};

/// Samples the profile on a uniform grid of n_grid points and checks bounds,
/// monotonicity and derivative consistency. Never throws for n_grid >= 2.
ProfileReport validate(const SigmaProfile& profile, int n_grid);

}  // namespace tibbm
