#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tibbm/profile.hpp"
#include "tibbm/stats.hpp"

namespace tibbm {

/// Brownian motion run on a variance clock, confined to (lower, upper).
struct StripSpec {
  double lower = 0.0;
  double upper = 1.0;
  double start = 0.5;
  double horizon = 1.0;      // physical time
  double clock_total = 1.0;  // variance time; equals horizon for standard BM

  [[nodiscard]] double width() const noexcept { return upper - lower; }
  /// Throws DomainError for a degenerate strip or inconsistent clock. A
  /// start on or outside the walls is allowed (survival is then 0).
  void check() const;
};

struct SpectralResult {
  double probability = 0.0;
  double log_probability = 0.0;  // accurate even when probability underflows
  double truncation_bound = 0.0;
  int terms = 0;
  std::string method;  // "eigen" or "images"
};

/// Survival probability in the strip. Uses the Dirichlet eigenfunction series
///   P = sum_{k odd} 4/(k pi) sin(k pi x / w) exp(-k^2 pi^2 tau / (2 w^2))
/// once tau / w^2 >= 0.05, and the equivalent method-of-images sum for shorter
/// clocks, where the eigen series converges slowly. Both are truncated when
/// the next term bound drops below 1e-16.
SpectralResult strip_survival_spectral(const StripSpec& spec);

struct McOptions {
  std::uint64_t n_paths = 100000;
  double dt = 0.0;  // <= 0 selects the default clock_total * 1e-4, capped at 1e-2
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

/// Euler-discretised Brownian motion with exit checks at every step (no
/// bridge correction). Discrete monitoring biases the estimate upward by
/// roughly 0.5826 sqrt(dt) of extra room at each wall; see
/// `discretization_allowance`.
Estimate strip_survival_mc(const StripSpec& spec, const McOptions& opts);

/// 2 sqrt(dt) (|dP/dlower| + |dP/dupper|), with the sensitivities taken from
/// the spectral oracle. Bounds the discrete-monitoring bias of
/// `strip_survival_mc` with a safety factor of about 3.4.
double discretization_allowance(const StripSpec& spec, double dt);

/// Default distance below the upper wall at which simulated particles enter
/// the good corridor: min(1, width/2).
double default_start_offset(double width);

struct CorridorLogProb {
  double log_probability = 0.0;
  double width = 0.0;
  double start_offset = 0.0;
  double clock_total = 0.0;
};

/// log P0(-T^{1/3} <= X_t <= 0 for t <= T) for the time-changed Brownian motion
/// X, started `start_offset` below the upper wall (default: midpoint, width/2).
CorridorLogProb good_corridor_logprob(const SigmaProfile& profile, double T, double start_offset = -1.0);

/// Corridor around the optimal path: T fbar(t/T) - lower_width <= x <= T fbar(t/T) + upper_offset.
/// The process starts at 0, so upper_offset is the distance below the upper wall.
struct Band {
  double lower_width = 1.0;
  double upper_offset = 0.0;
};

/// e^T P0(corridor) via the tilted measure:
///   E_{P0}[ exp(-int_0^T sqrt2/sigma(s/T) dX_s) 1{-lower_width <= X_t <= upper_offset} ],
/// with the stochastic integral rewritten by parts as
///   sqrt2 X_T / sigma(1) + (sqrt2/T) int_0^T X_s sigma'(s/T)/sigma(s/T)^2 ds.
/// Wall crossings between grid points are accounted for with Brownian-bridge
/// survival factors. dt is physical time.
Estimate tilted_corridor_estimate(const SigmaProfile& profile, double T, Band band, const McOptions& opts);

/// Same quantity by brute force: simulate X under P0 and count paths that
/// follow the corridor, times e^T. Only practical for small T.
Estimate direct_corridor_estimate(const SigmaProfile& profile, double T, Band band, const McOptions& opts);

/// Exact e^T P0(corridor) for constant sigma, from the eigen expansion of the
/// killed heat kernel integrated against the tilt weight exp(-sqrt2 W_T).
double tilted_strip_oracle(double sigma, double T, Band band);

struct SoftCorridorSpec {
  double horizon = 10.0;
  double c3 = 1.0;
  double endpoint_halfwidth = 0.0;  // +inf disables the endpoint window
  double start = 0.0;
  double c5 = 1.0;                  // occupation window c5 T^{1/3}
};

struct SoftCorridorResult {
  Estimate functional;
  // Occupation fraction Leb{s <= T : |B_s| <= c5 T^{1/3}} / T across paths.
  double occupation_mean = 0.0;
  std::vector<double> occupation_deciles;  // 0.1, ..., 0.9
  double p_occupation_half = 0.0;          // fraction of paths with occupation >= 1/2
};

/// Monte Carlo for E[exp(-(c3/T) int_0^T |B_s| ds) 1{|B_T| <= halfwidth}].
SoftCorridorResult soft_corridor_functional(const SoftCorridorSpec& spec, const McOptions& opts);

}  // namespace tibbm
