#pragma once

#include <vector>

#include "tibbm/profile.hpp"

namespace tibbm {

/// Piecewise-linear path on [0,1] with f(0) = 0.
struct PathFunction {
  std::vector<double> grid;    // strictly increasing, grid.front() == 0, grid.back() == 1
  std::vector<double> values;  // f(grid[i]); values.front() == 0

  /// Throws std::invalid_argument when the invariants do not hold.
  void check() const;
  /// Linear interpolation at t in [0,1].
  [[nodiscard]] double at(double t) const;
};

/// Uniform grid of n points on [0,1].
std::vector<double> uniform_grid(int n_points);

/// Result of the grid-constrained maximisation of f(1).
struct VariationalSolution {
  double speed = 0.0;              // f(1) of the optimiser
  PathFunction path;               // optimiser on the solver grid
  std::vector<bool> binding;       // per grid point: J_{t_k} = t_k active (index 0 always false)
  std::vector<double> running_cost;  // J_{t_k} of the optimiser
  double dual_bound = 0.0;         // Lagrangian upper bound on the discrete optimum
  double solver_gap = 0.0;         // dual_bound - speed
  double max_violation = 0.0;      // max_k (J_{t_k} - t_k), clipped at 0
  bool certified = false;          // feasible and gap <= 1e-6 * speed
  bool unique = true;              // objective strictly concave in the energies, optimiser unique
};

/// v_sigma = sqrt(2) int_0^1 sigma. Equals the constrained optimum only for
/// decreasing sigma; the caller decides whether that applies.
double speed_closed_form(const SigmaProfile& profile);

/// fbar(t) = sqrt(2) int_0^t sigma, the unique optimiser for decreasing sigma.
double optimal_path(const SigmaProfile& profile, double t);

/// fbar sampled on `grid`.
PathFunction sample_optimal_path(const SigmaProfile& profile, const std::vector<double>& grid);

/// I(f) = int_0^1 f'^2 / (2 sigma^2) for the piecewise-linear interpolant.
double rate_functional(const PathFunction& path, const SigmaProfile& profile);

/// J_t at each grid point of the path (J_0 = 0).
std::vector<double> constraint_curve(const PathFunction& path, const SigmaProfile& profile);

/// Maximises f(1) over piecewise-linear paths on a uniform grid of n_grid
/// points subject to J_{t_k} <= t_k at every grid point.
///
/// With per-interval energies e_j = s_j^2 w_j (s_j the slope, w_j the
/// interval's int 1/(2 sigma^2)), the problem is to maximise the concave
/// sum_j h sqrt(e_j / w_j) under prefix constraints sum_{j<=k} e_j <= t_k.
/// Its KKT conditions say the cumulative energy, as a function of the
/// cumulative weights A_k = sum_{j<=k} h^2 / w_j, is the greatest convex
/// minorant of the points (A_k, t_k). That minorant is computed exactly; the
/// multipliers read off its slopes give a weak-duality bound that certifies
/// the result.
///
/// Throws std::invalid_argument for n_grid < 8. A result with
/// `certified == false` is the best feasible point found.
VariationalSolution solve_constrained(const SigmaProfile& profile, int n_grid);

}  // namespace tibbm
