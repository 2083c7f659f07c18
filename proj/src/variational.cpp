#include "tibbm/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tibbm {

void PathFunction::check() const {
  if (grid.size() < 2) throw std::invalid_argument("path grid needs at least 2 points");
  if (grid.size() != values.size()) throw std::invalid_argument("path grid/values size mismatch");
  if (grid.front() != 0.0 || grid.back() != 1.0) throw std::invalid_argument("path grid must span [0,1]");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("path grid must be strictly increasing");
  }
  if (values.front() != 0.0) throw std::invalid_argument("path must start at the origin");
}

double PathFunction::at(double t) const {
  if (t <= grid.front()) return values.front();
  if (t >= grid.back()) return values.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - grid.begin()) - 1;
  const double w = (t - grid[k]) / (grid[k + 1] - grid[k]);
  return values[k] + w * (values[k + 1] - values[k]);
}

std::vector<double> uniform_grid(int n_points) {
  if (n_points < 2) throw std::invalid_argument("uniform_grid needs at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (n_points - 1);
  g.back() = 1.0;
  return g;
}

double speed_closed_form(const SigmaProfile& profile) {
  return std::numbers::sqrt2 * profile.integral_sigma(1.0);
}

double optimal_path(const SigmaProfile& profile, double t) {
  return std::numbers::sqrt2 * profile.integral_sigma(t);
}

PathFunction sample_optimal_path(const SigmaProfile& profile, const std::vector<double>& grid) {
  PathFunction p;
  p.grid = grid;
  p.values.reserve(grid.size());
  for (double t : grid) p.values.push_back(optimal_path(profile, t));
  p.values.front() = 0.0;
  p.check();
  return p;
}

std::vector<double> constraint_curve(const PathFunction& path, const SigmaProfile& profile) {
  path.check();
  std::vector<double> j(path.grid.size(), 0.0);
  for (std::size_t k = 1; k < path.grid.size(); ++k) {
    const double h = path.grid[k] - path.grid[k - 1];
    const double slope = (path.values[k] - path.values[k - 1]) / h;
    const double w = 0.5 * profile.integral_inv_sigma_sq(path.grid[k - 1], path.grid[k]);
    j[k] = j[k - 1] + slope * slope * w;
  }
  return j;
}

double rate_functional(const PathFunction& path, const SigmaProfile& profile) {
  return constraint_curve(path, profile).back();
}

namespace {

struct Pt {
  double x, y;
};

double cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

VariationalSolution solve_constrained(const SigmaProfile& profile, int n_grid) {
  if (n_grid < 8) throw std::invalid_argument("solve_constrained needs n_grid >= 8");
  const std::vector<double> grid = uniform_grid(n_grid);
  const std::size_t m = grid.size() - 1;  // intervals

  std::vector<double> w(m + 1, 0.0), a2(m + 1, 0.0);
  std::vector<Pt> pts(m + 1, Pt{0.0, 0.0});
  for (std::size_t j = 1; j <= m; ++j) {
    const double h = grid[j] - grid[j - 1];
    w[j] = 0.5 * profile.integral_inv_sigma_sq(grid[j - 1], grid[j]);
    a2[j] = h * h / w[j];
    pts[j] = {pts[j - 1].x + a2[j], grid[j]};
  }

  // Greatest convex minorant of the constraint points (lower hull).
  std::vector<std::size_t> hull;
  for (std::size_t k = 0; k <= m; ++k) {
    while (hull.size() >= 2 && cross(pts[hull[hull.size() - 2]], pts[hull.back()], pts[k]) <= 0.0) {
      hull.pop_back();
    }
    hull.push_back(k);
  }

  // Cumulative energy on the minorant and the hull slope governing each interval.
  std::vector<double> energy(m + 1, 0.0), seg_slope(m + 1, 0.0);
  for (std::size_t s = 0; s + 1 < hull.size(); ++s) {
    const std::size_t k0 = hull[s], k1 = hull[s + 1];
    const double slope = (pts[k1].y - pts[k0].y) / (pts[k1].x - pts[k0].x);
    for (std::size_t k = k0 + 1; k <= k1; ++k) {
      energy[k] = k == k1 ? pts[k1].y : pts[k0].y + slope * (pts[k].x - pts[k0].x);
      seg_slope[k] = slope;
    }
  }

  VariationalSolution sol;
  sol.path.grid = grid;
  sol.path.values.assign(m + 1, 0.0);
  double primal = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    const double e = std::max(0.0, energy[j] - energy[j - 1]);
    const double h = grid[j] - grid[j - 1];
    const double s = std::sqrt(e / w[j]);
    primal += h * s;
    sol.path.values[j] = primal;
  }

  // Multipliers: Lambda_j = 1 / (2 sqrt(hull slope)), mu_k = Lambda_k - Lambda_{k+1}.
  // Weak duality holds for any mu >= 0, so the bound is valid even if rounding
  // perturbs the KKT structure.
  std::vector<double> lambda(m + 2, 0.0);
  for (std::size_t j = 1; j <= m; ++j) lambda[j] = 0.5 / std::sqrt(seg_slope[j]);
  double dual = 0.0;
  for (std::size_t j = 1; j <= m; ++j) dual += a2[j] / (4.0 * lambda[j]);
  for (std::size_t k = 1; k <= m; ++k) {
    const double mu = std::max(0.0, lambda[k] - lambda[k + 1]);
    dual += mu * grid[k];
  }

  sol.running_cost = constraint_curve(sol.path, profile);
  sol.binding.assign(m + 1, false);
  for (std::size_t k = 1; k <= m; ++k) {
    const double slack = grid[k] - sol.running_cost[k];
    sol.binding[k] = slack <= 1e-9;
    sol.max_violation = std::max(sol.max_violation, -slack);
  }
  sol.speed = sol.path.values.back();
  sol.dual_bound = dual;
  sol.solver_gap = std::max(0.0, dual - sol.speed);
  sol.certified = sol.max_violation <= 1e-8 && sol.solver_gap <= 1e-6 * sol.speed;
  return sol;
}

}  // namespace tibbm
