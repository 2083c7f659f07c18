#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tibbm/profile.hpp"
#include "tibbm/simulator.hpp"
#include "tibbm/stats.hpp"

namespace tibbm {

enum class Estimator { median, mean };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

struct ExperimentPlan {
  SigmaProfile profile = SigmaProfile::constant(1.0);
  std::vector<double> t_grid{8.0, 10.0, 12.0, 14.0};
  std::uint64_t replicates_per_t = 2000;
  SimConfig sim;  // template: profile, T, mode and seed are set per grid point
  Estimator estimator = Estimator::median;
  std::uint64_t bootstrap_n = 1000;
  double prune_above = 14.0;  // T > prune_above runs pruned with sim.prune_beta
  std::vector<double> barrier_C_grid;
  std::uint64_t seed = 1;
  std::size_t workers = 0;

  /// Throws std::invalid_argument.
  void check() const;
};

/// Default plan grid: full mode through 14, pruned (beta 2) beyond.
ExperimentPlan default_plan(const SigmaProfile& profile);

struct MedianEstimate {
  double median = 0.0;
  double lo = 0.0;  // 95% percentile bootstrap interval
  double hi = 0.0;
};

/// Sample median with a percentile-bootstrap 95% interval. Needs >= 10 samples.
MedianEstimate estimate_median(const std::vector<double>& samples, std::uint64_t bootstrap_n,
                               std::uint64_t seed = 0x6d656469616eULL);

struct SummaryRow {
  double T = 0.0;
  std::string mode;
  std::uint64_t n_replicates = 0;
  std::uint64_t n_effective = 0;  // non-truncated replicates
  double med = 0.0;
  double med_lo = 0.0;
  double med_hi = 0.0;
  double mean = 0.0;
  double mean_se = 0.0;
  double g = 0.0;  // v_sigma T minus the chosen estimator
  double p_upper_crossed = 0.0;
  double p_good_nonempty = 0.0;
  double mean_good = 0.0;
  double mean_good_se = 0.0;
  bool valid = true;  // false when every replicate was truncated
};

struct PlanResult {
  double speed = 0.0;
  std::vector<SummaryRow> rows;
  std::vector<std::vector<SimOutcome>> outcomes;  // per grid point, by replicate
};

/// Replicate i at grid value T uses StreamKey(seed).child(bits of T).child(i),
/// so results do not depend on the worker count or on the rest of the grid.
PlanResult run_plan(const ExperimentPlan& plan);

/// Front speed used for g: closed form for non-increasing profiles, the
/// constrained solver otherwise.
double plan_speed(const SigmaProfile& profile);

using Series = std::vector<std::pair<double, double>>;  // (T, g)

Series correction_curve(const std::vector<SummaryRow>& rows, const SigmaProfile& profile);

enum class FitModel { power, log };
std::string to_string(FitModel m);

struct FitParam {
  std::string name;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct FitResult {
  FitModel model = FitModel::power;
  std::vector<FitParam> params;  // power: c, alpha; log: a, b
  double r_squared = 0.0;
  std::vector<double> t;
  std::vector<double> g;
  std::vector<double> residuals;  // in the fitted scale (log g for power)
  std::vector<double> dropped_t;  // points with g <= 0
  std::uint64_t bootstrap_n = 0;

  [[nodiscard]] const FitParam& param(const std::string& name) const;
};

/// log g = log c + alpha log T by least squares, residual-bootstrap CIs.
FitResult fit_power(const Series& series, std::uint64_t bootstrap_n = 1000, std::uint64_t seed = 1);
/// g = a + b log T by least squares, residual-bootstrap CIs.
FitResult fit_log(const Series& series, std::uint64_t bootstrap_n = 1000, std::uint64_t seed = 1);

/// e^T P0(corridor) for the simulator's good corridor at (profile, T). Exact
/// for constant profiles; tilted Monte Carlo otherwise.
Estimate corridor_first_moment(const SigmaProfile& profile, double T, double good_offset, std::uint64_t n_paths,
                               std::uint64_t seed, std::size_t workers = 1);

struct PzRow {
  double T = 0.0;
  std::uint64_t n = 0;
  double p_nonempty = 0.0;
  double p_se = 0.0;
  double mean_good = 0.0;
  double mean_good_se = 0.0;
  double mean_good_sq = 0.0;
  double mean_good_sq_se = 0.0;
  double ratio = 0.0;  // (E M)^2 / E M^2
  double ratio_se = 0.0;
  bool holds = true;  // p_nonempty >= ratio - 3 combined stderr
  double prediction = 0.0;
  double prediction_se = 0.0;
  bool prediction_agrees = true;  // |mean_good - prediction| <= 3 combined stderr
};

PzRow paley_zygmund_row(double T, const std::vector<SimOutcome>& outcomes, Estimate prediction);

std::vector<PzRow> paley_zygmund_report(const ExperimentPlan& plan, const PlanResult& result,
                                        std::uint64_t prediction_paths = 200000);

struct BarrierRow {
  double T = 0.0;
  double C = 0.0;
  std::uint64_t n = 0;
  double p_hat = 0.0;
  double se = 0.0;
  double lo = 0.0;  // Wilson 95%
  double hi = 0.0;
  double bound = 0.0;  // e T^{1 - sqrt2 C / sigma(0)}
  bool vacuous = false;
  bool exceeds = false;  // p_hat > bound + 3 se
};

/// Crossing bound e T^{1 - sqrt2 C / sigma0}.
double barrier_bound(double T, double C, double sigma0);

BarrierRow barrier_row(double T, double C, double sigma0, std::uint64_t crossed, std::uint64_t n);

/// One row per (T, C) for C in plan.barrier_C_grid, read from extra_crossed.
std::vector<BarrierRow> barrier_crossing_report(const ExperimentPlan& plan, const PlanResult& result);

}  // namespace tibbm
