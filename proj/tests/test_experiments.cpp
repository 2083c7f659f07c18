#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tibbm/corridor.hpp"
#include "tibbm/experiments.hpp"
#include "tibbm/rng.hpp"

using namespace tibbm;
using std::numbers::sqrt2;

namespace {

const std::vector<double> kGrid{8, 10, 12, 14, 16, 20, 25, 30, 40};

Series synthetic(double (*g)(double)) {
  Series s;
  for (double t : kGrid) s.emplace_back(t, g(t));
  return s;
}

}  // namespace

TEST(EstimateMedian, Examples) {
  EXPECT_EQ(median({1, 2, 3, 4, 5}), 3.0);
  EXPECT_THROW(estimate_median({1, 2, 3, 4, 5}, 500), std::invalid_argument);
  std::vector<double> sym;
  for (int i = 1; i <= 50; ++i) {
    sym.push_back(i * 0.1);
    sym.push_back(-i * 0.1);
  }
  const auto m = estimate_median(sym, 1000);
  EXPECT_NEAR(m.median, 0.0, 1e-15);
  EXPECT_LE(m.lo, 0.0);
  EXPECT_GE(m.hi, 0.0);
}

TEST(EstimateMedian, GaussianPrecisionAndCoverage) {
  const StreamKey key(555);
  std::vector<double> xs;
  PhiloxEngine eng(key, 0, 0);
  for (int i = 0; i < 10000; ++i) xs.push_back(7.0 + standard_normal(eng));
  const auto m = estimate_median(xs, 400);
  EXPECT_NEAR(m.median, 7.0, 0.05);
  EXPECT_LT(m.lo, m.median);
  EXPECT_GT(m.hi, m.median);

  int covered = 0;
  for (std::uint32_t rep = 0; rep < 200; ++rep) {
    PhiloxEngine e(key, rep + 1, 0);
    std::vector<double> s;
    for (int i = 0; i < 101; ++i) s.push_back(standard_normal(e));
    const auto est = estimate_median(s, 400, rep);
    covered += (est.lo <= 0.0 && 0.0 <= est.hi) ? 1 : 0;
  }
  EXPECT_GE(covered, 180);
}

TEST(FitPower, ExactRecovery) {
  const auto f = fit_power(synthetic([](double t) { return 2.0 * std::cbrt(t); }), 300);
  EXPECT_NEAR(f.param("alpha").value, 1.0 / 3.0, 1e-6);
  EXPECT_NEAR(f.param("c").value, 2.0, 1e-6);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(f.param("alpha").lo, 1.0 / 3.0, 1e-6);
  EXPECT_EQ(f.residuals.size(), kGrid.size());
}

TEST(FitPower, NoisyRecoveryAndCi) {
  const StreamKey key(99);
  int within = 0;
  for (std::uint32_t rep = 0; rep < 50; ++rep) {
    PhiloxEngine eng(key, rep, 0);
    Series s;
    for (double t : kGrid) s.emplace_back(t, 2.0 * std::cbrt(t) * (1.0 + 0.1 * (uniform_open(eng) - 0.5)));
    const auto f = fit_power(s, 300, rep);
    const auto& a = f.param("alpha");
    EXPECT_LE(a.lo, a.value);
    EXPECT_GE(a.hi, a.value);
    EXPECT_GE(f.r_squared, 0.0);
    EXPECT_LE(f.r_squared, 1.0);
    within += std::abs(a.value - 1.0 / 3.0) <= 0.05 ? 1 : 0;
  }
  EXPECT_GE(within, 48);
}

TEST(FitPower, DropsNonpositiveAndNeedsFourPoints) {
  Series s = synthetic([](double t) { return std::cbrt(t); });
  s[0].second = -0.5;
  s[1].second = 0.0;
  const auto f = fit_power(s, 200);
  EXPECT_EQ(f.dropped_t, (std::vector<double>{8, 10}));
  EXPECT_NEAR(f.param("alpha").value, 1.0 / 3.0, 1e-9);
  EXPECT_THROW(fit_power({{8, 1}, {10, 1.1}, {12, 1.2}}, 200), std::invalid_argument);
  EXPECT_THROW(fit_power(synthetic([](double t) { return t; }), 100), std::invalid_argument);
}

TEST(FitLog, ExactRecoveryAndModelSelection) {
  const auto f = fit_log(synthetic([](double t) { return 1.0607 * std::log(t); }), 300);
  EXPECT_NEAR(f.param("b").value, 1.0607, 1e-6);
  EXPECT_NEAR(f.param("a").value, 0.0, 1e-6);
  const auto root_p = fit_power(synthetic([](double t) { return std::sqrt(t); }), 300);
  const auto root_l = fit_log(synthetic([](double t) { return std::sqrt(t); }), 300);
  EXPECT_LT(root_l.r_squared, root_p.r_squared);
}

TEST(CorrectionCurve, Examples) {
  const auto flat = SigmaProfile::constant(1.0);
  std::vector<SummaryRow> rows;
  for (double t : kGrid) {
    SummaryRow r;
    r.T = t;
    r.med = sqrt2 * t;
    rows.push_back(r);
  }
  for (const auto& [t, g] : correction_curve(rows, flat)) EXPECT_NEAR(g, 0.0, 1e-12);
  for (auto& r : rows) r.med = sqrt2 * r.T - 3.0 / (2.0 * sqrt2) * std::log(r.T);
  const auto s = correction_curve(rows, flat);
  for (const auto& [t, g] : s) EXPECT_NEAR(g, 1.0607 * std::log(t), 1e-4 * std::log(t));
  EXPECT_NEAR(fit_log(s, 200).param("b").value, 3.0 / (2.0 * sqrt2), 1e-9);
  rows[0].valid = false;
  EXPECT_THROW(correction_curve(rows, flat), std::invalid_argument);
}

TEST(PlanSpeed, UsesSolverForIncreasingProfiles) {
  EXPECT_DOUBLE_EQ(plan_speed(SigmaProfile::affine(2.0, -1.0)), 3.0 / sqrt2);
  EXPECT_DOUBLE_EQ(plan_speed(SigmaProfile::constant(1.0)), sqrt2);
  EXPECT_NEAR(plan_speed(SigmaProfile::affine(1.0, 1.0)), std::sqrt(14.0 / 3.0), 1e-2);
}

TEST(RunPlan, Bookkeeping) {
  ExperimentPlan plan;
  plan.t_grid = {4.0};
  plan.replicates_per_t = 100;
  plan.bootstrap_n = 200;
  plan.barrier_C_grid = {0.0, 50.0};
  const auto res = run_plan(plan);
  ASSERT_EQ(res.rows.size(), 1u);
  const auto& row = res.rows[0];
  EXPECT_EQ(row.n_effective, 100u);
  EXPECT_EQ(row.mode, "full");
  EXPECT_TRUE(row.valid);
  EXPECT_LE(row.med_lo, row.med);
  EXPECT_GE(row.med_hi, row.med);
  EXPECT_NEAR(row.g, sqrt2 * 4.0 - row.med, 1e-12);

  const auto bars = barrier_crossing_report(plan, res);
  ASSERT_EQ(bars.size(), 2u);
  EXPECT_TRUE(bars[0].vacuous);
  EXPECT_EQ(bars[1].p_hat, 0.0);
  EXPECT_FALSE(bars[1].exceeds);
}

TEST(RunPlan, DeterministicAcrossWorkersAndModes) {
  ExperimentPlan plan;
  plan.profile = SigmaProfile::affine(2.0, -1.0);
  plan.t_grid = {3.0, 5.0, 6.0};
  plan.replicates_per_t = 40;
  plan.bootstrap_n = 200;
  plan.prune_above = 4.0;
  plan.sim.prune_beta = 2.0;
  plan.workers = 1;
  const auto a = run_plan(plan);
  plan.workers = 3;
  const auto b = run_plan(plan);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].med, b.rows[i].med);
    EXPECT_EQ(a.rows[i].med_lo, b.rows[i].med_lo);
    EXPECT_EQ(a.rows[i].mean, b.rows[i].mean);
  }
  EXPECT_EQ(a.rows[0].mode, "full");
  EXPECT_EQ(a.rows[1].mode, "pruned");
  // A grid point's replicates do not depend on the rest of the grid.
  plan.t_grid = {5.0};
  const auto c = run_plan(plan);
  EXPECT_EQ(c.rows[0].med, a.rows[1].med);
}

TEST(RunPlan, AllTruncatedRowIsInvalid) {
  ExperimentPlan plan;
  plan.t_grid = {6.0};
  plan.replicates_per_t = 20;
  plan.bootstrap_n = 200;
  plan.sim.max_particles = 5;
  const auto res = run_plan(plan);
  EXPECT_FALSE(res.rows[0].valid);
  EXPECT_EQ(res.rows[0].n_effective, 0u);
}

TEST(PaleyZygmund, DegenerateAndSmallT) {
  std::vector<SimOutcome> zeros(50);
  const auto z = paley_zygmund_row(5.0, zeros, {0.0, 0.0, 0});
  EXPECT_EQ(z.ratio, 0.0);
  EXPECT_TRUE(z.holds);

  ExperimentPlan plan;
  plan.t_grid = {3.0};
  plan.replicates_per_t = 200000;
  plan.bootstrap_n = 200;
  const auto res = run_plan(plan);
  const auto pz = paley_zygmund_report(plan, res);
  ASSERT_EQ(pz.size(), 1u);
  EXPECT_TRUE(pz[0].holds);
  EXPECT_GT(pz[0].p_nonempty, 0.0);
  EXPECT_LE(pz[0].ratio, pz[0].p_nonempty + 3 * std::hypot(pz[0].ratio_se, pz[0].p_se));
  EXPECT_TRUE(pz[0].prediction_agrees) << pz[0].mean_good << " vs " << pz[0].prediction;
  EXPECT_EQ(pz[0].prediction_se, 0.0);
}

TEST(BarrierReport, BoundValues) {
  EXPECT_NEAR(barrier_bound(12.0, 3.0, 2.0), std::numbers::e * std::pow(12.0, 1.0 - 3.0 * sqrt2 / 2.0), 1e-15);
  EXPECT_NEAR(1.0 - 3.0 * sqrt2 / 2.0, -1.121, 1e-3);
  const auto r = barrier_row(12.0, 3.0, 2.0, 0, 2000);
  EXPECT_EQ(r.p_hat, 0.0);
  EXPECT_FALSE(r.vacuous);
  EXPECT_FALSE(r.exceeds);
  EXPECT_GT(r.hi, 0.0);
  EXPECT_TRUE(barrier_row(12.0, 0.0, 2.0, 5, 10).vacuous);
  EXPECT_TRUE(barrier_row(12.0, 3.0, 2.0, 1000, 2000).exceeds);
}
