#include "tibbm/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tibbm/corridor.hpp"
#include "tibbm/parallel.hpp"
#include "tibbm/rng.hpp"
#include "tibbm/variational.hpp"

namespace tibbm {

namespace {

StreamKey grid_key(std::uint64_t seed, double T) { return StreamKey(seed).child(std::bit_cast<std::uint64_t>(T)); }

std::size_t draw_index(PhiloxEngine& eng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform_open(eng) * static_cast<double>(n)));
}

struct LineFit {
  LinearFit fit;
  double r_squared = 0.0;
  std::vector<double> fitted;
  std::vector<double> residuals;
};

LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit out;
  out.fit = least_squares(x, y);
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = out.fit.intercept + out.fit.slope * x[i];
    out.fitted.push_back(f);
    out.residuals.push_back(y[i] - f);
    ss_res += (y[i] - f) * (y[i] - f);
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  out.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  return out;
}

// Least squares y = a + b x with residual-bootstrap percentile intervals for a and b.
FitResult fit_line(FitModel model, const Series& series, std::uint64_t bootstrap_n, std::uint64_t seed) {
  FitResult r;
  r.model = model;
  r.bootstrap_n = bootstrap_n;
  std::vector<double> x, y;
  for (const auto& [t, g] : series) {
    if (!(t > 0.0)) throw std::invalid_argument("fit: T must be positive");
    if (!(g > 0.0)) {
      r.dropped_t.push_back(t);
      continue;
    }
    r.t.push_back(t);
    r.g.push_back(g);
    x.push_back(std::log(t));
    y.push_back(model == FitModel::power ? std::log(g) : g);
  }
  if (x.size() < 4) throw std::invalid_argument("fit: need at least 4 points with g > 0");
  if (bootstrap_n < 200) throw std::invalid_argument("fit: bootstrap_n must be >= 200");

  const LineFit base = line_fit(x, y);
  r.r_squared = base.r_squared;
  r.residuals = base.residuals;

  std::vector<double> as, bs;
  as.reserve(bootstrap_n);
  bs.reserve(bootstrap_n);
  PhiloxEngine eng(StreamKey(seed).child(static_cast<std::uint64_t>(model)), 0, 0);
  std::vector<double> ystar(y.size());
  for (std::uint64_t b = 0; b < bootstrap_n; ++b) {
    for (std::size_t i = 0; i < y.size(); ++i) ystar[i] = base.fitted[i] + base.residuals[draw_index(eng, y.size())];
    const auto f = least_squares(x, ystar);
    as.push_back(f.intercept);
    bs.push_back(f.slope);
  }
  auto param = [](std::string name, double v, const std::vector<double>& boot, auto map) {
    return FitParam{std::move(name), map(v), map(quantile(boot, 0.025)), map(quantile(boot, 0.975))};
  };
  if (model == FitModel::power) {
    r.params.push_back(param("c", base.fit.intercept, as, [](double v) { return std::exp(v); }));
    r.params.push_back(param("alpha", base.fit.slope, bs, [](double v) { return v; }));
  } else {
    r.params.push_back(param("a", base.fit.intercept, as, [](double v) { return v; }));
    r.params.push_back(param("b", base.fit.slope, bs, [](double v) { return v; }));
  }
  return r;
}

}  // namespace

std::string to_string(Estimator e) { return e == Estimator::median ? "median" : "mean"; }

Estimator estimator_from_string(const std::string& s) {
  if (s == "median") return Estimator::median;
  if (s == "mean") return Estimator::mean;
  throw std::invalid_argument("unknown estimator '" + s + "' (expected median or mean)");
}

std::string to_string(FitModel m) { return m == FitModel::power ? "power" : "log"; }

void ExperimentPlan::check() const {
  if (t_grid.empty()) throw std::invalid_argument("t_grid must be nonempty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0) || !std::isfinite(t_grid[i])) throw std::invalid_argument("t_grid values must be positive");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw std::invalid_argument("t_grid must be strictly increasing");
  }
  if (replicates_per_t < 10) throw std::invalid_argument("replicates_per_t must be >= 10");
  if (bootstrap_n < 200) throw std::invalid_argument("bootstrap_n must be >= 200");
  for (double c : barrier_C_grid) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("barrier_C_grid values must be finite and >= 0");
  }
  sim.check();
}

ExperimentPlan default_plan(const SigmaProfile& profile) {
  ExperimentPlan p;
  p.profile = profile;
  p.t_grid = {8, 10, 12, 14, 16, 20, 25, 30, 40};
  p.sim.prune_beta = 2.0;
  return p;
}

MedianEstimate estimate_median(const std::vector<double>& samples, std::uint64_t bootstrap_n, std::uint64_t seed) {
  if (samples.size() < 10) throw std::invalid_argument("estimate_median: need at least 10 samples");
  if (bootstrap_n < 1) throw std::invalid_argument("estimate_median: bootstrap_n must be >= 1");
  MedianEstimate m;
  m.median = median(samples);
  std::vector<double> boot;
  boot.reserve(bootstrap_n);
  std::vector<double> resample(samples.size());
  PhiloxEngine eng(StreamKey(seed), 0, 0);
  for (std::uint64_t b = 0; b < bootstrap_n; ++b) {
    for (double& v : resample) v = samples[draw_index(eng, samples.size())];
    boot.push_back(median(resample));
  }
  m.lo = std::min(m.median, quantile(boot, 0.025));
  m.hi = std::max(m.median, quantile(boot, 0.975));
  return m;
}

double plan_speed(const SigmaProfile& profile) {
  if (profile.kind() == ProfileKind::constant || profile.monotone_decreasing()) return speed_closed_form(profile);
  return solve_constrained(profile, 512).speed;
}

PlanResult run_plan(const ExperimentPlan& plan) {
  plan.check();
  PlanResult res;
  res.speed = plan_speed(plan.profile);
  const std::size_t nt = plan.t_grid.size();
  const std::uint64_t reps = plan.replicates_per_t;

  std::vector<Simulator> sims;
  std::vector<StreamKey> keys;
  for (double T : plan.t_grid) {
    SimConfig c = plan.sim;
    c.profile = plan.profile;
    c.T = T;
    c.seed = plan.seed;
    c.mode = T > plan.prune_above ? SimMode::pruned : SimMode::full;
    c.extra_barrier_C = plan.barrier_C_grid;
    sims.emplace_back(c);
    keys.push_back(grid_key(plan.seed, T));
  }
  res.outcomes.assign(nt, std::vector<SimOutcome>(reps));
  // Largest T first so the slowest tasks do not trail at the end.
  parallel_for(nt * reps, resolve_workers(plan.workers), [&](std::size_t task) {
    const std::size_t ti = nt - 1 - task / reps;
    const std::size_t i = task % reps;
    res.outcomes[ti][i] = sims[ti].run(keys[ti].child(i));
  });

  for (std::size_t ti = 0; ti < nt; ++ti) {
    const double T = plan.t_grid[ti];
    SummaryRow row;
    row.T = T;
    row.mode = to_string(sims[ti].config().mode);
    row.n_replicates = reps;
    std::vector<double> ms;
    RunningStats mean, crossed, nonempty, good;
    for (const auto& o : res.outcomes[ti]) {
      if (o.truncated) continue;
      ++row.n_effective;
      ms.push_back(o.m_max);
      if (std::isfinite(o.m_max)) mean.add(o.m_max);
      crossed.add(o.upper_crossed ? 1.0 : 0.0);
      nonempty.add(o.good_count > 0 ? 1.0 : 0.0);
      good.add(static_cast<double>(o.good_count));
    }
    if (ms.size() < 10) {
      row.valid = false;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.med = row.med_lo = row.med_hi = row.mean = row.mean_se = row.g = nan;
    } else {
      const auto m = estimate_median(ms, plan.bootstrap_n, grid_key(plan.seed, T).child(0xb007).value());
      row.med = m.median;
      row.med_lo = m.lo;
      row.med_hi = m.hi;
      row.mean = mean.mean();
      row.mean_se = mean.stderr_mean();
      row.g = res.speed * T - (plan.estimator == Estimator::median ? row.med : row.mean);
    }
    row.p_upper_crossed = crossed.mean();
    row.p_good_nonempty = nonempty.mean();
    row.mean_good = good.mean();
    row.mean_good_se = good.stderr_mean();
    res.rows.push_back(row);
  }
  return res;
}

Series correction_curve(const std::vector<SummaryRow>& rows, const SigmaProfile& profile) {
  const double v = plan_speed(profile);
  Series s;
  for (const auto& r : rows) {
    if (!r.valid) throw std::invalid_argument("correction_curve: invalid row at T=" + std::to_string(r.T));
    s.emplace_back(r.T, v * r.T - r.med);
  }
  return s;
}

const FitParam& FitResult::param(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no fit parameter " + name);
}

FitResult fit_power(const Series& series, std::uint64_t bootstrap_n, std::uint64_t seed) {
  return fit_line(FitModel::power, series, bootstrap_n, seed);
}

FitResult fit_log(const Series& series, std::uint64_t bootstrap_n, std::uint64_t seed) {
  return fit_line(FitModel::log, series, bootstrap_n, seed);
}

Estimate corridor_first_moment(const SigmaProfile& profile, double T, double good_offset, std::uint64_t n_paths,
                               std::uint64_t seed, std::size_t workers) {
  const double w = std::cbrt(T);
  const double d = good_offset < 0.0 ? default_start_offset(w) : good_offset;
  const Band band{w - d, d};
  if (profile.kind() == ProfileKind::constant) {
    return {tilted_strip_oracle(profile.eval(0.0), T, band), 0.0, 0};
  }
  McOptions o;
  o.n_paths = n_paths;
  o.seed = seed;
  o.workers = workers;
  return tilted_corridor_estimate(profile, T, band, o);
}

PzRow paley_zygmund_row(double T, const std::vector<SimOutcome>& outcomes, Estimate prediction) {
  PzRow r;
  r.T = T;
  RunningStats p, m1, m2;
  double sxy = 0.0;
  std::vector<double> a, b;
  for (const auto& o : outcomes) {
    if (o.truncated) continue;
    const double g = static_cast<double>(o.good_count);
    p.add(g > 0 ? 1.0 : 0.0);
    m1.add(g);
    m2.add(g * g);
    a.push_back(g);
    b.push_back(g * g);
  }
  r.n = p.count();
  r.p_nonempty = p.mean();
  r.p_se = p.stderr_mean();
  r.mean_good = m1.mean();
  r.mean_good_se = m1.stderr_mean();
  r.mean_good_sq = m2.mean();
  r.mean_good_sq_se = m2.stderr_mean();
  if (r.n > 1) {
    for (std::size_t i = 0; i < a.size(); ++i) sxy += (a[i] - m1.mean()) * (b[i] - m2.mean());
    sxy /= static_cast<double>(r.n - 1);
  }
  if (r.mean_good_sq > 0.0) {
    const double e1 = r.mean_good, e2 = r.mean_good_sq;
    r.ratio = e1 * e1 / e2;
    const double g1 = 2 * e1 / e2, g2 = -e1 * e1 / (e2 * e2);
    const double var = (g1 * g1 * m1.variance() + g2 * g2 * m2.variance() + 2 * g1 * g2 * sxy) / static_cast<double>(r.n);
    r.ratio_se = std::sqrt(std::max(0.0, var));
  }
  r.holds = r.p_nonempty >= r.ratio - 3.0 * std::hypot(r.ratio_se, r.p_se);
  r.prediction = prediction.value;
  r.prediction_se = prediction.std_error;
  r.prediction_agrees =
      std::abs(r.mean_good - r.prediction) <= 3.0 * std::hypot(r.mean_good_se, r.prediction_se);
  return r;
}

std::vector<PzRow> paley_zygmund_report(const ExperimentPlan& plan, const PlanResult& result,
                                        std::uint64_t prediction_paths) {
  std::vector<PzRow> out;
  for (std::size_t ti = 0; ti < plan.t_grid.size(); ++ti) {
    const double T = plan.t_grid[ti];
    const auto pred = corridor_first_moment(plan.profile, T, plan.sim.good_offset, prediction_paths,
                                            grid_key(plan.seed, T).child(0x7e57).value(), plan.workers);
    out.push_back(paley_zygmund_row(T, result.outcomes[ti], pred));
  }
  return out;
}

double barrier_bound(double T, double C, double sigma0) {
  return std::numbers::e * std::pow(T, 1.0 - std::numbers::sqrt2 * C / sigma0);
}

BarrierRow barrier_row(double T, double C, double sigma0, std::uint64_t crossed, std::uint64_t n) {
  BarrierRow r;
  r.T = T;
  r.C = C;
  r.n = n;
  if (n > 0) {
    const double nn = static_cast<double>(n);
    r.p_hat = static_cast<double>(crossed) / nn;
    r.se = std::sqrt(r.p_hat * (1.0 - r.p_hat) / nn);
    const double z = 1.959963984540054, z2 = z * z;
    const double centre = (r.p_hat + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z / (1 + z2 / nn) * std::sqrt(r.p_hat * (1 - r.p_hat) / nn + z2 / (4 * nn * nn));
    r.lo = std::max(0.0, centre - half);
    r.hi = std::min(1.0, centre + half);
  }
  r.bound = barrier_bound(T, C, sigma0);
  r.vacuous = r.bound >= 1.0;
  r.exceeds = r.p_hat > r.bound + 3.0 * r.se;
  return r;
}

std::vector<BarrierRow> barrier_crossing_report(const ExperimentPlan& plan, const PlanResult& result) {
  std::vector<BarrierRow> out;
  const double sigma0 = plan.profile.eval(0.0);
  for (std::size_t ti = 0; ti < plan.t_grid.size(); ++ti) {
    for (std::size_t j = 0; j < plan.barrier_C_grid.size(); ++j) {
      std::uint64_t crossed = 0, n = 0;
      for (const auto& o : result.outcomes[ti]) {
        if (o.truncated) continue;
        ++n;
        crossed += o.extra_crossed.at(j) ? 1 : 0;
      }
      out.push_back(barrier_row(plan.t_grid[ti], plan.barrier_C_grid[j], sigma0, crossed, n));
    }
  }
  return out;
}

}  // namespace tibbm
