#include "tibbm/corridor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tibbm/errors.hpp"
#include "tibbm/parallel.hpp"
#include "tibbm/rng.hpp"
#include "tibbm/variational.hpp"

namespace tibbm {

namespace {

using std::numbers::pi;
using std::numbers::sqrt2;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kShardSize = 4096;

double default_dt(double clock_total) { return std::min(clock_total * 1e-4, 1e-2); }

// Runs path(key, acc) for every path index. Paths are grouped in fixed-size
// shards; each shard accumulates locally and shards merge in index order, so
// the result does not depend on the worker count.
template <class PathFn>
RunningStats run_sharded(std::uint64_t n_paths, std::uint64_t seed, std::size_t workers, PathFn path) {
  const std::uint64_t n_shards = (n_paths + kShardSize - 1) / kShardSize;
  std::vector<RunningStats> shards(n_shards);
  const StreamKey root(seed);
  parallel_for(n_shards, resolve_workers(workers), [&](std::size_t s) {
    RunningStats acc;
    const std::uint64_t begin = s * kShardSize;
    const std::uint64_t end = std::min(n_paths, begin + kShardSize);
    for (std::uint64_t i = begin; i < end; ++i) acc.add(path(root.child(i), i));
    shards[s] = acc;
  });
  RunningStats total;
  for (const auto& s : shards) total.merge(s);
  return total;
}

// Probability that a Brownian bridge with variance v between a and b (both
// below `wall`) touches the wall.
inline double bridge_hit_above(double wall, double a, double b, double v) {
  if (a >= wall || b >= wall) return 1.0;
  if (!(v > 0.0)) return 0.0;
  return std::exp(-2.0 * (wall - a) * (wall - b) / v);
}

inline double bridge_hit_below(double wall, double a, double b, double v) {
  if (a <= wall || b <= wall) return 1.0;
  if (!(v > 0.0)) return 0.0;
  return std::exp(-2.0 * (a - wall) * (b - wall) / v);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / sqrt2); }

struct TiltGrid {
  std::vector<double> clock;  // variance clock at grid times
  std::vector<double> front;  // T fbar(t/T)
  std::vector<double> drift;  // sigma'(t/T) / sigma(t/T)^2
  double dt = 0.0;
  double sigma_end = 1.0;
};

TiltGrid make_tilt_grid(const SigmaProfile& profile, double T, double dt) {
  if (!(T > 0.0)) throw DomainError("corridor estimate needs T > 0");
  if (!(dt > 0.0)) dt = default_dt(profile.clock(T, T));
  const auto n = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  TiltGrid g;
  g.dt = T / static_cast<double>(n);
  g.clock.resize(n + 1);
  g.front.resize(n + 1);
  g.drift.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = i == n ? T : static_cast<double>(i) * g.dt;
    const double u = t / T;
    const double s = profile.eval(u);
    g.clock[i] = profile.clock(t, T);
    g.front[i] = T * optimal_path(profile, u);
    g.drift[i] = profile.deriv(u) / (s * s);
  }
  g.sigma_end = profile.eval(1.0);
  return g;
}

}  // namespace

void StripSpec::check() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(upper > lower)) {
    throw DomainError("strip: need finite lower < upper");
  }
  if (!(clock_total >= 0.0) || !(horizon >= 0.0) || !std::isfinite(clock_total)) {
    throw DomainError("strip: clock_total and horizon must be nonnegative");
  }
  if ((clock_total == 0.0) != (horizon == 0.0)) {
    throw DomainError("strip: clock_total must vanish exactly when horizon does");
  }
}

SpectralResult strip_survival_spectral(const StripSpec& spec) {
  spec.check();
  SpectralResult r;
  const double w = spec.width();
  const double x = spec.start - spec.lower;
  if (!(x > 0.0 && x < w)) {
    r.probability = 0.0;
    r.log_probability = -kInf;
    r.method = "boundary";
    return r;
  }
  const double tau = spec.clock_total;
  if (tau == 0.0) {
    r.probability = 1.0;
    r.log_probability = 0.0;
    r.method = "trivial";
    return r;
  }

  if (tau / (w * w) >= 0.05) {
    // Factor out the leading term so the sum survives underflow of P itself.
    const double c = pi * pi * tau / (2.0 * w * w);
    const double s1 = std::sin(pi * x / w);
    double sum = 0.0;
    int terms = 0;
    double bound = 0.0;
    for (int k = 1;; k += 2) {
      const double decay = std::exp(-(static_cast<double>(k) * k - 1.0) * c);
      sum += std::sin(k * pi * x / w) / (s1 * k) * decay;
      ++terms;
      const int next = k + 2;
      const double next_bound = 4.0 / (next * pi) * std::exp(-static_cast<double>(next) * next * c);
      if (next_bound < 1e-16 || terms > 100000) {
        // Tail sum_{j>=next, odd} 4/(j pi) e^{-j^2 c} is dominated by a geometric series.
        bound = next_bound / (1.0 - std::exp(-4.0 * (next + 1) * c));
        break;
      }
    }
    const double log_lead = std::log(4.0 / pi) + std::log(s1) - c;
    r.log_probability = sum > 0.0 ? log_lead + std::log(sum) : -kInf;
    r.probability = std::exp(r.log_probability);
    r.truncation_bound = bound;
    r.terms = terms;
    r.method = "eigen";
    return r;
  }

  // Images: P = sum_n [Phi((w-x+2nw)/s) - Phi((-x+2nw)/s) - Phi((w+x+2nw)/s) + Phi((x+2nw)/s)].
  const double s = std::sqrt(tau);
  auto term = [&](int n) {
    const double sh = 2.0 * n * w;
    return normal_cdf((w - x + sh) / s) - normal_cdf((-x + sh) / s) - normal_cdf((w + x + sh) / s) +
           normal_cdf((x + sh) / s);
  };
  double p = term(0);
  int terms = 1;
  double bound = 0.0;
  for (int n = 1;; ++n) {
    p += term(n) + term(-n);
    terms += 2;
    // Images at distance >= (2n+1)w - w from the start contribute at most
    // 4 Phi(-(2n+1) w / s) beyond this point.
    bound = 4.0 * normal_cdf(-(2.0 * n + 1.0) * w / s);
    if (bound < 1e-16 || n > 1000) break;
  }
  r.probability = std::clamp(p, 0.0, 1.0);
  r.log_probability = r.probability > 0.0 ? std::log(r.probability) : -kInf;
  r.truncation_bound = bound;
  r.terms = terms;
  r.method = "images";
  return r;
}

Estimate strip_survival_mc(const StripSpec& spec, const McOptions& opts) {
  spec.check();
  const double w = spec.width();
  const double x0 = spec.start - spec.lower;
  if (spec.clock_total == 0.0) {
    const double v = (x0 > 0.0 && x0 < w) ? 1.0 : 0.0;
    return {v, 0.0, opts.n_paths};
  }
  const double dt_req = opts.dt > 0.0 ? opts.dt : default_dt(spec.clock_total);
  const auto n_steps = static_cast<std::uint64_t>(std::ceil(spec.clock_total / dt_req - 1e-9));
  const double sd = std::sqrt(spec.clock_total / static_cast<double>(n_steps));
  const auto stats = run_sharded(opts.n_paths, opts.seed, opts.workers, [&](StreamKey key, std::uint64_t) {
    if (!(x0 > 0.0 && x0 < w)) return 0.0;
    PhiloxEngine eng(key, 0, 0);
    double x = x0;
    for (std::uint64_t i = 0; i < n_steps; ++i) {
      x += sd * standard_normal(eng);
      if (x <= 0.0 || x >= w) return 0.0;
    }
    return 1.0;
  });
  return to_estimate(stats);
}

double discretization_allowance(const StripSpec& spec, double dt) {
  const double eta = 1e-4 * spec.width();
  auto prob = [&](double lo, double hi) {
    StripSpec s = spec;
    s.lower = lo;
    s.upper = hi;
    return strip_survival_spectral(s).probability;
  };
  const double d_lower = (prob(spec.lower + eta, spec.upper) - prob(spec.lower - eta, spec.upper)) / (2 * eta);
  const double d_upper = (prob(spec.lower, spec.upper + eta) - prob(spec.lower, spec.upper - eta)) / (2 * eta);
  return 2.0 * std::sqrt(dt) * (std::abs(d_lower) + std::abs(d_upper));
}

double default_start_offset(double width) { return std::min(1.0, 0.5 * width); }

CorridorLogProb good_corridor_logprob(const SigmaProfile& profile, double T, double start_offset) {
  if (!(T > 0.0)) throw DomainError("good_corridor_logprob: T must be > 0");
  CorridorLogProb out;
  out.width = std::cbrt(T);
  out.start_offset = start_offset < 0.0 ? 0.5 * out.width : start_offset;
  if (!(out.start_offset > 0.0 && out.start_offset < out.width)) {
    throw DomainError("good_corridor_logprob: start offset must lie strictly inside the corridor");
  }
  out.clock_total = profile.clock(T, T);
  StripSpec spec{-out.width, 0.0, -out.start_offset, T, out.clock_total};
  out.log_probability = strip_survival_spectral(spec).log_probability;
  return out;
}

Estimate tilted_corridor_estimate(const SigmaProfile& profile, double T, Band band, const McOptions& opts) {
  const TiltGrid g = make_tilt_grid(profile, T, opts.dt);
  const double lo = -band.lower_width;
  const double hi = band.upper_offset;
  const std::size_t n = g.clock.size() - 1;
  const auto stats = run_sharded(opts.n_paths, opts.seed, opts.workers, [&](StreamKey key, std::uint64_t) {
    PhiloxEngine eng(key, 0, 0);
    double x = 0.0;
    double integral = 0.0;
    double survive = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = g.clock[i + 1] - g.clock[i];
      const double xn = x + std::sqrt(v) * standard_normal(eng);
      if (xn < lo || xn > hi) return 0.0;
      survive *= std::max(0.0, 1.0 - bridge_hit_above(hi, x, xn, v) - bridge_hit_below(lo, x, xn, v));
      if (survive == 0.0) return 0.0;
      integral += 0.5 * (x * g.drift[i] + xn * g.drift[i + 1]) * g.dt;
      x = xn;
    }
    return survive * std::exp(-sqrt2 * x / g.sigma_end - sqrt2 / T * integral);
  });
  return to_estimate(stats);
}

Estimate direct_corridor_estimate(const SigmaProfile& profile, double T, Band band, const McOptions& opts) {
  const TiltGrid g = make_tilt_grid(profile, T, opts.dt);
  const double lo = -band.lower_width;
  const double hi = band.upper_offset;
  const std::size_t n = g.clock.size() - 1;
  const double scale = std::exp(T);
  const auto stats = run_sharded(opts.n_paths, opts.seed, opts.workers, [&](StreamKey key, std::uint64_t) {
    PhiloxEngine eng(key, 0, 0);
    double y = 0.0;  // X - T fbar(t/T)
    double survive = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = g.clock[i + 1] - g.clock[i];
      const double yn = y + std::sqrt(v) * standard_normal(eng) - (g.front[i + 1] - g.front[i]);
      if (yn < lo || yn > hi) return 0.0;
      survive *= std::max(0.0, 1.0 - bridge_hit_above(hi, y, yn, v) - bridge_hit_below(lo, y, yn, v));
      if (survive == 0.0) return 0.0;
      y = yn;
    }
    return scale * survive;
  });
  return to_estimate(stats);
}

double tilted_strip_oracle(double sigma, double T, Band band) {
  if (!(sigma > 0.0) || !(T > 0.0)) throw DomainError("tilted_strip_oracle: need sigma > 0 and T > 0");
  if (!(band.lower_width >= 0.0) || !(band.upper_offset >= 0.0)) {
    throw DomainError("tilted_strip_oracle: band widths must be nonnegative");
  }
  // In units of W = X / sigma: strip (a, b), start 0, weight exp(-sqrt2 W_T).
  const double a = -band.lower_width / sigma;
  const double b = band.upper_offset / sigma;
  const double w = b - a;
  const double x0 = -a;
  if (!(x0 > 0.0 && x0 < w)) return 0.0;
  const double pref = 2.0 / w * std::exp(-sqrt2 * a);
  const double tail = std::exp(-sqrt2 * w);
  double sum = 0.0;
  for (int k = 1; k < 1000000; ++k) {
    const double kappa = k * pi / w;
    const double decay = std::exp(-0.5 * kappa * kappa * T);
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;  // (-1)^k
    const double integral = kappa * (1.0 - sign * tail) / (2.0 + kappa * kappa);
    sum += pref * std::sin(kappa * x0) * decay * integral;
    const double bound = pref * decay * (1.0 + tail) / kappa;
    if (k > 3 && bound < 1e-16 * std::max(std::abs(sum), 1e-300)) break;
  }
  return sum;
}

SoftCorridorResult soft_corridor_functional(const SoftCorridorSpec& spec, const McOptions& opts) {
  if (!(spec.horizon > 0.0) || !(spec.c3 >= 0.0) || !(spec.endpoint_halfwidth > 0.0) || !(spec.c5 > 0.0)) {
    throw DomainError("soft corridor: need horizon > 0, c3 >= 0, halfwidth > 0, c5 > 0");
  }
  const double T = spec.horizon;
  const double dt_req = opts.dt > 0.0 ? opts.dt : default_dt(T);
  const auto n_steps = static_cast<std::uint64_t>(std::ceil(T / dt_req - 1e-9));
  const double dt = T / static_cast<double>(n_steps);
  const double sd = std::sqrt(dt);
  const double window = spec.c5 * std::cbrt(T);
  std::vector<double> occupation(opts.n_paths, 0.0);

  const auto stats = run_sharded(opts.n_paths, opts.seed, opts.workers, [&](StreamKey key, std::uint64_t i) {
    PhiloxEngine eng(key, 0, 0);
    double b = spec.start;
    double integral = 0.0;
    double occ = 0.0;
    for (std::uint64_t s = 0; s < n_steps; ++s) {
      const double bn = b + sd * standard_normal(eng);
      integral += 0.5 * (std::abs(b) + std::abs(bn)) * dt;
      if (std::abs(b) <= window) occ += dt;
      b = bn;
    }
    occupation[i] = occ / T;
    if (!(std::abs(b) <= spec.endpoint_halfwidth)) return 0.0;
    return spec.c3 == 0.0 ? 1.0 : std::exp(-spec.c3 / T * integral);
  });

  SoftCorridorResult r;
  r.functional = to_estimate(stats);
  RunningStats occ;
  std::uint64_t half = 0;
  for (double o : occupation) {
    occ.add(o);
    if (o >= 0.5) ++half;
  }
  r.occupation_mean = occ.mean();
  for (int q = 1; q <= 9; ++q) r.occupation_deciles.push_back(quantile(occupation, q / 10.0));
  r.p_occupation_half = opts.n_paths ? static_cast<double>(half) / static_cast<double>(opts.n_paths) : 0.0;
  return r;
}

}  // namespace tibbm
