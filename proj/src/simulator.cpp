#include "tibbm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tibbm/errors.hpp"
#include "tibbm/parallel.hpp"
#include "tibbm/variational.hpp"

namespace tibbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kFinePerCheckpoint = 8;
// Particles whose bridge can reach the barrier with probability below this
// are not followed between their birth and death.
constexpr double kSkipProbability = 1e-10;

enum Purpose : std::uint32_t { kLifetime = 0, kEndpoint = 1, kBridge = 2, kMinTime = 3 };

// Probability that a Brownian bridge of variance v from a to b touches the
// line joining wall_a and wall_b from below (exact for a linear wall in clock time).
inline double hit_above(double wall_a, double wall_b, double a, double b, double v) {
  if (a >= wall_a || b >= wall_b) return 1.0;
  if (!(v > 0.0)) return 0.0;
  return std::exp(-2.0 * (wall_a - a) * (wall_b - b) / v);
}

inline double hit_below(double wall_a, double wall_b, double a, double b, double v) {
  if (a <= wall_a || b <= wall_b) return 1.0;
  if (!(v > 0.0)) return 0.0;
  return std::exp(-2.0 * (a - wall_a) * (b - wall_b) / v);
}

struct Point {
  double t, x, c, f;  // time, position, clock, front
};

inline double bridge_draw(const Point& a, const Point& b, double c, PhiloxEngine& eng) {
  const double z = standard_normal(eng);
  const double span = b.c - a.c;
  if (!(span > 0.0)) return a.x;
  const double r = (c - a.c) / span;
  const double var = std::max(0.0, (c - a.c) * (b.c - c) / span);
  return a.x + r * (b.x - a.x) + std::sqrt(var) * z;
}

struct Node {
  double t0;
  double x0;
  StreamKey key;
  bool good;
};

}  // namespace

std::string to_string(SimMode mode) { return mode == SimMode::full ? "full" : "pruned"; }

SimMode sim_mode_from_string(const std::string& s) {
  if (s == "full") return SimMode::full;
  if (s == "pruned") return SimMode::pruned;
  throw std::invalid_argument("unknown simulation mode '" + s + "' (expected full or pruned)");
}

void SimConfig::check() const {
  if (!(T >= 0.0) || !std::isfinite(T)) throw std::invalid_argument("T must be finite and >= 0");
  if (!(substep_h > 0.0 && substep_h <= 1.0)) throw std::invalid_argument("substep_h must lie in (0, 1]");
  if (max_particles < 1) throw std::invalid_argument("max_particles must be >= 1");
  if (!(prune_beta >= 0.0)) throw std::invalid_argument("prune_beta must be >= 0");
  if (!(barrier_C >= 0.0) || !std::isfinite(barrier_C)) throw std::invalid_argument("barrier_C must be finite and >= 0");
  for (double c : extra_barrier_C) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("barrier coefficients must be finite and >= 0");
  }
  if (!(min_time_A >= 0.0)) throw std::invalid_argument("min_time_A must be >= 0");
  if (!(branching_rate >= 0.0) || !std::isfinite(branching_rate)) {
    throw std::invalid_argument("branching_rate must be finite and >= 0");
  }
  if (good_offset >= 0.0 && good_offset > std::cbrt(T)) {
    throw std::invalid_argument("good_offset must not exceed the corridor width T^{1/3}");
  }
}

double upper_barrier(const SigmaProfile& profile, double T, double C, double t) {
  if (!(T > 0.0) || !(t >= 0.0) || t > T * (1.0 + 1e-12)) throw DomainError("upper_barrier: need 0 <= t <= T, T > 0");
  const double log_term = T > 1.0 ? C * std::log(T) : 0.0;
  return T * optimal_path(profile, std::min(1.0, t / T)) + log_term;
}

bool good_corridor_test(const SigmaProfile& profile, double T, double t, double x, double offset) {
  const double f = T > 0.0 ? T * optimal_path(profile, std::clamp(t / T, 0.0, 1.0)) : 0.0;
  return x >= f - std::cbrt(T) + offset && x <= f + offset;
}

bool prune_rule(const SigmaProfile& profile, double T, double beta, double t, double x) {
  if (std::isinf(beta)) return true;
  const double f = T > 0.0 ? T * optimal_path(profile, std::clamp(t / T, 0.0, 1.0)) : 0.0;
  return !(x < f - beta * std::cbrt(T) - 10.0);
}

Simulator::Simulator(SimConfig config) : cfg_(std::move(config)) {
  cfg_.check();
  const double T = cfg_.T;
  width_ = std::cbrt(T);
  offset_ = cfg_.good_offset < 0.0 ? std::min(1.0, 0.5 * width_) : cfg_.good_offset;
  const double log_t = T > 1.0 ? std::log(T) : 0.0;
  log_terms_ = {cfg_.barrier_C * log_t};
  for (double c : cfg_.extra_barrier_C) log_terms_.push_back(c * log_t);
  min_log_term_ = *std::min_element(log_terms_.begin(), log_terms_.end());
  t_star_ = std::min(cfg_.min_time_A * width_, T);
  if (T == 0.0) return;

  n_checkpoints_ = static_cast<std::size_t>(std::max(1.0, std::ceil(T / cfg_.substep_h - 1e-9)));
  h_ = T / static_cast<double>(n_checkpoints_);
  const std::size_t m = n_checkpoints_ * kFinePerCheckpoint;
  fine_dt_ = T / static_cast<double>(m);
  clock_.resize(m + 1);
  clock_d_.resize(m + 1);
  front_.resize(m + 1);
  front_d_.resize(m + 1);
  const auto& p = cfg_.profile;
  for (std::size_t i = 0; i <= m; ++i) {
    const double t = i == m ? T : static_cast<double>(i) * fine_dt_;
    const double s = p.eval(t / T);
    clock_[i] = p.clock(t, T);
    clock_d_[i] = s * s;
    front_[i] = T * optimal_path(p, t / T);
    front_d_[i] = std::numbers::sqrt2 * s;
  }
  cp_clock_.resize(n_checkpoints_ + 1);
  cp_front_.resize(n_checkpoints_ + 1);
  for (std::size_t k = 0; k <= n_checkpoints_; ++k) {
    cp_clock_[k] = clock_[k * kFinePerCheckpoint];
    cp_front_[k] = front_[k * kFinePerCheckpoint];
  }
}

double Simulator::hermite(const std::vector<double>& val, const std::vector<double>& der, double t) const noexcept {
  const std::size_t last = val.size() - 1;
  std::size_t i = static_cast<std::size_t>(std::max(0.0, t / fine_dt_));
  if (i >= last) i = last - 1;
  const double s = (t - static_cast<double>(i) * fine_dt_) / fine_dt_;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * val[i] + (s3 - 2 * s2 + s) * fine_dt_ * der[i] + (3 * s2 - 2 * s3) * val[i + 1] +
         (s3 - s2) * fine_dt_ * der[i + 1];
}

double Simulator::clock(double t) const noexcept { return cfg_.T == 0.0 ? 0.0 : hermite(clock_, clock_d_, t); }
double Simulator::front(double t) const noexcept { return cfg_.T == 0.0 ? 0.0 : hermite(front_, front_d_, t); }

SimOutcome Simulator::run(StreamKey replicate_key) const {
  SimOutcome out;
  const double T = cfg_.T;
  const double rate = cfg_.branching_rate;
  auto lifetime = [&](StreamKey key) {
    PhiloxEngine eng(key, 0, kLifetime);
    const double e = standard_exponential(eng);
    return rate > 0.0 ? e / rate : kInf;
  };

  out.extra_crossed.assign(cfg_.extra_barrier_C.size(), 0);
  if (T == 0.0) {
    out.m_max = 0.0;
    out.n_final = 1;
    out.good_count = 1;
    out.min_position = 0.0;
    out.first_split_time = lifetime(replicate_key);
    return out;
  }

  const bool pruned = cfg_.mode == SimMode::pruned;
  const bool bridge = cfg_.bridge;
  out.m_max = -kInf;
  // First crossing time per barrier coefficient; only thetas[0] is reported as theta.
  std::vector<double> thetas(log_terms_.size(), kInf);
  auto open_before = [&](double t) {
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      if (!(thetas[j] <= t)) return true;
    }
    return false;
  };
  double min_pos = kInf;
  std::uint64_t processed = 0;

  std::vector<Node> stack;
  stack.push_back({0.0, 0.0, replicate_key, true});
  bool root = true;

  while (!stack.empty()) {
    const Node n = stack.back();
    stack.pop_back();
    if (++processed > cfg_.max_particles) {
      out.truncated = true;
      break;
    }

    const double life = lifetime(n.key);
    if (root) {
      out.first_split_time = life;
      root = false;
    }
    const bool splits = n.t0 + life < T;
    const double t1 = splits ? n.t0 + life : T;
    const Point a{n.t0, n.x0, clock(n.t0), front(n.t0)};
    const double c1 = splits ? clock(t1) : clock_.back();
    const double v = std::max(0.0, c1 - a.c);
    PhiloxEngine end_eng(n.key, 0, kEndpoint);
    const Point b{t1, a.x + std::sqrt(v) * standard_normal(end_eng), c1, splits ? front(t1) : front_.back()};

    // Position at the minimum-position time, sampled from its own stream.
    const bool has_star = a.t < t_star_ && t_star_ <= b.t;
    Point star{};
    if (has_star) {
      if (t_star_ == b.t) {
        star = b;
      } else {
        PhiloxEngine eng(n.key, 0, kMinTime);
        star = {t_star_, 0.0, clock(t_star_), front(t_star_)};
        star.x = bridge_draw(a, b, star.c, eng);
      }
      min_pos = std::min(min_pos, star.x);
    }

    const bool barrier_open = open_before(a.t);
    const double b0 = a.f + min_log_term_;
    const bool track_barrier =
        barrier_open && (bridge ? hit_above(b0, b0, a.x, b.x, v) >= kSkipProbability
                                : std::max(a.x, b.x) > b0 - 8.0 * std::sqrt(v) - 1.0);
    bool good = n.good;

    if (track_barrier || good) {
      PhiloxEngine eng(n.key, 0, kBridge);
      std::size_t k = static_cast<std::size_t>(std::floor(a.t / h_)) + 1;
      bool star_pending = has_star && t_star_ < b.t;
      Point anchor = star_pending ? star : b;
      Point prev = a;
      for (;;) {
        Point cur;
        bool last = false;
        const double tk = k < n_checkpoints_ ? static_cast<double>(k) * h_ : kInf;
        if (tk < anchor.t) {
          cur = {tk, 0.0, cp_clock_[k], cp_front_[k]};
          cur.x = bridge_draw(prev, anchor, cur.c, eng);
          ++k;
        } else {
          cur = anchor;
          if (star_pending) {
            star_pending = false;
            anchor = b;
          } else {
            last = true;
          }
        }
        const double dv = cur.c - prev.c;
        const double u_bar = uniform_open(eng);
        const double u_good = uniform_open(eng);
        if (track_barrier) {
          // One uniform serves every coefficient, so crossings are nested in C.
          for (std::size_t j = 0; j < thetas.size(); ++j) {
            if (thetas[j] <= cur.t) continue;
            const double wa = prev.f + log_terms_[j], wb = cur.f + log_terms_[j];
            const bool crossed = cur.x > wb || (bridge && u_bar < hit_above(wa, wb, prev.x, cur.x, dv));
            if (crossed) thetas[j] = cur.t;
          }
        }
        if (good) {
          const double top_a = prev.f + offset_, top_b = cur.f + offset_;
          const double bot_a = top_a - width_, bot_b = top_b - width_;
          if (cur.x > top_b || cur.x < bot_b) {
            good = false;
          } else if (bridge) {
            const double p = hit_above(top_a, top_b, prev.x, cur.x, dv) + hit_below(bot_a, bot_b, prev.x, cur.x, dv);
            if (u_good < p) good = false;
          }
        }
        prev = cur;
        if (last) break;
      }
    }

    if (splits) {
      if (pruned && !prune_rule(cfg_.profile, T, cfg_.prune_beta, b.t, b.x)) {
        ++out.pruned_count;
        continue;
      }
      stack.push_back({b.t, b.x, n.key.child(1), good});
      stack.push_back({b.t, b.x, n.key.child(0), good});
    } else {
      ++out.n_final;
      out.m_max = std::max(out.m_max, b.x);
      if (good) ++out.good_count;
    }
  }

  out.upper_crossed = std::isfinite(thetas[0]);
  if (out.upper_crossed) out.theta = thetas[0];
  for (std::size_t j = 1; j < thetas.size(); ++j) out.extra_crossed[j - 1] = std::isfinite(thetas[j]) ? 1 : 0;
  if (std::isfinite(min_pos)) out.min_position = min_pos;
  return out;
}

SimOutcome simulate(const SimConfig& config, std::uint64_t replicate) {
  return Simulator(config).run(StreamKey(config.seed).child(replicate));
}

std::vector<SimOutcome> run_replicates(const SimConfig& config, std::uint64_t n, std::size_t workers,
                                       std::uint64_t first) {
  const Simulator sim(config);
  const StreamKey root(config.seed);
  std::vector<SimOutcome> out(n);
  parallel_for(n, resolve_workers(workers), [&](std::size_t i) { out[i] = sim.run(root.child(first + i)); });
  return out;
}

}  // namespace tibbm
