#include "tibbm/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tibbm/errors.hpp"

namespace tibbm {

namespace {

constexpr double kUnitSlack = 1e-12;

double check_unit(double u, const char* what) {
  if (!(u >= -kUnitSlack && u <= 1.0 + kUnitSlack)) {
    std::ostringstream os;
    os << what << ": argument " << u << " outside [0,1]";
    throw DomainError(os.str());
  }
  return std::clamp(u, 0.0, 1.0);
}

// Adaptive Gauss-Kronrod (7/15). PCHIP segments give polynomial integrands
// of degree <= 6, which a single 15-point pass integrates exactly, so callers
// on a segment pass max_depth 0; short intervals would otherwise recurse on
// rounding noise.
template <class F>
double integrate(F f, double a, double b, unsigned max_depth = 15) {
  if (b <= a) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, 1e-13, &err);
}

double pchip_edge(double h0, double h1, double m0, double m1) {
  double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
  if (std::signbit(d) != std::signbit(m0) || m0 == 0.0) {
    d = 0.0;
  } else if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > std::abs(3.0 * m0)) {
    d = 3.0 * m0;
  }
  return d;
}

}  // namespace

std::string to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::constant: return "constant";
    case ProfileKind::affine: return "affine";
    case ProfileKind::exponential_decay: return "exponential-decay";
    case ProfileKind::tabulated: return "tabulated";
  }
  return "unknown";
}

SigmaProfile SigmaProfile::constant(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("constant profile needs c > 0");
  SigmaProfile p;
  p.kind_ = ProfileKind::constant;
  p.params_ = {c};
  p.finish();
  return p;
}

SigmaProfile SigmaProfile::affine(double intercept, double slope) {
  if (!std::isfinite(intercept) || !std::isfinite(slope) || !(intercept > 0.0) ||
      !(intercept + slope > 0.0)) {
    throw std::invalid_argument("affine profile must stay positive on [0,1]");
  }
  SigmaProfile p;
  p.kind_ = ProfileKind::affine;
  p.params_ = {intercept, slope};
  p.finish();
  return p;
}

SigmaProfile SigmaProfile::exponential_decay(double amplitude, double rate) {
  if (!(amplitude > 0.0) || !std::isfinite(amplitude) || !std::isfinite(rate)) {
    throw std::invalid_argument("exponential-decay profile needs amplitude > 0 and finite rate");
  }
  SigmaProfile p;
  p.kind_ = ProfileKind::exponential_decay;
  p.params_ = {amplitude, rate};
  p.finish();
  return p;
}

SigmaProfile SigmaProfile::tabulated(std::vector<std::pair<double, double>> knots) {
  if (knots.size() < 2) throw std::invalid_argument("tabulated profile needs at least 2 knots");
  if (knots.front().first != 0.0 || knots.back().first != 1.0) {
    throw std::invalid_argument("tabulated knots must start at u=0 and end at u=1");
  }
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!(knots[i].second > 0.0) || !std::isfinite(knots[i].second)) {
      throw std::invalid_argument("tabulated sigma values must be positive and finite");
    }
    if (i > 0 && !(knots[i].first > knots[i - 1].first)) {
      throw std::invalid_argument("tabulated knots must be strictly increasing in u");
    }
  }
  SigmaProfile p;
  p.kind_ = ProfileKind::tabulated;
  const std::size_t n = knots.size();
  for (const auto& [u, s] : knots) {
    p.ku_.push_back(u);
    p.ks_.push_back(s);
  }
  std::vector<double> h(n - 1), m(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = p.ku_[k + 1] - p.ku_[k];
    m[k] = (p.ks_[k + 1] - p.ks_[k]) / h[k];
  }
  p.kd_.assign(n, 0.0);
  if (n == 2) {
    p.kd_[0] = p.kd_[1] = m[0];
  } else {
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (m[k - 1] * m[k] <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      p.kd_[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
    }
    p.kd_[0] = pchip_edge(h[0], h[1], m[0], m[1]);
    p.kd_[n - 1] = pchip_edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
  }
  p.cum1_.assign(n, 0.0);
  p.cum2_.assign(n, 0.0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    p.cum1_[k + 1] = p.cum1_[k] + p.segment_integral(k, p.ku_[k], p.ku_[k + 1], 1);
    p.cum2_[k + 1] = p.cum2_[k] + p.segment_integral(k, p.ku_[k], p.ku_[k + 1], 2);
  }
  p.finish();
  return p;
}

std::vector<std::pair<double, double>> SigmaProfile::knots() const {
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < ku_.size(); ++i) out.emplace_back(ku_[i], ks_[i]);
  return out;
}

void SigmaProfile::finish() {
  switch (kind_) {
    case ProfileKind::constant:
      sigma_min_ = sigma_max_ = params_[0];
      margin_ = 0.0;
      max_abs_deriv_ = 0.0;
      break;
    case ProfileKind::affine: {
      const double a = params_[0], b = params_[1];
      sigma_min_ = std::min(a, a + b);
      sigma_max_ = std::max(a, a + b);
      margin_ = b < 0.0 ? -b : 0.0;
      max_abs_deriv_ = std::abs(b);
      break;
    }
    case ProfileKind::exponential_decay: {
      const double a = params_[0], r = params_[1];
      const double end = a * std::exp(-r);
      sigma_min_ = std::min(a, end);
      sigma_max_ = std::max(a, end);
      margin_ = r > 0.0 ? a * r * std::exp(-r) : 0.0;
      max_abs_deriv_ = std::abs(a * r) * std::max(1.0, std::exp(-r));
      break;
    }
    case ProfileKind::tabulated: {
      // PCHIP is monotone between knots, so extrema sit at the knots. The
      // derivative is a quadratic per segment; bound it exactly.
      sigma_min_ = *std::min_element(ks_.begin(), ks_.end());
      sigma_max_ = *std::max_element(ks_.begin(), ks_.end());
      double dmax = -std::numeric_limits<double>::infinity();
      double dabs = 0.0;
      for (std::size_t k = 0; k + 1 < ku_.size(); ++k) {
        const double h = ku_[k + 1] - ku_[k];
        const double y0 = ks_[k], y1 = ks_[k + 1], d0 = kd_[k], d1 = kd_[k + 1];
        const double A = 6.0 * (y0 - y1) / h + 3.0 * d0 + 3.0 * d1;
        const double B = 6.0 * (y1 - y0) / h - 4.0 * d0 - 2.0 * d1;
        const double C = d0;
        std::vector<double> cand = {0.0, 1.0};
        if (A != 0.0) {
          const double tv = -B / (2.0 * A);
          if (tv > 0.0 && tv < 1.0) cand.push_back(tv);
        }
        for (double t : cand) {
          const double v = (A * t + B) * t + C;
          dmax = std::max(dmax, v);
          dabs = std::max(dabs, std::abs(v));
        }
      }
      margin_ = dmax < 0.0 ? -dmax : 0.0;
      max_abs_deriv_ = dabs;
      break;
    }
  }
}

std::size_t SigmaProfile::segment(double u) const {
  auto it = std::upper_bound(ku_.begin(), ku_.end(), u);
  std::size_t k = it == ku_.begin() ? 0 : static_cast<std::size_t>(it - ku_.begin()) - 1;
  return std::min(k, ku_.size() - 2);
}

double SigmaProfile::eval(double u) const {
  u = check_unit(u, "eval");
  switch (kind_) {
    case ProfileKind::constant: return params_[0];
    case ProfileKind::affine: return params_[0] + params_[1] * u;
    case ProfileKind::exponential_decay: return params_[0] * std::exp(-params_[1] * u);
    case ProfileKind::tabulated: {
      const std::size_t k = segment(u);
      const double h = ku_[k + 1] - ku_[k];
      const double t = (u - ku_[k]) / h;
      const double t2 = t * t, t3 = t2 * t;
      return (2 * t3 - 3 * t2 + 1) * ks_[k] + (t3 - 2 * t2 + t) * h * kd_[k] +
             (-2 * t3 + 3 * t2) * ks_[k + 1] + (t3 - t2) * h * kd_[k + 1];
    }
  }
  return 0.0;
}

double SigmaProfile::deriv(double u) const {
  u = check_unit(u, "deriv");
  switch (kind_) {
    case ProfileKind::constant: return 0.0;
    case ProfileKind::affine: return params_[1];
    case ProfileKind::exponential_decay:
      return -params_[1] * params_[0] * std::exp(-params_[1] * u);
    case ProfileKind::tabulated: {
      const std::size_t k = segment(u);
      const double h = ku_[k + 1] - ku_[k];
      const double t = (u - ku_[k]) / h;
      const double t2 = t * t;
      return (6 * t2 - 6 * t) / h * ks_[k] + (3 * t2 - 4 * t + 1) * kd_[k] +
             (-6 * t2 + 6 * t) / h * ks_[k + 1] + (3 * t2 - 2 * t) * kd_[k + 1];
    }
  }
  return 0.0;
}

double SigmaProfile::segment_integral(std::size_t seg, double a, double b, int power) const {
  (void)seg;
  if (power == 1) return integrate([this](double u) { return eval(u); }, a, b, 0);
  return integrate(
      [this](double u) {
        const double s = eval(u);
        return s * s;
      },
      a, b, 0);
}

double SigmaProfile::tabulated_integral(double t, int power) const {
  const std::size_t k = segment(t);
  const auto& cum = power == 1 ? cum1_ : cum2_;
  return cum[k] + segment_integral(k, ku_[k], t, power);
}

double SigmaProfile::integral_sigma(double t) const {
  t = check_unit(t, "integral_sigma");
  switch (kind_) {
    case ProfileKind::constant: return params_[0] * t;
    case ProfileKind::affine: return params_[0] * t + 0.5 * params_[1] * t * t;
    case ProfileKind::exponential_decay: {
      const double a = params_[0], r = params_[1];
      if (r == 0.0) return a * t;
      return -a * std::expm1(-r * t) / r;
    }
    case ProfileKind::tabulated: return tabulated_integral(t, 1);
  }
  return 0.0;
}

double SigmaProfile::integral_sigma_sq(double t) const {
  t = check_unit(t, "integral_sigma_sq");
  switch (kind_) {
    case ProfileKind::constant: return params_[0] * params_[0] * t;
    case ProfileKind::affine: {
      const double a = params_[0], b = params_[1];
      return a * a * t + a * b * t * t + b * b * t * t * t / 3.0;
    }
    case ProfileKind::exponential_decay: {
      const double a = params_[0], r = params_[1];
      if (r == 0.0) return a * a * t;
      return -a * a * std::expm1(-2.0 * r * t) / (2.0 * r);
    }
    case ProfileKind::tabulated: return tabulated_integral(t, 2);
  }
  return 0.0;
}

double SigmaProfile::integral_inv_sigma_sq(double u1, double u2) const {
  u1 = check_unit(u1, "integral_inv_sigma_sq");
  u2 = check_unit(u2, "integral_inv_sigma_sq");
  if (u2 < u1) return -integral_inv_sigma_sq(u2, u1);
  switch (kind_) {
    case ProfileKind::constant: return (u2 - u1) / (params_[0] * params_[0]);
    case ProfileKind::affine: {
      const double a = params_[0], b = params_[1];
      if (b == 0.0) return (u2 - u1) / (a * a);
      // d/du [-1/(b sigma)] = 1/sigma^2
      return (u2 - u1) / ((a + b * u1) * (a + b * u2));
    }
    case ProfileKind::exponential_decay: {
      const double a = params_[0], r = params_[1];
      if (r == 0.0) return (u2 - u1) / (a * a);
      return std::exp(2.0 * r * u1) * std::expm1(2.0 * r * (u2 - u1)) / (2.0 * r * a * a);
    }
    case ProfileKind::tabulated: {
      // Integrate knot to knot; the integrand is smooth on each segment.
      auto inv_sq = [this](double u) {
        const double s = eval(u);
        return 1.0 / (s * s);
      };
      double total = 0.0;
      for (std::size_t k = segment(u1); k + 1 < ku_.size() && ku_[k] < u2; ++k) {
        total += integrate(inv_sq, std::max(u1, ku_[k]), std::min(u2, ku_[k + 1]), 6);
      }
      return total;
    }
  }
  return 0.0;
}

double SigmaProfile::clock(double t, double horizon) const {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw DomainError("clock: horizon must be > 0");
  if (!(t >= 0.0 && t <= horizon * (1.0 + kUnitSlack))) {
    std::ostringstream os;
    os << "clock: t=" << t << " outside [0," << horizon << "]";
    throw DomainError(os.str());
  }
  return horizon * integral_sigma_sq(std::min(t / horizon, 1.0));
}

ProfileReport validate(const SigmaProfile& profile, int n_grid) {
  ProfileReport rep;
  if (n_grid < 2) {
    rep.failures.push_back("n_grid must be >= 2");
    return rep;
  }
  const double step = 1.0 / (n_grid - 1);
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -gmin;
  double margin = std::numeric_limits<double>::infinity();
  double prev = 0.0;
  for (int i = 0; i < n_grid; ++i) {
    const double u = i == n_grid - 1 ? 1.0 : i * step;
    const double s = profile.eval(u);
    gmin = std::min(gmin, s);
    gmax = std::max(gmax, s);
    if (i > 0) margin = std::min(margin, -(s - prev) / step);
    prev = s;
  }
  rep.grid_min = gmin;
  rep.grid_max = gmax;
  rep.margin = std::max(0.0, margin);
  rep.monotone_decreasing = margin > 0.0;

  constexpr double fd_h = 1e-6;
  for (int i = 1; i + 1 < n_grid; ++i) {
    const double u = i * step;
    if (u - fd_h < 0.0 || u + fd_h > 1.0) continue;
    const double fd = (profile.eval(u + fd_h) - profile.eval(u - fd_h)) / (2.0 * fd_h);
    rep.max_fd_error = std::max(rep.max_fd_error, std::abs(profile.deriv(u) - fd));
  }

  if (!(gmin > 0.0)) rep.failures.push_back("sigma not positive on grid");
  if (gmin < profile.sigma_min() * (1.0 - 1e-12)) rep.failures.push_back("sigma below declared sigma_min");
  if (gmax > profile.sigma_max() * (1.0 + 1e-12)) rep.failures.push_back("sigma above declared sigma_max");
  if (profile.monotone_decreasing() && rep.margin < profile.decreasing_margin() * (1.0 - 1e-9)) {
    rep.failures.push_back("grid margin below declared decreasing margin");
  }
  return rep;
}

}  // namespace tibbm
