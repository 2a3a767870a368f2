#pragma once

// Symbol of the frozen-coefficient generator
//   q(x, xi) = 1/2 <xi, a(x) xi> - i <c(x) + kbar(x), xi> + sum_a w_a (1 - exp(i <k(x, y_a), xi>)),
// its two-scale prelimit, the log-growth margin of inf_z Re q, and the
// quadrature of the transition-density bound
//   sup p(t, x, y) <= int exp(-(t/16) inf_z Re q(z, xi)) dxi.

#include "ldpms/coeffs.hpp"

#include <json.hpp>

#include <complex>
#include <iostream>
#include <numbers>
#include <ostream>
#include <random>

namespace ldpms {

using Complex = std::complex<double>;

struct SymbolEval {
  Vec x;
  Vec xi;
  Complex value;
  double quadratic = 0.0;  ///< 1/2 <xi, a xi> (times 1 + (eps/delta)^2 for the prelimit)
  Complex drift;           ///< purely imaginary
  Complex jump;            ///< sum w (1 - exp(i <k, xi>))
};

namespace detail {

inline Complex jump_part(const CoefficientField& field, const LevyMeasure& nu, const Vec& x, const Vec& xi) {
  Complex s{0.0, 0.0};
  for (const auto& atom : nu.atoms()) {
    const double phase = field.k(x, atom.mark).dot(xi);
    s += atom.mass * Complex(1.0 - std::cos(phase), -std::sin(phase));
  }
  return s;
}

inline void check_args(const CoefficientField& field, const Vec& x, const Vec& xi) {
  if (x.size() != field.dimension() || xi.size() != field.dimension())
    throw InputError("symbol: dimension mismatch");
  require_finite(x, "x");
  require_finite(xi, "xi");
}

}  // namespace detail

inline SymbolEval eval_symbol(const CoefficientField& field, const LevyMeasure& nu, const Vec& x,
                              const Vec& xi) {
  detail::check_args(field, x, xi);
  SymbolEval s{x, xi, {}, 0.0, {}, {}};
  s.quadratic = 0.5 * xi.dot(field.a(x) * xi);
  s.drift = Complex(0.0, -(field.c(x) + mean_jump(nu, field, x)).dot(xi));
  s.jump = detail::jump_part(field, nu, x, xi);
  s.value = s.quadratic + s.drift + s.jump;
  return s;
}

/// Two-scale symbol with r = eps/delta, coefficients at x/delta and the
/// differential parts replaced by their Fourier multipliers at the frozen
/// point (d/dx_l -> i xi_l):
///   q = (1 + r^2)/2 <xi, a xi>
///       - i [ (r^2 + r) <b, xi> + (1 + r) <c, xi> + (1 + r) <kbar, xi> + r <xi, a xi> ]
///       + sum w (1 - exp(i <k, xi>)).
/// As r -> 0 this reduces to eval_symbol at x/delta.
inline SymbolEval eval_prelimit_symbol(const CoefficientField& field, const LevyMeasure& nu,
                                       const ScaleRegime& regime, const Vec& x, const Vec& xi) {
  detail::check_args(field, x, xi);
  const double r = regime.ratio();
  const Vec z = x / regime.delta;
  const Mat a = field.a(z);
  const double axx = xi.dot(a * xi);
  SymbolEval s{x, xi, {}, 0.0, {}, {}};
  s.quadratic = 0.5 * (1.0 + r * r) * axx;
  const double im = (r * r + r) * field.b(z).dot(xi) + (1.0 + r) * field.c(z).dot(xi) +
                    (1.0 + r) * mean_jump(nu, field, z).dot(xi) + r * axx;
  s.drift = Complex(0.0, -im);
  s.jump = detail::jump_part(field, nu, z, xi);
  s.value = s.quadratic + s.drift + s.jump;
  return s;
}

// ---------------------------------------------------------------------------
// inf_z Re q(z, xi) over a torus grid
// ---------------------------------------------------------------------------

/// Coefficients cached on a torus grid; Re q does not depend on the drift.
class SymbolGrid {
 public:
  SymbolGrid(const CoefficientField& field, const LevyMeasure& nu, int per_axis) : nu_(nu) {
    for (const auto& z : torus_grid(field.dimension(), per_axis)) {
      a_.push_back(field.a(z));
      std::vector<Vec> ks;
      for (const auto& atom : nu.atoms()) ks.push_back(field.k(z, atom.mark));
      k_.push_back(std::move(ks));
    }
  }

  double re_symbol(std::size_t node, const Vec& xi) const {
    double v = 0.5 * xi.dot(a_[node] * xi);
    for (std::size_t a = 0; a < k_[node].size(); ++a)
      v += nu_.atoms()[a].mass * (1.0 - std::cos(k_[node][a].dot(xi)));
    return v;
  }

  double inf_re_symbol(const Vec& xi) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < a_.size(); ++n) best = std::min(best, re_symbol(n, xi));
    return best;
  }

 private:
  const LevyMeasure& nu_;
  std::vector<Mat> a_;
  std::vector<std::vector<Vec>> k_;
};

/// Default torus resolution: 32 points per axis, reduced in higher dimension.
inline int default_symbol_grid(int d) { return d <= 1 ? 32 : d == 2 ? 16 : 8; }

/// Unit directions: +-1 in d = 1, evenly spaced angles in d = 2, a Fibonacci
/// lattice in d = 3, seeded Gaussian directions otherwise.
inline std::vector<Vec> unit_directions(int d, int count) {
  std::vector<Vec> dirs;
  if (d == 1) {
    dirs.push_back(Vec::Constant(1, 1.0));
    dirs.push_back(Vec::Constant(1, -1.0));
  } else if (d == 2) {
    for (int i = 0; i < count; ++i) {
      const double th = 2.0 * std::numbers::pi * i / count;
      Vec v(2);
      v << std::cos(th), std::sin(th);
      dirs.push_back(v);
    }
  } else if (d == 3) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / count;
      const double rad = std::sqrt(1.0 - y * y);
      Vec v(3);
      v << rad * std::cos(golden * i), y, rad * std::sin(golden * i);
      dirs.push_back(v);
    }
  } else {
    std::mt19937_64 gen(0x5eed);
    std::normal_distribution<double> normal;
    for (int i = 0; i < count; ++i) {
      Vec v(d);
      for (int j = 0; j < d; ++j) v[j] = normal(gen);
      dirs.push_back(v.normalized());
    }
  }
  return dirs;
}

enum class MarginStatus { pass, fail, indeterminate };

inline const char* to_string(MarginStatus s) {
  switch (s) {
    case MarginStatus::pass: return "pass";
    case MarginStatus::fail: return "fail";
    case MarginStatus::indeterminate: return "indeterminate";
  }
  return "?";
}

struct MarginReport {
  std::vector<double> radii;
  std::vector<double> margins;  ///< m(R) = inf Re q / log(1 + R)
  bool increasing = false;
  double slope = 0.0;  ///< least-squares slope of m against R
  MarginStatus status = MarginStatus::indeterminate;
};

/// Growth check of inf_z Re q(z, xi) against log(1 + |xi|). Passes when m(R)
/// increases and its last value exceeds ten times its first.
inline MarginReport hartman_wintner_margin(const CoefficientField& field, const LevyMeasure& nu,
                                           const std::vector<double>& radii, int per_axis = 0,
                                           int n_directions = 64) {
  if (radii.empty()) throw InputError("hartman_wintner_margin: no radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw InputError("hartman_wintner_margin: radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw InputError("hartman_wintner_margin: radii must increase");
  }
  const int d = field.dimension();
  const SymbolGrid grid(field, nu, per_axis > 0 ? per_axis : default_symbol_grid(d));
  const auto dirs = unit_directions(d, n_directions);

  MarginReport r;
  r.radii = radii;
  for (double R : radii) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& u : dirs) best = std::min(best, grid.inf_re_symbol(R * u));
    r.margins.push_back(best / std::log1p(R));
  }
  r.increasing = true;
  for (std::size_t i = 1; i < r.margins.size(); ++i)
    if (!(r.margins[i] > r.margins[i - 1])) r.increasing = false;
  if (r.margins.size() >= 2) {
    const double k = static_cast<double>(r.margins.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < r.margins.size(); ++i) {
      sx += radii[i];
      sy += r.margins[i];
      sxx += radii[i] * radii[i];
      sxy += radii[i] * r.margins[i];
    }
    r.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    const bool grows = r.margins.back() > 10.0 * r.margins.front() && r.margins.front() >= 0.0;
    r.status = r.increasing && grows ? MarginStatus::pass : MarginStatus::fail;
  } else {
    r.increasing = false;
    r.status = MarginStatus::indeterminate;
  }
  return r;
}

struct DensityBoundOptions {
  int per_axis = 0;  ///< torus resolution for inf_z; 0 = default
  int points_per_axis = 0;  ///< xi quadrature nodes per axis; 0 = by dimension
  std::vector<double> margin_radii{1.0, 10.0, 100.0, 1000.0};
  double tail_tolerance = 1e-6;
};

struct DensityBound {
  double value = 0.0;
  double radius = 0.0;
  double kappa = 0.0;
  int points_per_axis = 0;
  MarginReport margin;
};

/// Tensor-grid trapezoid quadrature of int exp(-(t/16) inf_z Re q(z, xi)) dxi
/// on [-R, R]^d, with R chosen so that exp(-t kappa R^2 / 32) equals the tail
/// tolerance. Summation is pairwise in a fixed order.
inline DensityBound density_upper_bound(const CoefficientField& field, const LevyMeasure& nu, double t,
                                        const DensityBoundOptions& opts = {}) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("density_upper_bound: t must be positive");
  const int d = field.dimension();
  const int per_axis = opts.per_axis > 0 ? opts.per_axis : default_symbol_grid(d);

  DensityBound out;
  out.margin = hartman_wintner_margin(field, nu, opts.margin_radii, per_axis);
  if (out.margin.status == MarginStatus::fail)
    throw BoundDivergenceError("inf_z Re q does not outgrow log(1 + |xi|); the bound integral diverges");
  if (out.margin.status == MarginStatus::indeterminate)
    std::clog << "warning: log-growth margin indeterminate\n";

  try {
    out.kappa = ellipticity_kappa(field, torus_grid(d, per_axis));
  } catch (const AssumptionViolation&) {
    throw BoundDivergenceError("degenerate diffusion; no Gaussian envelope for the bound integral");
  }
  out.radius = std::sqrt(32.0 * std::log(1.0 / opts.tail_tolerance) / (t * out.kappa));
  const int m = opts.points_per_axis > 0 ? opts.points_per_axis : (d == 1 ? 4001 : d == 2 ? 301 : 61);
  out.points_per_axis = m;

  const SymbolGrid grid(field, nu, per_axis);
  const double hstep = 2.0 * out.radius / (m - 1);
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(m);
  std::vector<double> cells(total);
  std::vector<int> idx(d, 0);
  Vec xi(d);
  for (std::size_t n = 0; n < total; ++n) {
    double weight = 1.0;
    for (int i = 0; i < d; ++i) {
      xi[i] = -out.radius + hstep * idx[i];
      weight *= (idx[i] == 0 || idx[i] == m - 1) ? 0.5 * hstep : hstep;
    }
    cells[n] = weight * std::exp(-(t / 16.0) * grid.inf_re_symbol(xi));
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < m) break;
      idx[i] = 0;
    }
  }
  out.value = pairwise_sum(cells);
  return out;
}

inline nlohmann::json margin_to_json(const MarginReport& r) {
  return {{"radii", r.radii},
          {"margins", r.margins},
          {"increasing", r.increasing},
          {"slope", r.slope},
          {"status", to_string(r.status)}};
}

/// CSV over a list of covectors at a fixed state: xi..., re, im, quadratic, jump_re.
inline void write_symbol_slice_csv(std::ostream& os, const CoefficientField& field, const LevyMeasure& nu,
                                   const Vec& x, const std::vector<Vec>& xis) {
  const int d = field.dimension();
  os.precision(17);
  for (int i = 0; i < d; ++i) os << (i ? "," : "") << "xi" << (i + 1);
  os << ",re,im,quadratic,jump_re\n";
  for (const auto& xi : xis) {
    const auto s = eval_symbol(field, nu, x, xi);
    for (int i = 0; i < d; ++i) os << (i ? "," : "") << xi[i];
    os << ',' << s.value.real() << ',' << s.value.imag() << ',' << s.quadratic << ',' << s.jump.real() << '\n';
  }
}

}  // namespace ldpms
