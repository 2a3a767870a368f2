#pragma once

// Monte Carlo probabilities of terminal events, naive and importance-sampled,
// the rate infimum over an event, and eps log p sweeps against it.

#include "ldpms/rate.hpp"
#include "ldpms/sim.hpp"
#include "ldpms/symbol.hpp"

#include <functional>
#include <limits>

namespace ldpms {

class EventSet {
 public:
  enum class Kind { ball, halfspace, box };

  static EventSet ball(Vec center, double radius) {
    require_finite(center, "ball center");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("ball: radius must be positive");
    EventSet e(Kind::ball);
    e.center_ = std::move(center);
    e.radius_ = radius;
    return e;
  }

  /// {x : <normal, x> >= offset}
  static EventSet halfspace(Vec normal, double offset) {
    require_finite(normal, "halfspace normal");
    if (!(normal.norm() > 0.0)) throw InputError("halfspace: normal must be nonzero");
    if (!std::isfinite(offset)) throw InputError("halfspace: offset must be finite");
    EventSet e(Kind::halfspace);
    e.normal_ = std::move(normal);
    e.offset_ = offset;
    return e;
  }

  /// Infinite bounds are allowed.
  static EventSet box(Vec lo, Vec hi) {
    if (lo.size() != hi.size() || lo.size() == 0) throw InputError("box: bound dimensions differ");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (std::isnan(lo[i]) || std::isnan(hi[i]) || !(lo[i] < hi[i]))
        throw InputError("box: need lo < hi componentwise");
    EventSet e(Kind::box);
    e.lo_ = std::move(lo);
    e.hi_ = std::move(hi);
    return e;
  }

  static EventSet everything(int d) {
    const double inf = std::numeric_limits<double>::infinity();
    return box(Vec::Constant(d, -inf), Vec::Constant(d, inf));
  }

  Kind kind() const noexcept { return kind_; }
  int dimension() const {
    switch (kind_) {
      case Kind::ball: return static_cast<int>(center_.size());
      case Kind::halfspace: return static_cast<int>(normal_.size());
      case Kind::box: return static_cast<int>(lo_.size());
    }
    return 0;
  }
  const Vec& center() const noexcept { return center_; }
  double radius() const noexcept { return radius_; }
  const Vec& normal() const noexcept { return normal_; }
  double offset() const noexcept { return offset_; }
  const Vec& lo() const noexcept { return lo_; }
  const Vec& hi() const noexcept { return hi_; }

  bool contains(const Vec& x) const {
    switch (kind_) {
      case Kind::ball: return (x - center_).norm() <= radius_;
      case Kind::halfspace: return normal_.dot(x) >= offset_;
      case Kind::box:
        for (Eigen::Index i = 0; i < x.size(); ++i)
          if (x[i] < lo_[i] || x[i] > hi_[i]) return false;
        return true;
    }
    return false;
  }

  /// Nearest point of the closed set.
  Vec project(const Vec& x) const {
    switch (kind_) {
      case Kind::ball: {
        const Vec r = x - center_;
        const double n = r.norm();
        if (n <= radius_) return x;
        return center_ + (radius_ / n) * r;
      }
      case Kind::halfspace: {
        const double gap = offset_ - normal_.dot(x);
        if (gap <= 0.0) return x;
        return x + (gap / normal_.squaredNorm()) * normal_;
      }
      case Kind::box: return x.cwiseMax(lo_).cwiseMin(hi_);
    }
    return x;
  }

  /// Points on the boundary around `x0`; `resolution` points per direction or axis.
  std::vector<Vec> boundary_samples(const Vec& x0, int resolution) const {
    if (resolution < 2) throw InputError("boundary_samples: resolution must be at least 2");
    std::vector<Vec> out;
    const int d = dimension();
    const double reach = 2.0 * ((project(x0) - x0).norm() + 1.0);
    auto axis_grid = [&](double a, double b) {
      std::vector<double> g;
      for (int i = 0; i < resolution; ++i) g.push_back(a + (b - a) * i / (resolution - 1));
      return g;
    };
    switch (kind_) {
      case Kind::ball:
        for (const auto& u : unit_directions(d, resolution)) out.push_back(center_ + radius_ * u);
        break;
      case Kind::halfspace: {
        const Vec p0 = x0 + ((offset_ - normal_.dot(x0)) / normal_.squaredNorm()) * normal_;
        if (d == 1) {
          out.push_back(p0);
          break;
        }
        // orthonormal tangent basis from a QR of the normal
        const Mat q = Eigen::HouseholderQR<Mat>(normal_).householderQ() * Mat::Identity(d, d);
        const auto g = axis_grid(-reach, reach);
        const int m = d - 1;
        std::vector<int> idx(m, 0);
        std::size_t total = 1;
        for (int i = 0; i < m; ++i) total *= g.size();
        total = std::min<std::size_t>(total, 4096);
        for (std::size_t n = 0; n < total; ++n) {
          Vec p = p0;
          for (int i = 0; i < m; ++i) p += g[idx[i]] * q.col(i + 1);
          out.push_back(std::move(p));
          for (int i = 0; i < m; ++i) {
            if (++idx[i] < static_cast<int>(g.size())) break;
            idx[i] = 0;
          }
        }
        break;
      }
      case Kind::box: {
        const Vec lo = lo_.cwiseMax((x0.array() - reach).matrix());
        const Vec hi = hi_.cwiseMin((x0.array() + reach).matrix());
        if ((lo.array() > hi.array()).any()) {
          out.push_back(project(x0));
          break;
        }
        for (int axis = 0; axis < d; ++axis) {
          for (double side : {lo_[axis], hi_[axis]}) {
            if (!std::isfinite(side)) continue;
            std::vector<std::vector<double>> grids;
            for (int i = 0; i < d; ++i) grids.push_back(i == axis ? std::vector<double>{side} : axis_grid(lo[i], hi[i]));
            std::vector<std::size_t> idx(d, 0);
            std::size_t total = 1;
            for (const auto& gr : grids) total *= gr.size();
            total = std::min<std::size_t>(total, 4096);
            for (std::size_t n = 0; n < total; ++n) {
              Vec p(d);
              for (int i = 0; i < d; ++i) p[i] = grids[i][idx[i]];
              out.push_back(std::move(p));
              for (int i = 0; i < d; ++i) {
                if (++idx[i] < grids[i].size()) break;
                idx[i] = 0;
              }
            }
          }
        }
        if (out.empty()) out.push_back(project(x0));  // no finite face: the whole space
        break;
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    auto vec = [](const Vec& v) {
      nlohmann::json a = nlohmann::json::array();
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v[i])) a.push_back(v[i]);
        else a.push_back(v[i] > 0 ? "inf" : "-inf");
      }
      return a;
    };
    switch (kind_) {
      case Kind::ball: return {{"kind", "ball"}, {"center", vec(center_)}, {"radius", radius_}};
      case Kind::halfspace: return {{"kind", "halfspace"}, {"normal", vec(normal_)}, {"offset", offset_}};
      case Kind::box: return {{"kind", "box"}, {"lo", vec(lo_)}, {"hi", vec(hi_)}};
    }
    return {};
  }

 private:
  explicit EventSet(Kind k) : kind_(k) {}

  Kind kind_;
  Vec center_, normal_, lo_, hi_;
  double radius_ = 0.0, offset_ = 0.0;
};

// ---------------------------------------------------------------------------
// Probability estimates
// ---------------------------------------------------------------------------

struct ProbabilityEstimate {
  double p_hat = 0.0;
  double standard_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t hits = 0;
  bool zero_hit = false;
  bool importance = false;
  double variance = 0.0;  ///< sample variance of the per-path contributions
};

/// Mean of 1_A(X_T) (naive) or 1_A(X_T) dP/dP_hat over tilted paths. Runs with
/// the same cfg.seed share their Gaussian and Poisson streams.
inline ProbabilityEstimate estimate_probability(const CoefficientField& field, const LevyMeasure& nu,
                                                const SimConfig& cfg, const EventSet& A, std::size_t n,
                                                const std::optional<Tilt>& tilt = std::nullopt,
                                                int threads = 1) {
  if (n < 100) throw InputError("estimate_probability: need at least 100 paths");
  if (A.dimension() != field.dimension()) throw InputError("estimate_probability: event dimension mismatch");
  const auto samples = simulate_terminal_batch(field, nu, cfg, n, tilt, threads);

  ProbabilityEstimate est;
  est.n_paths = n;
  est.importance = tilt.has_value();
  std::vector<double> contrib(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!A.contains(samples[i].state)) continue;
    ++est.hits;
    contrib[i] = tilt ? std::exp(samples[i].log_weight) : 1.0;
  }
  if (est.hits == 0) {
    est.zero_hit = true;
    return est;
  }
  const double nd = static_cast<double>(n);
  est.p_hat = pairwise_sum(contrib) / nd;
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = (contrib[i] - est.p_hat) * (contrib[i] - est.p_hat);
  est.variance = pairwise_sum(dev) / (nd - 1.0);
  est.standard_error = std::sqrt(est.variance / nd);
  return est;
}

/// Tilt driving the mean path along the straight line x0 -> z over the
/// simulation grid of cfg.
inline Tilt event_tilt(const CoefficientField& field, const LevyMeasure& nu, const SimConfig& cfg,
                       const Vec& z) {
  cfg.validate(field.dimension());
  const auto psi = LatticePath::straight(cfg.T, cfg.n_steps(), cfg.x0, z);
  return tilt_from_target(field, nu, cfg.regime, psi);
}

// ---------------------------------------------------------------------------
// Rate infimum over an event
// ---------------------------------------------------------------------------

/// v -> J(v)
using RateFunction = std::function<double(const Vec&)>;

inline RateFunction rate_function(const CoefficientField& field, const LevyMeasure& nu,
                                  RateOptions opts = {}) {
  return [&field, &nu, opts](const Vec& v) { return estimate_J(field, nu, v, opts).J; };
}

struct EventInfimum {
  Vec z_star;
  double value = 0.0;  ///< T J((z* - x0) / T)
  std::size_t evaluations = 0;
};

/// Minimizes T J((z - x0)/T) over A: x0 when it lies in A, the nearest point
/// of A, and a boundary grid, followed by three rounds of coordinate
/// refinement projected back onto A.
inline EventInfimum rate_event_infimum(const RateFunction& J, const EventSet& A, const Vec& x0, double T,
                                       int grid_resolution = 32) {
  if (!(T > 0.0)) throw DomainError("rate_event_infimum: T must be positive");
  if (x0.size() != A.dimension()) throw InputError("rate_event_infimum: dimension mismatch");
  if (grid_resolution < 2) throw InputError("rate_event_infimum: empty grid");

  EventInfimum best;
  best.value = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vec& z) {
    const double v = T * J((z - x0) / T);
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.z_star = z;
    }
  };
  if (A.contains(x0)) consider(x0);
  consider(A.project(x0));
  const auto samples = A.boundary_samples(x0, grid_resolution);
  if (samples.empty()) throw InputError("rate_event_infimum: empty grid");
  for (const auto& z : samples) consider(z);

  double step = 2.0 * ((A.project(x0) - x0).norm() + 1.0) / grid_resolution;
  const int d = static_cast<int>(x0.size());
  for (int round = 0; round < 3; ++round) {
    const Vec centre = best.z_star;
    for (int i = 0; i < d; ++i)
      for (double s : {-step, step}) {
        Vec z = centre;
        z[i] += s;
        consider(A.project(z));
      }
    step /= 4.0;
  }
  return best;
}

// ---------------------------------------------------------------------------
// eps log p sweep
// ---------------------------------------------------------------------------

struct SweepOptions {
  std::size_t n_paths = 10000;
  double dt = 0.0;  ///< 0 = 1e-3 T
  std::uint64_t seed = 0;
  int threads = 1;
  unsigned jump_budget = 16;
  bool importance = true;
  int grid_resolution = 32;
  double tolerance = 0.15;  ///< relative gap allowed at the last epsilon
};

struct SweepPoint {
  double epsilon = 0.0;
  double delta = 0.0;
  ProbabilityEstimate estimate;
  double eps_log_p = 0.0;
  double eps_log_p_se = 0.0;
  double gap = 0.0;  ///< |eps log p - target| / |target|, absolute when target = 0
  bool failed = false;
  std::string error;
};

struct LdpSweep {
  std::vector<SweepPoint> points;
  double target = 0.0;
  Vec z_star;
  RegimeLaw law;
  Vec x0;
  double T = 1.0;
  bool scale_separation = false;
  bool monotone = false;
  double final_gap = 0.0;
  double tolerance = 0.15;
  bool pass = false;
};

inline LdpSweep ldp_sweep(const CoefficientField& field, const LevyMeasure& nu, const RegimeLaw& law,
                          const EventSet& A, const Vec& x0, double T, const std::vector<double>& eps_list,
                          const RateFunction& J, const SweepOptions& opts = {}) {
  if (eps_list.empty()) throw InputError("ldp_sweep: empty epsilon list");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1])) throw InputError("ldp_sweep: epsilons must decrease");
  const auto h1 = check_scale_separation(law, eps_list);
  if (!h1.pass) throw AssumptionViolation(kScaleSeparation, "delta/eps does not grow along the sweep");

  LdpSweep sweep;
  sweep.law = law;
  sweep.x0 = x0;
  sweep.T = T;
  sweep.tolerance = opts.tolerance;
  sweep.scale_separation = h1.pass;
  const auto inf = rate_event_infimum(J, A, x0, T, opts.grid_resolution);
  sweep.target = -inf.value;
  sweep.z_star = inf.z_star;

  for (double eps : eps_list) {
    SweepPoint pt;
    pt.epsilon = eps;
    pt.delta = law.delta(eps);
    try {
      SimConfig cfg;
      cfg.T = T;
      cfg.dt = opts.dt;
      cfg.x0 = x0;
      cfg.regime = ScaleRegime::from_law(eps, law);
      cfg.seed = opts.seed;
      cfg.jump_budget = opts.jump_budget;
      std::optional<Tilt> tilt;
      if (opts.importance && !A.contains(x0)) tilt = event_tilt(field, nu, cfg, inf.z_star);
      pt.estimate = estimate_probability(field, nu, cfg, A, opts.n_paths, tilt, opts.threads);
      if (pt.estimate.zero_hit) {
        pt.failed = true;
        pt.error = "no path reached the event";
      } else {
        pt.eps_log_p = eps * std::log(pt.estimate.p_hat);
        pt.eps_log_p_se = eps * pt.estimate.standard_error / pt.estimate.p_hat;
        const double diff = std::abs(pt.eps_log_p - sweep.target);
        pt.gap = sweep.target != 0.0 ? diff / std::abs(sweep.target) : diff;
      }
    } catch (const Error& e) {
      pt.failed = true;
      pt.error = e.what();
    }
    sweep.points.push_back(std::move(pt));
  }

  sweep.monotone = true;
  for (std::size_t i = 1; i < sweep.points.size(); ++i) {
    const auto& a = sweep.points[i - 1];
    const auto& b = sweep.points[i];
    if (a.failed || b.failed) {
      sweep.monotone = false;
      continue;
    }
    const double ga = std::abs(a.eps_log_p - sweep.target), gb = std::abs(b.eps_log_p - sweep.target);
    if (gb > ga + a.eps_log_p_se + b.eps_log_p_se) sweep.monotone = false;
  }
  const auto& last = sweep.points.back();
  sweep.final_gap = last.failed ? std::numeric_limits<double>::infinity() : last.gap;
  sweep.pass = !last.failed && last.gap <= opts.tolerance;
  return sweep;
}

/// CSV: epsilon, delta, p_hat, se, eps_log_p, target.
inline void write_sweep_csv(std::ostream& os, const LdpSweep& sweep) {
  os.precision(17);
  os << "epsilon,delta,p_hat,se,eps_log_p,target\n";
  for (const auto& p : sweep.points) {
    os << p.epsilon << ',' << p.delta << ',' << p.estimate.p_hat << ',' << p.estimate.standard_error << ',';
    if (p.failed) os << "nan";
    else os << p.eps_log_p;
    os << ',' << sweep.target << '\n';
  }
}

inline nlohmann::json sweep_to_json(const LdpSweep& sweep, const EventSet& A) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : sweep.points) {
    nlohmann::json j = {{"epsilon", p.epsilon},
                        {"delta", p.delta},
                        {"p_hat", p.estimate.p_hat},
                        {"se", p.estimate.standard_error},
                        {"hits", p.estimate.hits},
                        {"importance", p.estimate.importance},
                        {"failed", p.failed}};
    if (!p.failed) {
      j["eps_log_p"] = p.eps_log_p;
      j["eps_log_p_se"] = p.eps_log_p_se;
      j["gap"] = p.gap;
    } else {
      j["error"] = p.error;
    }
    pts.push_back(std::move(j));
  }
  return {{"event", A.to_json()},
          {"x0", std::vector<double>(sweep.x0.data(), sweep.x0.data() + sweep.x0.size())},
          {"T", sweep.T},
          {"regime_law", {{"coefficient", sweep.law.coefficient}, {"exponent", sweep.law.exponent}}},
          {"target", sweep.target},
          {"z_star", std::vector<double>(sweep.z_star.data(), sweep.z_star.data() + sweep.z_star.size())},
          {"points", pts},
          {"monotone", sweep.monotone},
          {"final_gap", sweep.final_gap},
          {"tolerance", sweep.tolerance},
          // open and closed events are not distinguished numerically
          {"verdict", sweep.pass ? "pass" : "fail"}};
}

}  // namespace ldpms
