#pragma once

// Rate function J(v) = lim_L V_L(0, L v) / L, estimated by minimizing the
// discrete energy over interior path nodes and log-intensities for a schedule
// of horizons and extrapolating in 1/L.

#include "ldpms/action.hpp"
#include "ldpms/lbfgs.hpp"

#include <memory>
#include <ostream>

namespace ldpms {

struct RateOptions {
  std::vector<double> L_schedule{8.0, 16.0, 32.0, 64.0};
  int steps_per_unit = 16;
  LbfgsOptions lbfgs{12, 20000, 1e-9};
  V1Options v1{};
  /// Central-difference step for coefficient derivatives.
  double fd_step = 1e-6;
  /// Allowed non-monotone wiggle in V_L/L before the extrapolation is flagged.
  double extrapolation_tol = 1e-6;
};

struct ActionMinimizer {
  LatticePath path;
  JumpIntensityField phi;
  ActionValue value;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> history;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, ActionMinimizer best)
      : Error(what), best_(std::make_shared<const ActionMinimizer>(std::move(best))) {}
  const ActionMinimizer& best() const noexcept { return *best_; }

 private:
  std::shared_ptr<const ActionMinimizer> best_;
};

namespace detail {

/// V1 + V2 over interior nodes (first block) and u = log(1 + phi) (second block).
class ActionObjective {
 public:
  ActionObjective(const CoefficientField& field, const LevyMeasure& nu, const LatticePath& init,
                  const RateOptions& opts)
      : field_(field),
        nu_(nu),
        opts_(opts),
        d_(field.dimension()),
        n_(init.n_steps()),
        h_(init.step()),
        start_(init.start()),
        end_(init.end()) {
    build_preconditioner(init);
  }

  std::size_t path_vars() const { return (n_ - 1) * static_cast<std::size_t>(d_); }
  std::size_t size() const { return path_vars() + n_ * nu_.size(); }

  Vec pack(const LatticePath& path, const JumpIntensityField& phi) const {
    Vec v(static_cast<Eigen::Index>(size()));
    for (std::size_t j = 1; j < n_; ++j) v.segment(offset(j), d_) = path.node(j);
    for (std::size_t s = 0; s < n_; ++s)
      for (std::size_t a = 0; a < nu_.size(); ++a) v[u_index(s, a)] = std::log1p(phi(s, a));
    return v;
  }

  Vec node(const Vec& vars, std::size_t j) const {
    if (j == 0) return start_;
    if (j == n_) return end_;
    return vars.segment(offset(j), d_);
  }

  LatticePath path(const Vec& vars) const {
    std::vector<Vec> nodes;
    nodes.reserve(n_ + 1);
    for (std::size_t j = 0; j <= n_; ++j) nodes.push_back(node(vars, j));
    return {h_ * static_cast<double>(n_), std::move(nodes)};
  }

  JumpIntensityField phi(const Vec& vars) const {
    Mat m(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(nu_.size()));
    for (std::size_t s = 0; s < n_; ++s)
      for (std::size_t a = 0; a < nu_.size(); ++a)
        m(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = std::expm1(vars[u_index(s, a)]);
    return JumpIntensityField(std::move(m));
  }

  double operator()(const Vec& vars, Vec& grad) const {
    grad.setZero(static_cast<Eigen::Index>(size()));
    std::vector<double> terms;
    terms.reserve(n_ * (1 + nu_.size()));
    for (std::size_t j = 0; j < n_; ++j) {
      const Vec p = node(vars, j);
      const Vec v = (node(vars, j + 1) - p) / h_;
      Vec w;
      const double f = local(p, v, &w);
      if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
      terms.push_back(f);
      if (j + 1 < n_) grad.segment(offset(j + 1), d_) += w;
      if (j > 0) {
        Vec gp = -w;
        Vec e = Vec::Zero(d_);
        for (int i = 0; i < d_; ++i) {
          e[i] = opts_.fd_step;
          gp[i] += (local(p + e, v, nullptr) - local(p - e, v, nullptr)) / (2.0 * opts_.fd_step);
          e[i] = 0.0;
        }
        grad.segment(offset(j), d_) += gp;
      }
    }
    for (std::size_t s = 0; s < n_; ++s) {
      for (std::size_t a = 0; a < nu_.size(); ++a) {
        const double u = vars[u_index(s, a)];
        const double hw = h_ * nu_.atoms()[a].mass;
        const double g = std::exp(u);
        terms.push_back(hw * (u * g - g + 1.0));
        grad[u_index(s, a)] = hw * u * g;
      }
    }
    return pairwise_sum(terms);
  }

  /// Block-tridiagonal solve with the kinetic Hessian (blocks a^{-1}/h frozen
  /// at the initial path); diagonal scaling for the log-intensities.
  Vec precondition(const Vec& g) const {
    Vec out(g.size());
    const std::size_t m = n_ - 1;
    if (m > 0) {
      std::vector<Vec> rhs(m);
      for (std::size_t i = 0; i < m; ++i) rhs[i] = g.segment(offset(i + 1), d_);
      // forward sweep on stored factors
      for (std::size_t i = 1; i < m; ++i) rhs[i] -= lower_[i] * rhs[i - 1];
      std::vector<Vec> sol(m);
      sol[m - 1] = diag_lu_[m - 1].solve(rhs[m - 1]);
      for (std::size_t i = m - 1; i-- > 0;) sol[i] = diag_lu_[i].solve(rhs[i] - upper_[i] * sol[i + 1]);
      for (std::size_t i = 0; i < m; ++i) out.segment(offset(i + 1), d_) = sol[i];
    }
    for (std::size_t s = 0; s < n_; ++s)
      for (std::size_t a = 0; a < nu_.size(); ++a)
        out[u_index(s, a)] = g[u_index(s, a)] / (h_ * nu_.atoms()[a].mass);
    return out;
  }

 private:
  Eigen::Index offset(std::size_t j) const { return static_cast<Eigen::Index>((j - 1) * d_); }
  Eigen::Index u_index(std::size_t s, std::size_t a) const {
    return static_cast<Eigen::Index>(path_vars() + s * nu_.size() + a);
  }

  /// (h/2) |v - B(p)|^2_{a^{-1}(p)}; optionally returns a^{-1}(v - B(p)).
  double local(const Vec& p, const Vec& v, Vec* w) const {
    const Vec r = v - effective_drift(field_, nu_, p, opts_.v1);
    Eigen::LLT<Mat> llt(field_.a(p));
    if (llt.info() != Eigen::Success)
      throw AssumptionViolation(kEllipticity, "a(x) is singular along the path");
    Vec ar = llt.solve(r);
    const double f = 0.5 * h_ * r.dot(ar);
    if (w) *w = std::move(ar);
    return f;
  }

  void build_preconditioner(const LatticePath& init) {
    const std::size_t m = n_ - 1;
    if (m == 0) return;
    std::vector<Mat> blocks(n_);  // a^{-1}/h on each interval
    for (std::size_t j = 0; j < n_; ++j) {
      Eigen::LLT<Mat> llt(field_.a(init.node(j)));
      if (llt.info() != Eigen::Success)
        throw AssumptionViolation(kEllipticity, "a(x) is singular along the initial path");
      blocks[j] = llt.solve(Mat::Identity(d_, d_)) / h_;
    }
    // Block LU of tridiag(-B_i, B_{i-1} + B_i, -B_i) for nodes 1..n-1.
    diag_lu_.resize(m);
    lower_.resize(m);
    upper_.resize(m);
    Mat diag = blocks[0] + blocks[1];
    diag_lu_[0] = diag.partialPivLu();
    for (std::size_t i = 0; i + 1 < m; ++i) {
      upper_[i] = -blocks[i + 1];
      const Mat lower = -blocks[i + 1];
      lower_[i + 1] = lower * diag_lu_[i].inverse();
      diag = blocks[i + 1] + blocks[i + 2] - lower_[i + 1] * upper_[i];
      diag_lu_[i + 1] = diag.partialPivLu();
    }
  }

  const CoefficientField& field_;
  const LevyMeasure& nu_;
  const RateOptions& opts_;
  int d_;
  std::size_t n_;
  double h_;
  Vec start_, end_;
  std::vector<Eigen::PartialPivLU<Mat>> diag_lu_;
  std::vector<Mat> lower_, upper_;
};

}  // namespace detail

/// Minimizes V1 + V2 over interior nodes of the path and over the jump
/// intensity (parameterized as phi = exp(u) - 1). Endpoints stay pinned.
inline ActionMinimizer minimize_action(const CoefficientField& field, const LevyMeasure& nu,
                                       const LatticePath& init, const RateOptions& opts = {},
                                       std::optional<JumpIntensityField> init_phi = std::nullopt) {
  if (init.dimension() != field.dimension()) throw InputError("minimize_action: dimension mismatch");
  JumpIntensityField phi0 = init_phi ? std::move(*init_phi) : JumpIntensityField::zero(init.n_steps(), nu.size());
  if (phi0.n_steps() != init.n_steps() || phi0.n_atoms() != nu.size())
    throw InputError("minimize_action: intensity table does not match the path");

  const ActionValue init_value = action_value(field, nu, init, phi0, opts.v1);
  detail::ActionObjective objective(field, nu, init, opts);
  const Vec x0 = objective.pack(init, phi0);

  auto fg = [&](const Vec& x, Vec& g) { return objective(x, g); };
  auto pre = [&](const Vec& g) { return objective.precondition(g); };
  LbfgsResult res;
  if (objective.size() == 0) {
    res.x = x0;
    res.converged = true;
  } else {
    res = lbfgs_minimize(fg, x0, pre, opts.lbfgs);
  }

  ActionMinimizer out{objective.path(res.x), objective.phi(res.x), {}, res.iterations, res.grad_norm,
                      std::move(res.history)};
  out.value = res.iterations == 0 ? init_value : action_value(field, nu, out.path, out.phi, opts.v1);
  if (out.value.total() > init_value.total()) {  // summation-order roundoff only
    out = ActionMinimizer{init, phi0, init_value, 0, res.grad_norm, {init_value.total()}};
  }
  if (!res.converged) {
    throw ConvergenceError("minimize_action: gradient norm " + std::to_string(res.grad_norm) +
                               " above tolerance after " + std::to_string(res.iterations) + " iterations",
                           std::move(out));
  }
  return out;
}

/// Form with explicit horizon and endpoints; they must agree with `init`.
inline ActionMinimizer minimize_action(const CoefficientField& field, const LevyMeasure& nu, double L,
                                       const Vec& x, const Vec& z, const LatticePath& init,
                                       const RateOptions& opts = {}) {
  if (std::abs(init.horizon() - L) > 1e-12 * std::max(1.0, L) || (init.start() - x).norm() > 0.0 ||
      (init.end() - z).norm() > 0.0)
    throw InputError("minimize_action: initial path does not match the horizon or endpoints");
  return minimize_action(field, nu, init, opts);
}

struct RateEstimate {
  Vec velocity;
  std::vector<std::pair<double, double>> values;  ///< (L, V_L / L)
  double J = 0.0;
  double slope = 0.0;  ///< b in the a + b/L fit
  bool extrapolation_warning = false;
  bool clamped = false;  ///< extrapolated value was negative and clamped to 0
  int iterations = 0;
  double final_grad_norm = 0.0;
  std::optional<LatticePath> minimizer{};  ///< at the longest horizon
};

namespace detail {

inline bool is_integer_vector(const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i] - std::round(v[i])) > 1e-9) return false;
  return true;
}

/// Warm start for horizon L from the minimizer at L_prev. Periodic copies are
/// used when the displacement over L_prev is a lattice vector and L is a
/// multiple of L_prev; otherwise the path is rescaled in time and space.
inline LatticePath warm_start(const LatticePath& prev, double L, std::size_t n, const Vec& v) {
  const double ratio = L / prev.horizon();
  const long copies = std::lround(ratio);
  const Vec shift = prev.end() - prev.start();
  std::vector<Vec> nodes;
  nodes.reserve(n + 1);
  const double h = L / static_cast<double>(n);
  if (std::abs(ratio - copies) < 1e-12 && copies >= 1 && is_integer_vector(shift)) {
    for (std::size_t j = 0; j <= n; ++j) {
      const double t = h * static_cast<double>(j);
      long k = static_cast<long>(std::floor(t / prev.horizon()));
      k = std::min(k, copies - 1);
      nodes.push_back(prev.at(t - static_cast<double>(k) * prev.horizon()) + static_cast<double>(k) * shift);
    }
  } else {
    for (std::size_t j = 0; j <= n; ++j) nodes.push_back(ratio * prev.at(h * static_cast<double>(j) / ratio));
  }
  nodes.front() = Vec::Zero(v.size());
  nodes.back() = L * v;
  return {L, std::move(nodes)};
}

}  // namespace detail

/// J(v) from minimizers on 0 -> L v for each L in the schedule, extrapolated
/// by a least-squares fit of V_L / L = a + b / L.
inline RateEstimate estimate_J(const CoefficientField& field, const LevyMeasure& nu, const Vec& v,
                               const RateOptions& opts = {}) {
  if (v.size() != field.dimension()) throw InputError("estimate_J: velocity has the wrong dimension");
  require_finite(v, "velocity");
  std::vector<double> schedule = opts.L_schedule;
  if (schedule.size() < 3) throw InputError("estimate_J: need at least three horizons");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0)) throw InputError("estimate_J: horizons must be positive");
    if (i > 0 && !(schedule[i] > schedule[i - 1])) throw InputError("estimate_J: horizons must increase");
  }

  RateEstimate est;
  est.velocity = v;
  std::optional<LatticePath> prev;
  for (double L : schedule) {
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(L * opts.steps_per_unit)));
    const LatticePath init = prev ? detail::warm_start(*prev, L, n, v)
                                  : LatticePath::straight(L, n, Vec::Zero(v.size()), L * v);
    const ActionMinimizer m = minimize_action(field, nu, init, opts);
    est.values.emplace_back(L, m.value.total() / L);
    est.iterations += m.iterations;
    est.final_grad_norm = m.grad_norm;
    prev = m.path;
  }
  est.minimizer = prev;

  // least squares in x = 1/L
  const double k = static_cast<double>(est.values.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [L, val] : est.values) {
    const double x = 1.0 / L;
    sx += x;
    sy += val;
    sxx += x * x;
    sxy += x * val;
  }
  const double denom = k * sxx - sx * sx;
  est.slope = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
  est.J = (sy - est.slope * sx) / k;
  if (est.J < 0.0) {
    est.J = 0.0;
    est.clamped = true;
  }

  int sign = 0;
  for (std::size_t i = 1; i < est.values.size(); ++i) {
    const double diff = est.values[i].second - est.values[i - 1].second;
    if (std::abs(diff) <= opts.extrapolation_tol) continue;
    const int s = diff > 0 ? 1 : -1;
    if (sign != 0 && s != sign) est.extrapolation_warning = true;
    sign = s;
  }
  return est;
}

/// T * J((z - x) / T), the infimum of the path-space action over paths x -> z.
inline double path_space_infimum(const CoefficientField& field, const LevyMeasure& nu, double T,
                                 const Vec& x, const Vec& z, const RateOptions& opts = {}) {
  if (!(T > 0.0)) throw DomainError("path_space_infimum: T must be positive");
  return T * estimate_J(field, nu, (z - x) / T, opts).J;
}

struct ConvexityViolation {
  std::size_t u, w, mid;
  double excess;  ///< J(mid) - (J(u) + J(w)) / 2
};

struct ConvexityReport {
  std::size_t triples = 0;
  std::vector<ConvexityViolation> violations;
  bool pass() const { return violations.empty(); }
};

/// Midpoint convexity over every pair whose midpoint is also on the grid.
inline ConvexityReport convexity_check(const std::vector<RateEstimate>& estimates, double tol = 1e-4) {
  ConvexityReport r;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    for (std::size_t j = i + 1; j < estimates.size(); ++j) {
      const Vec mid = 0.5 * (estimates[i].velocity + estimates[j].velocity);
      for (std::size_t m = 0; m < estimates.size(); ++m) {
        if (m == i || m == j) continue;
        if ((estimates[m].velocity - mid).cwiseAbs().maxCoeff() > 1e-9) continue;
        ++r.triples;
        const double excess = estimates[m].J - 0.5 * (estimates[i].J + estimates[j].J);
        if (excess > tol) r.violations.push_back({i, j, m, excess});
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// CSV: v1..vd, one column per horizon (V_L/L), J, flags.
inline void write_rate_table_csv(std::ostream& os, const std::vector<RateEstimate>& estimates) {
  if (estimates.empty()) return;
  const auto d = estimates.front().velocity.size();
  os.precision(17);
  for (Eigen::Index i = 0; i < d; ++i) os << (i ? "," : "") << 'v' << (i + 1);
  for (const auto& [L, _] : estimates.front().values) os << ",V_over_L@" << L;
  os << ",J,extrapolation_warning\n";
  for (const auto& e : estimates) {
    for (Eigen::Index i = 0; i < d; ++i) os << (i ? "," : "") << e.velocity[i];
    for (const auto& [L, val] : e.values) os << ',' << val;
    os << ',' << e.J << ',' << (e.extrapolation_warning ? 1 : 0) << '\n';
  }
}

inline void write_path_csv(std::ostream& os, const LatticePath& path) {
  os.precision(17);
  os << "time";
  for (int i = 0; i < path.dimension(); ++i) os << ",x" << (i + 1);
  os << '\n';
  for (std::size_t j = 0; j <= path.n_steps(); ++j) {
    os << path.time(j);
    for (int i = 0; i < path.dimension(); ++i) os << ',' << path.node(j)[i];
    os << '\n';
  }
}

}  // namespace ldpms
