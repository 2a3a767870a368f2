#pragma once

// Discrete energy functional: the path cost V1 (quadratic residual against the
// effective drift in the a^{-1} metric) and the jump cost V2 (x log x - x + 1
// integrated against ds x nu), plus the two conjugate forms they come from.

#include "ldpms/coeffs.hpp"
#include "ldpms/intensity.hpp"

#include <json.hpp>

#include <optional>

namespace ldpms {

/// Path on a uniform grid over [0, L]; nodes.front() and nodes.back() are the
/// pinned endpoints.
class LatticePath {
 public:
  LatticePath(double horizon, std::vector<Vec> nodes) : horizon_(horizon), nodes_(std::move(nodes)) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_)) throw DomainError("LatticePath: bad horizon");
    if (nodes_.size() < 2) throw InputError("LatticePath: need at least one step");
    for (const auto& n : nodes_) {
      if (n.size() != nodes_.front().size()) throw InputError("LatticePath: ragged nodes");
      require_finite(n, "LatticePath node");
    }
  }

  static LatticePath straight(double horizon, std::size_t n_steps, const Vec& from, const Vec& to) {
    if (n_steps == 0) throw InputError("LatticePath: n_steps must be positive");
    std::vector<Vec> nodes;
    nodes.reserve(n_steps + 1);
    for (std::size_t j = 0; j <= n_steps; ++j) {
      const double s = static_cast<double>(j) / static_cast<double>(n_steps);
      nodes.push_back(from + s * (to - from));
    }
    nodes.back() = to;
    return {horizon, std::move(nodes)};
  }

  double horizon() const noexcept { return horizon_; }
  std::size_t n_steps() const noexcept { return nodes_.size() - 1; }
  int dimension() const noexcept { return static_cast<int>(nodes_.front().size()); }
  double step() const noexcept { return horizon_ / static_cast<double>(n_steps()); }
  double time(std::size_t j) const noexcept { return step() * static_cast<double>(j); }
  const std::vector<Vec>& nodes() const noexcept { return nodes_; }
  const Vec& node(std::size_t j) const { return nodes_.at(j); }
  const Vec& start() const noexcept { return nodes_.front(); }
  const Vec& end() const noexcept { return nodes_.back(); }

  /// Forward difference on interval j.
  Vec velocity(std::size_t j) const { return (nodes_[j + 1] - nodes_[j]) / step(); }

  /// Linear interpolation at time t in [0, L].
  Vec at(double t) const {
    const double s = std::clamp(t / step(), 0.0, static_cast<double>(n_steps()));
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(s), n_steps() - 1);
    const double f = s - static_cast<double>(j);
    return (1.0 - f) * nodes_[j] + f * nodes_[j + 1];
  }

 private:
  double horizon_;
  std::vector<Vec> nodes_;
};

struct ActionValue {
  double v1 = 0.0;
  double v2 = 0.0;
  double total() const { return v1 + v2; }
};

/// Which sign the mean jump enters the V1 residual with. `c_plus_kbar` uses
/// psi' - c - kbar; `c_minus_kbar` uses psi' - (c - kbar), the effective drift of
/// the lower-bound construction.
enum class DriftSign { c_plus_kbar, c_minus_kbar };

// ---------------------------------------------------------------------------
// Conjugate forms
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<double> spd_inverse_quadratic(const Mat& a, const Vec& v) {
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Vec y = llt.matrixL().solve(v);
  return y.squaredNorm();
}

}  // namespace detail

/// <v, a^{-1} v> for SPD a, via Cholesky.
inline double q1_conjugate(const Mat& a, const Vec& v) {
  if (a.rows() != a.cols() || a.rows() != v.size()) throw InputError("q1_conjugate: shape mismatch");
  if (!a.allFinite() || !v.allFinite()) throw DomainError("q1_conjugate: non-finite input");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw DomainError("q1_conjugate: matrix is not symmetric");
  const auto q = detail::spd_inverse_quadratic(a, v);
  if (!q) throw DomainError("q1_conjugate: matrix is not positive definite");
  return *q;
}

/// r log r - r + 1, with 0 log 0 = 0.
inline double q2_conjugate(double r) {
  if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("q2_conjugate: argument must be >= 0");
  return xlogx(r) - r + 1.0;
}

// ---------------------------------------------------------------------------
// V1
// ---------------------------------------------------------------------------

struct V1Options {
  DriftSign sign = DriftSign::c_minus_kbar;
  /// When set, include the fast drift (eps/delta) b in the effective drift.
  std::optional<ScaleRegime> fast_drift{};
};

/// Effective drift at a point: c -/+ kbar (+ (eps/delta) b in diagnostic mode).
inline Vec effective_drift(const CoefficientField& field, const LevyMeasure& nu, const Vec& x,
                           const V1Options& opts = {}) {
  Vec drift = field.c(x);
  if (!nu.empty()) {
    const Vec kbar = mean_jump(nu, field, x);
    drift += opts.sign == DriftSign::c_minus_kbar ? Vec(-kbar) : kbar;
  }
  if (opts.fast_drift) drift += opts.fast_drift->ratio() * field.b(x);
  return drift;
}

/// Per-interval contributions (h/2) |psi'_j - B(psi_j)|^2_{a^{-1}(psi_j)}.
inline std::vector<double> v1_integrands(const CoefficientField& field, const LevyMeasure& nu,
                                         const LatticePath& psi, const V1Options& opts = {}) {
  if (psi.dimension() != field.dimension()) throw InputError("v1_energy: dimension mismatch");
  const double h = psi.step();
  std::vector<double> out(psi.n_steps());
  for (std::size_t j = 0; j < psi.n_steps(); ++j) {
    const Vec& x = psi.node(j);
    const Vec r = psi.velocity(j) - effective_drift(field, nu, x, opts);
    const auto q = detail::spd_inverse_quadratic(field.a(x), r);
    if (!q) throw AssumptionViolation(kEllipticity, "a(x) is singular along the path");
    out[j] = 0.5 * h * *q;
  }
  return out;
}

inline double v1_energy(const CoefficientField& field, const LevyMeasure& nu,
                        const LatticePath& psi, const V1Options& opts = {}) {
  const auto parts = v1_integrands(field, nu, psi, opts);
  return pairwise_sum(parts);
}

inline double v1_energy(const CoefficientField& field, const LevyMeasure& nu,
                        const LatticePath& psi, DriftSign sign) {
  return v1_energy(field, nu, psi, V1Options{sign, std::nullopt});
}

// ---------------------------------------------------------------------------
// V2
// ---------------------------------------------------------------------------

/// Integral of (g log g - g + 1) over ds x nu for an intensity table g
/// (rows = intervals of [0, L], cols = atoms). g = 0 is allowed (cost 1 per
/// unit mass and time); g < 0 is a domain error.
inline double v2_energy_from_intensity(const Mat& g, const LevyMeasure& nu, double horizon) {
  if (static_cast<std::size_t>(g.cols()) != nu.size()) throw InputError("v2_energy: atom count mismatch");
  if (g.rows() == 0) return 0.0;
  if (!g.allFinite()) throw DomainError("v2_energy: non-finite intensity");
  if (g.size() > 0 && g.minCoeff() < 0.0) throw DomainError("v2_energy: negative intensity");
  const double h = horizon / static_cast<double>(g.rows());
  std::vector<double> cells;
  cells.reserve(static_cast<std::size_t>(g.size()));
  for (Eigen::Index n = 0; n < g.rows(); ++n)
    for (Eigen::Index a = 0; a < g.cols(); ++a)
      cells.push_back(h * nu.atoms()[static_cast<std::size_t>(a)].mass * q2_conjugate(g(n, a)));
  return pairwise_sum(cells);
}

/// V2 evaluated at intensity 1 + phi.
inline double v2_energy(const JumpIntensityField& phi, const LevyMeasure& nu, double horizon) {
  return v2_energy_from_intensity((phi.values().array() + 1.0).matrix(), nu, horizon);
}

inline ActionValue action_value(const CoefficientField& field, const LevyMeasure& nu,
                                const LatticePath& psi, const JumpIntensityField& phi,
                                const V1Options& opts = {}) {
  return {v1_energy(field, nu, psi, opts), v2_energy(phi, nu, psi.horizon())};
}

/// Audit record with the per-interval V1 breakdown.
inline nlohmann::json action_report(const CoefficientField& field, const LevyMeasure& nu,
                                    const LatticePath& psi, const JumpIntensityField& phi,
                                    const V1Options& opts = {}) {
  const auto parts = v1_integrands(field, nu, psi, opts);
  const double v1 = pairwise_sum(parts);
  const double v2 = v2_energy(phi, nu, psi.horizon());
  return {{"horizon", psi.horizon()},
          {"n_steps", psi.n_steps()},
          {"drift_sign", opts.sign == DriftSign::c_minus_kbar ? "c_minus_kbar" : "c_plus_kbar"},
          {"v1", v1},
          {"v2", v2},
          {"total", v1 + v2},
          {"v1_per_interval", parts}};
}

}  // namespace ldpms
