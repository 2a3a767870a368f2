#pragma once

// Exponential change of measure for the jump diffusion: a Brownian drift tilt
// xi and a jump-intensity tilt 1 + phi, the resulting log Radon-Nikodym
// density along a simulated path, and the relative-entropy cost of phi.
//
// Sign convention: the state equation carries -sqrt(eps) sigma dW. A tilt xi
// shifts the state drift by +sigma xi, i.e. under the tilted measure
//   dW = dW_hat - xi dt / sqrt(eps),
// so the Brownian part of log dP_hat/dP is
//   -(1/2eps) int |xi|^2 ds - (1/sqrt(eps)) int xi . dW.

#include "ldpms/action.hpp"
#include "ldpms/trajectory.hpp"

#include <iostream>

namespace ldpms {

/// Tilt sampled on the left nodes of a uniform grid over [0, horizon].
struct Tilt {
  double horizon = 1.0;
  std::vector<Vec> xi;  ///< one per step
  JumpIntensityField phi;
  std::optional<LatticePath> target{};
  std::size_t clamped_steps = 0;  ///< steps where |xi| hit the sup bound

  std::size_t n_steps() const noexcept { return xi.size(); }

  void validate(std::size_t n_atoms) const {
    if (xi.empty()) throw InputError("Tilt: empty grid");
    if (!(horizon > 0.0)) throw InputError("Tilt: horizon must be positive");
    for (const auto& v : xi) require_finite(v, "Tilt xi");
    if (phi.n_steps() != xi.size() || phi.n_atoms() != n_atoms)
      throw InputError("Tilt: phi table does not match the grid or the measure");
  }

  bool is_neutral() const {
    for (const auto& v : xi)
      if (v.cwiseAbs().maxCoeff() != 0.0) return false;
    return phi.is_zero();
  }

  static Tilt neutral(double horizon, std::size_t n_steps, int d, std::size_t n_atoms) {
    return constant(horizon, n_steps, Vec::Zero(d), n_atoms);
  }

  /// Constant deterministic xi with no jump tilt.
  static Tilt constant(double horizon, std::size_t n_steps, const Vec& xi, std::size_t n_atoms) {
    Tilt t;
    t.horizon = horizon;
    t.xi.assign(n_steps, xi);
    t.phi = JumpIntensityField::zero(n_steps, n_atoms);
    return t;
  }

  /// xi -> -xi, 1 + phi -> 1 / (1 + phi).
  Tilt inverse() const {
    Tilt t = *this;
    for (auto& v : t.xi) v = -v;
    t.phi = JumpIntensityField(((phi.values().array() + 1.0).inverse() - 1.0).matrix());
    return t;
  }
};

inline constexpr double kDefaultXiBound = 1e6;

/// Brownian tilt that makes the tilted state drift follow psi:
///   xi_n = sigma^{-1} [psi'_n - (eps/delta) b - c + kbar] at psi_n / delta.
/// psi must live on the simulation grid (same horizon and step count).
inline Tilt tilt_from_target(const CoefficientField& field, const LevyMeasure& nu,
                             const ScaleRegime& regime, const LatticePath& psi,
                             std::optional<JumpIntensityField> phi = std::nullopt,
                             double xi_bound = kDefaultXiBound) {
  if (psi.dimension() != field.dimension()) throw InputError("tilt_from_target: dimension mismatch");
  Tilt t;
  t.horizon = psi.horizon();
  t.target = psi;
  t.phi = phi ? std::move(*phi) : JumpIntensityField::zero(psi.n_steps(), nu.size());
  t.xi.reserve(psi.n_steps());
  for (std::size_t j = 0; j < psi.n_steps(); ++j) {
    const Vec z = psi.node(j) / regime.delta;
    const Mat s = field.sigma(z);
    Eigen::SelfAdjointEigenSolver<Mat> eig(s * s.transpose(), Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > kDefaultEllipticityFloor))
      throw AssumptionViolation(kEllipticity, "sigma is singular along the target path");
    Vec r = psi.velocity(j) - regime.ratio() * field.b(z) - field.c(z);
    if (!nu.empty()) r += mean_jump(nu, field, z);
    Vec xi = s.partialPivLu().solve(r);
    const double norm = xi.norm();
    if (!std::isfinite(norm)) throw AssumptionViolation(kEllipticity, "xi is not finite");
    if (norm > xi_bound) {
      xi *= xi_bound / norm;
      ++t.clamped_steps;
    }
    t.xi.push_back(std::move(xi));
  }
  if (t.clamped_steps > 0)
    std::clog << "warning: xi clamped to " << xi_bound << " on " << t.clamped_steps << " steps\n";
  t.validate(nu.size());
  return t;
}

/// (1 + phi) log(1 + phi) - phi
inline double entropy_integrand(double phi) {
  if (!(phi >= -1.0)) throw DomainError("entropy_integrand: phi must be >= -1");
  return xlogx(1.0 + phi) - phi;
}

/// Lattice sum of (1+phi)log(1+phi) - phi over ds x nu on [0, horizon].
inline double entropy_cost(const JumpIntensityField& phi, const LevyMeasure& nu, double horizon) {
  if (phi.n_atoms() != nu.size()) throw InputError("entropy_cost: atom count mismatch");
  if (phi.n_steps() == 0) return 0.0;
  const double h = horizon / static_cast<double>(phi.n_steps());
  std::vector<double> cells;
  cells.reserve(phi.n_steps() * phi.n_atoms());
  for (std::size_t n = 0; n < phi.n_steps(); ++n)
    for (std::size_t a = 0; a < phi.n_atoms(); ++a)
      cells.push_back(h * nu.atoms()[a].mass * entropy_integrand(phi(n, a)));
  return pairwise_sum(cells);
}

namespace detail {

inline void check_grid(const Tilt& tilt, std::size_t n_steps, double horizon) {
  if (tilt.n_steps() != n_steps || std::abs(tilt.horizon - horizon) > 1e-12 * std::max(1.0, horizon))
    throw InputError("tilt grid does not match the trajectory grid");
}

/// Brownian contribution of one step to log dP_hat/dP.
inline double brownian_log_density_step(const Vec& xi, const Vec& dW, double h, double eps) {
  return -0.5 / eps * xi.squaredNorm() * h - xi.dot(dW) / std::sqrt(eps);
}

/// Compensator contribution of one step: -(1/eps) sum_a w_a phi_a h.
inline double jump_compensator_step(const Tilt& tilt, const LevyMeasure& nu, std::size_t n,
                                    double h, double eps) {
  double s = 0.0;
  for (std::size_t a = 0; a < nu.size(); ++a) s += nu.atoms()[a].mass * tilt.phi(n, a);
  return -s * h / eps;
}

}  // namespace detail

/// log dP_hat/dP along a trajectory simulated on the tilt's grid:
///   -(1/2eps) sum |xi|^2 h - (1/sqrt eps) sum xi . dW
///   + sum_{jumps} log(1 + phi) - (1/eps) sum w phi h.
/// The jump part is the standard intensity-tilt density; it equals
///   -(1/eps) int (phi - log(1+phi)) nu ds + (1/eps) int log(1+phi)(eps N - nu ds).
inline double log_density(const Tilt& tilt, const Trajectory& traj, const CoefficientField& field,
                          const LevyMeasure& nu, const ScaleRegime& regime) {
  detail::check_grid(tilt, traj.n_steps(), traj.horizon());
  tilt.validate(nu.size());
  if (!traj.brownian_increments.empty() && traj.brownian_increments.front().size() != field.dimension())
    throw InputError("log_density: dimension mismatch");
  const double eps = regime.epsilon;
  const double h = traj.horizon() / static_cast<double>(traj.n_steps());
  double total = 0.0;
  for (std::size_t n = 0; n < traj.n_steps(); ++n) {
    total += detail::brownian_log_density_step(tilt.xi[n], traj.brownian_increments[n], h, eps);
    if (!nu.empty()) total += detail::jump_compensator_step(tilt, nu, n, h, eps);
  }
  for (const auto& jump : traj.jump_log) total += std::log1p(tilt.phi(jump.step, jump.atom));
  return total;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json tilt_to_json(const Tilt& tilt) {
  nlohmann::json xi = nlohmann::json::array();
  for (const auto& v : tilt.xi) xi.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  nlohmann::json phi = nlohmann::json::array();
  for (std::size_t n = 0; n < tilt.phi.n_steps(); ++n) {
    std::vector<double> row;
    for (std::size_t a = 0; a < tilt.phi.n_atoms(); ++a) row.push_back(tilt.phi(n, a));
    phi.push_back(row);
  }
  return {{"horizon", tilt.horizon},
          {"n_steps", tilt.n_steps()},
          {"n_atoms", tilt.phi.n_atoms()},
          {"xi", xi},
          {"phi", phi}};
}

inline Tilt tilt_from_json(const nlohmann::json& j) {
  Tilt t;
  t.horizon = j.at("horizon").get<double>();
  const auto n_steps = j.at("n_steps").get<std::size_t>();
  const auto n_atoms = j.at("n_atoms").get<std::size_t>();
  for (const auto& row : j.at("xi")) {
    const auto v = row.get<std::vector<double>>();
    t.xi.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  Mat phi = Mat::Zero(static_cast<Eigen::Index>(n_steps), static_cast<Eigen::Index>(n_atoms));
  const auto& rows = j.at("phi");
  if (rows.size() != n_steps) throw InputError("tilt JSON: phi row count mismatch");
  for (std::size_t n = 0; n < n_steps; ++n) {
    const auto row = rows[n].get<std::vector<double>>();
    if (row.size() != n_atoms) throw InputError("tilt JSON: phi column count mismatch");
    for (std::size_t a = 0; a < n_atoms; ++a)
      phi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(a)) = row[a];
  }
  t.phi = JumpIntensityField(std::move(phi));
  if (t.xi.size() != n_steps) throw InputError("tilt JSON: xi row count mismatch");
  t.validate(n_atoms);
  return t;
}

}  // namespace ldpms
