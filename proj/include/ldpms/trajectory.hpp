#pragma once

#include "ldpms/coeffs.hpp"

#include <cstdint>

namespace ldpms {

struct JumpEvent {
  double time = 0.0;  ///< left node of the step the jump was sampled in
  std::size_t step = 0;
  std::size_t atom = 0;
  Vec mark;
  Vec increment;  ///< eps * k(X_{t-}/delta, mark)
};

/// One simulated path on a uniform grid. Brownian increments are the dW of the
/// state equation (which enters with a minus sign) and are kept so that
/// densities can be evaluated exactly against the discrete scheme.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> brownian_increments;  ///< one per step
  std::vector<JumpEvent> jump_log;
  std::uint64_t seed = 0;

  std::size_t n_steps() const noexcept { return brownian_increments.size(); }
  double horizon() const noexcept { return times.empty() ? 0.0 : times.back(); }
  const Vec& terminal() const { return states.back(); }
};

struct SimConfig {
  double T = 1.0;
  /// Euler step; 0 selects the default 1e-3 T. The effective step is T / n_steps.
  double dt = 0.0;
  Vec x0;
  ScaleRegime regime{};
  std::uint64_t seed = 0;
  /// Upper bound on the expected number of jumps per step.
  double jump_budget = 16.0;

  double requested_dt() const { return dt > 0.0 ? dt : 1e-3 * T; }

  std::size_t n_steps() const {
    const double ratio = T / requested_dt();
    return static_cast<std::size_t>(std::max(1.0, std::ceil(ratio - 1e-9)));
  }

  double step() const { return T / static_cast<double>(n_steps()); }

  void validate(int dimension) const {
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("SimConfig: horizon T must be positive");
    if (dt < 0.0 || !std::isfinite(dt)) throw ConfigError("SimConfig: dt must be positive");
    if (requested_dt() > T) throw ConfigError("SimConfig: dt exceeds the horizon");
    if (x0.size() != dimension) throw ConfigError("SimConfig: x0 has the wrong dimension");
    if (!x0.allFinite()) throw ConfigError("SimConfig: x0 is not finite");
    if (!(jump_budget > 0.0)) throw ConfigError("SimConfig: jump budget must be positive");
  }
};

}  // namespace ldpms
