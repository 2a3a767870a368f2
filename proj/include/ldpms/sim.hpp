#pragma once

// Euler-Maruyama simulation of
//   dX = -sqrt(eps) sigma(X/delta) dW + (eps/delta) b(X/delta) dt + c(X/delta) dt
//        + int k(X_{t-}/delta, y) (eps N^{1/eps}(dt dy) - nu(dy) dt)
// with per-atom Poisson counts per step. Optionally under a Tilt, in which case
// each path also carries log dP/dP_hat.

#include "ldpms/measure_change.hpp"

#include <ostream>
#include <random>

namespace ldpms {

namespace detail {

/// Discards everything; used when only the terminal state is needed.
struct TerminalRecorder {
  Vec terminal;
  void start(const SimConfig&, std::size_t) {}
  void step(std::size_t, double, const Vec&, const Vec&) {}
  void jump(const JumpEvent&) {}
  void finish(const Vec& x) { terminal = x; }
};

struct FullRecorder {
  Trajectory traj;
  void start(const SimConfig& cfg, std::size_t n) {
    traj.times.reserve(n + 1);
    traj.states.reserve(n + 1);
    traj.brownian_increments.reserve(n);
    traj.times.push_back(0.0);
    traj.states.push_back(cfg.x0);
  }
  void step(std::size_t, double t_next, const Vec& x_next, const Vec& dW) {
    traj.times.push_back(t_next);
    traj.states.push_back(x_next);
    traj.brownian_increments.push_back(dW);
  }
  void jump(const JumpEvent& e) { traj.jump_log.push_back(e); }
  void finish(const Vec&) {}
};

inline void check_jump_budget(const SimConfig& cfg, const LevyMeasure& nu, const Tilt* tilt) {
  if (nu.empty()) return;
  const double h = cfg.step();
  double worst = 0.0;
  const std::size_t n = tilt ? tilt->n_steps() : 1;
  for (std::size_t s = 0; s < n; ++s) {
    double rate = 0.0;
    for (std::size_t a = 0; a < nu.size(); ++a)
      rate += nu.atoms()[a].mass * (tilt ? 1.0 + tilt->phi(s, a) : 1.0);
    worst = std::max(worst, rate);
  }
  const double expected = h * worst / cfg.regime.epsilon;
  if (expected > cfg.jump_budget)
    throw ConfigError("expected jumps per step " + std::to_string(expected) + " exceed the budget " +
                      std::to_string(cfg.jump_budget) + "; use a smaller dt");
}

/// Core stepper. Returns log dP/dP_hat (0 without a tilt).
template <class Recorder>
double run_path(const CoefficientField& field, const LevyMeasure& nu, const SimConfig& cfg,
                const Tilt* tilt, std::uint64_t seed, Recorder& rec) {
  const int d = field.dimension();
  const std::size_t n = cfg.n_steps();
  const double h = cfg.step();
  const double eps = cfg.regime.epsilon;
  const double delta = cfg.regime.delta;
  const double sqrt_eps = std::sqrt(eps);
  const double sqrt_h = std::sqrt(h);
  const double fast = cfg.regime.ratio();

  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  rec.start(cfg, n);
  Vec x = cfg.x0;
  Vec dW(d);
  double log_density = 0.0;  // log dP_hat/dP
  for (std::size_t s = 0; s < n; ++s) {
    const Vec z = x / delta;
    const Mat sig = field.sigma(z);
    Vec drift = fast * field.b(z) + field.c(z);
    for (int i = 0; i < d; ++i) dW[i] = sqrt_h * normal(gen);
    if (tilt) {
      dW -= tilt->xi[s] * (h / sqrt_eps);
      log_density += brownian_log_density_step(tilt->xi[s], dW, h, eps);
    }
    Vec next = x - sqrt_eps * (sig * dW);
    const double t = h * static_cast<double>(s);
    for (std::size_t a = 0; a < nu.size(); ++a) {
      const Atom& atom = nu.atoms()[a];
      const Vec kv = field.k(z, atom.mark);
      drift -= atom.mass * kv;  // compensator
      const double intensity = tilt ? 1.0 + tilt->phi(s, a) : 1.0;
      std::poisson_distribution<long> count(intensity * atom.mass * h / eps);
      const long jumps = count(gen);
      if (jumps > 0) {
        const Vec inc = eps * kv;
        for (long j = 0; j < jumps; ++j) {
          next += inc;
          rec.jump(JumpEvent{t, s, a, atom.mark, inc});
        }
        if (tilt) log_density += static_cast<double>(jumps) * std::log1p(tilt->phi(s, a));
      }
    }
    if (tilt && !nu.empty()) log_density += jump_compensator_step(*tilt, nu, s, h, eps);
    next += drift * h;
    if (!next.allFinite()) throw SimulationError(s, "state blew up");
    const double t_next = s + 1 == n ? cfg.T : h * static_cast<double>(s + 1);
    rec.step(s, t_next, next, dW);
    x = std::move(next);
  }
  rec.finish(x);
  return tilt ? -log_density : 0.0;
}

inline void prepare(const CoefficientField& field, const LevyMeasure& nu, const SimConfig& cfg,
                    const Tilt* tilt) {
  cfg.validate(field.dimension());
  for (const auto& atom : nu.atoms())
    if (atom.mark.size() != field.dimension())
      throw InputError("Levy measure marks have the wrong dimension");
  if (tilt) {
    tilt->validate(nu.size());
    check_grid(*tilt, cfg.n_steps(), cfg.T);
    for (const auto& v : tilt->xi)
      if (v.size() != field.dimension()) throw InputError("tilt xi has the wrong dimension");
  }
  check_jump_budget(cfg, nu, tilt);
}

}  // namespace detail

/// Untilted path with cfg.seed as its stream seed.
inline Trajectory simulate(const CoefficientField& field, const LevyMeasure& nu, const SimConfig& cfg) {
  detail::prepare(field, nu, cfg, nullptr);
  detail::FullRecorder rec;
  detail::run_path(field, nu, cfg, nullptr, cfg.seed, rec);
  rec.traj.seed = cfg.seed;
  return std::move(rec.traj);
}

struct WeightedPath {
  Trajectory trajectory;
  double log_weight = 0.0;  ///< log dP/dP_hat; 0 without a tilt
};

/// Path i uses the stream derive_seed(cfg.seed, i); output order is by index.
inline std::vector<WeightedPath> simulate_batch(const CoefficientField& field, const LevyMeasure& nu,
                                                const SimConfig& cfg, std::size_t n_paths,
                                                const std::optional<Tilt>& tilt = std::nullopt,
                                                int threads = 1) {
  if (n_paths == 0) throw InputError("simulate_batch: n_paths must be positive");
  const Tilt* tp = tilt ? &*tilt : nullptr;
  detail::prepare(field, nu, cfg, tp);
  std::vector<WeightedPath> out(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.seed, i);
    detail::FullRecorder rec;
    out[i].log_weight = detail::run_path(field, nu, cfg, tp, seed, rec);
    rec.traj.seed = seed;
    out[i].trajectory = std::move(rec.traj);
  });
  return out;
}

struct TerminalSample {
  Vec state;
  double log_weight = 0.0;
};

/// Same streams as simulate_batch, keeping only X_T and the log-weight.
inline std::vector<TerminalSample> simulate_terminal_batch(const CoefficientField& field,
                                                           const LevyMeasure& nu, const SimConfig& cfg,
                                                           std::size_t n_paths,
                                                           const std::optional<Tilt>& tilt = std::nullopt,
                                                           int threads = 1) {
  if (n_paths == 0) throw InputError("simulate_terminal_batch: n_paths must be positive");
  const Tilt* tp = tilt ? &*tilt : nullptr;
  detail::prepare(field, nu, cfg, tp);
  std::vector<TerminalSample> out(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    detail::TerminalRecorder rec;
    out[i].log_weight = detail::run_path(field, nu, cfg, tp, derive_seed(cfg.seed, i), rec);
    out[i].state = std::move(rec.terminal);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// CSV: time, x1..xd, cumulative jump count; header row; '.' decimal point.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const auto d = traj.states.empty() ? 0 : traj.states.front().size();
  os << "time";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << (i + 1);
  os << ",jumps\n";
  os.precision(17);
  std::size_t cursor = 0, cumulative = 0;
  for (std::size_t n = 0; n < traj.states.size(); ++n) {
    // jumps sampled in step n-1 are applied by node n
    while (n > 0 && cursor < traj.jump_log.size() && traj.jump_log[cursor].step < n) {
      ++cumulative;
      ++cursor;
    }
    os << traj.times[n];
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << traj.states[n][i];
    os << ',' << cumulative << '\n';
  }
}

inline nlohmann::json batch_summary(const std::vector<WeightedPath>& batch) {
  nlohmann::json j;
  if (batch.empty()) return j;
  const auto d = batch.front().trajectory.terminal().size();
  Vec mean = Vec::Zero(d), sq = Vec::Zero(d);
  double w_sum = 0.0, w_sq = 0.0;
  std::size_t jumps = 0;
  for (const auto& p : batch) {
    mean += p.trajectory.terminal();
    sq += p.trajectory.terminal().cwiseProduct(p.trajectory.terminal());
    const double w = std::exp(p.log_weight);
    w_sum += w;
    w_sq += w * w;
    jumps += p.trajectory.jump_log.size();
  }
  const double n = static_cast<double>(batch.size());
  mean /= n;
  Vec var = sq / n - mean.cwiseProduct(mean);
  if (batch.size() > 1) var *= n / (n - 1.0);
  j["n_paths"] = batch.size();
  j["terminal_mean"] = std::vector<double>(mean.data(), mean.data() + d);
  j["terminal_variance"] = std::vector<double>(var.data(), var.data() + d);
  j["mean_jump_count"] = static_cast<double>(jumps) / n;
  j["weight_mean"] = w_sum / n;
  j["effective_sample_size"] = w_sq > 0.0 ? w_sum * w_sum / w_sq : 0.0;
  return j;
}

}  // namespace ldpms
