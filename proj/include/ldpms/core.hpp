#pragma once

// Shared vocabulary: linear-algebra aliases, the error hierarchy, deterministic
// seeding and a small ordered parallel-for.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ldpms {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors. Each family maps onto one CLI exit code (see cli/commands.hpp).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-range numeric argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed call: mismatched grids, duplicate sample points, empty inputs.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A standing model assumption failed a sampled check. `assumption()` names it.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(std::string assumption, const std::string& what)
      : Error(assumption + ": " + what), assumption_(std::move(assumption)), detail_(what) {}
  const std::string& assumption() const noexcept { return assumption_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string assumption_;
  std::string detail_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  SimulationError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class BoundDivergenceError : public Error {
 public:
  using Error::Error;
};

// Assumption names used in reports and AssumptionViolation.
inline constexpr const char* kEllipticity = "uniform_ellipticity";
inline constexpr const char* kLipschitzGrowth = "lipschitz_growth";
inline constexpr const char* kScaleSeparation = "scale_separation";

// ---------------------------------------------------------------------------
// Numerics helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + " is not finite");
}

/// x log x with the 0 log 0 = 0 convention.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// Pairwise (tree) summation; the order depends only on the input length.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

/// Wraps every coordinate into [0, 1).
inline Vec torus_reduce(const Vec& x) {
  Vec r(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double f = x[i] - std::floor(x[i]);
    if (f >= 1.0) f = 0.0;  // floor rounding for tiny negative x
    r[i] = f;
  }
  return r;
}

/// Regular grid over the unit torus with `per_axis` points per coordinate.
inline std::vector<Vec> torus_grid(int dimension, int per_axis) {
  if (dimension <= 0 || per_axis <= 0) throw InputError("torus_grid: empty grid");
  std::size_t total = 1;
  for (int i = 0; i < dimension; ++i) total *= static_cast<std::size_t>(per_axis);
  std::vector<Vec> grid;
  grid.reserve(total);
  std::vector<int> idx(dimension, 0);
  for (std::size_t n = 0; n < total; ++n) {
    Vec p(dimension);
    for (int i = 0; i < dimension; ++i) p[i] = static_cast<double>(idx[i]) / per_axis;
    grid.push_back(std::move(p));
    for (int i = 0; i < dimension; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// Seeding. Per-path streams are derived from (seed, index) by SplitMix64 so a
// batch is reproducible independently of scheduling.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

/// Thread count from an explicit request, then LDPMS_THREADS, then hardware.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LDPMS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(i) for i in [0, n) on `threads` workers using static striding.
/// Results must be written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ldpms
