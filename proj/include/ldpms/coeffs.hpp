#pragma once

// Periodic coefficient fields, the finite-atom Levy measure, the two-scale
// regime, and sampled checks of the standing assumptions.

#include "ldpms/core.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <utility>
#include <variant>

namespace ldpms {

using VectorMap = std::function<Vec(const Vec&)>;
using MatrixMap = std::function<Mat(const Vec&)>;
using KernelMap = std::function<Vec(const Vec&, const Vec&)>;

enum class FieldSelector { sigma, b_drift, c_drift, jump_kernel };

using FieldValue = std::variant<Vec, Mat>;

/// The coefficients sigma, b, c and k. All maps are treated as 1-periodic in
/// every coordinate of the state: arguments are wrapped onto the unit torus
/// before the user map is called, so periodicity holds exactly.
class CoefficientField {
 public:
  CoefficientField(int dimension, MatrixMap sigma, VectorMap b_drift, VectorMap c_drift,
                   KernelMap jump_kernel)
      : dimension_(dimension),
        sigma_(std::move(sigma)),
        b_(std::move(b_drift)),
        c_(std::move(c_drift)),
        k_(std::move(jump_kernel)) {
    if (dimension_ <= 0) throw InputError("CoefficientField: dimension must be positive");
    if (!sigma_ || !b_ || !c_ || !k_) throw InputError("CoefficientField: missing map");
  }

  int dimension() const noexcept { return dimension_; }

  Mat sigma(const Vec& x) const { return sigma_(reduce(x)); }
  Vec b(const Vec& x) const { return b_(reduce(x)); }
  Vec c(const Vec& x) const { return c_(reduce(x)); }
  Vec k(const Vec& x, const Vec& y) const {
    require_finite(y, "mark");
    return k_(reduce(x), y);
  }
  /// a = sigma sigma^T
  Mat a(const Vec& x) const {
    const Mat s = sigma(x);
    return s * s.transpose();
  }

 private:
  Vec reduce(const Vec& x) const {
    if (x.size() != dimension_) throw InputError("state has wrong dimension");
    require_finite(x, "state");
    return torus_reduce(x);
  }

  int dimension_;
  MatrixMap sigma_;
  VectorMap b_;
  VectorMap c_;
  KernelMap k_;
};

inline FieldValue eval_field(const CoefficientField& field, FieldSelector which, const Vec& x,
                             const std::optional<Vec>& y = std::nullopt) {
  const bool is_kernel = which == FieldSelector::jump_kernel;
  if (is_kernel != y.has_value())
    throw InputError("eval_field: a mark is required for the jump kernel and only for it");
  switch (which) {
    case FieldSelector::sigma: return field.sigma(x);
    case FieldSelector::b_drift: return field.b(x);
    case FieldSelector::c_drift: return field.c(x);
    case FieldSelector::jump_kernel: return field.k(x, *y);
  }
  throw InputError("eval_field: unknown selector");
}

// ---------------------------------------------------------------------------
// Levy measure
// ---------------------------------------------------------------------------

struct Atom {
  Vec mark;
  double mass = 0.0;
};

class LevyMeasure {
 public:
  LevyMeasure() = default;
  explicit LevyMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    for (const auto& atom : atoms_) {
      if (!atom.mark.allFinite()) throw DomainError("LevyMeasure: non-finite mark");
      if (atom.mark.norm() == 0.0) throw DomainError("LevyMeasure: atom at the origin");
      if (!(atom.mass > 0.0) || !std::isfinite(atom.mass))
        throw DomainError("LevyMeasure: atom mass must be positive and finite");
      if (atom.mark.size() != atoms_.front().mark.size())
        throw InputError("LevyMeasure: marks of different dimensions");
    }
    if (!std::isfinite(integrability()))
      throw DomainError("LevyMeasure: integrability sum is not finite");
  }

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  bool empty() const noexcept { return atoms_.empty(); }

  double total_mass() const {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.mass;
    return m;
  }

  /// sum of w * min(1, |y|^2)
  double integrability() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += a.mass * std::min(1.0, a.mark.squaredNorm());
    return s;
  }

 private:
  std::vector<Atom> atoms_;
};

/// Total mass and mean jump kbar(x) = sum_atoms w k(x, y).
inline std::pair<double, Vec> nu_total_and_mean_jump(const LevyMeasure& nu,
                                                     const CoefficientField& field, const Vec& x) {
  Vec kbar = Vec::Zero(field.dimension());
  for (const auto& atom : nu.atoms()) kbar += atom.mass * field.k(x, atom.mark);
  return {nu.total_mass(), kbar};
}

inline Vec mean_jump(const LevyMeasure& nu, const CoefficientField& field, const Vec& x) {
  return nu_total_and_mean_jump(nu, field, x).second;
}

// ---------------------------------------------------------------------------
// Scale regime
// ---------------------------------------------------------------------------

/// delta(eps) = coefficient * eps^exponent
struct RegimeLaw {
  double coefficient = 1.0;
  double exponent = 0.5;

  double delta(double epsilon) const { return coefficient * std::pow(epsilon, exponent); }
};

struct ScaleRegime {
  double epsilon = 1.0;
  double delta = 1.0;
  RegimeLaw law{};

  ScaleRegime() = default;
  ScaleRegime(double eps, double del, RegimeLaw l = {}) : epsilon(eps), delta(del), law(l) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be positive");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("delta must be positive");
  }

  static ScaleRegime from_law(double eps, RegimeLaw law) { return {eps, law.delta(eps), law}; }

  double ratio() const { return epsilon / delta; }
};

struct ScaleSeparationReport {
  std::vector<double> epsilons;
  std::vector<double> delta_over_eps;
  bool pass = false;
};

/// delta/eps must be strictly increasing as eps decreases along the sweep.
inline ScaleSeparationReport check_scale_separation(const RegimeLaw& law,
                                                    std::vector<double> epsilons) {
  if (epsilons.empty()) throw InputError("check_scale_separation: empty sweep");
  std::sort(epsilons.begin(), epsilons.end(), std::greater<>());
  ScaleSeparationReport r;
  r.epsilons = epsilons;
  r.pass = true;
  for (double e : epsilons) {
    if (!(e > 0.0)) throw DomainError("check_scale_separation: epsilon must be positive");
    r.delta_over_eps.push_back(law.delta(e) / e);
  }
  for (std::size_t i = 1; i < r.delta_over_eps.size(); ++i)
    if (!(r.delta_over_eps[i] > r.delta_over_eps[i - 1])) r.pass = false;
  return r;
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

inline constexpr double kDefaultEllipticityFloor = 1e-8;
inline constexpr int kDefaultSamplesPerAxis = 32;

/// Sampled kappa = min over the grid of lambda_min(sigma sigma^T).
inline double ellipticity_kappa(const CoefficientField& field, const std::vector<Vec>& grid,
                                double floor = kDefaultEllipticityFloor) {
  if (grid.empty()) throw InputError("ellipticity_kappa: empty grid");
  double kappa = std::numeric_limits<double>::infinity();
  const Vec* worst = nullptr;
  for (const auto& x : grid) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(field.a(x), Eigen::EigenvaluesOnly);
    const double lam = eig.eigenvalues().minCoeff();
    if (lam < kappa) {
      kappa = lam;
      worst = &x;
    }
  }
  if (!(kappa > floor)) {
    std::ostringstream os;
    os << "lambda_min(sigma sigma^T) = " << kappa << " <= floor " << floor << " at x = ("
       << worst->transpose() << ")";
    throw AssumptionViolation(kEllipticity, os.str());
  }
  return kappa;
}

struct H2Report {
  double C1_hat = 0.0;
  double C2_hat = 0.0;
  bool lipschitz_divergent = false;
  bool pass = false;
  /// Lipschitz estimate per decade of pair distance (key = round(log10 dist)).
  std::map<int, double> C1_by_scale;
};

using PointPair = std::pair<Vec, Vec>;

/// Sampled Lipschitz and linear-growth constants. A Lipschitz estimate that
/// keeps growing like 1/distance across decades of pair distance is reported
/// as divergent (C1_hat = inf).
inline H2Report verify_h2(const CoefficientField& field, const LevyMeasure& nu,
                          const std::vector<PointPair>& pairs) {
  const int d = field.dimension();
  H2Report r;

  auto zetas = [&](const Vec& x) {
    std::vector<Vec> out;
    const Mat s = field.sigma(x);
    for (int i = 0; i < d; ++i) out.emplace_back(s.col(i));
    out.push_back(field.b(x));
    out.push_back(field.c(x));
    return out;
  };
  auto kernel_values = [&](const Vec& x) {
    std::vector<Vec> out;
    for (const auto& atom : nu.atoms()) out.push_back(field.k(x, atom.mark));
    return out;
  };
  auto growth = [&](const Vec& x, const std::vector<Vec>& z, const std::vector<Vec>& kv) {
    double jump = 0.0;
    for (std::size_t a = 0; a < kv.size(); ++a) jump += nu.atoms()[a].mass * kv[a].squaredNorm();
    double worst = 0.0;
    for (const auto& v : z) worst = std::max(worst, v.squaredNorm() + jump);
    return worst / (1.0 + x.squaredNorm());
  };

  for (const auto& [x, xp] : pairs) {
    const double dist = (xp - x).norm();
    if (!(dist > 0.0)) throw InputError("verify_h2: sample pair with identical points");
    const auto z = zetas(x), zp = zetas(xp);
    const auto kv = kernel_values(x), kvp = kernel_values(xp);
    double jump = 0.0;
    for (std::size_t a = 0; a < kv.size(); ++a) jump += nu.atoms()[a].mass * (kvp[a] - kv[a]).norm();
    double ratio = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
      ratio = std::max(ratio, ((zp[i] - z[i]).norm() + jump) / dist);
    r.C1_hat = std::max(r.C1_hat, ratio);
    const int decade = static_cast<int>(std::lround(std::log10(dist)));
    auto [it, inserted] = r.C1_by_scale.try_emplace(decade, ratio);
    if (!inserted) it->second = std::max(it->second, ratio);
    r.C2_hat = std::max({r.C2_hat, growth(x, z, kv), growth(xp, zp, kvp)});
  }

  if (r.C1_by_scale.size() >= 2) {
    const auto& [fine_decade, fine] = *r.C1_by_scale.begin();
    const auto& [coarse_decade, coarse] = *r.C1_by_scale.rbegin();
    const double span = std::pow(10.0, coarse_decade - fine_decade);
    if (span >= 100.0 && fine > 0.0 && fine > 0.1 * span * coarse) r.lipschitz_divergent = true;
  }
  if (r.lipschitz_divergent) r.C1_hat = std::numeric_limits<double>::infinity();
  r.pass = std::isfinite(r.C1_hat) && std::isfinite(r.C2_hat);
  return r;
}

/// Axis-aligned pairs at several distance scales from a torus grid, including
/// pairs that straddle the seam x_i = 1 at every scale.
inline std::vector<PointPair> standard_h2_pairs(int dimension,
                                                int per_axis = kDefaultSamplesPerAxis,
                                                const std::vector<double>& scales = {1e-1, 1e-3,
                                                                                     1e-5}) {
  int n = per_axis;
  while (n > 2 && std::pow(static_cast<double>(n), dimension) > 4096.0) --n;
  const auto grid = torus_grid(dimension, n);
  std::vector<PointPair> pairs;
  pairs.reserve(grid.size() * dimension * scales.size() * 2);
  for (const auto& p : grid) {
    for (int i = 0; i < dimension; ++i) {
      for (double h : scales) {
        Vec e = Vec::Zero(dimension);
        e[i] = h;
        pairs.emplace_back(p, p + e);
        Vec seam = p;
        seam[i] = 1.0 - 0.5 * h;
        pairs.emplace_back(seam, seam + e);
      }
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Built-in fields
// ---------------------------------------------------------------------------

namespace fields {

inline VectorMap constant_vector(Vec v) {
  return [v = std::move(v)](const Vec&) { return v; };
}
inline MatrixMap constant_matrix(Mat m) {
  return [m = std::move(m)](const Vec&) { return m; };
}
inline VectorMap zero_vector(int d) { return constant_vector(Vec::Zero(d)); }
inline MatrixMap identity(int d) { return constant_matrix(Mat::Identity(d, d)); }

/// One harmonic: amplitude * sin(2 pi <frequency, x> + phase).
struct TrigTerm {
  Mat amplitude;  // d x 1 for vector fields, d x d for matrix fields
  std::vector<int> frequency;
  double phase = 0.0;
};

inline double harmonic(const TrigTerm& t, const Vec& x) {
  double arg = t.phase;
  for (std::size_t i = 0; i < t.frequency.size() && static_cast<Eigen::Index>(i) < x.size(); ++i)
    arg += 2.0 * std::numbers::pi * t.frequency[i] * x[i];
  return std::sin(arg);
}

inline MatrixMap trig_matrix(Mat offset, std::vector<TrigTerm> terms) {
  for (const auto& t : terms)
    if (t.amplitude.rows() != offset.rows() || t.amplitude.cols() != offset.cols())
      throw InputError("trig field: amplitude shape does not match offset");
  return [offset = std::move(offset), terms = std::move(terms)](const Vec& x) {
    Mat out = offset;
    for (const auto& t : terms) out += t.amplitude * harmonic(t, x);
    return out;
  };
}

inline VectorMap trig_vector(Vec offset, std::vector<TrigTerm> terms) {
  auto m = trig_matrix(Mat(offset), std::move(terms));
  return [m = std::move(m)](const Vec& x) -> Vec { return m(x).col(0); };
}

/// amplitude * frac(x_axis): Lipschitz inside the cell, discontinuous at the seam.
inline VectorMap sawtooth_vector(Vec amplitude, int axis) {
  return [amplitude = std::move(amplitude), axis](const Vec& x) -> Vec {
    return amplitude * (x[axis] - std::floor(x[axis]));
  };
}

/// Values on an n^d node grid over [0,1)^d with periodic multilinear interpolation.
class TabulatedField {
 public:
  TabulatedField(int dimension, int per_axis, int components, std::vector<double> values)
      : d_(dimension), n_(per_axis), m_(components), values_(std::move(values)) {
    std::size_t nodes = 1;
    for (int i = 0; i < d_; ++i) nodes *= static_cast<std::size_t>(n_);
    if (d_ <= 0 || n_ <= 0 || m_ <= 0 || values_.size() != nodes * m_)
      throw InputError("TabulatedField: value table does not match grid");
  }

  int components() const noexcept { return m_; }

  Vec operator()(const Vec& x) const {
    Vec out = Vec::Zero(m_);
    const int corners = 1 << d_;
    std::vector<int> lo(d_);
    std::vector<double> frac(d_);
    for (int i = 0; i < d_; ++i) {
      const double s = (x[i] - std::floor(x[i])) * n_;
      const int base = static_cast<int>(std::floor(s));
      lo[i] = base % n_;
      frac[i] = s - base;
    }
    for (int corner = 0; corner < corners; ++corner) {
      double weight = 1.0;
      std::size_t offset = 0, stride = 1;
      for (int i = 0; i < d_; ++i) {
        const bool up = (corner >> i) & 1;
        weight *= up ? frac[i] : 1.0 - frac[i];
        offset += static_cast<std::size_t>((lo[i] + (up ? 1 : 0)) % n_) * stride;
        stride *= static_cast<std::size_t>(n_);
      }
      if (weight == 0.0) continue;
      for (int c = 0; c < m_; ++c) out[c] += weight * values_[offset * m_ + c];
    }
    return out;
  }

  /// CSV: one row per grid node, `dimension` coordinates then the values.
  /// Nodes must sit on the uniform grid {0, 1/n, ..., (n-1)/n}^d.
  static TabulatedField load_csv(const std::string& path, int dimension) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open table " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      bool numeric = true;
      while (std::getline(ss, cell, ',')) {
        try {
          std::size_t used = 0;
          row.push_back(std::stod(cell, &used));
        } catch (const std::exception&) {
          numeric = false;
          break;
        }
      }
      if (!numeric) {
        if (rows.empty()) continue;  // header row
        throw InputError(path + ":" + std::to_string(lineno) + ": non-numeric cell");
      }
      if (static_cast<int>(row.size()) <= dimension)
        throw InputError(path + ":" + std::to_string(lineno) + ": too few columns");
      if (!rows.empty() && row.size() != rows.front().size())
        throw InputError(path + ":" + std::to_string(lineno) + ": ragged row");
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError(path + ": empty table");
    const int n = static_cast<int>(std::lround(std::pow(static_cast<double>(rows.size()),
                                                        1.0 / dimension)));
    std::size_t nodes = 1;
    for (int i = 0; i < dimension; ++i) nodes *= static_cast<std::size_t>(n);
    if (nodes != rows.size()) throw InputError(path + ": row count is not n^d");
    const int m = static_cast<int>(rows.front().size()) - dimension;
    std::vector<double> values(nodes * m, 0.0);
    std::vector<bool> seen(nodes, false);
    for (const auto& row : rows) {
      std::size_t offset = 0, stride = 1;
      for (int i = 0; i < dimension; ++i) {
        const double s = row[i] * n;
        const long idx = std::lround(s);
        if (std::abs(s - idx) > 1e-6 || idx < 0 || idx >= n)
          throw InputError(path + ": coordinate off the uniform grid");
        offset += static_cast<std::size_t>(idx) * stride;
        stride *= static_cast<std::size_t>(n);
      }
      if (seen[offset]) throw InputError(path + ": duplicate grid node");
      seen[offset] = true;
      for (int c = 0; c < m; ++c) values[offset * m + c] = row[dimension + c];
    }
    return TabulatedField(dimension, n, m, std::move(values));
  }

 private:
  int d_, n_, m_;
  std::vector<double> values_;
};

inline VectorMap tabulated_vector(TabulatedField table) {
  return [t = std::move(table)](const Vec& x) { return t(x); };
}

/// Matrix entries are read row-major from the d*d value columns.
inline MatrixMap tabulated_matrix(TabulatedField table, int d) {
  if (table.components() != d * d) throw InputError("tabulated sigma needs d*d value columns");
  return [t = std::move(table), d](const Vec& x) -> Mat {
    const Vec v = t(x);
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) m(i, j) = v[i * d + j];
    return m;
  };
}

inline KernelMap zero_kernel(int d) {
  return [d](const Vec&, const Vec&) -> Vec { return Vec::Zero(d); };
}

/// k(x, y) = scale * y
inline KernelMap linear_mark(double scale) {
  return [scale](const Vec&, const Vec& y) -> Vec { return scale * y; };
}

/// k(x, y) = g(x) * y with a scalar periodic modulation g
inline KernelMap modulated_mark(std::function<double(const Vec&)> g) {
  return [g = std::move(g)](const Vec& x, const Vec& y) -> Vec { return g(x) * y; };
}

}  // namespace fields

/// Convenience constructor for the constant-coefficient Gaussian model
/// sigma = s I, b = c = k = 0.
inline CoefficientField gaussian_field(int d, double scale = 1.0) {
  return CoefficientField(d, fields::constant_matrix(scale * Mat::Identity(d, d)),
                          fields::zero_vector(d), fields::zero_vector(d), fields::zero_kernel(d));
}

}  // namespace ldpms
