// Acceptance checks, one line per criterion. Usage: acceptance [N ...]
// With no arguments every criterion runs. The exit status is nonzero if any
// selected criterion fails.

#include "ldpms/cli/commands.hpp"

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <sys/wait.h>

#ifndef LDPMS_CLI_PATH
#define LDPMS_CLI_PATH "ldpms"
#endif

using namespace ldpms;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

std::vector<Vec> grid9() {
  std::vector<Vec> out;
  for (double a : {-1.0, 0.0, 1.0})
    for (double b : {-1.0, 0.0, 1.0}) out.push_back(v2(a, b));
  return out;
}

cli::RunConfig suite(const std::string& name) {
  return cli::parse_config(nlohmann::json{{"model", {{"suite", name}, {"dimension", 2}}}});
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ldpms_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string("\"") + LDPMS_CLI_PATH + "\" " + args + " > /dev/null 2> \"" +
                          stderr_file.string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1. Gaussian rate closed form
Outcome criterion1() {
  Stopwatch sw;
  const auto field = gaussian_field(2);
  const std::vector<Vec> vs{v2(1, 0), v2(0.5, 0.5), v2(-1, 2), v2(0.3, -0.7), v2(2, 1)};
  double worst = 0.0;
  for (const auto& v : vs) {
    const double expect = 0.5 * v.squaredNorm();
    worst = std::max(worst, std::abs(estimate_J(field, LevyMeasure{}, v).J - expect) / expect);
  }
  const double t = sw.seconds();
  return {worst <= 1e-3 && t <= 60.0, fmt("max relative error %.2e over 5 velocities (tol 1e-3), %.2f s (limit 60 s)", worst, t)};
}

// 2. Midpoint convexity of J on a 9-point grid
Outcome criterion2() {
  bool pass = true;
  std::string detail;
  for (const std::string name : {"gaussian", "periodic_drift"}) {
    const auto rc = suite(name);
    std::vector<RateEstimate> est;
    for (const auto& v : grid9()) est.push_back(estimate_J(*rc.field, rc.nu, v));
    const auto r = convexity_check(est, 1e-4);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < est.size(); ++i)
      for (std::size_t j = i + 1; j < est.size(); ++j)
        for (std::size_t m = 0; m < est.size(); ++m)
          if ((est[m].velocity - 0.5 * (est[i].velocity + est[j].velocity)).norm() < 1e-12)
            worst = std::max(worst, est[m].J - 0.5 * (est[i].J + est[j].J));
    pass = pass && r.pass() && r.triples == 8;
    detail += fmt("%s: %zu triples, %zu violations, max excess %.2e; ", name.c_str(), r.triples,
                  r.violations.size(), worst);
  }
  detail += "tol 1e-4";
  return {pass, detail};
}

// 3. Girsanov martingale for a constant tilt
Outcome criterion3() {
  Stopwatch sw;
  const auto field = gaussian_field(2);
  SimConfig cfg;
  cfg.T = 1.0;
  cfg.x0 = Vec::Zero(2);
  cfg.regime = ScaleRegime(0.1, std::sqrt(0.1));
  const auto tilt = Tilt::constant(cfg.T, cfg.n_steps(), v2(0.5, -0.3), 0);
  const std::size_t n = 10000, chunk = 500;
  std::vector<double> w;
  w.reserve(n);
  for (std::size_t start = 0; start < n; start += chunk) {
    cfg.seed = start;
    for (const auto& p : simulate_batch(field, LevyMeasure{}, cfg, chunk))
      w.push_back(std::exp(log_density(tilt, p.trajectory, field, LevyMeasure{}, cfg.regime)));
  }
  const auto [mean, se] = oracle::mean_se(w);
  const double t = sw.seconds();
  return {std::abs(mean - 1.0) <= 3.0 * se && t <= 30.0,
          fmt("mean exp(log_density) = %.5f, SE %.5f, |mean - 1| / SE = %.2f (limit 3), n = 10000, %.2f s (limit 30 s)",
              mean, se, std::abs(mean - 1.0) / se, t)};
}

// 4. Importance sampling against naive Monte Carlo
Outcome criterion4() {
  const double eps = 0.1;
  const double a = 2.0537489 * std::sqrt(eps);  // P(X_1 >= a) = 0.02
  const auto field = gaussian_field(1);
  SimConfig cfg;
  cfg.T = 1.0;
  cfg.x0 = Vec::Zero(1);
  cfg.regime = ScaleRegime(eps, std::sqrt(eps));
  cfg.seed = 4;
  const auto A = EventSet::halfspace(Vec::Ones(1), a);
  const std::size_t n = 10000;
  const auto naive = estimate_probability(field, LevyMeasure{}, cfg, A, n);
  const auto is = estimate_probability(field, LevyMeasure{}, cfg, A, n, event_tilt(field, LevyMeasure{}, cfg, Vec::Constant(1, a)));
  const double joint = std::hypot(naive.standard_error, is.standard_error);
  const double z = std::abs(naive.p_hat - is.p_hat) / joint;
  return {z <= 3.0 && is.variance < naive.variance,
          fmt("naive %.5f (SE %.5f), IS %.5f (SE %.5f), difference %.2f joint SE (limit 3), variance ratio IS/naive %.3f",
              naive.p_hat, naive.standard_error, is.p_hat, is.standard_error, z, is.variance / naive.variance)};
}

// 5. eps log p against the rate infimum for a ball at distance 1
Outcome criterion5() {
  Stopwatch sw;
  const auto field = gaussian_field(2);
  const LevyMeasure nu;
  const auto A = EventSet::ball(v2(1.5, 0.0), 0.5);
  SweepOptions opts;
  opts.n_paths = 10000;
  opts.seed = 11;
  opts.threads = resolve_threads(0);
  const auto s = ldp_sweep(field, nu, RegimeLaw{1.0, 0.5}, A, Vec::Zero(2), 1.0, {0.2, 0.1, 0.05},
                           rate_function(field, nu), opts);
  const double t = sw.seconds();
  // exact P(|X_1 - (1.5, 0)| <= 0.5) for X_1 ~ N(0, eps I) by Simpson's rule over x1
  auto exact = [](double eps) {
    const double sd = std::sqrt(eps);
    const int m = 20000;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double x = 1.0 + static_cast<double>(i) / m;
      const double half = std::sqrt(std::max(0.0, 0.25 - (x - 1.5) * (x - 1.5)));
      const double f = std::exp(-0.5 * x * x / eps) / (sd * std::sqrt(2.0 * std::numbers::pi)) *
                       (1.0 - 2.0 * oracle::normal_tail(half / sd));
      acc += (i == 0 || i == m ? 1.0 : i % 2 ? 4.0 : 2.0) * f;
    }
    return acc / (3.0 * m);
  };
  std::string pts;
  for (const auto& p : s.points)
    pts += fmt("eps %.2f: %.4f (exact %.4f); ", p.epsilon, p.eps_log_p, p.epsilon * std::log(exact(p.epsilon)));
  return {s.pass && t <= 300.0,
          fmt("target %.4f; %sgap at eps 0.05 = %.1f%% (limit 15%%), %.1f s (limit 300 s)", s.target, pts.c_str(),
              100.0 * s.final_gap, t)};
}

// 6. Density bound value and dominance over a kernel density estimate
Outcome criterion6() {
  const auto field = gaussian_field(1);
  const auto b = density_upper_bound(field, LevyMeasure{}, 1.0);
  const double expect = std::sqrt(32.0 * std::numbers::pi);
  const double rel = std::abs(b.value - expect) / expect;

  // the unscaled process at t = 1
  SimConfig cfg;
  cfg.T = 1.0;
  cfg.dt = 0.01;
  cfg.x0 = Vec::Zero(1);
  cfg.regime = ScaleRegime(1.0, 1.0);
  cfg.seed = 6;
  const std::size_t n = 100000;
  const auto samples = simulate_terminal_batch(field, LevyMeasure{}, cfg, n);
  const double lo = -5.0, hi = 5.0, width = 0.1, bw = 0.05;
  const int bins = static_cast<int>((hi - lo) / width);
  std::vector<double> kde(bins, 0.0);
  const double norm = 1.0 / (static_cast<double>(n) * bw * std::sqrt(2.0 * std::numbers::pi));
  for (const auto& s : samples) {
    const double x = s.state[0];
    for (int i = 0; i < bins; ++i) {
      const double u = (lo + (i + 0.5) * width - x) / bw;
      if (std::abs(u) < 8.0) kde[i] += norm * std::exp(-0.5 * u * u);
    }
  }
  const double peak = *std::max_element(kde.begin(), kde.end());
  return {rel <= 0.01 && peak < b.value,
          fmt("bound %.6f vs sqrt(32 pi) = %.6f (relative error %.2e, tol 1e-2); KDE peak %.4f over %d bins, all below the bound",
              b.value, expect, rel, peak, bins)};
}

// 7. Entropy functional closed form and convexity
Outcome criterion7() {
  const LevyMeasure unit({{Vec::Ones(1), 1.0}});
  const double v = v2_energy_from_intensity(Mat::Constant(1, 1, std::exp(1.0)), unit, 1.0);
  const LevyMeasure nu({{Vec::Ones(1), 0.7}, {-Vec::Ones(1), 1.3}});
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 6.0);
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Mat a(8, 2), b(8, 2);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) = u(gen);
      b(i) = u(gen);
    }
    const double mid = v2_energy_from_intensity(0.5 * (a + b), nu, 1.0);
    const double avg = 0.5 * (v2_energy_from_intensity(a, nu, 1.0) + v2_energy_from_intensity(b, nu, 1.0));
    if (mid > avg + 1e-12) ++violations;
  }
  return {std::abs(v - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() && violations == 0,
          fmt("v2_energy at intensity e = %.17g (|v - 1| = %.1e); midpoint convexity violations: %d of 100", v,
              std::abs(v - 1.0), violations)};
}

// 8. Assumption gates through the command line
Outcome criterion8() {
  const auto dir = scratch("gates");
  const std::pair<std::string, std::string> cases[] = {
      {R"({"model":{"suite":"degenerate"}})", kEllipticity},
      {R"({"model":{"suite":"seam"}})", kLipschitzGrowth},
      {R"({"model":{"suite":"gaussian"},"regime":{"epsilon":[0.2,0.1,0.05],"delta_law":{"coefficient":1,"exponent":2}}})",
       kScaleSeparation},
  };
  bool pass = true;
  std::string detail;
  int i = 0;
  for (const auto& [body, name] : cases) {
    const auto cfg = dir / ("case" + std::to_string(i) + ".json");
    std::ofstream(cfg) << body;
    const auto err = dir / ("err" + std::to_string(i) + ".txt");
    const int code = run_cli("check --config \"" + cfg.string() + "\" --out \"" + (dir / "out").string() + "\"", err);
    const bool named = slurp(err).find(name) != std::string::npos;
    pass = pass && code == 3 && named;
    detail += fmt("%s: exit %d%s; ", name.c_str(), code, named ? ", named" : ", not named");
    ++i;
  }
  fs::remove_all(dir);
  return {pass, detail + "expected exit 3"};
}

// 9. Byte-identical reruns
Outcome criterion9() {
  const auto dir = scratch("determinism");
  const auto cfg = dir / "sim.json";
  std::ofstream(cfg) << R"({"model":{"suite":"jump_gaussian","dimension":2},
    "scheme":{"T":1,"dt":0.001,"seed":20240901},"regime":{"epsilon":[0.1]},"task":{"simulate":{"paths":16}}})";
  const auto err = dir / "err.txt";
  auto sim = [&](const fs::path& config, const std::string& out, int threads) {
    return run_cli("simulate --config \"" + config.string() + "\" --out \"" + (dir / out).string() +
                       "\" --threads " + std::to_string(threads),
                   err);
  };
  const int c1 = sim(cfg, "t1", 1), c8 = sim(cfg, "t8", 8), cm = sim(dir / "t1" / "manifest.json", "rerun", 8);
  std::size_t files = 0, mismatches = 0;
  for (const auto& e : fs::directory_iterator(dir / "t1")) {
    if (e.path().extension() != ".csv") continue;
    ++files;
    const auto a = slurp(e.path());
    const auto name = e.path().filename();
    if (a != slurp(dir / "t8" / name)) ++mismatches;
    if (a != slurp(dir / "rerun" / name)) ++mismatches;
  }
  fs::remove_all(dir);
  return {c1 == 0 && c8 == 0 && cm == 0 && files == 16 && mismatches == 0,
          fmt("exit codes %d/%d/%d; %zu trajectories compared across --threads 1, --threads 8 and the manifest rerun: %zu mismatches",
              c1, c8, cm, files, mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failures = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::printf("criterion %d: unknown\n", id);
      ++failures;
      continue;
    }
    Outcome o;
    try {
      o = criteria[id - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s: %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
