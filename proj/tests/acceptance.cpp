// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fracdev.hpp"
#include "fracdev/cli.hpp"

using namespace fracdev;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  std::vector<std::string> info;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SelfSimilarSystem random_hausdorff_system(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(2, 6);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const int m = count(rng);
  std::vector<double> lengths(static_cast<std::size_t>(m));
  std::vector<double> gaps(static_cast<std::size_t>(m + 1));
  double total = 0.0;
  for (auto& l : lengths) total += (l = u(rng));
  for (auto& g : gaps) total += (g = 0.5 * u(rng));
  std::vector<Similarity> maps;
  double x = gaps[0] / total;
  for (int j = 0; j < m; ++j) {
    const double l = lengths[static_cast<std::size_t>(j)] / total;
    maps.push_back(Similarity::scaling(l, make_point({x})));
    x += l + gaps[static_cast<std::size_t>(j + 1)] / total;
  }
  return SelfSimilarSystem::with_hausdorff_weights(maps, Box::unit(1));
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  return fit_line(x, y).slope;
}

Outcome exponent_solvers() {
  Outcome o;
  const double d = similarity_dimension(builtin::cantor());
  const double d_err = std::abs(d - std::log(2.0) / std::log(3.0));
  const double g = gamma_exponent(builtin::cantor(), 0.5, 2.0).gamma;
  const double g_err = std::abs(g - 2.0 * std::log(2.0) / std::log(6.0));
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> uh(0.1, 1.0);
  std::uniform_real_distribution<double> uq(1.0, 8.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto sys = random_hausdorff_system(rng);
    const double H = uh(rng);
    const double q = uq(rng);
    const auto gr = gamma_exponent(sys, H, q);
    const double target = similarity_dimension(sys) / H;
    worst = std::max(worst, std::abs(gr.rate - target) / target);
  }
  o.pass = d_err <= 1e-9 && g_err <= 1e-9 && worst <= 1e-9;
  o.detail = fmt("|D-ln2/ln3|=%.2e |gamma-2ln2/ln6|=%.2e max rel |a-D/H| over 100 systems=%.2e",
                 d_err, g_err, worst);
  return o;
}

Outcome word_cover_growth() {
  Outcome o;
  o.pass = true;
  std::string detail;
  for (const auto& [name, sys] : {std::pair{"cantor", builtin::cantor()},
                                  std::pair{"sierpinski", builtin::sierpinski()}}) {
    const double g = mixed_exponent(sys, 0.5, 2.0);
    std::vector<double> s;
    std::vector<double> log_l;
    for (int k = 2; k <= 8; ++k) {
      s.push_back(k);
      log_l.push_back(std::log(static_cast<double>(enumerate_level_words(sys, 0.5, 2.0, k).size())));
    }
    const double b = slope(s, log_l);
    const double rel = std::abs(b - g) / g;
    o.pass = o.pass && rel <= 0.05;
    detail += fmt("%s slope=%.4f gamma=%.4f rel=%.3f; ", name, b, g, rel);

    std::vector<double> dense_s;
    std::vector<double> dense_l;
    double lo = kInfinity;
    double hi = 0.0;
    for (double t = 2.0; t <= 8.0 + 1e-9; t += 0.01) {
      const auto l = static_cast<double>(enumerate_level_words(sys, 0.5, 2.0, t).size());
      dense_s.push_back(t);
      dense_l.push_back(std::log(l));
      lo = std::min(lo, l / std::exp(g * t));
      hi = std::max(hi, l / std::exp(g * t));
    }
    o.info.push_back(fmt("%s: s in [2,8] step 0.01 slope=%.4f; l(s)/e^{gamma s} in [%.3f, %.3f]",
                         name, slope(dense_s, dense_l), lo, hi));
  }
  o.detail = detail;
  return o;
}

Outcome entropy_slopes() {
  Outcome o;
  const auto sys = builtin::cantor();
  const MixedParams p(0.5, 2.0, 1);
  const double g = mixed_exponent(sys, 0.5, 2.0);
  std::vector<std::size_t> ns;
  for (int k = 2; k <= 8; ++k) ns.push_back(std::size_t{1} << k);
  const auto sigma = sigma_selfsimilar_curve(sys, p, ns);
  const auto delta = delta_packing_curve(sys, p, ns);
  std::vector<double> logn;
  std::vector<double> logs;
  std::vector<double> logd;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    logn.push_back(std::log(static_cast<double>(ns[i])));
    logs.push_back(std::log(sigma.points[i].value));
    logd.push_back(std::log(delta[i].value.value));
  }
  const double s_slope = slope(logn, logs);
  const double d_slope = slope(logn, logd);
  const double s_target = -(1.0 / g - 1.0 / p.r());
  const double d_target = -1.0 / g;
  const double s_rel = std::abs(s_slope - s_target) / std::abs(s_target);
  const double d_rel = std::abs(d_slope - d_target) / std::abs(d_target);
  o.pass = s_rel <= 0.10 && d_rel <= 0.10;
  o.detail = fmt("sigma slope=%.4f target=%.4f rel=%.3f; delta slope=%.4f target=%.4f rel=%.3f",
                 s_slope, s_target, s_rel, d_slope, d_target, d_rel);
  return o;
}

Outcome relation_band() {
  Outcome o;
  const auto sys = builtin::cantor();
  const MixedParams p(0.5, 2.0, 1);
  const auto atoms = discretize(sys, 2048);
  const auto sigma = sigma_line_exact_curve(atoms, p, 1024);
  std::vector<std::size_t> ns;
  for (std::size_t n = 4; n <= 1024; n *= 2) ns.push_back(n);
  DeltaOptions options;
  options.domain = sys.omega();
  const auto delta = delta_packing_curve(atoms, p, ns, options);
  double lo = kInfinity;
  double hi = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double n = static_cast<double>(ns[i]);
    const double ratio = std::pow(n, 1.0 / p.r()) * delta[i].value.value / sigma[ns[i] - 1];
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  o.pass = lo >= 0.1 && hi <= 10.0;
  o.detail = fmt("%zu atoms, n=4..1024: ratio in [%.4f, %.4f]", atoms.size(), lo, hi);
  return o;
}

Outcome conditional_variance_checks() {
  Outcome o;
  const auto bm = Kernel::fbm(0.5, 1);
  std::mt19937_64 rng(515);
  std::uniform_real_distribution<double> ut(0.5, 4.0);
  double worst_markov = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double t = ut(rng);
    const double tau = std::uniform_real_distribution<double>(0.01, t - 0.05)(rng);
    std::vector<Point> cond = {make_point({t - tau})};
    for (double s = 0.02; s < t - tau; s += 0.05) cond.push_back(make_point({s}));
    worst_markov =
        std::max(worst_markov, std::abs(conditional_variance(bm, make_point({t}), cond) - tau));
  }
  double worst_inc = 0.0;
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> uh(0.05, 0.95);
  for (int k = 0; k < 200; ++k) {
    const auto f = Kernel::fbm(uh(rng), 2);
    const Point s = make_point({u(rng), u(rng)});
    const Point t = make_point({u(rng), u(rng)});
    const double var = f(s, s) + f(t, t) - 2.0 * f(s, t);
    worst_inc = std::max(worst_inc, std::abs(var - std::pow((t - s).norm(), 2.0 * f.hurst())));
  }
  o.pass = worst_markov <= 1e-8 && worst_inc <= 1e-12;
  o.detail = fmt("max |condvar - tau|=%.2e over 50 (t,tau); max increment error=%.2e", worst_markov,
                 worst_inc);
  return o;
}

std::string describe(const VerifyReport& r) {
  return fmt("a_fit=%.4f+-%.4f a_pred=%.4f rel=%.3f verdict=%s points=%zu window=[%.2f,%.2f]",
             r.a_fit, r.stderr_a, r.a_pred, r.relative_error, to_string(r.verdict),
             r.fit.points_used, r.fit.eps_lo, r.fit.eps_hi);
}

Outcome mc_lebesgue(unsigned threads) {
  Outcome o;
  VerifyBudget budget;  // 256 sites, 2e5 reps, eps in [0.25, 0.9]
  const auto r = verify(VerifyTarget::lebesgue(1), Kernel::fbm(0.5, 1), 2.0, budget, 1, threads);
  o.pass = r.a_fit >= 1.6 && r.a_fit <= 2.4;
  o.detail = describe(r);
  return o;
}

// The Cantor Hausdorff measure moved to [1, 2], so that diam(T) <= dist(0, T).
Outcome mc_cantor(double q, double eps_lo, unsigned threads) {
  Outcome o;
  const auto target = VerifyTarget::hausdorff(builtin::cantor());
  const auto kernel = Kernel::fbm(0.5, 1);
  VerifyBudget budget;
  budget.sites = 243;
  budget.eps_lo = eps_lo;
  budget.far_from_origin = true;
  const auto r = verify(target, kernel, q, budget, 1, threads);
  o.pass = r.relative_error <= 0.25;
  o.detail = fmt("%zu sites at level s=%.3f, T in [1,2]: ", r.curve.quadrature.sites,
                 r.curve.quadrature.level) +
             describe(r);

  VerifyBudget as_given;
  as_given.sites = 243;
  try {
    const auto g = verify(target, kernel, q, as_given, 1, threads);
    o.info.push_back("support as given on [0,1], eps in [0.25,0.9]: " + describe(g));
  } catch (const std::exception& e) {
    o.info.push_back(std::string("support as given on [0,1]: ") + e.what());
  }
  return o;
}

Outcome sandwich_and_band() {
  Outcome o;
  std::size_t violations = 0;
  std::size_t checks = 0;
  for (const auto& name : builtin::names()) {
    const auto sys = load_system(std::string(FRACDEV_SOURCE_DIR) + "/configs/" + name + ".toml");
    const auto cloud = support_points(discretize(sys, 1024));
    for (double eps : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4}) {
      const auto n = covering_number(cloud, eps);
      const auto m = packing_number(cloud, eps);
      const auto n2 = covering_number(cloud, eps / 2.0);
      ++checks;
      if (!(n <= m && m <= n2)) ++violations;
    }
  }
  double lo = kInfinity;
  double hi = 0.0;
  double klo = kInfinity;
  double khi = 0.0;
  for (int N : {1, 2}) {
    std::vector<Point> cloud;
    const int side = N == 1 ? 1025 : 41;
    for (int i = 0; i < side; ++i) {
      if (N == 1) {
        cloud.push_back(make_point({i / double(side - 1)}));
        continue;
      }
      for (int j = 0; j < side; ++j) cloud.push_back(make_point({i / double(side - 1), j / double(side - 1)}));
    }
    const double H = 0.5;
    const auto kappa = static_cast<std::size_t>((1 << N) + 1);
    for (std::size_t n = 2; n <= 64; n *= 2) {
      const double s = sigma_infty(cloud, H, n).value;
      const double scale = std::pow(static_cast<double>(n), H / N);
      const double ratio = scale * std::pow(inner_entropy(cloud, n), H) / s;
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      const double kr = scale * std::pow(inner_entropy(cloud, kappa * n), H) / s;
      klo = std::min(klo, kr);
      khi = std::max(khi, kr);
    }
  }
  o.pass = violations == 0 && lo >= 0.1 && hi <= 10.0;
  o.detail = fmt("sandwich violations %zu/%zu; n^{H/N} delta_n^H / sigma in [%.3f, %.3f]", violations,
                 checks, lo, hi);
  o.info.push_back(fmt("with delta_{kappa n}, kappa = 2^N + 1: ratio in [%.3f, %.3f]", klo, khi));
  return o;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Outcome reproducibility() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / "fracdev_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto a = (dir / "run").string();
  const auto b = (dir / "replay").string();
  const auto c = (dir / "replay_many").string();
  std::ostringstream sink;
  const int r1 = cli::run({"verify", "--system", std::string(FRACDEV_SOURCE_DIR) + "/configs/cantor.toml",
                           "--kernel", "fbm:0.5", "--q", "2", "--seed", "7", "--reps", "30000",
                           "--threads", "1", "--out", a},
                          sink, sink);
  const int r2 = cli::run({"replay", "--manifest", a + ".manifest.json", "--out", b, "--threads", "1"},
                          sink, sink);
  const int r3 = cli::run({"replay", "--manifest", a + ".manifest.json", "--out", c, "--threads", "8"},
                          sink, sink);
  bool same = r1 == 0 && r2 == 0 && r3 == 0;
  for (const char* suffix : {".report.json", ".curve.csv"}) {
    const auto x = slurp(a + suffix);
    same = same && !x.empty() && x == slurp(b + suffix) && x == slurp(c + suffix);
  }
  o.pass = same;
  o.detail = fmt("exit codes %d/%d/%d; report and curve bytes %s across threads 1 and 8", r1, r2, r3,
                 same ? "identical" : "DIFFER");
  std::filesystem::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  const unsigned threads = resolve_threads(0);
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "exponent solvers", 1.0, exponent_solvers},
      {2, "word-cover growth", 10.0, word_cover_growth},
      {3, "mixed-entropy slopes", 30.0, entropy_slopes},
      {4, "N=1 relation band", 60.0, relation_band},
      {5, "conditional variance", 5.0, conditional_variance_checks},
      {6, "MC rate, Lebesgue", 300.0, [&] { return mc_lebesgue(threads); }},
      {7, "MC rate, Cantor q=2", 600.0, [&] { return mc_cantor(2.0, 0.1, threads); }},
      {8, "MC rate, Cantor q=inf", 600.0, [&] { return mc_cantor(kInfinity, 0.25, threads); }},
      {9, "entropy sandwich", 30.0, sandwich_and_band},
      {10, "reproducibility", 0.0, reproducibility},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.limit_seconds <= 0.0 || secs <= c.limit_seconds;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] %2d %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs, in_time ? "" : ", over time limit");
    for (const auto& line : o.info) std::printf("       info: %s\n", line.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
