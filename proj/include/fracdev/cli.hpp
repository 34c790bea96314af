#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fracdev/entropy.hpp"
#include "fracdev/error.hpp"
#include "fracdev/fields.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/io.hpp"
#include "fracdev/smalldev.hpp"

namespace fracdev::cli {

inline constexpr const char* kVersion = "1.0.0";

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names = {"dimension", "gamma",        "words",
                                                 "sigma",     "delta",        "entropy",
                                                 "sample-field", "smalldev",  "verify",
                                                 "replay"};
  return names;
}

inline bool is_stochastic(const std::string& command) {
  return command == "sample-field" || command == "smalldev" || command == "verify";
}

struct RunConfig {
  std::string command;
  std::string system_path;
  std::optional<json> system;  // embedded system, takes precedence over system_path
  std::string measure = "system";
  int dim = 1;
  std::string kernel = "bm";
  double H = 0.5;
  std::string q = "2";
  int N = 0;  // 0: dimension of the system
  double s = 4.0;
  std::size_t cap = kDefaultWordCap;
  std::size_t n_max = 256;
  bool exact = false;
  std::size_t atoms = 2048;
  VerifyBudget budget;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 0;
};

inline double parse_q(const std::string& text) {
  if (text == "inf" || text == "infinity" || text == "Inf") return kInfinity;
  std::size_t used = 0;
  double q = 0.0;
  try {
    q = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ValidationError("--q: expected a number or inf, got '" + text + "'");
  if (!(q >= 1.0)) throw ValidationError("--q: must be >= 1 or inf");
  return q;
}

inline json to_json(const RunConfig& c) {
  json j = {{"command", c.command},
            {"system_path", c.system_path},
            {"measure", c.measure},
            {"dim", c.dim},
            {"kernel", c.kernel},
            {"H", c.H},
            {"q", c.q},
            {"N", c.N},
            {"s", c.s},
            {"cap", c.cap},
            {"n_max", c.n_max},
            {"exact", c.exact},
            {"atoms", c.atoms},
            {"budget", fracdev::to_json(c.budget)},
            {"out", c.out},
            {"threads", c.threads}};
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  return j;
}

inline RunConfig config_from_json(const json& j) {
  try {
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    c.system_path = j.value("system_path", "");
    c.measure = j.value("measure", "system");
    c.dim = j.value("dim", 1);
    c.kernel = j.value("kernel", "bm");
    c.H = j.value("H", 0.5);
    c.q = j.value("q", "2");
    c.N = j.value("N", 0);
    c.s = j.value("s", 4.0);
    c.cap = j.value("cap", kDefaultWordCap);
    c.n_max = j.value("n_max", std::size_t{256});
    c.exact = j.value("exact", false);
    c.atoms = j.value("atoms", std::size_t{2048});
    if (j.contains("budget")) {
      const auto& b = j["budget"];
      c.budget.sites = b.value("sites", c.budget.sites);
      c.budget.points_per_cell = b.value("points_per_cell", c.budget.points_per_cell);
      c.budget.reps = b.value("reps", c.budget.reps);
      c.budget.eps_lo = b.value("eps_lo", c.budget.eps_lo);
      c.budget.eps_hi = b.value("eps_hi", c.budget.eps_hi);
      c.budget.eps_count = b.value("eps_count", c.budget.eps_count);
      c.budget.tolerance = b.value("tolerance", c.budget.tolerance);
      c.budget.far_from_origin = b.value("far_from_origin", c.budget.far_from_origin);
      c.budget.fit_beta = b.value("fit_beta", c.budget.fit_beta);
    }
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
    c.out = j.value("out", "");
    c.threads = j.value("threads", 0U);
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

namespace detail {

inline std::string fmt(double x) { return format_double(x); }

inline SelfSimilarSystem resolve_system(const RunConfig& c) {
  if (c.system) return system_from_json(*c.system);
  if (c.system_path.empty()) throw ValidationError("--system is required for '" + c.command + "'");
  return load_system(c.system_path);
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write output file: " + path);
  out << content;
  if (!out) throw ValidationError("failed writing output file: " + path);
}

inline std::vector<std::size_t> power_grid(std::size_t base, std::size_t n_max) {
  std::vector<std::size_t> ns = {1};
  if (base < 2) return ns;
  for (std::size_t n = base; n <= n_max; n *= base) ns.push_back(n);
  return ns;
}

inline std::vector<std::size_t> doubling_grid(std::size_t n_max) {
  std::vector<std::size_t> ns;
  for (std::size_t n = 1; n <= n_max; n *= 2) ns.push_back(n);
  return ns;
}

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;  // suffix, content
  json system = nullptr;
};

inline VerifyTarget make_target(const RunConfig& c, std::optional<SelfSimilarSystem>& system) {
  if (c.measure == "lebesgue") {
    const int dim = system ? system->dim() : c.dim;
    return VerifyTarget::lebesgue(dim);
  }
  if (!system) system = resolve_system(c);
  if (c.measure == "hausdorff") return VerifyTarget::hausdorff(*system);
  if (c.measure == "system") return VerifyTarget::selfsimilar(*system);
  throw ValidationError("--measure: expected system, hausdorff or lebesgue, got '" + c.measure + "'");
}

inline Outputs execute(const RunConfig& c, std::ostream& out) {
  Outputs result;
  const auto& cmd = c.command;
  if (is_stochastic(cmd) && !c.seed) throw ValidationError("--seed is required for '" + cmd + "'");
  const double q = parse_q(c.q);

  std::optional<SelfSimilarSystem> system;
  if (cmd != "sample-field" && cmd != "smalldev" && cmd != "verify") system = resolve_system(c);
  if ((cmd == "sample-field" || cmd == "smalldev" || cmd == "verify") &&
      (c.system || !c.system_path.empty())) {
    system = resolve_system(c);
  }
  if (system) result.system = system_to_json(*system);

  if (cmd == "dimension") {
    const double d = similarity_dimension(*system);
    out << "D = " << fmt(d) << '\n';
    result.files.push_back({".report.json", json({{"dimension", d}}).dump(2) + "\n"});
    return result;
  }

  if (cmd == "gamma") {
    json report;
    if (std::isinf(q)) {
      const double g = mixed_exponent(*system, c.H, q);
      out << "gamma = " << fmt(g) << '\n' << "a = " << fmt(g) << '\n';
      report = {{"gamma", g}, {"a", g}, {"note", "sup norm: a = D/H"}};
    } else {
      const auto g = gamma_exponent(*system, c.H, q);
      out << "gamma = " << fmt(g.gamma) << '\n' << "a = " << fmt(g.rate) << '\n';
      report = {{"gamma", g.gamma}, {"a", g.rate}, {"residual", g.residual}};
    }
    result.files.push_back({".report.json", report.dump(2) + "\n"});
    return result;
  }

  if (cmd == "words") {
    const auto words = enumerate_level_words(*system, c.H, q, c.s, c.cap);
    std::ostringstream csv;
    csv << "word,scale,mass,weight\n";
    for (const auto& w : words) {
      csv << to_string(w) << ',' << fmt(w.scale) << ',' << fmt(w.mass) << ',' << fmt(w.weight) << '\n';
    }
    out << "count = " << words.size() << '\n';
    result.files.push_back({".words.csv", csv.str()});
    return result;
  }

  const int N = c.N > 0 ? c.N : (system ? system->dim() : c.dim);

  if (cmd == "sigma" || cmd == "delta") {
    const MixedParams params(c.H, q, N);
    EntropyCurve curve;
    if (cmd == "sigma" && c.exact) {
      const auto atoms = discretize(*system, c.atoms);
      const auto values = sigma_line_exact_curve(atoms, params, c.n_max);
      curve.kind = EntropyKind::sigma;
      curve.params = params;
      for (std::size_t n = 1; n <= values.size(); n *= 2) {
        curve.points.push_back({n, values[n - 1], BoundKind::exact});
      }
    } else if (cmd == "sigma") {
      curve = sigma_selfsimilar_curve(*system, params, power_grid(system->size(), c.n_max));
    } else {
      const auto ns = power_grid(system->size(), c.n_max);
      const auto deltas = delta_packing_curve(*system, params, ns, c.atoms);
      curve.kind = EntropyKind::delta;
      curve.params = params;
      for (std::size_t i = 0; i < ns.size(); ++i) {
        curve.points.push_back({ns[i], deltas[i].value.value, BoundKind::lower});
      }
    }
    std::ostringstream csv;
    write_csv(csv, curve);
    for (const auto& p : curve.points) out << p.n << ' ' << fmt(p.value) << '\n';
    result.files.push_back({".curve.csv", csv.str()});
    return result;
  }

  if (cmd == "entropy") {
    const auto points = support_points(discretize(*system, c.atoms));
    EntropyCurve inner;
    inner.kind = EntropyKind::inner_entropy;
    inner.params = MixedParams(c.H, kInfinity, N);
    EntropyCurve sup = inner;
    sup.kind = EntropyKind::sigma_infty;
    for (auto n : doubling_grid(std::min(c.n_max, points.size()))) {
      inner.points.push_back({n, inner_entropy(points, n), BoundKind::exact});
      const auto s = sigma_infty(points, c.H, n);
      sup.points.push_back({n, s.value, s.bound});
    }
    std::ostringstream csv;
    write_csv(csv, inner);
    std::ostringstream body;
    write_csv(body, sup);
    const auto text = body.str();
    csv << text.substr(text.find('\n') + 1);
    for (std::size_t i = 0; i < inner.points.size(); ++i) {
      out << inner.points[i].n << ' ' << fmt(inner.points[i].value) << ' '
          << fmt(sup.points[i].value) << '\n';
    }
    result.files.push_back({".curve.csv", csv.str()});
    return result;
  }

  const auto target = make_target(c, system);
  const Kernel kernel = Kernel::parse(c.kernel, target.dim);
  const unsigned threads = resolve_threads(c.threads);

  if (cmd == "sample-field") {
    const auto sites = verify_sites(target, kernel, q, c.budget, *c.seed);
    std::vector<Point> pts;
    for (const auto& s : sites.sites) pts.push_back(s.x);
    const auto batch = sample(kernel, pts, c.budget.reps, *c.seed, threads);
    std::ostringstream csv;
    write_samples_csv(csv, batch);
    std::ostringstream site_csv;
    site_csv << "site_index,mass";
    for (int k = 0; k < target.dim; ++k) site_csv << ",x" << k;
    site_csv << '\n';
    for (std::size_t i = 0; i < sites.sites.size(); ++i) {
      site_csv << i << ',' << fmt(sites.sites[i].mass);
      for (int k = 0; k < target.dim; ++k) site_csv << ',' << fmt(sites.sites[i].x[k]);
      site_csv << '\n';
    }
    out << "sites = " << pts.size() << "\nreps = " << c.budget.reps << '\n';
    result.files.push_back({".samples.csv", csv.str()});
    result.files.push_back({".sites.csv", site_csv.str()});
    return result;
  }

  if (cmd == "smalldev") {
    const auto sites = verify_sites(target, kernel, q, c.budget, *c.seed);
    const auto curve = estimate_curve(
        kernel, sites.sites, q,
        geometric_eps_grid(c.budget.eps_lo, c.budget.eps_hi, c.budget.eps_count), c.budget.reps,
        *c.seed, threads, sites.quadrature);
    json report = {{"curve", fracdev::to_json(curve)}, {"kernel", kernel.describe()}};
    try {
      const auto fit = fit_rate(curve, c.budget.fit_beta, c.budget.eps_lo, c.budget.eps_hi);
      report["fit"] = fracdev::to_json(fit);
      out << "a = " << fmt(fit.a) << " +- " << fmt(fit.stderr_a) << '\n';
    } catch (const ValidationError& e) {
      report["fit"] = nullptr;
      report["fit_error"] = e.what();
      out << "fit unavailable: " << e.what() << '\n';
    }
    std::ostringstream csv;
    write_curve_csv(csv, curve);
    result.files.push_back({".curve.csv", csv.str()});
    result.files.push_back({".report.json", report.dump(2) + "\n"});
    return result;
  }

  if (cmd == "verify") {
    const auto report = verify(target, kernel, q, c.budget, *c.seed, threads);
    out << "verdict = " << to_string(report.verdict) << '\n'
        << "a_fit = " << fmt(report.a_fit) << " +- " << fmt(report.stderr_a) << '\n'
        << "a_pred = " << fmt(report.a_pred) << '\n';
    std::ostringstream csv;
    write_curve_csv(csv, report.curve);
    result.files.push_back({".curve.csv", csv.str()});
    result.files.push_back({".report.json", fracdev::to_json(report).dump(2) + "\n"});
    return result;
  }

  throw ValidationError("unknown command '" + cmd + "'");
}

inline std::string valid_commands() {
  std::string s;
  for (const auto& c : commands()) s += (s.empty() ? "" : ", ") + c;
  return s;
}

}  // namespace detail

// Runs a configuration and writes its artifacts under c.out (when set).
inline void run_config(RunConfig c, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  auto outputs = detail::execute(c, out);
  if (c.out.empty()) return;
  const auto parent = std::filesystem::path(c.out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  json manifest = {{"artifact", "fracdev"}, {"version", kVersion}, {"config", to_json(c)}};
  manifest["system"] = outputs.system;
  json files = json::array();
  for (const auto& [suffix, content] : outputs.files) {
    detail::write_file(c.out + suffix, content);
    files.push_back(c.out + suffix);
  }
  files.push_back(c.out + ".manifest.json");
  manifest["outputs"] = files;
  manifest["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  detail::write_file(c.out + ".manifest.json", manifest.dump(2) + "\n");
}

// Re-runs the configuration recorded in a manifest, using its embedded system.
inline RunConfig config_from_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("manifest not found: " + path);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": invalid manifest: " + e.what());
  }
  if (!manifest.contains("config")) throw ValidationError(path + ": manifest has no config");
  auto c = config_from_json(manifest["config"]);
  if (manifest.contains("system") && !manifest["system"].is_null()) c.system = manifest["system"];
  return c;
}

// Command-line entry point; returns the process exit status.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  if (!args.empty()) {
    const auto& first = args.front();
    const bool known =
        std::find(commands().begin(), commands().end(), first) != commands().end();
    if (!known && !first.empty() && first[0] != '-') {
      err << "fracdev: unknown command '" << first << "'; valid commands: "
          << detail::valid_commands() << '\n';
      return 2;
    }
  }

  CLI::App app{"Fractal small-deviation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  RunConfig c;
  std::string seed_text;
  std::string manifest_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--system", c.system_path, "System file (.toml/.json) or built-in name");
    sub->add_option("--H", c.H, "Hoelder/Hurst exponent H");
    sub->add_option("--q", c.q, "Norm exponent q (number or inf)");
    sub->add_option("--N", c.N, "Ambient dimension (default: system dimension)");
    sub->add_option("--out", c.out, "Output path prefix");
    sub->add_option("--threads", c.threads, "Worker threads (0 = hardware)");
  };
  auto add_mc = [&](CLI::App* sub) {
    sub->add_option("--kernel", c.kernel, "Kernel: fbm:<H>, bm or sheet");
    sub->add_option("--measure", c.measure, "Measure: system, hausdorff or lebesgue");
    sub->add_option("--dim", c.dim, "Dimension for --measure lebesgue without --system");
    sub->add_option("--seed", seed_text, "Random seed (required)");
    sub->add_option("--sites", c.budget.sites, "Quadrature sites / minimum strata");
    sub->add_option("--points-per-cell", c.budget.points_per_cell, "Points per stratum");
    sub->add_option("--reps", c.budget.reps, "Monte Carlo replicates");
    sub->add_option("--eps-lo", c.budget.eps_lo, "Smallest eps");
    sub->add_option("--eps-hi", c.budget.eps_hi, "Largest eps");
    sub->add_option("--eps-count", c.budget.eps_count, "Number of eps grid points");
    sub->add_flag("--fit-beta", c.budget.fit_beta, "Fit the log-correction exponent");
    sub->add_flag("--far-from-origin", c.budget.far_from_origin,
                  "Translate the support so dist(0, T) >= diam(T)");
  };

  std::vector<CLI::App*> subs;
  static const std::map<std::string, std::string> blurbs = {
      {"dimension", "Similarity dimension of the system"},
      {"gamma", "Mixed exponent gamma and predicted rate a"},
      {"words", "Level-s word cover"},
      {"sigma", "Mixed partition entropy sigma_n"},
      {"delta", "Dyadic packing entropy delta_n"},
      {"entropy", "Inner entropy and sup-norm partition entropy of the support"},
      {"sample-field", "Sample a Gaussian field on measure sites"},
      {"smalldev", "Monte Carlo small-deviation curve and rate fit"},
      {"verify", "Compare the fitted rate with the predicted exponent"},
  };
  for (const auto& name : commands()) {
    const auto it = blurbs.find(name);
    subs.push_back(app.add_subcommand(name, it == blurbs.end() ? "" : it->second));
  }
  for (auto* sub : subs) {
    const auto& name = sub->get_name();
    if (name == "replay") {
      sub->description("Re-run a configuration from a manifest");
      sub->add_option("--manifest", manifest_path, "Manifest written by a previous run")->required();
      sub->add_option("--out", c.out, "Output prefix (default: the manifest's)");
      sub->add_option("--threads", c.threads, "Worker threads (0 = hardware)");
      continue;
    }
    add_common(sub);
    if (name == "words") {
      sub->add_option("--s", c.s, "Cover level s");
      sub->add_option("--cap", c.cap, "Maximum number of words");
    }
    if (name == "sigma" || name == "delta" || name == "entropy") {
      sub->add_option("--n-max", c.n_max, "Largest n");
      sub->add_option("--atoms", c.atoms, "Atoms in the discretized measure");
    }
    if (name == "sigma") sub->add_flag("--exact", c.exact, "Exact partition optimum (N = 1)");
    if (is_stochastic(name)) add_mc(sub);
    if (name == "verify") sub->add_option("--tolerance", c.budget.tolerance, "Relative tolerance");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.find("subcommand") != std::string::npos) msg += "; valid commands: " + detail::valid_commands();
    err << "fracdev: " << msg << '\n';
    return 2;
  }

  try {
    const auto* chosen = app.get_subcommands().front();
    c.command = chosen->get_name();
    if (c.command == "replay") {
      auto replayed = config_from_manifest(manifest_path);
      if (!c.out.empty()) replayed.out = c.out;
      if (chosen->count("--threads") > 0) replayed.threads = c.threads;
      c = std::move(replayed);
    } else if (!seed_text.empty()) {
      std::size_t used = 0;
      unsigned long long seed = 0;
      try {
        seed = std::stoull(seed_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != seed_text.size() || seed_text.front() == '-') {
        throw ValidationError("--seed: expected a non-negative integer, got '" + seed_text + "'");
      }
      c.seed = seed;
    }
    run_config(c, out);
    return 0;
  } catch (const ValidationError& e) {
    err << "fracdev: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "fracdev: internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace fracdev::cli
