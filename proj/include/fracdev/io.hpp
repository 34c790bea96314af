#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "fracdev/entropy.hpp"
#include "fracdev/error.hpp"
#include "fracdev/fields.hpp"
#include "fracdev/geometry.hpp"
#include "fracdev/ifs.hpp"
#include "fracdev/smalldev.hpp"

namespace fracdev {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// System files
//
//   dim = 1                        # optional, taken from omega
//   weights = "hausdorff"          # or a list summing to 1
//   [omega]                        # optional, unit cube by default
//   lo = [0.0]
//   hi = [1.0]
//   [[maps]]
//   scale = 0.3333333333333333
//   shift = [0.0]
//   rotation = "identity"          # or a row-major list / list of rows
//
// JSON files use the same keys.

namespace detail {

inline json toml_to_json(const toml::node& node) {
  if (auto* t = node.as_table()) {
    json out = json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (auto* a = node.as_array()) {
    json out = json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (auto* v = node.as_floating_point()) return v->get();
  if (auto* v = node.as_integer()) return v->get();
  if (auto* v = node.as_boolean()) return v->get();
  if (auto* v = node.as_string()) return v->get();
  throw ValidationError("system file: unsupported TOML value type");
}

inline Point json_point(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw ValidationError("system file: " + what + " must be a non-empty list");
  Point p(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("system file: " + what + " must contain numbers");
    p[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return p;
}

inline Matrix json_rotation(const json& j, int dim) {
  if (j.is_null() || (j.is_string() && j.get<std::string>() == "identity")) {
    return Matrix::Identity(dim, dim);
  }
  if (!j.is_array()) throw ValidationError("system file: rotation must be \"identity\" or a list");
  std::vector<double> flat;
  for (const auto& row : j) {
    if (row.is_array()) {
      for (const auto& v : row) flat.push_back(v.get<double>());
    } else {
      flat.push_back(row.get<double>());
    }
  }
  if (flat.size() != static_cast<std::size_t>(dim * dim)) {
    throw ValidationError("system file: rotation must have " + std::to_string(dim * dim) + " entries");
  }
  Matrix r(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int k = 0; k < dim; ++k) r(i, k) = flat[static_cast<std::size_t>(i * dim + k)];
  }
  return r;
}

}  // namespace detail

inline SelfSimilarSystem system_from_json(const json& j) {
  try {
    if (!j.is_object()) throw ValidationError("system file: top level must be a table");
    if (!j.contains("maps") || !j["maps"].is_array()) {
      throw ValidationError("system file: missing 'maps' list");
    }
    int dim = 0;
    if (j.contains("dim")) dim = j["dim"].get<int>();
    Box omega;
    if (j.contains("omega")) {
      omega = Box(detail::json_point(j["omega"].at("lo"), "omega.lo"),
                  detail::json_point(j["omega"].at("hi"), "omega.hi"));
      if (dim == 0) dim = omega.dim();
    } else {
      if (dim == 0 && !j["maps"].empty() && j["maps"][0].contains("shift")) {
        dim = static_cast<int>(j["maps"][0]["shift"].size());
      }
      if (dim < 1) throw ValidationError("system file: cannot determine dimension");
      omega = Box::unit(dim);
    }
    if (omega.dim() != dim) throw ValidationError("system file: omega dimension differs from dim");
    std::vector<Similarity> maps;
    for (const auto& m : j["maps"]) {
      const Point shift = detail::json_point(m.at("shift"), "shift");
      if (shift.size() != dim) throw ValidationError("system file: shift dimension differs from dim");
      maps.emplace_back(m.at("scale").get<double>(),
                        detail::json_rotation(m.contains("rotation") ? m["rotation"] : json(), dim),
                        shift);
    }
    const json weights = j.contains("weights") ? j["weights"] : json("hausdorff");
    if (weights.is_string()) {
      if (weights.get<std::string>() != "hausdorff") {
        throw ValidationError("system file: weights must be a list or \"hausdorff\"");
      }
      return SelfSimilarSystem::with_hausdorff_weights(std::move(maps), std::move(omega));
    }
    return SelfSimilarSystem(std::move(maps), weights.get<std::vector<double>>(), std::move(omega));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("system file: ") + e.what());
  }
}

inline json system_to_json(const SelfSimilarSystem& system) {
  json maps = json::array();
  for (const auto& m : system.maps()) {
    json rot = json::array();
    for (Eigen::Index i = 0; i < m.rotation().rows(); ++i) {
      for (Eigen::Index k = 0; k < m.rotation().cols(); ++k) rot.push_back(m.rotation()(i, k));
    }
    maps.push_back({{"scale", m.scale()},
                    {"rotation", rot},
                    {"shift", std::vector<double>(m.shift().data(), m.shift().data() + m.dim())}});
  }
  const auto& o = system.omega();
  return {{"dim", system.dim()},
          {"maps", maps},
          {"weights", system.weights()},
          {"omega",
           {{"lo", std::vector<double>(o.lo().data(), o.lo().data() + o.dim())},
            {"hi", std::vector<double>(o.hi().data(), o.hi().data() + o.dim())}}}};
}

inline SelfSimilarSystem parse_system(const std::string& text, bool toml_format) {
  if (!toml_format) {
    try {
      return system_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw ValidationError(std::string("system file: invalid JSON: ") + e.what());
    }
  }
  try {
    return system_from_json(detail::toml_to_json(toml::parse(text)));
  } catch (const toml::parse_error& e) {
    throw ValidationError(std::string("system file: invalid TOML: ") + std::string(e.description()));
  }
}

// Loads a .toml or .json file (format sniffed otherwise), or a built-in name.
inline SelfSimilarSystem load_system(const std::string& path_or_name) {
  namespace fs = std::filesystem;
  const fs::path path(path_or_name);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    if (auto b = builtin::by_name(path_or_name)) return *b;
    throw ValidationError("system file not found: " + path_or_name);
  }
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read system file: " + path_or_name);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto ext = path.extension().string();
  bool toml_format;
  if (ext == ".toml") {
    toml_format = true;
  } else if (ext == ".json") {
    toml_format = false;
  } else {
    const auto first = text.find_first_not_of(" \t\r\n");
    toml_format = first == std::string::npos || (text[first] != '{');
  }
  try {
    return parse_system(text, toml_format);
  } catch (const ValidationError& e) {
    throw ValidationError(path_or_name + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports and curves

inline json number_or_null(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline json to_json(const RateFit& fit) {
  json j = {{"a", fit.a},
            {"stderr_a", fit.stderr_a},
            {"c", fit.c},
            {"stderr_log_c", fit.stderr_log_c},
            {"beta", fit.beta},
            {"beta_fitted", fit.beta_fitted},
            {"window", {fit.eps_lo, fit.eps_hi}},
            {"points_used", fit.points_used}};
  if (fit.beta_fitted) j["stderr_beta"] = fit.stderr_beta;
  return j;
}

inline json to_json(const Prediction& p) {
  return {{"a", p.a},
          {"note", p.note},
          {"residual", p.residual},
          {"gamma", number_or_null(p.gamma)},
          {"dimension", number_or_null(p.dimension)}};
}

inline json to_json(const VerifyBudget& b) {
  return {{"sites", b.sites},
          {"points_per_cell", b.points_per_cell},
          {"reps", b.reps},
          {"eps_lo", b.eps_lo},
          {"eps_hi", b.eps_hi},
          {"eps_count", b.eps_count},
          {"tolerance", b.tolerance},
          {"far_from_origin", b.far_from_origin},
          {"fit_beta", b.fit_beta}};
}

inline json to_json(const SmallDevCurve& c) {
  json pts = json::array();
  for (const auto& p : c.points) {
    pts.push_back({{"eps", p.eps},
                   {"count", p.count},
                   {"p_hat", p.p_hat},
                   {"lo", p.lo},
                   {"hi", p.hi},
                   {"phi", p.phi ? json(*p.phi) : json(nullptr)},
                   {"flag", to_string(p.flag)}});
  }
  return {{"reps", c.reps},
          {"q", number_or_null(c.q)},
          {"seed", c.seed},
          {"jitter_used", c.jitter_used},
          {"quadrature",
           {{"sites", c.quadrature.sites},
            {"level", c.quadrature.level},
            {"description", c.quadrature.description}}},
          {"points", pts}};
}

inline json to_json(const VerifyReport& r) {
  return {{"verdict", to_string(r.verdict)},
          {"a_fit", r.a_fit},
          {"stderr_a", r.stderr_a},
          {"a_pred", r.a_pred},
          {"relative_error", r.relative_error},
          {"prediction", to_json(r.prediction)},
          {"fit", to_json(r.fit)},
          {"budget", to_json(r.budget)},
          {"seed", r.seed},
          {"kernel", r.kernel},
          {"q", number_or_null(r.q)},
          {"q_text", std::isinf(r.q) ? "inf" : format_double(r.q)},
          {"measure", to_string(r.measure)},
          {"offset", std::vector<double>(r.offset.data(), r.offset.data() + r.offset.size())},
          {"curve", to_json(r.curve)}};
}

inline void write_curve_csv(std::ostream& os, const SmallDevCurve& curve) {
  os << "eps,p_hat,lo,hi,phi,flag\n";
  for (const auto& p : curve.points) {
    os << format_double(p.eps) << ',' << format_double(p.p_hat) << ',' << format_double(p.lo) << ','
       << format_double(p.hi) << ',' << (p.phi ? format_double(*p.phi) : std::string()) << ','
       << to_string(p.flag) << '\n';
  }
}

}  // namespace fracdev
