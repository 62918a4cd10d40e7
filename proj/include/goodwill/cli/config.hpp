#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "goodwill/diffusion.hpp"
#include "goodwill/errors.hpp"
#include "goodwill/expr.hpp"
#include "goodwill/io.hpp"
#include "goodwill/simulation.hpp"
#include "goodwill/special_models.hpp"
#include "json.hpp"

namespace goodwill::cli {

/// section -> key -> raw value. Both file encodings land here first.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(std::string s) {
  auto sp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), sp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), sp).base(), s.end());
  return s;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

/// `[section]` headers, `key = value` lines, `#` or `;` comments.
inline RawConfig parse_ini(std::istream& in, const std::string& origin = "config") {
  RawConfig raw;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = detail::lower(detail::trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where() + "empty section name");
      raw[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected key = value");
    if (section.empty()) throw ConfigError(where() + "key outside any section");
    const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where() + "empty key");
    if (raw[section].count(key)) throw ConfigError(where() + "duplicate key '" + key + "'");
    raw[section][key] = detail::trim(line.substr(eq + 1));
  }
  return raw;
}

inline RawConfig parse_json(std::istream& in, const std::string& origin = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(origin + ": top level must be an object");
  auto scalar = [&](const nlohmann::json& v, const std::string& at) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return io::num(v.get<double>());
    throw ConfigError(origin + ": " + at + " must be a string, number or boolean");
  };
  RawConfig raw;
  for (const auto& [sec, body] : j.items()) {
    if (!body.is_object()) throw ConfigError(origin + ": section '" + sec + "' must be an object");
    auto& dst = raw[detail::lower(sec)];
    for (const auto& [key, v] : body.items()) {
      const std::string at = sec + "." + key;
      if (v.is_array()) {
        std::string joined;
        for (const auto& e : v) joined += (joined.empty() ? "" : ", ") + scalar(e, at);
        dst[detail::lower(key)] = joined;
      } else {
        dst[detail::lower(key)] = scalar(v, at);
      }
    }
  }
  return raw;
}

inline RawConfig load_raw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  const bool json = path.size() >= 5 && detail::lower(path.substr(path.size() - 5)) == ".json";
  return json ? parse_json(in, path) : parse_ini(in, path);
}

enum class ModelKind { Gbm, Cir, Expression };
enum class ControlKind { Optimal, None };

struct RunConfig {
  ModelKind model_kind = ModelKind::Gbm;
  GbmParams gbm;
  CirParams cir;
  // Expression-defined coefficients; derivative overrides are optional.
  std::map<std::string, std::string> exprs;
  double c = 1.0;
  std::optional<double> r0;

  GridSpec grid;

  PathConfig sim;
  std::vector<double> x0 = {1.0};
  ControlKind control = ControlKind::Optimal;

  std::string out_dir = "out";
  std::set<std::string> formats = {"csv", "json"};

  std::string sweep_parameter;
  std::vector<double> sweep_values;
  double sweep_x0 = 1.0;

  double perturb_a = 0.0;
};

namespace detail {

class Reader {
 public:
  Reader(const RawConfig& raw, std::string section) : raw_(raw), section_(std::move(section)) {
    const auto it = raw_.find(section_);
    if (it != raw_.end()) body_ = &it->second;
  }
  ~Reader() = default;

  bool present() const { return body_ != nullptr; }
  bool has(const std::string& key) const { return body_ && body_->count(key); }

  std::string str(const std::string& key) {
    used_.insert(key);
    return body_->at(key);
  }

  std::optional<std::string> opt_str(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return str(key);
  }

  double num(const std::string& key, double fallback) { return has(key) ? parse_num(key, str(key)) : fallback; }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(key, "expected a non-negative integer, got '" + v + "'");
    return out;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = lower(str(key));
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    fail(key, "expected a boolean, got '" + v + "'");
  }

  std::vector<double> list(const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(parse_num(key, item));
    }
    return out;
  }

  /// Every key must have been consumed; catches typos.
  void finish() const {
    if (!body_) return;
    for (const auto& [k, v] : *body_)
      if (!used_.count(k)) fail(k, "unknown key");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("[" + section_ + "] " + key + ": " + what);
  }

 private:
  const RawConfig& raw_;
  std::string section_;
  const std::map<std::string, std::string>* body_ = nullptr;
  std::set<std::string> used_;

  double parse_num(const std::string& key, const std::string& v) const {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) fail(key, "expected a number, got '" + v + "'");
    return d;
  }
};

}  // namespace detail

inline const std::vector<std::string>& expression_keys() {
  static const std::vector<std::string> keys = {"b",        "sigma",       "r",       "b_prime", "sigma_prime",
                                                  "r_prime",  "sigma_prime2", "h",       "k",       "k_prime",
                                                  "k_prime2", "big_k"};
  return keys;
}

inline RunConfig build_config(const RawConfig& raw) {
  static const std::set<std::string> known = {"model", "problem", "grid", "sim", "output", "sweep", "verify"};
  for (const auto& [sec, body] : raw)
    if (!known.count(sec)) throw ConfigError("unknown section [" + sec + "]");
  if (!raw.count("model")) throw ConfigError("missing [model] section");

  RunConfig cfg;
  detail::Reader model(raw, "model"), problem(raw, "problem");
  const std::string type = model.has("type") ? detail::lower(model.str("type")) : "gbm";
  if (type == "gbm") {
    cfg.model_kind = ModelKind::Gbm;
    auto& g = cfg.gbm;
    g.b_rate = model.num("b", g.b_rate);
    g.sigma_rate = model.num("sigma", g.sigma_rate);
    g.r1 = model.num("r1", g.r1);
    g.lambda = problem.num("lambda", g.lambda);
    g.kappa = problem.num("kappa", g.kappa);
    g.nu = problem.num("nu", g.nu);
    g.validate();
  } else if (type == "cir") {
    cfg.model_kind = ModelKind::Cir;
    auto& q = cfg.cir;
    q.alpha = model.num("alpha", q.alpha);
    q.theta = model.num("theta", q.theta);
    q.sigma_cir = model.num("sigma", q.sigma_cir);
    q.r1 = model.num("r1", q.r1);
    q.lambda = problem.num("lambda", q.lambda);
    q.kappa = problem.num("kappa", q.kappa);
    q.nu = problem.num("nu", q.nu);
    q.validate();
  } else if (type == "expr" || type == "expression") {
    cfg.model_kind = ModelKind::Expression;
    for (const char* key : {"b", "sigma", "r"}) {
      if (!model.has(key)) model.fail(key, "required for type = expr");
    }
    if (!problem.has("h") || !problem.has("k")) throw ConfigError("[problem] h and k are required for type = expr");
    cfg.c = model.num("c", 1.0);
    if (model.has("r0")) cfg.r0 = model.num("r0", 0.0);
  } else {
    model.fail("type", "unknown model '" + type + "' (expected gbm, cir or expr)");
  }
  for (const auto& key : expression_keys()) {
    auto& rd = (key == "h" || key == "k" || key == "k_prime" || key == "k_prime2" || key == "big_k") ? problem : model;
    if (auto v = rd.opt_str(key)) {
      expr::parse(*v);  // syntax check up front
      cfg.exprs[key] = *v;
    }
  }
  if (cfg.model_kind != ModelKind::Expression) {
    for (const char* key : {"b_prime", "sigma_prime", "r_prime", "sigma_prime2"})
      if (cfg.exprs.count(key)) model.fail(key, "only valid for type = expr");
  }
  model.finish();
  problem.finish();

  detail::Reader grid(raw, "grid");
  cfg.grid.x_min = grid.num("x_min", cfg.grid.x_min);
  cfg.grid.x_max = grid.num("x_max", cfg.grid.x_max);
  const double n = grid.num("n_points", cfg.grid.n_points);
  if (n != std::floor(n) || n < 16 || n > 1e6) grid.fail("n_points", "expected an integer in [16, 1e6]");
  cfg.grid.n_points = static_cast<int>(n);
  if (grid.has("spacing")) {
    const std::string s = detail::lower(grid.str("spacing"));
    if (s == "log" || s == "logarithmic") cfg.grid.spacing = Spacing::Logarithmic;
    else if (s == "uniform" || s == "linear") cfg.grid.spacing = Spacing::Uniform;
    else grid.fail("spacing", "expected log or uniform");
  }
  grid.finish();

  detail::Reader sim(raw, "sim");
  cfg.sim.dt = sim.num("dt", cfg.sim.dt);
  cfg.sim.horizon = sim.num("horizon", cfg.sim.horizon);
  cfg.sim.n_paths = sim.u64("n_paths", cfg.sim.n_paths);
  cfg.sim.seed = sim.u64("seed", cfg.sim.seed);
  cfg.sim.threads = static_cast<unsigned>(sim.u64("threads", cfg.sim.threads));
  cfg.sim.antithetic = sim.flag("antithetic", cfg.sim.antithetic);
  if (sim.has("x0")) cfg.x0 = sim.list("x0");
  if (sim.has("control")) {
    const std::string c = detail::lower(sim.str("control"));
    if (c == "optimal") cfg.control = ControlKind::Optimal;
    else if (c == "none") cfg.control = ControlKind::None;
    else sim.fail("control", "expected optimal or none");
  }
  if (sim.has("reflection")) {
    const std::string r = detail::lower(sim.str("reflection"));
    if (r == "bridge") cfg.sim.reflection = Reflection::Bridge;
    else if (r == "projected") cfg.sim.reflection = Reflection::Projected;
    else sim.fail("reflection", "expected bridge or projected");
  }
  sim.finish();
  for (double x : cfg.x0)
    if (!(x > 0.0)) throw ConfigError("[sim] x0: starting points must be positive");

  detail::Reader out(raw, "output");
  if (out.has("directory")) cfg.out_dir = out.str("directory");
  if (out.has("formats")) {
    cfg.formats.clear();
    std::stringstream ss(out.str("formats"));
    std::string f;
    while (std::getline(ss, f, ',')) {
      f = detail::lower(detail::trim(f));
      if (f.empty()) continue;
      if (f != "csv" && f != "json") out.fail("formats", "unknown format '" + f + "'");
      cfg.formats.insert(f);
    }
  }
  out.finish();

  detail::Reader sweep(raw, "sweep");
  if (sweep.has("parameter")) cfg.sweep_parameter = detail::lower(sweep.str("parameter"));
  if (sweep.has("values")) cfg.sweep_values = sweep.list("values");
  cfg.sweep_x0 = sweep.num("x0", cfg.sweep_x0);
  sweep.finish();

  detail::Reader verify(raw, "verify");
  cfg.perturb_a = verify.num("perturb_a", 0.0);
  verify.finish();
  return cfg;
}

inline RunConfig load_config(const std::string& path) { return build_config(load_raw(path)); }

namespace detail {

inline SmoothFn1D from_exprs(const std::map<std::string, std::string>& ex, const std::string& key,
                             const std::string& d1_key, const std::string& d2_key) {
  const expr::Expr e = expr::parse(ex.at(key));
  const expr::Expr d1 = ex.count(d1_key) ? expr::parse(ex.at(d1_key)) : expr::derivative(e);
  const expr::Expr d2 = ex.count(d2_key) ? expr::parse(ex.at(d2_key)) : expr::derivative(d1);
  return SmoothFn1D([e](double x) { return expr::eval(e, x); }, [d1](double x) { return expr::eval(d1, x); },
                    [d2](double x) { return expr::eval(d2, x); });
}

}  // namespace detail

/// The control problem a config describes. Expression payoffs override the
/// builtin λx^ν and κ.
inline ControlProblem make_problem(const RunConfig& cfg) {
  ControlProblem p;
  const auto& ex = cfg.exprs;
  switch (cfg.model_kind) {
    case ModelKind::Gbm: p = make_gbm_problem(cfg.gbm); break;
    case ModelKind::Cir: p = make_cir_problem(cfg.cir); break;
    case ModelKind::Expression: {
      p.model.b = detail::from_exprs(ex, "b", "b_prime", "");
      p.model.sigma = detail::from_exprs(ex, "sigma", "sigma_prime", "sigma_prime2");
      p.model.r = detail::from_exprs(ex, "r", "r_prime", "");
      p.model.c = cfg.c;
      if (cfg.r0) {
        p.model.r0 = *cfg.r0;
      } else {
        double lo = std::numeric_limits<double>::infinity();
        for (double x : cfg.grid.points()) lo = std::min(lo, p.model.r(x));
        p.model.r0 = lo;
      }
      break;
    }
  }
  if (ex.count("h")) p.h = detail::from_exprs(ex, "h", "", "");
  if (ex.count("k")) {
    p.k = detail::from_exprs(ex, "k", "k_prime", "k_prime2");
    p.big_k = SmoothFn1D();
  }
  if (ex.count("big_k")) p.big_k = detail::from_exprs(ex, "big_k", "", "");
  return p;
}

/// The numeric field a sweep parameter name refers to.
inline double& parameter_slot(RunConfig& cfg, const std::string& name) {
  if (cfg.model_kind == ModelKind::Gbm) {
    auto& g = cfg.gbm;
    if (name == "lambda") return g.lambda;
    if (name == "kappa") return g.kappa;
    if (name == "nu") return g.nu;
    if (name == "b") return g.b_rate;
    if (name == "sigma") return g.sigma_rate;
    if (name == "r1") return g.r1;
  } else if (cfg.model_kind == ModelKind::Cir) {
    auto& q = cfg.cir;
    if (name == "lambda") return q.lambda;
    if (name == "kappa") return q.kappa;
    if (name == "nu") return q.nu;
    if (name == "alpha") return q.alpha;
    if (name == "theta") return q.theta;
    if (name == "sigma") return q.sigma_cir;
    if (name == "r1") return q.r1;
  }
  throw ConfigError("sweep: parameter '" + name + "' does not exist for this model");
}

inline void check_parameter(RunConfig& cfg, const std::string& name) { (void)parameter_slot(cfg, name); }

inline void set_parameter(RunConfig& cfg, const std::string& name, double v) {
  parameter_slot(cfg, name) = v;
  if (cfg.model_kind == ModelKind::Gbm) cfg.gbm.validate();
  else cfg.cir.validate();
}

}  // namespace goodwill::cli
