#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "goodwill/cli/config.hpp"
#include "goodwill/free_boundary.hpp"
#include "goodwill/fundamental.hpp"
#include "goodwill/resolvent.hpp"
#include "goodwill/simulation.hpp"

// Exit codes:
//   0  success
//   1  configuration error (unreadable or malformed file, bad parameter)
//   2  an assumption diagnostic failed before solving
//   3  numerical failure, or a verify/simulate check did not pass

namespace goodwill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitAssumption = 2;
inline constexpr int kExitNumerical = 3;

/// Runs f and maps library exceptions to exit codes, printing the message.
template <class F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const AssumptionViolation& e) {
    err << "assumption violated: " << e.what() << '\n';
    return kExitAssumption;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

struct Solved {
  ControlProblem problem;
  SolveOutput out;
  HjbReport hjb;
  const HJBSolution& sol() const { return *out.solution; }
};

inline nlohmann::ordered_json diagnostics_json(const std::vector<Diagnostic>& ds) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : ds) {
    nlohmann::ordered_json j;
    j["name"] = d.name;
    j["verdict"] = to_string(d.verdict);
    if (std::isfinite(d.witness)) j["witness"] = d.witness;
    if (!d.detail.empty()) j["detail"] = d.detail;
    arr.push_back(std::move(j));
  }
  return arr;
}

/// Diagnostics, pair, regime, boundary, value and the HJB residuals on the
/// grid. Throws AssumptionViolation when a diagnostic fails.
inline Solved run_solve(const RunConfig& cfg) {
  Solved s;
  s.problem = make_problem(cfg);
  SolveOptions opt;
  opt.perturb_a = cfg.perturb_a;
  s.out = solve(s.problem, cfg.grid, opt);
  if (!s.out.solution) {
    std::string names;
    for (const auto& d : s.out.diagnostics) {
      if (d.verdict != Verdict::Fail) continue;
      names += (names.empty() ? "" : "; ") + d.name + (d.detail.empty() ? "" : " (" + d.detail + ")");
    }
    throw AssumptionViolation(names.empty() ? "diagnostics failed" : names);
  }
  s.hjb = verify_hjb(s.sol(), cfg.grid.points());
  return s;
}

namespace detail {

inline std::filesystem::path prepare_dir(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
  return dir;
}

template <class W>
void write_file(const std::filesystem::path& path, W&& writer) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  writer(os);
  if (!os) throw NumericalFailure("write to '" + path.string() + "' failed");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline bool wants(const RunConfig& cfg, const char* fmt) { return cfg.formats.count(fmt) != 0; }

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

inline int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Solved s = run_solve(cfg);
    const auto dir = detail::prepare_dir(cfg);
    const auto xs = cfg.grid.points();
    if (detail::wants(cfg, "csv")) {
      detail::write_file(dir / "solution.csv", [&](std::ostream& os) { write_solution_csv(os, s.sol(), s.hjb); });
      detail::write_file(dir / "fundamental.csv", [&](std::ostream& os) { write_pair_csv(os, *s.out.pair, xs); });
      detail::write_file(dir / "resolvent.csv", [&](std::ostream& os) { write_resolvent_csv(os, *s.out.rh, xs); });
    }
    auto summary = summary_json(s.sol(), s.hjb);
    summary["hjb_verdict"] = to_string(s.hjb.verdict);
    summary["case_clause"] = s.out.decision.clause;
    summary["diagnostics"] = diagnostics_json(s.out.diagnostics);
    if (detail::wants(cfg, "json")) detail::write_json(dir / "summary.json", summary);

    out << std::setprecision(12);
    out << "regime   " << to_string(s.sol().regime()) << '\n';
    if (s.sol().regime() == Regime::CaseII) out << "a        " << s.sol().a() << "\nA        " << s.sol().A() << '\n';
    out << "x_star   " << s.sol().x_star() << '\n';
    out << "C        " << s.sol().C() << '\n';
    out << "residual " << s.hjb.residual_max << " (" << to_string(s.hjb.verdict) << ")\n";
    return kExitOk;
  });
}

struct CheckRow {
  std::string name;
  double value;
  double tolerance;
  bool pass;
  std::string note;
};

inline std::vector<CheckRow> verify_checks(const Solved& s, const RunConfig& cfg) {
  std::vector<CheckRow> rows;
  const auto xs = cfg.grid.points();
  std::string why;
  for (const auto& f : s.hjb.failures) why += (why.empty() ? "" : "; ") + f;
  rows.push_back({"hjb_residual", s.hjb.residual_max, HjbTolerances{}.eq, s.hjb.verdict == Verdict::Pass, why});
  if (s.sol().regime() == Regime::CaseII) {
    rows.push_back({"pasting_first", s.hjb.pasting1, HjbTolerances{}.pasting, s.hjb.pasting1 <= HjbTolerances{}.pasting, ""});
    rows.push_back({"pasting_second", s.hjb.pasting2, HjbTolerances{}.pasting, s.hjb.pasting2 <= HjbTolerances{}.pasting, ""});
  }
  for (const auto& [name, table] : {std::pair{"identity_h", s.out.rh}, std::pair{"identity_q", s.out.rq}}) {
    const auto id = derivative_identity_check(*table, xs, 1e-5);
    rows.push_back({name, id.max_deviation, 1e-5, id.verdict == Verdict::Pass, id.warning});
  }
  const auto pc = check_pair(*s.out.pair, xs);
  rows.push_back({"wronskian_grid", pc.wronskian_max, 1e-6, pc.wronskian_max <= 1e-6, ""});
  double sampled = std::numeric_limits<double>::infinity();
  std::string note;
  try {
    sampled = wronskian_constant(*s.out.pair).max_deviation;
  } catch (const NumericalFailure& e) {
    note = e.what();
  }
  rows.push_back({"wronskian_sampled", sampled, 1e-6, sampled <= 1e-6, note});
  return rows;
}

inline int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Solved s = run_solve(cfg);
    const auto rows = verify_checks(s, cfg);
    bool all = true;
    out << std::left << std::setw(20) << "check" << std::setw(12) << "value" << std::setw(12) << "tolerance"
        << "verdict\n";
    for (const auto& r : rows) {
      out << std::setw(20) << r.name << std::setw(12) << detail::sci(r.value) << std::setw(12)
          << detail::sci(r.tolerance) << (r.pass ? "PASS" : "FAIL");
      if (!r.note.empty()) out << "  " << r.note;
      out << '\n';
      all = all && r.pass;
    }
    if (detail::wants(cfg, "csv")) {
      const auto dir = detail::prepare_dir(cfg);
      detail::write_file(dir / "verify.csv", [&](std::ostream& os) {
        os << "check,value,tolerance,verdict\n";
        for (const auto& r : rows)
          os << r.name << ',' << io::num(r.value) << ',' << io::num(r.tolerance) << ',' << (r.pass ? "PASS" : "FAIL")
             << '\n';
      });
    }
    if (!all) err << "verify: at least one check failed\n";
    return all ? kExitOk : kExitNumerical;
  });
}

struct SimulateRow {
  double x0, reference, estimate, std_error, z;
  SimResult result;
};

inline double z_score(double estimate, double reference, double se) {
  const double d = estimate - reference;
  if (se > 0.0) return d / se;
  return d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.x0.empty()) throw ConfigError("[sim] x0: at least one starting point is required");
    for (double x : cfg.x0)
      if (x < cfg.grid.x_min || x > cfg.grid.x_max) throw ConfigError("[sim] x0 = " + io::num(x) + " lies outside the grid");
    const Solved s = run_solve(cfg);
    const bool reflect = cfg.control == ControlKind::Optimal && s.sol().regime() == Regime::CaseII;
    std::vector<SimulateRow> rows;
    for (double x0 : cfg.x0) {
      const auto ens = reflect ? simulate_reflected(s.problem.model, s.sol().a(), x0, cfg.sim)
                               : simulate_uncontrolled(s.problem.model, x0, cfg.sim);
      SimulateRow row;
      row.x0 = x0;
      row.reference = cfg.control == ControlKind::Optimal ? s.sol().w(x0) : s.out.rh->R(x0);
      row.result = payoff_estimate(ens, s.problem);
      row.estimate = row.result.estimate;
      row.std_error = row.result.std_error;
      row.z = z_score(row.estimate, row.reference, row.std_error);
      rows.push_back(row);
    }
    bool all = true;
    out << std::left << std::setw(14) << "x0" << std::setw(16) << (cfg.control == ControlKind::Optimal ? "w" : "R_h")
        << std::setw(16) << "J_est" << std::setw(16) << "stderr" << "z\n";
    out << std::setprecision(9);
    for (const auto& r : rows) {
      out << std::setw(14) << r.x0 << std::setw(16) << r.reference << std::setw(16) << r.estimate << std::setw(16)
          << r.std_error << std::setprecision(3) << r.z << std::setprecision(9);
      if (r.result.n_aborted) out << "  (" << r.result.n_aborted << " paths aborted)";
      out << '\n';
      all = all && std::abs(r.z) <= 3.0;
    }
    const auto dir = detail::prepare_dir(cfg);
    if (detail::wants(cfg, "csv")) {
      detail::write_file(dir / "simulate.csv", [&](std::ostream& os) {
        io::csv_header(os, {"x0", "reference", "estimate", "stderr", "z", "payoff_part", "cost_part", "jump_cost",
                            "n_paths", "n_aborted", "n_clamped", "discount_tail_bound"});
        for (const auto& r : rows) {
          const auto& c = r.result.components;
          io::csv_row(os, {r.x0, r.reference, r.estimate, r.std_error, r.z, c.payoff_part, c.cost_part, c.jump_cost,
                           static_cast<double>(r.result.n_paths), static_cast<double>(r.result.n_aborted),
                           static_cast<double>(r.result.n_clamped), r.result.discount_tail_bound});
        }
      });
    }
    if (detail::wants(cfg, "json")) {
      nlohmann::ordered_json j;
      j["schema_version"] = kSchemaVersion;
      j["control"] = cfg.control == ControlKind::Optimal ? "optimal" : "none";
      j["seed"] = cfg.sim.seed;
      j["runs"] = nlohmann::ordered_json::array();
      for (const auto& r : rows) {
        auto e = to_json(r.result);
        e["x0"] = r.x0;
        e["reference"] = r.reference;
        e["z"] = r.z;
        j["runs"].push_back(std::move(e));
      }
      detail::write_json(dir / "simulate.json", j);
    }
    if (!all) err << "simulate: |z| > 3 for at least one starting point\n";
    return all ? kExitOk : kExitNumerical;
  });
}

struct SweepRow {
  double value;
  std::string regime;
  double a, A, w;
  int code;
  std::string error;
};

inline int cmd_sweep(const RunConfig& cfg, const std::string& parameter, const std::vector<double>& values,
                     std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (parameter.empty()) throw ConfigError("sweep: no parameter named");
    if (values.empty()) throw ConfigError("sweep: empty value list");
    {
      RunConfig probe = cfg;
      check_parameter(probe, parameter);
    }
    std::vector<SweepRow> rows;
    int worst = kExitOk;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double v : values) {
      SweepRow row{v, "error", nan, nan, nan, kExitOk, ""};
      std::ostringstream msg;
      row.code = guarded(msg, [&] {
        RunConfig c = cfg;
        set_parameter(c, parameter, v);
        const Solved s = run_solve(c);
        row.regime = to_string(s.sol().regime());
        row.a = s.sol().a();
        row.A = s.sol().A();
        row.w = s.sol().w(cfg.sweep_x0);
        return kExitOk;
      });
      row.error = detail::trim(msg.str());
      if (row.code != kExitOk) {
        err << "sweep " << parameter << " = " << io::num(v) << ": " << row.error << '\n';
        worst = std::max(worst, row.code);
      }
      rows.push_back(row);
    }
    out << std::left << std::setprecision(12) << std::setw(12) << parameter << std::setw(8) << "regime" << std::setw(20)
        << "a" << std::setw(20) << "A" << "w(x0)\n";
    for (const auto& r : rows)
      out << std::setw(12) << r.value << std::setw(8) << r.regime << std::setw(20) << r.a << std::setw(20) << r.A << r.w
          << '\n';
    if (detail::wants(cfg, "csv")) {
      const auto dir = detail::prepare_dir(cfg);
      detail::write_file(dir / "sweep.csv", [&](std::ostream& os) {
        os << "value,regime,a,A,w_x0,exit_code\n";
        for (const auto& r : rows)
          os << io::num(r.value) << ',' << r.regime << ',' << io::num(r.a) << ',' << io::num(r.A) << ','
             << io::num(r.w) << ',' << r.code << '\n';
      });
    }
    return worst;
  });
}

}  // namespace goodwill::cli
