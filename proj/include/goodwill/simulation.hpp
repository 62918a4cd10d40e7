#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "goodwill/diffusion.hpp"
#include "goodwill/errors.hpp"
#include "goodwill/io.hpp"
#include "json.hpp"

namespace goodwill {

/// Bridge: Euler step with the reflection of the frozen-coefficient
/// Brownian bridge, sampling its running minimum (first order near a).
/// Projected: clamp to a after each Euler step (order sqrt(dt) at a).
enum class Reflection { Bridge, Projected };

struct PathConfig {
  double dt = 1e-3;
  double horizon = 8.0;
  std::size_t n_paths = 10'000;
  std::uint64_t seed = 1;
  bool antithetic = true;
  /// Worker threads; 0 picks the hardware concurrency.
  unsigned threads = 0;
  /// Uncontrolled paths that step to x <= 0 are put here and flagged.
  double x_floor = 1e-10;
  Reflection reflection = Reflection::Bridge;

  void validate() const {
    std::ostringstream msg;
    if (!(dt > 0.0) || !std::isfinite(dt)) msg << "sim: dt must be positive";
    else if (!(horizon >= dt) || !std::isfinite(horizon)) msg << "sim: horizon must be at least dt";
    else if (n_paths < 1) msg << "sim: n_paths must be at least 1";
    else if (!(x_floor > 0.0)) msg << "sim: x_floor must be positive";
    if (!msg.str().empty()) throw ConfigError(msg.str());
  }

  std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }
};

struct SimComponents {
  // Signed contributions; they add up to the estimate.
  double payoff_part = 0.0;  // E ∫ e^-Λ h(X) dt
  double cost_part = 0.0;    // -E ∫ e^-Λ k(a) dZ^c
  double jump_cost = 0.0;    // -(K(a) - K(x0))
  double payoff_std_error = 0.0;
};

struct SimResult {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_aborted = 0;
  std::size_t n_clamped = 0;
  /// sup |h/r| over visited states times e^{-r0 T}.
  double discount_tail_bound = 0.0;
  SimComponents components;
  double dt = 0.0, horizon = 0.0;
  bool antithetic = false;
};

/// A reproducible ensemble: everything needed to regenerate any path from
/// its stream index. Nothing is simulated until an estimator runs.
struct PathEnsemble {
  DiffusionModel model;
  bool reflect = false;
  double a = 0.0;
  double x0 = 1.0;
  PathConfig cfg;

  double start() const { return reflect ? std::max(x0, a) : x0; }
  double jump() const { return reflect ? std::max(0.0, a - x0) : 0.0; }
  std::size_t lanes_per_stream() const { return cfg.antithetic ? 2 : 1; }
  std::size_t n_streams() const {
    return cfg.antithetic ? (cfg.n_paths + 1) / 2 : cfg.n_paths;
  }
};

inline PathEnsemble simulate_reflected(const DiffusionModel& m, double a, double x0, const PathConfig& cfg) {
  if (!(a > 0.0) || !(x0 > 0.0)) throw ConfigError("simulate_reflected: a and x0 must be positive");
  cfg.validate();
  return {m, true, a, x0, cfg};
}

inline PathEnsemble simulate_uncontrolled(const DiffusionModel& m, double x0, const PathConfig& cfg) {
  if (!(x0 > 0.0)) throw ConfigError("simulate_uncontrolled: x0 must be positive");
  cfg.validate();
  return {m, false, 0.0, x0, cfg};
}

namespace detail {

// Independent stream per (seed, index): Mersenne Twister state seeded
// through seed_seq, standard normals by the ziggurat method.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x9e3779b9u};
    eng_.seed(seq);
  }
  double normal() { return nd_(eng_); }
  // Uniform on (0, 1].
  double uniform() { return 1.0 - std::generate_canonical<double, 53>(eng_); }

 private:
  std::mt19937_64 eng_;
  boost::random::normal_distribution<double> nd_;
};

// exp(-y) for 0 <= y < 1e-3, to rounding.
inline double exp_neg_small(double y) {
  return 1.0 - y * (1.0 - y * (0.5 - y * (1.0 / 6 - y * (1.0 / 24 - y / 120))));
}

// Deterministic pairwise sum.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

struct Mean {
  double mean = 0.0, std_error = 0.0;
};

inline Mean mean_and_error(const std::vector<double>& v) {
  Mean m;
  const std::size_t n = v.size();
  if (n == 0) return m;
  m.mean = pairwise_sum(v) / static_cast<double>(n);
  if (n < 2) return m;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) sq[i] = (v[i] - m.mean) * (v[i] - m.mean);
  m.std_error = std::sqrt(pairwise_sum(sq) / static_cast<double>(n - 1) / static_cast<double>(n));
  return m;
}

inline constexpr std::size_t kStreamsPerBlock = 32;
inline constexpr double kHuge = std::numeric_limits<double>::max();

/// Per-step state handed to observers.
struct StepView {
  std::size_t step;
  double x_old, x_new, d_old, d_new, lam_new, dz, h_old;
};

// Euler step, discount and attention flag for every lane. Flags are
// 64-bit so the stores neither alias the inputs nor break vectorization.
template <class ExpNeg>
void fused_step(std::size_t L, double dt, double sdt, bool reflect, double a, double bridge_gap,
                const double* __restrict X, const double* __restrict D, const double* __restrict Lam,
                const double* __restrict bv, const double* __restrict sv, const double* __restrict rv,
                const double* __restrict zv, const std::int64_t* __restrict alive, double* __restrict xn,
                double* __restrict dn, double* __restrict lam, std::int64_t* __restrict flag, ExpNeg expneg) {
  const double lo_edge = reflect ? a : 0.0;
  const double gap = reflect ? bridge_gap : -kHuge;
  for (std::size_t l = 0; l < L; ++l) {
    const double x1 = X[l] + bv[l] * dt + sv[l] * sdt * zv[l];
    const double d1 = D[l] * expneg(rv[l] * dt);
    xn[l] = x1;
    dn[l] = d1;
    lam[l] = Lam[l] + rv[l] * dt;
    const bool near = (x1 <= lo_edge) | (2.0 * (X[l] - a) * (x1 - a) < gap * sv[l] * sv[l]);
    const bool ok = (std::abs(x1) < kHuge) & (d1 < kHuge);
    flag[l] = static_cast<std::int64_t>((alive[l] == 0) | near | !ok);
  }
}

/// Runs streams [s0, s1) in lockstep. Observer interface:
///   static constexpr bool needs_h(), every_step();
///   void begin(lanes, path_index_of_lane, used)
///   void bulk(X, D and h before the step, lanes)
///   void step(lane, const StepView&)   every step, or only for the
///                                      flagged lanes when !every_step()
///   void clamp(lane), abort(lane)
///   void end(lane, final X, final D)
template <class Obs>
void run_streams(const PathEnsemble& e, const SmoothFn1D* h, std::size_t s0, std::size_t s1, Obs& obs) {
  const std::size_t per = e.lanes_per_stream();
  const std::size_t ns = s1 - s0;
  std::vector<Stream> rng;
  rng.reserve(ns);
  std::vector<std::size_t> path(ns * per);
  std::vector<char> used(ns * per, 1);
  std::vector<std::int64_t> alive(ns * per, 1);
  for (std::size_t s = 0; s < ns; ++s) {
    rng.emplace_back(e.cfg.seed, s0 + s);
    for (std::size_t j = 0; j < per; ++j) {
      path[s * per + j] = (s0 + s) * per + j;
      if (path[s * per + j] >= e.cfg.n_paths) used[s * per + j] = 0;
    }
  }
  const std::size_t L = ns * per;
  std::vector<double> X(L, e.start()), D(L, 1.0), Lam(L, 0.0);
  std::vector<double> bv(L), sv(L), rv(L), hv(L, 0.0), zv(L), xn(L), dn(L), lam(L), dzv(L, 0.0);
  std::vector<std::int64_t> flag(L, 0);
  obs.begin(L, path, used);
  const double dt = e.cfg.dt, sdt = std::sqrt(dt);
  const std::size_t N = e.cfg.steps();
  const double a = e.a;
  const double floor = e.cfg.x_floor;
  const double x_safe = e.start();
  const bool bridge = e.cfg.reflection == Reflection::Bridge;
  const bool reflect = e.reflect;
  const double bridge_gap = bridge ? 40.0 * dt : 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    e.model.b.eval(X, bv);
    e.model.sigma.eval(X, sv);
    e.model.r.eval(X, rv);
    if constexpr (Obs::needs_h()) h->eval(X, hv);
    if (per == 2) {
      for (std::size_t s = 0; s < ns; ++s) {
        const double xi = rng[s].normal();
        zv[2 * s] = xi;
        zv[2 * s + 1] = -xi;
      }
    } else {
      for (std::size_t s = 0; s < ns; ++s) zv[s] = rng[s].normal();
    }
    int large = 0;
    for (std::size_t l = 0; l < L; ++l) large |= !(rv[l] * dt < 1e-3);
    obs.bulk(X.data(), D.data(), hv.data(), L);
    // One fused pass commits the Euler step and flags the lanes that need
    // attention: near or below the boundary, clamped, non-finite or dead.
    // Written without short-circuits so it vectorizes; a NaN fails every
    // comparison below and lands in the !ok term.
    if (!large) {
      fused_step(L, dt, sdt, reflect, a, bridge_gap, X.data(), D.data(), Lam.data(), bv.data(), sv.data(),
                 rv.data(), zv.data(), alive.data(), xn.data(), dn.data(), lam.data(), flag.data(),
                 [](double y) { return exp_neg_small(y); });
    } else {
      fused_step(L, dt, sdt, reflect, a, bridge_gap, X.data(), D.data(), Lam.data(), bv.data(), sv.data(),
                 rv.data(), zv.data(), alive.data(), xn.data(), dn.data(), lam.data(), flag.data(),
                 [](double y) { return std::exp(-y); });
    }
    for (std::size_t l = 0; l < L; ++l) {
      if (!flag[l]) continue;
      if (!alive[l]) {
        xn[l] = x_safe;
        dn[l] = 1.0;
        lam[l] = 0.0;
        continue;
      }
      const double xo = X[l];
      double x1 = xn[l];
      double dz = 0.0;
      if (e.reflect) {
        if (bridge) {
          // The frozen-coefficient bridge from xo to x1 dips below a with
          // probability exp(-2(xo-a)(x1-a)/(sigma^2 dt)) when x1 > a.
          const double v = sv[l] * sv[l] * dt;
          const double d = x1 - xo;
          const double lo = 0.5 * (xo + x1 - std::sqrt(d * d - 2.0 * v * std::log(rng[l / per].uniform())));
          if (lo < a) {
            dz = a - lo;
            x1 += dz;
          }
        } else if (x1 < a) {
          dz = a - x1;
          x1 = a;
        }
      } else if (x1 <= 0.0) {
        x1 = floor;
        obs.clamp(l);
      }
      if (!std::isfinite(x1) || !std::isfinite(dn[l])) {
        alive[l] = 0;
        obs.abort(l);
        xn[l] = x_safe;
        dn[l] = 1.0;
        lam[l] = 0.0;
        continue;
      }
      xn[l] = x1;
      dzv[l] = dz;
      if constexpr (!Obs::every_step()) obs.step(l, StepView{n, xo, x1, D[l], dn[l], lam[l], dz, hv[l]});
    }
    if constexpr (Obs::every_step()) {
      for (std::size_t l = 0; l < L; ++l)
        if (alive[l]) obs.step(l, StepView{n, X[l], xn[l], D[l], dn[l], lam[l], dzv[l], hv[l]});
    }
    X.swap(xn);
    D.swap(dn);
    Lam.swap(lam);
    if constexpr (Obs::every_step()) std::fill(dzv.begin(), dzv.end(), 0.0);
  }
  for (std::size_t l = 0; l < L; ++l)
    if (alive[l]) obs.end(l, X[l], D[l]);
}

/// Splits the stream range into blocks and runs them on worker threads.
/// Each block owns a fresh observer; `merge` receives them in block order.
template <class MakeObs, class Merge>
void run_parallel(const PathEnsemble& e, const SmoothFn1D* h, MakeObs make, Merge merge) {
  const std::size_t ns = e.n_streams();
  const std::size_t nblocks = (ns + kStreamsPerBlock - 1) / kStreamsPerBlock;
  using Obs = decltype(make());
  std::vector<Obs> obs;
  obs.reserve(nblocks);
  for (std::size_t b = 0; b < nblocks; ++b) obs.push_back(make());
  unsigned nt = e.cfg.threads ? e.cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, std::max<std::size_t>(nblocks, 1)));
  auto work = [&](unsigned t) {
    for (std::size_t b = t; b < nblocks; b += nt) {
      const std::size_t s0 = b * kStreamsPerBlock;
      const std::size_t s1 = std::min(ns, s0 + kStreamsPerBlock);
      run_streams(e, h, s0, s1, obs[b]);
    }
  };
  if (nt <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& o : obs) merge(o);
}

struct PayoffObserver {
  static constexpr bool needs_h() { return true; }
  static constexpr bool every_step() { return false; }
  double dt = 0.0, k_a = 0.0;
  std::vector<std::size_t> path;
  std::vector<char> used, ok;
  std::vector<double> pay, cost;
  std::size_t clamped = 0, aborted = 0;

  void begin(std::size_t L, const std::vector<std::size_t>& p, const std::vector<char>& u) {
    path = p;
    used = u;
    ok.assign(L, 1);
    pay.assign(L, 0.0);
    cost.assign(L, 0.0);
    lo.assign(L, std::numeric_limits<double>::infinity());
    hi.assign(L, 0.0);
  }
  // Per-lane range of visited states.
  std::vector<double> lo, hi;

  void bulk(const double* __restrict x, const double* __restrict d, const double* __restrict h, std::size_t L) {
    double* __restrict p = pay.data();
    double* __restrict mn = lo.data();
    double* __restrict mx = hi.data();
    const double step = dt;
    for (std::size_t l = 0; l < L; ++l) {
      p[l] += d[l] * h[l] * step;
      mn[l] = x[l] < mn[l] ? x[l] : mn[l];
      mx[l] = x[l] > mx[l] ? x[l] : mx[l];
    }
  }
  void step(std::size_t l, const StepView& v) {
    if (v.dz > 0.0) cost[l] += v.d_new * k_a * v.dz;
  }
  void clamp(std::size_t) { ++clamped; }
  void abort(std::size_t l) {
    ok[l] = 0;
    ++aborted;
  }
  void end(std::size_t, double, double) {}
};

}  // namespace detail

inline bool same_model(const DiffusionModel& a, const DiffusionModel& b) {
  for (double x : {0.3, 1.0, 2.7}) {
    if (a.b(x) != b.b(x) || a.sigma(x) != b.sigma(x) || a.r(x) != b.r(x)) return false;
  }
  return true;
}

/// Monte Carlo estimate of J: discounted payoff minus the cost of the
/// reflection and of the initial jump. With antithetic pairs the standard
/// error is computed from the pair means.
inline SimResult payoff_estimate(const PathEnsemble& e, const ControlProblem& p) {
  if (!same_model(e.model, p.model))
    throw ConfigError("payoff_estimate: ensemble and problem use different models");
  const double k_a = e.reflect ? p.k(e.a) : 0.0;
  const double jump_cost = e.jump() > 0.0 ? k_integral(p, e.x0, e.a) : 0.0;
  std::vector<double> pay(e.cfg.n_paths), cost(e.cfg.n_paths);
  std::vector<char> ok(e.cfg.n_paths, 0);
  SimResult out;
  // sup |h/r| is probed afterwards on the range of visited states.
  double xmin = std::numeric_limits<double>::infinity(), xmax = 0.0;
  using Obs = detail::PayoffObserver;
  detail::run_parallel(
      e, &p.h,
      [&] {
        Obs o;
        o.dt = e.cfg.dt;
        o.k_a = k_a;
        return o;
      },
      [&](const Obs& o) {
        for (std::size_t l = 0; l < o.path.size(); ++l) {
          if (!o.used[l]) continue;
          const std::size_t i = o.path[l];
          pay[i] = o.pay[l];
          cost[i] = o.cost[l];
          ok[i] = o.ok[l];
        }
        out.n_clamped += o.clamped;
        out.n_aborted += o.aborted;
        for (double v : o.lo) xmin = std::min(xmin, v);
        for (double v : o.hi) xmax = std::max(xmax, v);
      });
  // Per-sample values: paths, or antithetic pair means.
  std::vector<double> vals, pays, costs;
  const std::size_t per = e.lanes_per_stream();
  for (std::size_t s = 0; s < e.n_streams(); ++s) {
    double pv = 0.0, cv = 0.0;
    std::size_t cnt = 0;
    bool good = true;
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t i = s * per + j;
      if (i >= e.cfg.n_paths) continue;
      if (!ok[i]) good = false;
      pv += pay[i];
      cv += cost[i];
      ++cnt;
    }
    if (!good || cnt == 0) continue;
    pv /= static_cast<double>(cnt);
    cv /= static_cast<double>(cnt);
    vals.push_back(pv - cv - jump_cost);
    pays.push_back(pv);
    costs.push_back(cv);
  }
  out.std_error = detail::mean_and_error(vals).std_error;
  out.n_paths = e.cfg.n_paths;
  const auto pm = detail::mean_and_error(pays);
  out.components.payoff_part = pm.mean;
  out.components.payoff_std_error = pm.std_error;
  out.components.cost_part = -detail::pairwise_sum(costs) / static_cast<double>(std::max<std::size_t>(costs.size(), 1));
  out.components.jump_cost = jump_cost > 0.0 ? -jump_cost : 0.0;
  out.estimate = out.components.payoff_part + out.components.cost_part + out.components.jump_cost;
  double sup = 0.0;
  if (xmax > 0.0) {
    const double lo = std::min(xmin, e.start()), hi = std::max(xmax, e.start());
    for (int i = 0; i <= 64; ++i) {
      const double x = lo * std::pow(hi / lo, i / 64.0);
      sup = std::max(sup, std::abs(p.h(x) / p.model.r(x)));
    }
  }
  out.discount_tail_bound = sup * std::exp(-p.model.r0 * e.cfg.horizon);
  out.dt = e.cfg.dt;
  out.horizon = e.cfg.horizon;
  out.antithetic = e.cfg.antithetic;
  return out;
}

struct MeanPathPoint {
  double t, mean, std_error;
};

/// Sample mean of X_t at the requested times (rounded to the step grid).
inline std::vector<MeanPathPoint> mean_path(const PathEnsemble& e, const std::vector<double>& times) {
  const std::size_t N = e.cfg.steps();
  std::vector<std::size_t> idx;
  for (double t : times) idx.push_back(std::min(N, static_cast<std::size_t>(std::llround(t / e.cfg.dt))));
  const std::size_t per = e.lanes_per_stream();
  std::vector<std::vector<double>> at(times.size(), std::vector<double>(e.cfg.n_paths, 0.0));
  std::vector<char> ok(e.cfg.n_paths, 0);
  struct Obs {
    static constexpr bool needs_h() { return false; }
    static constexpr bool every_step() { return true; }
    const std::vector<std::size_t>* idx = nullptr;
    std::vector<std::size_t> path;
    std::vector<char> used, ok;
    std::vector<std::vector<double>> vals;  // [time][lane]
    double x0 = 0.0;
    void begin(std::size_t L, const std::vector<std::size_t>& p, const std::vector<char>& u) {
      path = p;
      used = u;
      ok.assign(L, 1);
      vals.assign(idx->size(), std::vector<double>(L, x0));
    }
    void step(std::size_t l, const detail::StepView& v) {
      for (std::size_t k = 0; k < idx->size(); ++k)
        if ((*idx)[k] == v.step + 1) vals[k][l] = v.x_new;
    }
    void bulk(const double*, const double*, const double*, std::size_t) {}
    void clamp(std::size_t) {}
    void abort(std::size_t l) { ok[l] = 0; }
    void end(std::size_t, double, double) {}
  };
  detail::run_parallel(
      e, nullptr,
      [&] {
        Obs o;
        o.idx = &idx;
        o.x0 = e.start();
        return o;
      },
      [&](const Obs& o) {
        for (std::size_t l = 0; l < o.path.size(); ++l) {
          if (!o.used[l]) continue;
          const std::size_t i = o.path[l];
          ok[i] = o.ok[l];
          for (std::size_t k = 0; k < idx.size(); ++k) at[k][i] = o.vals[k][l];
        }
      });
  std::vector<MeanPathPoint> out;
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> vals;
    for (std::size_t s = 0; s < e.n_streams(); ++s) {
      double v = 0.0;
      std::size_t cnt = 0;
      bool good = true;
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t i = s * per + j;
        if (i >= e.cfg.n_paths) continue;
        good = good && ok[i];
        v += at[k][i];
        ++cnt;
      }
      if (good && cnt) vals.push_back(v / static_cast<double>(cnt));
    }
    const auto m = detail::mean_and_error(vals);
    out.push_back({static_cast<double>(idx[k]) * e.cfg.dt, m.mean, m.std_error});
  }
  return out;
}

struct PathSample {
  double t, X, Z, Lambda;
};

/// Regenerates one path of the ensemble, every step recorded.
inline std::vector<PathSample> generate_path(const PathEnsemble& e, std::size_t path_index) {
  if (path_index >= e.cfg.n_paths) throw ConfigError("generate_path: path index out of range");
  const std::size_t per = e.lanes_per_stream();
  const std::size_t s = path_index / per;
  const std::size_t lane = path_index % per;
  struct Obs {
    static constexpr bool needs_h() { return false; }
    static constexpr bool every_step() { return true; }
    std::size_t lane = 0;
    double dt = 0.0;
    std::vector<PathSample> rec;
    double Z = 0.0;
    void begin(std::size_t, const std::vector<std::size_t>&, const std::vector<char>&) {}
    void step(std::size_t l, const detail::StepView& v) {
      if (l != lane) return;
      Z += v.dz;
      rec.push_back({static_cast<double>(v.step + 1) * dt, v.x_new, Z, v.lam_new});
    }
    void bulk(const double*, const double*, const double*, std::size_t) {}
    void clamp(std::size_t) {}
    void abort(std::size_t) {}
    void end(std::size_t, double, double) {}
  };
  Obs o;
  o.lane = lane;
  o.dt = e.cfg.dt;
  o.rec.push_back({0.0, e.start(), e.jump(), 0.0});
  o.Z = e.jump();
  detail::run_streams(e, nullptr, s, s + 1, o);
  return o.rec;
}

inline void write_path_csv(std::ostream& os, const std::vector<PathSample>& path) {
  io::csv_header(os, {"t", "X", "Z", "Lambda"});
  for (const auto& s : path) io::csv_row(os, {s.t, s.X, s.Z, s.Lambda});
}

struct TransversalityPoint {
  double level = 0.0;
  double discount_factor = 0.0;  // E[exp(-Λ at the first passage to level)]
  double std_error = 0.0;
  double resolvent = 0.0;        // R_{X,h}(level)
  double product = 0.0;
  double censored_fraction = 0.0;
};

struct TransversalityReport {
  std::vector<TransversalityPoint> points;
  std::string warning;
};

/// For each level n, E[e^{-Λ(T_n)}]·R(n) along reflected paths from x0, with
/// T_n the first passage above n. Paths that have not reached n by the
/// horizon contribute e^{-Λ(T)}, an upper bound; a warning reports how often.
template <class R>
TransversalityReport transversality_diagnostic(const PathEnsemble& e, const std::vector<double>& levels,
                                               const R& resolvent_at) {
  const std::size_t nl = levels.size();
  std::vector<std::vector<double>> fac(nl, std::vector<double>(e.cfg.n_paths, 0.0));
  std::vector<std::vector<char>> hit(nl, std::vector<char>(e.cfg.n_paths, 0));
  struct Obs {
    static constexpr bool needs_h() { return false; }
    static constexpr bool every_step() { return true; }
    const std::vector<double>* levels = nullptr;
    double x_start = 0.0;
    std::vector<std::size_t> path;
    std::vector<char> used;
    std::vector<std::vector<double>> f;
    std::vector<std::vector<char>> hit;
    std::vector<double> last_d;
    void begin(std::size_t L, const std::vector<std::size_t>& p, const std::vector<char>& u) {
      path = p;
      used = u;
      f.assign(levels->size(), std::vector<double>(L, 1.0));
      hit.assign(levels->size(), std::vector<char>(L, 0));
      for (std::size_t k = 0; k < levels->size(); ++k)
        if (x_start >= (*levels)[k])
          for (std::size_t l = 0; l < L; ++l) hit[k][l] = 1;
      last_d.assign(L, 1.0);
    }
    void step(std::size_t l, const detail::StepView& v) {
      for (std::size_t k = 0; k < levels->size(); ++k) {
        if (hit[k][l]) continue;
        if (v.x_new >= (*levels)[k]) {
          hit[k][l] = 1;
          f[k][l] = v.d_new;
        }
      }
      last_d[l] = v.d_new;
    }
    void bulk(const double*, const double*, const double*, std::size_t) {}
    void clamp(std::size_t) {}
    void abort(std::size_t) {}
    void end(std::size_t l, double, double) {
      for (std::size_t k = 0; k < levels->size(); ++k)
        if (!hit[k][l]) f[k][l] = last_d[l];
    }
  };
  detail::run_parallel(
      e, nullptr,
      [&] {
        Obs o;
        o.levels = &levels;
        o.x_start = e.start();
        return o;
      },
      [&](const Obs& o) {
        for (std::size_t l = 0; l < o.path.size(); ++l) {
          if (!o.used[l]) continue;
          for (std::size_t k = 0; k < nl; ++k) {
            fac[k][o.path[l]] = o.f[k][l];
            hit[k][o.path[l]] = o.hit[k][l];
          }
        }
      });
  TransversalityReport rep;
  double worst_censor = 0.0;
  for (std::size_t k = 0; k < nl; ++k) {
    const auto m = detail::mean_and_error(fac[k]);
    TransversalityPoint pt;
    pt.level = levels[k];
    pt.discount_factor = m.mean;
    pt.std_error = m.std_error;
    pt.resolvent = resolvent_at(levels[k]);
    pt.product = pt.discount_factor * pt.resolvent;
    std::size_t miss = 0;
    for (char c : hit[k]) miss += c ? 0 : 1;
    pt.censored_fraction = static_cast<double>(miss) / static_cast<double>(e.cfg.n_paths);
    worst_censor = std::max(worst_censor, pt.censored_fraction);
    rep.points.push_back(pt);
  }
  if (worst_censor > 0.0) {
    std::ostringstream msg;
    msg << "horizon too short: up to " << worst_censor * 100.0
        << "% of paths had not reached a level by T; their factors are upper bounds";
    rep.warning = msg.str();
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const SimResult& r) {
  nlohmann::ordered_json j;
  j["estimate"] = r.estimate;
  j["stderr"] = r.std_error;
  j["n_paths"] = r.n_paths;
  j["n_aborted"] = r.n_aborted;
  j["n_clamped"] = r.n_clamped;
  j["discount_tail_bound"] = r.discount_tail_bound;
  j["components"] = {{"payoff_part", r.components.payoff_part},
                     {"cost_part", r.components.cost_part},
                     {"jump_cost", r.components.jump_cost},
                     {"payoff_stderr", r.components.payoff_std_error}};
  j["dt"] = r.dt;
  j["horizon"] = r.horizon;
  j["antithetic"] = r.antithetic;
  return j;
}

}  // namespace goodwill
