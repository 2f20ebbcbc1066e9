#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ricci/curvature.hpp"
#include "ricci/diagnostics.hpp"
#include "ricci/oracle.hpp"
#include "ricci/profile.hpp"

namespace ricci {

enum class OuterBc { FixedTail, Extrapolated };

inline const char* to_string(OuterBc bc) {
  return bc == OuterBc::FixedTail ? "fixed_tail" : "extrapolated";
}

struct FlowConfig {
  double cfl = 0.2;                // dt <= cfl * min (phi h)^2, curvature-capped
  double t_end = 1.0;
  double blowup_threshold = 1e6;   // abort when sup|Rm| exceeds this
  double eps = 0.0;                // heat companion level (0 disables)
  bool eps_auto = false;           // calibrate eps so the K_eps norm is within 5%
  int monitor_every = 100;         // steps between diagnostic rows
  int snapshot_every = 0;          // monitor samples between snapshots (0: ends only)
  OuterBc outer_bc = OuterBc::FixedTail;
};

struct StepStats {
  double last_dt = 0.0;
  double residual = kNaN;
  long steps = 0;
};

struct FlowState {
  double t = 0.0;
  RadialProfile profile;
  std::optional<Vec> u_eps;
  double eps_level = 0.0;
  StepStats stats;
};

struct FlowRates {
  Vec df, dphi;
  double sup_rm = 0.0;
};

namespace detail {
/// Nodes whose lapse is reconstructed from the warp after every stage.
inline constexpr std::size_t kSlaveWindow = 16;

/// Even least-squares model v(r) = a + b r^2 + c r^4 over the given nodes,
/// scaled for conditioning; interpolating, never extrapolating beyond data.
struct EvenQuarticFit {
  double a = 0, b = 0, c = 0, scale = 1.0;
  bool ok = false;
  double operator()(double r) const {
    const double z = (r / scale) * (r / scale);
    return a + z * (b + z * c);
  }
};

inline EvenQuarticFit fit_even_quartic(const Vec& r, const Vec& v, std::size_t lo,
                                       std::size_t hi) {
  EvenQuarticFit fit;
  fit.scale = std::max(1e-300, r[hi - 1]);
  double m11 = 0, m12 = 0, m13 = 0, m22 = 0, m23 = 0, m33 = 0, b1 = 0, b2 = 0, b3 = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double z = (r[i] / fit.scale) * (r[i] / fit.scale);
    const double z2 = z * z;
    m11 += 1.0;
    m12 += z;
    m13 += z2;
    m22 += z2;
    m23 += z * z2;
    m33 += z2 * z2;
    b1 += v[i];
    b2 += z * v[i];
    b3 += z2 * v[i];
  }
  try {
    const Vec coef = solve_dense({m11, m12, m13, m12, m22, m23, m13, m23, m33}, {b1, b2, b3});
    fit.a = coef[0];
    fit.b = coef[1];
    fit.c = coef[2];
    fit.ok = true;
  } catch (const std::exception&) {
  }
  return fit;
}

/// Same model with the centre value pinned: v(0) = a fixed, (b, c) free.
inline EvenQuarticFit fit_even_quartic_pinned(const Vec& r, const Vec& v, std::size_t lo,
                                              std::size_t hi, double pinned) {
  EvenQuarticFit fit;
  fit.scale = std::max(1e-300, r[hi - 1]);
  fit.a = pinned;
  double s22 = 0, s23 = 0, s33 = 0, t2 = 0, t3 = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double z = (r[i] / fit.scale) * (r[i] / fit.scale);
    const double z2 = z * z;
    const double y = v[i] - pinned;
    s22 += z * z;
    s23 += z * z2;
    s33 += z2 * z2;
    t2 += z * y;
    t3 += z2 * y;
  }
  const double det = s22 * s33 - s23 * s23;
  if (det == 0.0) return fit;
  fit.b = (t2 * s33 - t3 * s23) / det;
  fit.c = (s22 * t3 - s23 * t2) / det;
  fit.ok = true;
  return fit;
}

/// Project the near-axis warp onto its regular structure: f/r is an even
/// smooth function with value 1 at a regular centre (df/dr(0) = 1, preserved
/// by the flow). The bare grid admits two spurious amplifying modes here: a
/// conical one (f/r drifting off 1) and a Hardy-marginal irregular one. An
/// interpolating even fit of f/r, pinned to 1 at the centre and blended out
/// smoothly over the outer third of the window, excludes both without
/// imposing any rigid amplitude structure.
inline void slave_axis_warp(RadialProfile& p) {
  const std::size_t W = kSlaveWindow;
  const std::size_t hi = W + 10;
  if (p.nodes() < hi + 4) return;
  const Vec r = cumulative_integral(p.s, p.phi);
  Vec psi(hi, 0.0);
  for (std::size_t i = 1; i < hi; ++i) psi[i] = p.f[i] / r[i];
  const EvenQuarticFit fit = fit_even_quartic_pinned(r, psi, 1, hi, 1.0);
  if (!fit.ok) return;
  for (std::size_t i = 1; i <= W; ++i) {
    const double v = r[i] * fit(r[i]);
    if (!(v > 0.0)) return;
    double lambda = 1.0;  // blend weight: 1 in the core, 0 past the window
    if (i + 6 > W) {
      const double x = double(i - (W - 6)) / 7.0;
      lambda = std::cos(0.5 * kPi * x) * std::cos(0.5 * kPi * x);
    }
    p.f[i] = lambda * v + (1.0 - lambda) * p.f[i];
  }
  p.f[0] = 0.0;
}
}  // namespace detail

/// Component rates of dg/dt = -2 Ric on the frozen coordinate grid:
///   df/dt  = -f (nu2 + (n-2) nu1)   ( = f_rr - (n-2) f nu1 )
///   dphi/dt = -(n-1) nu2 phi.
/// The curvature fields carry the regularized origin limit, so the rates are
/// exactly zero on flat data and stay finite at the center.
inline FlowRates ricci_rates(const RadialProfile& p, OuterBc bc) {
  CurvatureField c = curvature(p);
  const std::size_t m = p.nodes();
  // Rates-path origin values: replace the fitted extrapolation by a flat
  // average of the adjacent honest nodes. The fit weights exceed one and
  // close an amplifying loop between the first free warp nodes and the
  // stencils that read them; the average damps that loop by an order of
  // magnitude and is still second-order consistent for even fields.
  if (m > 16) {
    for (Vec* field : {&c.nu1, &c.nu2}) {
      double mean = 0.0;
      for (std::size_t i = 3; i < 13; ++i) mean += (*field)[i];
      mean /= 10.0;
      for (std::size_t i = 0; i < 3; ++i) (*field)[i] = mean;
    }
  }
  FlowRates out;
  out.df.resize(m);
  out.dphi.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    out.df[i] = -p.f[i] * (c.nu2[i] + (p.n - 2) * c.nu1[i]);
    out.dphi[i] = -(p.n - 1) * c.nu2[i] * p.phi[i];
  }
  out.df[0] = 0.0;  // the origin is pinned
  if (bc == OuterBc::FixedTail) {
    out.df[m - 1] = 0.0;
    out.dphi[m - 1] = 0.0;
  }
  out.sup_rm = c.sup_rm();
  return out;
}

/// Stability-limited timestep: cfl * min((phi h)^2, 1/(1 + sup|Rm|)).
inline double adapt_dt(const FlowState& state, const FlowConfig& cfg) {
  const RadialProfile& p = state.profile;
  double cell = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < p.nodes(); ++i) {
    const double h = p.s[i + 1] - p.s[i];
    const double ph = 0.5 * (p.phi[i] + p.phi[i + 1]) * h;
    cell = std::min(cell, ph * ph);
  }
  const double sup_rm = curvature(p).sup_rm();
  return cfg.cfl * std::min(cell, 1.0 / (1.0 + sup_rm));
}

namespace detail {
inline void check_step_result(const RadialProfile& p) {
  for (std::size_t i = 0; i < p.nodes(); ++i) {
    if (!std::isfinite(p.f[i]) || !std::isfinite(p.phi[i]))
      throw std::runtime_error("flow: non-finite values after step");
    if (i >= 1 && !(p.f[i] > 0.0)) throw std::runtime_error("flow: warp lost positivity");
    if (!(p.phi[i] > 0.0)) throw std::runtime_error("flow: lapse lost positivity");
  }
}

inline double stability_cell(const RadialProfile& p) {
  double cell = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < p.nodes(); ++i) {
    const double h = p.s[i + 1] - p.s[i];
    const double ph = 0.5 * (p.phi[i] + p.phi[i + 1]) * h;
    cell = std::min(cell, ph * ph);
  }
  return cell;
}
}  // namespace detail

/// One explicit midpoint (RK2) step of the Ricci flow system. Throws on
/// stability violations and on loss of positivity.
inline FlowState ricci_step(const FlowState& state, double dt, OuterBc bc = OuterBc::FixedTail) {
  if (state.profile.n < 3) throw std::invalid_argument("ricci_step: flow requires n >= 3");
  if (!(dt > 0.0)) throw std::invalid_argument("ricci_step: dt must be positive");
  if (dt > 0.55 * detail::stability_cell(state.profile))
    throw std::invalid_argument("ricci_step: dt exceeds the stability bound");
  const RadialProfile& p = state.profile;
  const std::size_t m = p.nodes();
  // Each stage ends with the axis projection and a quartic-preserving
  // smoothing of the lapse. The lapse equation is a pointwise ODE with no
  // spatial damping of its own; the smoothing supplies it at O(h^5) per
  // step without introducing any seam between treated and free regions.
  auto finish_stage = [&](RadialProfile& q) {
    q.phi = smooth_quartic9(q.phi, /*even_origin=*/true);
    detail::slave_axis_warp(q);
    detail::check_step_result(q);
  };
  const FlowRates k1 = ricci_rates(p, bc);
  RadialProfile half = p;
  for (std::size_t i = 0; i < m; ++i) {
    half.f[i] = p.f[i] + 0.5 * dt * k1.df[i];
    half.phi[i] = p.phi[i] + 0.5 * dt * k1.dphi[i];
  }
  finish_stage(half);
  const FlowRates k2 = ricci_rates(half, bc);
  FlowState out = state;
  for (std::size_t i = 0; i < m; ++i) {
    out.profile.f[i] = p.f[i] + dt * k2.df[i];
    out.profile.phi[i] = p.phi[i] + dt * k2.dphi[i];
  }
  finish_stage(out.profile);
  out.t = state.t + dt;
  out.stats.last_dt = dt;
  out.stats.steps = state.stats.steps + 1;
  return out;
}

/// Radial Laplace-Beltrami operator in flux form,
///   Lu = (1/(phi f^{n-1})) d/ds ( (f^{n-1}/phi) du/ds ),
/// with the regular limit n u_rr at the center and a held outer node.
inline Vec laplace_beltrami(const RadialProfile& p, const Vec& u) {
  const std::size_t m = p.nodes();
  if (u.size() != m) throw std::invalid_argument("laplace_beltrami: size mismatch");
  Vec out(m, 0.0);
  auto flux_coef = [&](std::size_t i) {
    // interface value between nodes i and i+1
    const double fmid = 0.5 * (p.f[i] + p.f[i + 1]);
    const double pmid = 0.5 * (p.phi[i] + p.phi[i + 1]);
    return std::pow(fmid, p.n - 1) / pmid;
  };
  for (std::size_t i = 1; i + 1 < m; ++i) {
    const double hl = p.s[i] - p.s[i - 1];
    const double hr = p.s[i + 1] - p.s[i];
    const double Fl = flux_coef(i - 1) * (u[i] - u[i - 1]) / hl;
    const double Fr = flux_coef(i) * (u[i + 1] - u[i]) / hr;
    const double denom = p.phi[i] * std::pow(p.f[i], p.n - 1) * 0.5 * (hl + hr);
    out[i] = (Fr - Fl) / denom;
  }
  {
    // center: Lu -> n u_rr(0) for even u
    const double dr = 0.5 * (p.phi[0] + p.phi[1]) * (p.s[1] - p.s[0]);
    out[0] = p.n * 2.0 * (u[1] - u[0]) / (dr * dr);
  }
  out[m - 1] = 0.0;  // outer node held (quasi-static tail)
  return out;
}

/// Advance the heat companion by dt on the current metric, midpoint substeps
/// within the diffusion stability bound. The metric is frozen during the
/// substeps (first-order splitting against the metric evolution).
inline FlowState heat_step(const FlowState& state, double dt) {
  if (!state.u_eps) throw std::invalid_argument("heat_step: no heat field active");
  const RadialProfile& p = state.profile;
  const std::size_t m = p.nodes();
  // diffusion stability: dt_sub <= 0.4 / max diagonal of the operator
  double lam_max = 0.0;
  {
    auto coef = [&](std::size_t i) {
      const double fmid = 0.5 * (p.f[i] + p.f[i + 1]);
      const double pmid = 0.5 * (p.phi[i] + p.phi[i + 1]);
      return std::pow(fmid, p.n - 1) / pmid;
    };
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double hl = p.s[i] - p.s[i - 1];
      const double hr = p.s[i + 1] - p.s[i];
      const double denom = p.phi[i] * std::pow(p.f[i], p.n - 1) * 0.5 * (hl + hr);
      lam_max = std::max(lam_max, (coef(i - 1) / hl + coef(i) / hr) / denom);
    }
    const double dr = 0.5 * (p.phi[0] + p.phi[1]) * (p.s[1] - p.s[0]);
    lam_max = std::max(lam_max, 2.0 * p.n / (dr * dr));
  }
  const double dt_sub_max = 0.4 / std::max(lam_max, 1e-300);
  const int cycles = std::max(1, int(std::ceil(dt / dt_sub_max)));
  const double dts = dt / cycles;
  FlowState out = state;
  Vec& u = *out.u_eps;
  Vec half(m);
  for (int c = 0; c < cycles; ++c) {
    const Vec k1 = laplace_beltrami(p, u);
    for (std::size_t i = 0; i < m; ++i) half[i] = u[i] + 0.5 * dts * k1[i];
    const Vec k2 = laplace_beltrami(p, half);
    for (std::size_t i = 0; i < m; ++i) u[i] += dts * k2[i];
  }
  for (double v : u)
    if (!std::isfinite(v)) throw std::runtime_error("heat_step: non-finite heat field");
  return out;
}

/// Defect of one accepted step against dg/dt = -2 Ric, with the Ricci tensor
/// of the midpoint profile taken from the coordinate-assembly oracle:
/// sup-node over both metric components of (g_after - g_before)/dt + 2 Ric.
inline double ricci_residual(const FlowState& before, const FlowState& after, double dt) {
  const RadialProfile& pb = before.profile;
  const RadialProfile& pa = after.profile;
  if (pb.nodes() != pa.nodes()) throw std::invalid_argument("ricci_residual: grid mismatch");
  RadialProfile mid = pb;
  for (std::size_t i = 0; i < pb.nodes(); ++i) {
    mid.f[i] = 0.5 * (pb.f[i] + pa.f[i]);
    mid.phi[i] = 0.5 * (pb.phi[i] + pa.phi[i]);
  }
  const CurvatureField c = riemann_oracle(mid);
  double sup = 0.0;
  for (std::size_t i = 0; i < pb.nodes(); ++i) {
    const double gss_rate = (pa.phi[i] * pa.phi[i] - pb.phi[i] * pb.phi[i]) / dt;
    const double gtt_rate = (pa.f[i] * pa.f[i] - pb.f[i] * pb.f[i]) / dt;
    const double ric_ss = c.lam_rad[i] * mid.phi[i] * mid.phi[i];
    const double ric_tt = c.lam_sph[i] * mid.f[i] * mid.f[i];
    sup = std::max(sup, std::abs(gss_rate + 2.0 * ric_ss));
    sup = std::max(sup, std::abs(gtt_rate + 2.0 * ric_tt));
  }
  return sup;
}

/// Initial heat-companion data eps (1 + r^2)^{-(2+tau)/2}, the smoothed power
/// profile matching the declared curvature decay.
inline Vec heat_companion_initial(const RadialProfile& p, double eps) {
  const Vec r = arclength(p);
  Vec u(r.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    u[i] = eps * std::pow(1.0 + r[i] * r[i], -0.5 * (2.0 + p.tau));
  return u;
}

/// Calibrate eps so the K_eps norm exceeds the bare curvature norm by < 5%.
inline double calibrate_eps(const RadialProfile& p, const QuadratureOptions& quad = {}) {
  const CurvatureField curv = curvature(p);
  const double l = lp_curvature_norm(p, 0.5 * p.n, &curv, quad);
  if (!(l > 0.0)) return 0.0;
  double eps = 0.1 * curv.sup_rm();
  for (int iter = 0; iter < 60; ++iter) {
    const Vec u = heat_companion_initial(p, eps);
    Vec F(p.nodes());
    for (std::size_t i = 0; i < F.size(); ++i)
      F[i] = std::pow(curv.rm2[i] + u[i] * u[i], 0.25 * p.n);
    const double keps = std::pow(volume_integral(p, F, quad), 2.0 / p.n);
    if (keps <= 1.05 * l) return eps;
    eps *= 0.5;
  }
  return eps;
}

/// Drive the flow to t_end (or an abort event), evaluating the monitor set at
/// the configured cadence and recording rows, extra series, snapshots, and
/// events into a run record.
inline RunRecord run_flow(const RadialProfile& initial, const FlowConfig& cfg,
                          const MonitorSet& monitors = {}) {
  if (initial.n < 3) throw std::invalid_argument("run_flow: flow requires n >= 3");
  if (!(cfg.t_end > 0.0)) throw std::invalid_argument("run_flow: t_end must be positive");
  if (!(cfg.cfl > 0.0 && cfg.cfl < 1.0)) throw std::invalid_argument("run_flow: cfl in (0,1)");
  MonitorSet mon = monitors;
  if (mon.entropy && mon.entropy_L <= 0.0) mon.entropy_L = cfg.t_end + 1.0;

  RunRecord rec;
  rec.outer_bc_name = to_string(cfg.outer_bc);
  FlowState state;
  state.profile = initial;
  const double eps = cfg.eps_auto ? calibrate_eps(initial, mon.quad) : cfg.eps;
  if (eps > 0.0) {
    state.u_eps = heat_companion_initial(initial, eps);
    state.eps_level = eps;
  }

  long monitor_samples = 0;
  auto do_monitor = [&](double dt_now) {
    const bool entropy_now = mon.entropy && (monitor_samples % std::max(1, mon.entropy_every) == 0);
    DiagnosticsRow row = evaluate_row(state.profile, state.u_eps ? &*state.u_eps : nullptr,
                                      state.t, dt_now, mon, entropy_now, &rec);
    // decay milestone events, from the previous row to this one
    if (!rec.rows.empty()) {
      const double prev = rec.rows.back().t_sup_rm;
      for (double level : mon.decay_milestones)
        if ((prev - level) * (row.t_sup_rm - level) < 0.0)
          rec.events.push_back({"decay_milestone", state.t, level});
    }
    rec.rows.push_back(row);
    ++monitor_samples;
    if (cfg.snapshot_every > 0 && (monitor_samples - 1) % cfg.snapshot_every == 0)
      rec.snapshots.emplace_back(state.t, state.profile);
    return row;
  };

  rec.snapshots.emplace_back(0.0, state.profile);
  DiagnosticsRow row0 = do_monitor(0.0);
  if (row0.sup_rm > cfg.blowup_threshold) {
    rec.events.push_back({"blowup", 0.0, row0.sup_rm});
    rec.status = FlowStatus::Blowup;
    return rec;
  }

  FlowState before_monitor_step = state;
  const double dt_floor = cfg.t_end * 1e-14;
  while (state.t < cfg.t_end) {
    double dt = adapt_dt(state, cfg);
    if (!(dt > dt_floor)) {
      rec.events.push_back({"stability_abort", state.t, dt});
      rec.status = FlowStatus::StabilityAbort;
      break;
    }
    dt = std::min(dt, cfg.t_end - state.t);
    const bool monitor_after =
        ((state.stats.steps + 1) % std::max(1, cfg.monitor_every) == 0) ||
        (state.t + dt >= cfg.t_end);
    if (monitor_after) before_monitor_step = state;
    FlowState next;
    try {
      next = ricci_step(state, dt, cfg.outer_bc);
      if (next.u_eps) next = heat_step(next, dt);
    } catch (const std::exception& e) {
      rec.events.push_back({std::string("stability_abort: ") + e.what(), state.t, dt});
      rec.status = FlowStatus::StabilityAbort;
      break;
    }
    if (state.u_eps) {
      double sup_before = 0.0, sup_after = 0.0;
      for (double v : *state.u_eps) sup_before = std::max(sup_before, v);
      for (double v : *next.u_eps) sup_after = std::max(sup_after, v);
      if (sup_after > sup_before * (1.0 + 1e-12))
        rec.events.push_back({"heat_max_principle_violation", next.t, sup_after - sup_before});
    }
    state = next;
    rec.steps = state.stats.steps;
    rec.last_dt = dt;
    if (monitor_after) {
      const DiagnosticsRow row = do_monitor(dt);
      rec.final_residual = ricci_residual(before_monitor_step, state, dt);
      if (row.sup_rm > cfg.blowup_threshold) {
        rec.events.push_back({"blowup", state.t, row.sup_rm});
        rec.status = FlowStatus::Blowup;
        break;
      }
    }
  }
  rec.snapshots.emplace_back(state.t, state.profile);
  return rec;
}

}  // namespace ricci
