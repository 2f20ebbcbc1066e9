#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ricci/functionals.hpp"
#include "ricci/oracle.hpp"

namespace ricci {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// One time sample of every monitored scalar. Column order is fixed by the
/// run-record CSV format.
struct DiagnosticsRow {
  double t = 0.0;
  double dt = 0.0;
  double sup_rm = 0.0;
  double t_sup_rm = 0.0;
  double l_n2 = 0.0;     // (int |Rm|^{n/2} dV)^{2/n}
  double l_q = 0.0;      // (int |Rm|^q dV)^{1/q}, q = (n/2) n/(n-2)
  double chi = 0.0;      // sobolev_lb * l_n2
  double sobolev_lb = 0.0;
  double mu_star = kNaN;     // scale-coupled entropy estimate, when monitored
  double e1 = kNaN, e2 = kNaN;  // neck contents, when a minimal sphere exists
  double min_sphere = 0.0;      // count of detected minimal hypersphere radii
  double cgb = kNaN;            // n=4 integral identity residual
  double mass = kNaN;
  double keps_n2 = kNaN;        // (int K_eps^{n/2} dV)^{2/n}, when active
};

inline const char* diagnostics_csv_header() {
  return "t,dt,sup_rm,t_sup_rm,l_n2,l_q,chi,sobolev_lb,mu_star,e1,e2,min_sphere,cgb,mass,keps_n2";
}

inline std::string to_csv_line(const DiagnosticsRow& r) {
  const double cols[] = {r.t,   r.dt, r.sup_rm, r.t_sup_rm,  r.l_n2, r.l_q, r.chi, r.sobolev_lb,
                         r.mu_star, r.e1, r.e2, r.min_sphere, r.cgb, r.mass, r.keps_n2};
  std::ostringstream os;
  for (std::size_t i = 0; i < std::size(cols); ++i) {
    if (i) os << ",";
    os << format17(cols[i]);
  }
  return os.str();
}

struct Event {
  std::string type;
  double t = 0.0;
  double value = 0.0;
};

enum class FlowStatus { Ok, Blowup, StabilityAbort };

inline const char* to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::Ok: return "ok";
    case FlowStatus::Blowup: return "blowup";
    case FlowStatus::StabilityAbort: return "stability_abort";
  }
  return "unknown";
}

/// Everything a flow run leaves behind: diagnostic rows at monitor cadence,
/// named auxiliary series, profile snapshots, and run-level events.
struct RunRecord {
  std::vector<DiagnosticsRow> rows;
  std::map<std::string, Vec> extras;
  std::vector<std::pair<double, RadialProfile>> snapshots;
  std::vector<Event> events;
  FlowStatus status = FlowStatus::Ok;
  std::string outer_bc_name;
  long steps = 0;
  double last_dt = 0.0;
  double final_residual = kNaN;

  Vec row_times() const {
    Vec t;
    for (const auto& r : rows) t.push_back(r.t);
    return t;
  }
  Vec column(double DiagnosticsRow::* field) const {
    Vec v;
    for (const auto& r : rows) v.push_back(r.*field);
    return v;
  }
};

/// Which functionals a run evaluates at monitor cadence.
struct MonitorSet {
  BatterySpec battery;
  QuadratureOptions quad;
  bool entropy = false;
  double entropy_L = 0.0;  // tau(t) = L - t; 0 resolves to t_end + 1
  int entropy_every = 10;  // entropy cadence, in monitor samples
  bool weighted_ratio = false;
  Vec budget_alphas;       // record budget integrals for these exponents
  Vec decay_milestones;    // event when t * sup|Rm| crosses a level
  bool spheres = true;     // minimal-hypersphere detection + neck contents
  std::vector<std::function<void(const RadialProfile&, double, RunRecord&)>> hooks;
};

/// Evaluate one full diagnostics row (plus any extra series) for a profile.
inline DiagnosticsRow evaluate_row(const RadialProfile& p, const Vec* u_eps, double t, double dt,
                                   const MonitorSet& mon, bool do_entropy, RunRecord* record) {
  DiagnosticsRow row;
  row.t = t;
  row.dt = dt;
  const CurvatureField curv = curvature(p);
  row.sup_rm = curv.sup_rm();
  row.t_sup_rm = t * row.sup_rm;
  row.l_n2 = lp_curvature_norm(p, 0.5 * p.n, &curv, mon.quad);
  const double q = 0.5 * p.n * p.n / (p.n - 2.0);
  row.l_q = lp_curvature_norm(p, q, &curv, mon.quad);
  const auto battery = make_battery(p, mon.battery);
  row.sobolev_lb = sobolev_estimate(p, battery, mon.quad).value;
  row.chi = row.sobolev_lb * row.l_n2;
  if (mon.spheres) {
    const Vec radii = detect_minimal_hyperspheres(p);
    row.min_sphere = double(radii.size());
    if (!radii.empty()) {
      try {
        const NeckContent nc = e1_e2(p, radii.front(), &curv);
        row.e1 = nc.e1;
        row.e2 = nc.e2;
      } catch (const std::exception&) {
        // candidate region not resolvable; leave the columns absent
      }
    }
  }
  if (p.n == 4) row.cgb = cgb_residual(p, &curv, mon.quad).residual;
  {
    const MassFit mf = adm_mass(p);
    row.mass = mf.mass;
  }
  if (u_eps) {
    Vec F(p.nodes());
    for (std::size_t i = 0; i < F.size(); ++i) {
      const double K2 = curv.rm2[i] + (*u_eps)[i] * (*u_eps)[i];
      F[i] = std::pow(K2, 0.25 * p.n);
    }
    const double I = volume_integral(p, F, mon.quad);
    row.keps_n2 = I > 0.0 ? std::pow(I, 2.0 / p.n) : 0.0;
  }
  if (do_entropy && mon.entropy) {
    const double tau = mon.entropy_L - t;
    if (tau > 0.0) {
      const MuStarResult mu = mu_star_estimate(p, tau);
      // scale-coupled entropy mu(g, tau) = mu* - n - (n/2) log(4 pi tau)
      row.mu_star = mu.value - p.n - 0.5 * p.n * std::log(4.0 * kPi * tau);
      if (record) record->extras["mu_star_raw"].push_back(mu.value);
    }
  }
  if (record) {
    if (mon.weighted_ratio)
      record->extras["weighted_ratio_max"].push_back(
          weighted_ratio_battery_max(p, battery, &curv, mon.quad));
    for (double alpha : mon.budget_alphas) {
      Vec f2a(p.nodes()), f2a1(p.nodes()), w(p.nodes());
      for (std::size_t i = 0; i < p.nodes(); ++i) {
        f2a[i] = std::pow(curv.rm2[i], alpha);
        f2a1[i] = std::pow(curv.rm2[i], alpha + 0.5);
        w[i] = std::pow(curv.rm2[i], 0.5 * alpha);
      }
      const Vec ws = deriv1(p.s, w);
      Vec g2(p.nodes());
      for (std::size_t i = 0; i < p.nodes(); ++i) {
        const double wr = ws[i] / p.phi[i];
        g2[i] = wr * wr;
      }
      const std::string tag = format17(alpha);
      record->extras["budget_int2a_" + tag].push_back(volume_integral(p, f2a, mon.quad));
      record->extras["budget_grad_" + tag].push_back(volume_integral(p, g2, mon.quad));
      record->extras["budget_int2a1_" + tag].push_back(volume_integral(p, f2a1, mon.quad));
    }
    for (const auto& hook : mon.hooks) hook(p, t, *record);
  }
  return row;
}

// ---------------------------------------------------------------------------
// Series checks and post-run reports
// ---------------------------------------------------------------------------

struct MonotoneReport {
  bool ok = true;
  std::size_t violations = 0;
  double worst = 0.0;   // largest increase beyond slack
  double slack = 0.0;
};

/// Check that a sampled series is non-increasing up to the declared slack:
/// quadrature tolerance plus 10 * dt_step * max |d v / d t| of the series.
inline MonotoneReport monotone_nonincreasing(const Vec& t, const Vec& v, double dt_step) {
  MonotoneReport rep;
  if (t.size() != v.size() || v.size() < 2) return rep;
  double scale = 0.0, dmax = 0.0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    scale = std::max(scale, std::abs(v[k]));
    const double dtk = t[k + 1] - t[k];
    if (dtk > 0.0) dmax = std::max(dmax, std::abs(v[k + 1] - v[k]) / dtk);
  }
  rep.slack = 1e-9 * std::max(1.0, scale) + 10.0 * dt_step * dmax;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    const double excess = v[k + 1] - v[k] - rep.slack;
    if (excess > 0.0) {
      ++rep.violations;
      rep.worst = std::max(rep.worst, excess);
      rep.ok = false;
    }
  }
  return rep;
}

struct BudgetSample {
  double t = 0.0;
  double ddt = 0.0;        // d/dt int |Rm|^{2 alpha} dV, centered differences
  double grad_term = 0.0;  // int |grad |Rm|^alpha|^2 dV
  double reaction = 0.0;   // int |Rm|^{2 alpha + 1} dV
  bool bound_ok = true;    // ddt <= (16 alpha + n) * reaction + slack
};

/// Evolution budget of the curvature power integrals, from the recorded
/// series. The companion bound uses the orthonormal-norm constant
/// C2 = 16 alpha + n (16 from the pointwise evolution inequality, n from
/// |R| <= n |Rm| in this convention).
inline std::vector<BudgetSample> evolution_budget(const RunRecord& rec, double alpha, int n) {
  if (!(alpha >= std::max(1.0, 0.25 * n)))
    throw std::invalid_argument("evolution_budget: alpha below max(1, n/4)");
  const std::string tag = format17(alpha);
  const auto it2a = rec.extras.find("budget_int2a_" + tag);
  const auto itg = rec.extras.find("budget_grad_" + tag);
  const auto it2a1 = rec.extras.find("budget_int2a1_" + tag);
  if (it2a == rec.extras.end() || itg == rec.extras.end() || it2a1 == rec.extras.end())
    throw std::invalid_argument("evolution_budget: series not recorded for this alpha");
  const Vec t = rec.row_times();
  const Vec& I = it2a->second;
  if (I.size() < 3) throw std::invalid_argument("evolution_budget: need at least 3 samples");
  std::vector<BudgetSample> out;
  const double C2 = 16.0 * alpha + n;
  double scale = 0.0;
  for (double v : I) scale = std::max(scale, std::abs(v));
  for (std::size_t k = 1; k + 1 < I.size(); ++k) {
    BudgetSample b;
    b.t = t[k];
    b.ddt = (I[k + 1] - I[k - 1]) / (t[k + 1] - t[k - 1]);
    b.grad_term = itg->second[k];
    b.reaction = it2a1->second[k];
    b.bound_ok = b.ddt <= C2 * b.reaction + 1e-9 * std::max(1.0, scale);
    out.push_back(b);
  }
  return out;
}

struct DecayReport {
  bool conclusive = false;
  std::string note;
  bool all_zero = false;
  double slope_sup_rm = 0.0;  // log-log slope over the final decade
  double slope_l_q = 0.0;
  bool t_sup_rm_decreasing = false;
  double envelope_c1 = 0.0, envelope_c2 = 0.0;
  bool envelope_ok = false;
};

/// Late-time decay summary over the final decade of the run: fitted slopes,
/// whether t sup|Rm| decreases, and whether sup|Rm|^2 stays below the
/// envelope max(C1 t^{-2(n-2)/n}, C2 t^{4(n-2)/n^2}) with constants fitted on
/// the first half of the decade and tested on the second.
inline DecayReport decay_report(const RunRecord& rec, int n) {
  DecayReport rep;
  const Vec t = rec.row_times();
  const Vec sup = rec.column(&DiagnosticsRow::sup_rm);
  const Vec lq = rec.column(&DiagnosticsRow::l_q);
  if (t.size() < 8 || t.back() <= 0.0) {
    rep.note = "insufficient samples";
    return rep;
  }
  double sup_max = 0.0;
  for (double v : sup) sup_max = std::max(sup_max, v);
  if (sup_max < 1e-14) {
    rep.conclusive = true;
    rep.all_zero = true;
    rep.t_sup_rm_decreasing = true;
    rep.envelope_ok = true;
    rep.note = "curvature identically zero";
    return rep;
  }
  const double t_lo = t.back() / 10.0;
  Vec td, supd, lqd, tsup;
  for (std::size_t k = 0; k < t.size(); ++k)
    if (t[k] >= t_lo) {
      td.push_back(t[k]);
      supd.push_back(sup[k]);
      lqd.push_back(lq[k]);
      tsup.push_back(t[k] * sup[k]);
    }
  if (td.size() < 6 || td.front() > 2.0 * t_lo) {
    rep.note = "final decade underresolved";
    return rep;
  }
  rep.conclusive = true;
  rep.slope_sup_rm = fit_power(td, supd).slope;
  rep.slope_l_q = fit_power(td, lqd).slope;
  rep.t_sup_rm_decreasing = true;
  double tsup_scale = 0.0;
  for (double v : tsup) tsup_scale = std::max(tsup_scale, v);
  for (std::size_t k = 0; k + 1 < tsup.size(); ++k)
    if (tsup[k + 1] > tsup[k] + 1e-9 * tsup_scale) rep.t_sup_rm_decreasing = false;
  const double ea = -2.0 * (n - 2.0) / n;
  const double eb = 4.0 * (n - 2.0) / (n * n);
  const std::size_t half = td.size() / 2;
  for (std::size_t k = 0; k < half; ++k) {
    rep.envelope_c1 = std::max(rep.envelope_c1, supd[k] * supd[k] / std::pow(td[k], ea));
    rep.envelope_c2 = std::max(rep.envelope_c2, supd[k] * supd[k] / std::pow(td[k], eb));
  }
  rep.envelope_ok = true;
  for (std::size_t k = half; k < td.size(); ++k) {
    const double env = std::max(rep.envelope_c1 * std::pow(td[k], ea),
                                rep.envelope_c2 * std::pow(td[k], eb));
    if (supd[k] * supd[k] > env * (1.0 + 1e-9)) rep.envelope_ok = false;
  }
  return rep;
}

}  // namespace ricci
