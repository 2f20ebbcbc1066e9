#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ricci/neck.hpp"
#include "ricci/numerics.hpp"

namespace ricci {

/// max(E1, E2) of the neck curve; +inf when the constraints fail, so
/// derivative-free search simply avoids inadmissible parameter vectors.
inline double neck_objective(const NeckProfileParams& params, int n, std::size_t points = 2001) {
  const NeckCurve curve = eval_neck(params, points);
  if (!curve.admissible) return std::numeric_limits<double>::infinity();
  const NeckEnergies e = neck_energies(curve, n);
  return std::max(e.e1, e.e2);
}

/// Default end-value ceiling: the D with (D^2-1)^{n/2}/D = 1, above which the
/// first curvature content alone already exceeds one.
inline double default_neck_ceiling(int n) {
  return bisect([&](double D) { return 0.5 * n * std::log(D * D - 1.0) - std::log(D); },
                1.0 + 1e-8, 50.0);
}

/// Re-express latent controls in a basis of different dimension by resampling
/// the latent interpolant at the new knots.
inline NeckProfileParams resample_latent(const NeckProfileParams& p, std::size_t new_dim) {
  if (p.latent.size() == new_dim) return p;
  const std::size_t k = p.latent.size();
  Vec knots(k + 2), vals(k + 2);
  for (std::size_t i = 0; i < k + 2; ++i) knots[i] = double(i) / double(k + 1);
  vals.front() = 1.0;
  for (std::size_t i = 0; i < k; ++i) vals[i + 1] = p.latent[i];
  vals.back() = 0.0;
  const Pchip v(knots, vals);
  NeckProfileParams out;
  out.latent.resize(new_dim);
  for (std::size_t i = 0; i < new_dim; ++i)
    out.latent[i] = v(double(i + 1) / double(new_dim + 1));
  return out;
}

// ---------------------------------------------------------------------------
// Derivative-free minimization (Nelder-Mead simplex with restarts)
// ---------------------------------------------------------------------------

namespace detail {
struct NelderMeadResult {
  Vec x;
  double value = std::numeric_limits<double>::infinity();
  long evaluations = 0;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& fn, Vec x0,
                                    double scale, int max_iter) {
  const std::size_t d = x0.size();
  NelderMeadResult res;
  std::vector<std::pair<double, Vec>> simplex;
  auto eval = [&](const Vec& x) {
    ++res.evaluations;
    return fn(x);
  };
  simplex.emplace_back(eval(x0), x0);
  for (std::size_t j = 0; j < d; ++j) {
    Vec x = x0;
    x[j] += scale;
    simplex.emplace_back(eval(x), x);
  }
  auto order = [&] {
    std::sort(simplex.begin(), simplex.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  };
  order();
  for (int it = 0; it < max_iter; ++it) {
    order();
    const double spread = simplex.back().first - simplex.front().first;
    if (spread < 1e-12 * (1.0 + std::abs(simplex.front().first))) break;
    Vec centroid(d, 0.0);
    for (std::size_t k = 0; k + 1 < simplex.size(); ++k)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[k].second[j];
    for (double& c : centroid) c /= double(d);
    const Vec& worst = simplex.back().second;
    auto blend = [&](double t) {
      Vec x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = centroid[j] + t * (centroid[j] - worst[j]);
      return x;
    };
    const Vec xr = blend(1.0);
    const double fr = eval(xr);
    if (fr < simplex.front().first) {
      const Vec xe = blend(2.0);
      const double fe = eval(xe);
      simplex.back() = fe < fr ? std::make_pair(fe, xe) : std::make_pair(fr, xr);
    } else if (fr < simplex[simplex.size() - 2].first) {
      simplex.back() = {fr, xr};
    } else {
      const Vec xc = blend(fr < simplex.back().first ? 0.5 : -0.5);
      const double fc = eval(xc);
      if (fc < std::min(fr, simplex.back().first)) {
        simplex.back() = {fc, xc};
      } else {
        // shrink toward the best vertex
        for (std::size_t k = 1; k < simplex.size(); ++k) {
          for (std::size_t j = 0; j < d; ++j)
            simplex[k].second[j] =
                0.5 * (simplex[k].second[j] + simplex.front().second[j]);
          simplex[k].first = eval(simplex[k].second);
        }
      }
    }
  }
  order();
  res.x = simplex.front().second;
  res.value = simplex.front().first;
  return res;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Search driver
// ---------------------------------------------------------------------------

struct C1SearchConfig {
  int basis_controls = 4;   // latent dimension used by descent
  int sweep_controls = 3;   // latent dimension of the brute-force sweep (<= 3)
  int sweep_points = 13;    // grid points per sweep axis
  double sweep_lo = 0.05;
  double sweep_hi = 1.4;
  int multistarts = 8;
  int budget = 400;         // simplex iterations per start
  std::size_t eval_points = 2001;
  double ceiling = 0.0;     // E2-chain ceiling C1(n); 0 resolves to the default
  unsigned long long seed = 12345;
};

struct SweepRow {
  Vec theta;
  double e1 = 0.0, e2 = 0.0, objective = 0.0;
};

struct C1Estimate {
  int n = 0;
  double value = std::numeric_limits<double>::infinity();  // upper bound on the infimum
  NeckProfileParams best;
  double sweep_minimum = std::numeric_limits<double>::infinity();
  NeckProfileParams sweep_best;
  long evaluations = 0;
  std::vector<SweepRow> sweep;
};

/// Upper-bound estimate of the minimal curvature content over admissible neck
/// profiles: a coarse brute-force sweep over a low-dimensional control family
/// (the cross-validation oracle), then multistart simplex descent in the full
/// basis, seeded from the sweep optimum so the descent can only improve on it.
inline C1Estimate estimate_cn(int n, const C1SearchConfig& cfg = {}) {
  if (n < 2) throw std::invalid_argument("estimate_cn: requires n >= 2");
  if (cfg.sweep_controls < 1 || cfg.sweep_controls > 3)
    throw std::invalid_argument("estimate_cn: sweep_controls must be in [1,3]");
  if (cfg.basis_controls < 1 || cfg.basis_controls > 16)
    throw std::invalid_argument("estimate_cn: basis_controls must be in [1,16]");
  C1Estimate out;
  out.n = n;

  // Brute-force sweep.
  const int k = cfg.sweep_controls;
  const int P = std::max(2, cfg.sweep_points);
  long cells = 1;
  for (int j = 0; j < k; ++j) cells *= P;
  out.sweep.resize(std::size_t(cells));
  parallel_for(std::size_t(cells), [&](std::size_t cell) {
    SweepRow row;
    row.theta.resize(k);
    long rem = long(cell);
    for (int j = 0; j < k; ++j) {
      const int idx = int(rem % P);
      rem /= P;
      row.theta[j] = cfg.sweep_lo + (cfg.sweep_hi - cfg.sweep_lo) * double(idx) / (P - 1);
    }
    NeckProfileParams p{row.theta};
    const NeckCurve curve = eval_neck(p, cfg.eval_points);
    if (curve.admissible) {
      const NeckEnergies e = neck_energies(curve, n);
      row.e1 = e.e1;
      row.e2 = e.e2;
      row.objective = std::max(e.e1, e.e2);
    } else {
      row.objective = std::numeric_limits<double>::infinity();
    }
    out.sweep[cell] = std::move(row);
  });
  out.evaluations += cells;
  for (const auto& row : out.sweep) {
    if (row.objective < out.sweep_minimum) {
      out.sweep_minimum = row.objective;
      out.sweep_best.latent = row.theta;
    }
  }
  if (!std::isfinite(out.sweep_minimum))
    throw std::invalid_argument("estimate_cn: every sweep cell infeasible");

  // Multistart descent in the full basis.
  const std::size_t d = std::size_t(cfg.basis_controls);
  auto objective = [&](const Vec& x) {
    return neck_objective(NeckProfileParams{x}, n, cfg.eval_points);
  };
  std::vector<Vec> starts;
  starts.push_back(resample_latent(out.sweep_best, d).latent);
  {
    // linear ramp from 1 to 0, a feasible generic start
    Vec ramp(d);
    for (std::size_t j = 0; j < d; ++j)
      ramp[j] = 1.0 - 0.9 * double(j + 1) / double(d + 1);
    starts.push_back(std::move(ramp));
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> uni(cfg.sweep_lo, cfg.sweep_hi);
  while (int(starts.size()) < std::max(1, cfg.multistarts)) {
    Vec x(d);
    for (auto& v : x) v = uni(rng);
    starts.push_back(std::move(x));
  }
  std::vector<detail::NelderMeadResult> results(starts.size());
  parallel_for(starts.size(), [&](std::size_t si) {
    if (cfg.budget > 0)
      results[si] = detail::nelder_mead(objective, starts[si], 0.15, cfg.budget);
    else {
      results[si].x = starts[si];
      results[si].value = objective(starts[si]);
      results[si].evaluations = 1;
    }
  });
  out.value = out.sweep_minimum;
  out.best = out.sweep_best;
  for (const auto& r : results) {
    out.evaluations += r.evaluations;
    if (r.value < out.value) {
      out.value = r.value;
      out.best.latent = r.x;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Analytic lower-bound chains
// ---------------------------------------------------------------------------

struct BoundCheck {
  std::string name;
  double bound = 0.0;
  double value = 0.0;
  bool ok = false;
};

struct WitnessReport {
  double d_end = 0.0;          // D = g(1)
  double int_dg2 = 0.0;        // int (g')^2
  double boundary_term = 0.0;  // [g' g^{(n-2)/n}] from 0 to 1
  double e1 = 0.0, e2 = 0.0;
  double ceiling = 0.0;
  bool e2_chain_applicable = false;
  std::vector<BoundCheck> checks;
  bool all_ok() const {
    for (const auto& c : checks)
      if (!c.ok) return false;
    return true;
  }
};

/// Evaluate the analytic intermediate bounds on E1 and E2 for one admissible
/// profile and compare each against its quadrature counterpart:
///   E1 >= (1/D) int |1-(g')^2|^{n/2} >= (1/D) |int (g')^2 - 1|^{n/2}
///      >= (1/D) (D^2-1)^{n/2}                      (the last when D >= 1)
///   E2 >= |int g'' g^{(n-2)/n}|^{n/2}
///      >= ((n-2)/n)^{n/2} (1/C1) (int (g')^2)^{n/2}  (when D <= C1, n > 2).
inline WitnessReport lower_bound_witness(const NeckProfileParams& params, int n,
                                         double ceiling = 0.0) {
  const NeckCurve c = eval_neck(params, 4001);
  if (!c.admissible) throw std::invalid_argument("lower_bound_witness: " + c.reason);
  WitnessReport rep;
  rep.ceiling = ceiling > 0.0 ? ceiling : default_neck_ceiling(n);
  const NeckEnergies e = neck_energies(c, n);
  rep.e1 = e.e1;
  rep.e2 = e.e2;
  rep.d_end = c.end_value;
  const double p = 0.5 * n;
  const std::size_t m = c.x.size();

  Vec dg2(m), absdev(m);
  for (std::size_t i = 0; i < m; ++i) {
    dg2[i] = c.dg[i] * c.dg[i];
    absdev[i] = std::pow(std::abs(1.0 - dg2[i]), p);
  }
  rep.int_dg2 = integrate(c.x, dg2);
  const double int_absdev = integrate(c.x, absdev);
  const double beta = (n - 2.0) / n;
  rep.boundary_term = c.dg.back() * std::pow(c.g.back(), beta) -
                      c.dg.front() * std::pow(c.g.front(), beta);

  const double tol = 1e-8;
  auto push = [&](const std::string& name, double bound, double value) {
    rep.checks.push_back({name, bound, value, bound <= value + tol * (1.0 + std::abs(value))});
  };

  const double b1a = int_absdev / rep.d_end;
  const double b1b = std::pow(std::abs(rep.int_dg2 - 1.0), p) / rep.d_end;
  push("e1_mean_bound <= e1", b1a, rep.e1);
  push("e1_jensen <= e1_mean_bound", b1b, b1a);
  if (rep.d_end >= 1.0)
    push("e1_endpoint <= e1_jensen",
         std::pow(rep.d_end * rep.d_end - 1.0, p) / rep.d_end, b1b);

  rep.e2_chain_applicable = (n > 2) && (rep.d_end <= rep.ceiling);
  if (rep.e2_chain_applicable) {
    Vec ipb(m);
    for (std::size_t i = 0; i < m; ++i) ipb[i] = c.d2g[i] * std::pow(c.g[i], beta);
    ipb[0] = 0.0;  // g^beta -> 0 at the pinned origin for n > 2
    const double b2a = std::pow(std::abs(integrate(c.x, ipb)), p);
    const double b2c = std::pow(beta, p) / rep.ceiling * std::pow(rep.int_dg2, p);
    push("e2_jensen <= e2", b2a, rep.e2);
    push("e2_gradient <= e2_jensen", b2c, b2a);
    push("e2_gradient <= e2", b2c, rep.e2);
  }
  return rep;
}

}  // namespace ricci
