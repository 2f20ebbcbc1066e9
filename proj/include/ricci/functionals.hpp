#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ricci/curvature.hpp"
#include "ricci/numerics.hpp"
#include "ricci/profile.hpp"

namespace ricci {

struct QuadratureOptions {
  bool tail_correction = true;
};

/// Integral of a nodal scalar over the manifold:
///   omega_{n-1} * int F phi f^{n-1} ds,
/// with an optional analytic power-law continuation of the integrand past the
/// last node.
inline double volume_integral(const RadialProfile& p, const Vec& F,
                              const QuadratureOptions& opts = {}) {
  const std::size_t m = p.nodes();
  if (F.size() != m) throw std::invalid_argument("volume_integral: size mismatch");
  Vec G(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double fn1 = std::pow(p.f[i], p.n - 1);
    G[i] = F[i] * p.phi[i] * fn1;
    if (!std::isfinite(G[i])) throw std::invalid_argument("volume_integral: non-finite integrand");
  }
  double val = integrate(p.s, G);
  if (opts.tail_correction) val += tail_correction(p.s, G);
  return unit_sphere_area(p.n) * val;
}

/// (int |Rm|^p dV)^{1/p}. Rejects exponents below the tail-convergence
/// threshold n/(2+tau) of the declared decay order.
inline double lp_curvature_norm(const RadialProfile& p, double pexp,
                                const CurvatureField* curv = nullptr,
                                const QuadratureOptions& opts = {}) {
  if (!(pexp >= 1.0)) throw std::invalid_argument("lp_curvature_norm: exponent must be >= 1");
  const double p_min = double(p.n) / (2.0 + p.tau);
  if (pexp < p_min - 1e-12)
    throw std::invalid_argument("lp_curvature_norm: exponent below tail convergence threshold");
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  Vec F(p.nodes());
  for (std::size_t i = 0; i < F.size(); ++i) F[i] = std::pow(curv->rm2[i], 0.5 * pexp);
  const double I = volume_integral(p, F, opts);
  return I > 0.0 ? std::pow(I, 1.0 / pexp) : 0.0;
}

// ---------------------------------------------------------------------------
// Test functions and Rayleigh machinery
// ---------------------------------------------------------------------------

struct TestFunction {
  Vec u;
  std::string label;
};

struct BatterySpec {
  int bubbles = 24;           // Aubin-Talenti profiles (1+(r/b)^2)^{-(n-2)/2}
  double b_lo_frac = 0.02;    // bubble widths, log-spaced fractions of r_max
  double b_hi_frac = 0.25;
  int gaussians = 8;          // exp(-(r/b)^2), same width ladder
  int bumps = 4;              // compactly supported smooth plateaus
};

inline std::vector<TestFunction> make_battery(const RadialProfile& p, const BatterySpec& spec) {
  std::vector<TestFunction> out;
  const Vec r = arclength(p);
  const double rmax = r.back();
  auto widths = [&](int count) {
    Vec b(count);
    for (int k = 0; k < count; ++k) {
      const double t = count == 1 ? 0.5 : double(k) / (count - 1);
      b[k] = rmax * spec.b_lo_frac * std::pow(spec.b_hi_frac / spec.b_lo_frac, t);
    }
    return b;
  };
  for (double b : widths(spec.bubbles)) {
    TestFunction tf;
    tf.label = "bubble b=" + format17(b);
    tf.u.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double z = r[i] / b;
      tf.u[i] = std::pow(1.0 + z * z, -0.5 * (p.n - 2));
    }
    out.push_back(std::move(tf));
  }
  for (double b : widths(spec.gaussians)) {
    TestFunction tf;
    tf.label = "gaussian b=" + format17(b);
    tf.u.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double z = r[i] / b;
      tf.u[i] = std::exp(-z * z);
    }
    out.push_back(std::move(tf));
  }
  for (int k = 0; k < spec.bumps; ++k) {
    // smooth plateau supported on [0, 0.8 R], shrinking with k
    const double R = 0.8 * rmax * std::pow(0.5, k);
    TestFunction tf;
    tf.label = "plateau R=" + format17(R);
    tf.u.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double z = r[i] / R;
      tf.u[i] = z < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - z * z)) : 0.0;
    }
    out.push_back(std::move(tf));
  }
  return out;
}

/// The integral ingredients of every Sobolev-type quantity for one function.
struct RayleighTerms {
  double lq_sq = 0.0;    // ||u||^2_{2n/(n-2)}
  double grad = 0.0;     // int |grad u|^2 dV
  double l2 = 0.0;       // int u^2 dV
  double rplus = 0.0;    // int R^+ u^2 dV
  double r_weighted = 0.0;  // int R u^2 dV
};

inline RayleighTerms rayleigh_terms(const RadialProfile& p, const Vec& u,
                                    const CurvatureField* curv = nullptr,
                                    const QuadratureOptions& opts = {}) {
  const std::size_t m = p.nodes();
  if (u.size() != m) throw std::invalid_argument("rayleigh_terms: size mismatch");
  const Vec us = deriv1(p.s, u);
  Vec uq(m), g2(m), u2(m), ru2(m), rpu2(m);
  const double q = 2.0 * p.n / (p.n - 2);
  for (std::size_t i = 0; i < m; ++i) {
    uq[i] = std::pow(std::abs(u[i]), q);
    const double ur = us[i] / p.phi[i];
    g2[i] = ur * ur;
    u2[i] = u[i] * u[i];
    const double R = curv ? curv->R[i] : 0.0;
    ru2[i] = R * u2[i];
    rpu2[i] = std::max(R, 0.0) * u2[i];
  }
  RayleighTerms t;
  const double Iq = volume_integral(p, uq, opts);
  t.lq_sq = Iq > 0.0 ? std::pow(Iq, (p.n - 2.0) / p.n) : 0.0;
  t.grad = volume_integral(p, g2, opts);
  t.l2 = volume_integral(p, u2, opts);
  if (curv) {
    t.r_weighted = volume_integral(p, ru2, opts);
    t.rplus = volume_integral(p, rpu2, opts);
  }
  return t;
}

struct SobolevEstimate {
  double value = 0.0;       // certified lower bound on the Sobolev constant
  double euclidean = 0.0;   // sharp flat-space constant, for reference
  std::string best;
  int evaluated = 0;
  int skipped = 0;
};

/// Lower bound on C_g as the battery supremum of the Rayleigh quotients
/// ||u||^2_{2n/(n-2)} / int |grad u|^2 dV.
inline SobolevEstimate sobolev_estimate(const RadialProfile& p,
                                        const std::vector<TestFunction>& battery,
                                        const QuadratureOptions& opts = {}) {
  if (p.n < 3) throw std::invalid_argument("sobolev_estimate: requires n >= 3");
  if (battery.empty()) throw std::invalid_argument("sobolev_estimate: empty battery");
  SobolevEstimate est;
  est.euclidean = sharp_sobolev_constant(p.n);
  std::vector<double> vals(battery.size(), -1.0);
  parallel_for(battery.size(), [&](std::size_t k) {
    const RayleighTerms t = rayleigh_terms(p, battery[k].u, nullptr, opts);
    if (t.grad > 1e-300 && t.lq_sq > 0.0) vals[k] = t.lq_sq / t.grad;
  });
  for (std::size_t k = 0; k < battery.size(); ++k) {
    if (vals[k] < 0.0) {
      ++est.skipped;
      continue;
    }
    ++est.evaluated;
    if (vals[k] > est.value) {
      est.value = vals[k];
      est.best = battery[k].label;
    }
  }
  if (est.evaluated == 0) throw std::invalid_argument("sobolev_estimate: battery degenerate");
  return est;
}

/// Scale-invariant hypothesis ratio chi = C_lb * (int |Rm|^{n/2} dV)^{2/n}.
/// The Sobolev factor is a lower bound, so chi underestimates the true ratio.
inline double pinching_ratio(const RadialProfile& p, double sobolev_lb,
                             const CurvatureField* curv = nullptr,
                             const QuadratureOptions& opts = {}) {
  if (!(sobolev_lb > 0.0)) throw std::invalid_argument("pinching_ratio: bound must be positive");
  return sobolev_lb * lp_curvature_norm(p, 0.5 * p.n, curv, opts);
}

// ---------------------------------------------------------------------------
// Entropy-type functionals
// ---------------------------------------------------------------------------

namespace detail {
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// Normalize nodal u to unit L^2 mass, returning the squared norm it had.
inline double normalize_mass(const RadialProfile& p, Vec& u, const QuadratureOptions& opts) {
  Vec u2(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) u2[i] = u[i] * u[i];
  const double mass = volume_integral(p, u2, opts);
  if (!(mass > 0.0)) throw std::invalid_argument("test function has zero mass");
  const double c = 1.0 / std::sqrt(mass);
  for (auto& v : u) v *= c;
  return mass;
}
}  // namespace detail

struct LogSobolevResult {
  double slack = 0.0;    // min over the scale grid of RHS - LHS; >= 0 when C >= C_g
  double tau_star = 0.0; // scale attaining the minimum
  double lhs = 0.0;      // int u^2 log u^2 dV for the normalized function
  double grad = 0.0;
};

/// Check int u^2 log u^2 dV <= 4 tau int |grad u|^2 dV - (n/2) log tau
///                            + (n/2)(log C + log(n/8) - 1)
/// over a logarithmic grid of tau, reporting the tightest slack.
inline LogSobolevResult log_sobolev_check(const RadialProfile& p, const TestFunction& tf,
                                          double C, const QuadratureOptions& opts = {}) {
  if (!(C > 0.0)) throw std::invalid_argument("log_sobolev_check: constant must be positive");
  Vec u = tf.u;
  detail::normalize_mass(p, u, opts);
  const std::size_t m = u.size();
  Vec ulog(m);
  for (std::size_t i = 0; i < m; ++i) {
    ulog[i] = detail::xlogx(u[i] * u[i]);
    if (!std::isfinite(ulog[i]))
      throw std::invalid_argument("log_sobolev_check: log term not integrable");
  }
  LogSobolevResult out;
  out.lhs = volume_integral(p, ulog, opts);
  out.grad = rayleigh_terms(p, u, nullptr, opts).grad;
  const double n2 = 0.5 * p.n;
  const double cst = n2 * (std::log(C) + std::log(p.n / 8.0) - 1.0);
  out.slack = std::numeric_limits<double>::infinity();
  const int K = 121;
  for (int k = 0; k < K; ++k) {
    const double tau = std::pow(10.0, -3.0 + 6.0 * double(k) / (K - 1));
    const double rhs = 4.0 * tau * out.grad - n2 * std::log(tau) + cst;
    if (rhs - out.lhs < out.slack) {
      out.slack = rhs - out.lhs;
      out.tau_star = tau;
    }
  }
  return out;
}

/// W(g,u,tau) = int [tau (4 |grad u|^2 + R u^2) - u^2 log u^2] dV
///              - n - (n/2) log(4 pi tau),  with int u^2 dV = 1.
inline double w_functional(const RadialProfile& p, const TestFunction& tf, double tau_p,
                           const CurvatureField* curv = nullptr,
                           const QuadratureOptions& opts = {}) {
  if (!(tau_p > 0.0)) throw std::invalid_argument("w_functional: scale must be positive");
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  Vec u = tf.u;
  detail::normalize_mass(p, u, opts);
  const RayleighTerms t = rayleigh_terms(p, u, curv, opts);
  Vec ulog(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) ulog[i] = detail::xlogx(u[i] * u[i]);
  const double ent = volume_integral(p, ulog, opts);
  return tau_p * (4.0 * t.grad + t.r_weighted) - ent - p.n -
         0.5 * p.n * std::log(4.0 * kPi * tau_p);
}

/// The scale-bare variant W*(g,u,tau) = int [tau (4|grad u|^2 + R u^2)
/// - u^2 log u^2] dV; W* = W + n + (n/2) log(4 pi tau).
inline double w_star(const RadialProfile& p, const TestFunction& tf, double tau_p,
                     const CurvatureField* curv = nullptr, const QuadratureOptions& opts = {}) {
  return w_functional(p, tf, tau_p, curv, opts) + p.n + 0.5 * p.n * std::log(4.0 * kPi * tau_p);
}

struct MuStarResult {
  double value = 0.0;  // best W* found: an upper bound on the infimum
  Vec witness;
  bool converged = false;
  int iterations = 0;
  Vec start_values;  // W* at each initialization, before descent
};

struct MuStarOptions {
  int max_iterations = 400;
  double tolerance = 1e-10;  // relative decrease stop
  Vec width_factors = {0.25, 0.5, 1.0, 2.0, 4.0};
  QuadratureOptions quad = {};
};

/// Upper-bound estimate of mu*(g, sigma) = inf W*(g, u, sigma) over unit-mass
/// u, by projected-gradient descent on the nodal values from Gaussian starts
/// of several widths. Deterministic; never claims the infimum.
inline MuStarResult mu_star_estimate(const RadialProfile& p, double sigma,
                                     const MuStarOptions& opts = {}) {
  if (!(sigma > 0.0)) throw std::invalid_argument("mu_star_estimate: sigma must be positive");
  const std::size_t m = p.nodes();
  const CurvatureField curv = curvature(p);
  const Vec r = arclength(p);

  // Quadrature weights of the volume form, from the same composite rule.
  Vec wvol(m, 0.0);
  {
    // Accumulate the parabola-rule coefficients of the composite quadrature,
    // so the discrete objective matches volume_integral exactly.
    const std::size_t mi = m - 1;
    std::size_t i = 0;
    auto add = [&](std::size_t j, double v) { wvol[j] += v; };
    for (; i + 2 <= mi; i += 2) {
      const double h0 = p.s[i + 1] - p.s[i];
      const double h1 = p.s[i + 2] - p.s[i + 1];
      const double H = h0 + h1;
      add(i, H / 6.0 * (2.0 - h1 / h0));
      add(i + 1, H / 6.0 * (H * H / (h0 * h1)));
      add(i + 2, H / 6.0 * (2.0 - h0 / h1));
    }
    if (i < mi) {
      // final odd interval: integrate the last parabola over it
      const double x0 = p.s[mi - 2], x1 = p.s[mi - 1], x2 = p.s[mi];
      for (int j = 0; j < 3; ++j) {
        Vec ys = {0.0, 0.0, 0.0};
        ys[j] = 1.0;
        add(mi - 2 + j, integrate_poly_through({x0, x1, x2}, ys, x1, x2));
      }
    }
    const double omega = unit_sphere_area(p.n);
    for (std::size_t j = 0; j < m; ++j)
      wvol[j] *= omega * p.phi[j] * std::pow(p.f[j], p.n - 1);
  }

  // 5-point first-derivative operator rows, for the exact discrete gradient.
  std::vector<std::array<double, 5>> Dw(m);
  std::vector<std::size_t> Db(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t a = (i < 2) ? 0 : i - 2;
    if (a + 5 > m) a = m - 5;
    Db[i] = a;
    fd_weights_into(p.s.data() + a, 5, p.s[i], 1, Dw[i].data());
  }
  auto apply_D = [&](const Vec& u, Vec& du) {
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 5; ++j) acc += Dw[i][j] * u[Db[i] + j];
      du[i] = acc;
    }
  };

  auto objective = [&](const Vec& u, Vec* grad) {
    Vec du(m);
    apply_D(u, du);
    double J = 0.0;
    Vec lam(m);  // per-node weight of the gradient-square term
    for (std::size_t i = 0; i < m; ++i) {
      const double ur2 = du[i] * du[i] / (p.phi[i] * p.phi[i]);
      const double u2 = u[i] * u[i];
      J += wvol[i] * (sigma * (4.0 * ur2 + curv.R[i] * u2) - detail::xlogx(u2));
      lam[i] = wvol[i] / (p.phi[i] * p.phi[i]);
    }
    if (grad) {
      Vec& g = *grad;
      g.assign(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double c = 8.0 * sigma * lam[i] * du[i];
        for (int j = 0; j < 5; ++j) g[Db[i] + j] += c * Dw[i][j];
        const double u2 = u[i] * u[i];
        const double dlog = u2 > 0.0 ? 2.0 * u[i] * std::log(u2) + 2.0 * u[i] : 0.0;
        g[i] += wvol[i] * (2.0 * sigma * curv.R[i] * u[i] - dlog);
      }
    }
    return J;
  };

  auto wnorm2 = [&](const Vec& u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += wvol[i] * u[i] * u[i];
    return acc;
  };
  auto renorm = [&](Vec& u) {
    const double c = 1.0 / std::sqrt(wnorm2(u));
    for (auto& v : u) v *= c;
  };

  MuStarResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (double wf : opts.width_factors) {
    Vec u(m);
    const double tw = sigma * wf;
    for (std::size_t i = 0; i < m; ++i) u[i] = std::exp(-r[i] * r[i] / (4.0 * tw));
    renorm(u);
    Vec g(m), gp(m), trial(m);
    double J = objective(u, &g);
    best.start_values.push_back(J);
    double step = 0.1;
    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
      // project the gradient onto the tangent space of the mass sphere
      double gu = 0.0;
      for (std::size_t i = 0; i < m; ++i) gu += g[i] * u[i];
      double uu = 0.0;
      for (std::size_t i = 0; i < m; ++i) uu += u[i] * u[i];
      for (std::size_t i = 0; i < m; ++i) gp[i] = g[i] - (gu / uu) * u[i];
      double gnorm2 = 0.0;
      for (std::size_t i = 0; i < m; ++i) gnorm2 += gp[i] * gp[i];
      if (gnorm2 == 0.0) {
        converged = true;
        break;
      }
      bool accepted = false;
      for (int bt = 0; bt < 40; ++bt) {
        for (std::size_t i = 0; i < m; ++i) trial[i] = u[i] - step * gp[i];
        renorm(trial);
        const double Jt = objective(trial, nullptr);
        if (Jt < J - 1e-14 * std::abs(J)) {
          const double drop = (J - Jt) / std::max(1.0, std::abs(J));
          u = trial;
          J = objective(u, &g);
          step *= 1.6;
          accepted = true;
          if (drop < opts.tolerance) converged = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        converged = true;
        break;
      }
      if (converged) break;
    }
    if (J < best.value) {
      best.value = J;
      best.witness = u;
      best.converged = converged;
      best.iterations = it;
    }
  }
  return best;
}

/// Curvature-weighted Rayleigh quotient
///   ||u||^2_{2n/(n-2)} / int (|grad u|^2 + R^+ u^2) dV.
/// Returns nothing when the denominator degenerates.
inline std::optional<double> weighted_sobolev_ratio(const RadialProfile& p, const TestFunction& tf,
                                                    const CurvatureField* curv,
                                                    const QuadratureOptions& opts = {}) {
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  const RayleighTerms t = rayleigh_terms(p, tf.u, curv, opts);
  const double denom = t.grad + t.rplus;
  if (!(denom > 1e-300) || !(t.lq_sq > 0.0)) return std::nullopt;
  return t.lq_sq / denom;
}

inline double weighted_ratio_battery_max(const RadialProfile& p,
                                         const std::vector<TestFunction>& battery,
                                         const CurvatureField* curv,
                                         const QuadratureOptions& opts = {}) {
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  std::vector<double> vals(battery.size(), -1.0);
  parallel_for(battery.size(), [&](std::size_t k) {
    const auto v = weighted_sobolev_ratio(p, battery[k], curv, opts);
    if (v) vals[k] = *v;
  });
  double mx = 0.0;
  for (double v : vals) mx = std::max(mx, v);
  return mx;
}

// ---------------------------------------------------------------------------
// Minimal hyperspheres and the associated curvature contents
// ---------------------------------------------------------------------------

namespace detail {
struct BranchRoot {
  double x = 0.0;
  bool crossing = false;  // sign change (well-conditioned) vs grazing minimum
};

/// Root of a least-squares cubic through one smooth branch of samples,
/// restricted to [lo, hi]: the crossing closest to `ref`, or the minimizer of
/// |P| when the branch only touches zero within `value_tol`.
inline std::optional<BranchRoot> branch_root(const Vec& xs, const Vec& ys, double lo, double hi,
                                             double ref, double value_tol) {
  const double mid = 0.5 * (xs.front() + xs.back());
  const double span = std::max(1e-300, xs.back() - xs.front());
  const int deg = xs.size() >= 5 ? 3 : 2;
  const int nc = deg + 1;
  std::vector<double> A(nc * nc, 0.0);
  Vec b(nc, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = (xs[i] - mid) / span;
    double px[7];
    px[0] = 1.0;
    for (int k = 1; k < 2 * nc - 1; ++k) px[k] = px[k - 1] * x;
    for (int rr = 0; rr < nc; ++rr) {
      for (int cc = 0; cc < nc; ++cc) A[rr * nc + cc] += px[rr + cc];
      b[rr] += px[rr] * ys[i];
    }
  }
  Vec coef;
  try {
    coef = solve_dense(std::move(A), std::move(b));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  auto eval = [&](double x) {
    const double z = (x - mid) / span;
    double acc = 0.0;
    for (int k = nc - 1; k >= 0; --k) acc = acc * z + coef[k];
    return acc;
  };
  const int K = 4000;
  double best_min = std::numeric_limits<double>::infinity(), best_min_x = lo;
  std::optional<double> best_cross;
  double prev = eval(lo);
  for (int k = 1; k <= K; ++k) {
    const double x = lo + (hi - lo) * double(k) / K;
    const double v = eval(x);
    if (std::abs(v) < best_min) {
      best_min = std::abs(v);
      best_min_x = x;
    }
    if (prev * v < 0.0) {
      const double root = bisect(eval, x - (hi - lo) / K, x);
      if (!best_cross || std::abs(root - ref) < std::abs(*best_cross - ref)) best_cross = root;
    }
    prev = v;
  }
  if (best_cross) return BranchRoot{*best_cross, true};
  if (best_min < value_tol) return BranchRoot{best_min_x, false};
  return std::nullopt;
}

struct CriticalPoint {
  double x = 0.0;
  double curvature = 0.0;  // |P''| at the critical point, conditioning measure
  bool ok = false;
};

/// Critical point of a one-sided quintic least-squares fit of f near the
/// candidate. Works from the raw warp values, which carry no differencing
/// error even where the profile is only C^{1,1}.
inline CriticalPoint side_critical_point(const Vec& xs, const Vec& ys, double lo, double hi,
                                         double ref) {
  CriticalPoint out;
  const double mid = 0.5 * (xs.front() + xs.back());
  const double span = std::max(1e-300, xs.back() - xs.front());
  const int nc = 6;
  std::vector<double> A(nc * nc, 0.0);
  Vec b(nc, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = (xs[i] - mid) / span;
    double px[2 * nc - 1];
    px[0] = 1.0;
    for (int k = 1; k < 2 * nc - 1; ++k) px[k] = px[k - 1] * x;
    for (int rr = 0; rr < nc; ++rr) {
      for (int cc = 0; cc < nc; ++cc) A[rr * nc + cc] += px[rr + cc];
      b[rr] += px[rr] * ys[i];
    }
  }
  Vec coef;
  try {
    coef = solve_dense(std::move(A), std::move(b));
  } catch (const std::exception&) {
    return out;
  }
  auto dP = [&](double x) {
    const double z = (x - mid) / span;
    double acc = 0.0;
    for (int k = nc - 1; k >= 1; --k) acc = acc * z + double(k) * coef[k];
    return acc / span;
  };
  auto d2P = [&](double x) {
    const double z = (x - mid) / span;
    double acc = 0.0;
    for (int k = nc - 1; k >= 2; --k) acc = acc * z + double(k) * (k - 1) * coef[k];
    return acc / (span * span);
  };
  const int K = 2000;
  double best = std::numeric_limits<double>::infinity();
  double prev = dP(lo);
  for (int k = 1; k <= K; ++k) {
    const double x = lo + (hi - lo) * double(k) / K;
    const double v = dP(x);
    if (prev * v < 0.0) {
      const double root = bisect(dP, x - (hi - lo) / K, x);
      if (std::abs(root - ref) < best) {
        best = std::abs(root - ref);
        out.x = root;
        out.curvature = std::abs(d2P(root));
        out.ok = true;
      }
    }
    prev = v;
  }
  return out;
}
}  // namespace detail

/// All interior arclength radii where d f / d r changes sign or touches zero.
/// Sign changes are bracketed and bisected on the interpolant. Touching zeros
/// are located by fitting the two smooth branches on either side of the
/// candidate minimum and intersecting their roots, which stays accurate even
/// when the profile is only C^{1,1} at the critical sphere.
inline Vec detect_minimal_hyperspheres(const RadialProfile& p) {
  const Vec fr = radial_deriv_f(p);
  const Vec r = arclength(p);
  const std::size_t m = fr.size();
  double scale = 0.0;
  for (double v : fr) scale = std::max(scale, std::abs(v));
  const double loose_tol = 0.02 * std::max(1.0, scale);
  const double h_mean = (r.back() - r.front()) / double(m - 1);
  Vec radii;
  auto push_unique = [&](double rv) {
    for (double e : radii)
      if (std::abs(e - rv) < 4.0 * h_mean) return;
    radii.push_back(rv);
  };
  const Pchip interp(r, fr);
  for (std::size_t i = 1; i + 1 < m; ++i) {
    if (fr[i] * fr[i + 1] < 0.0) {
      push_unique(bisect([&](double x) { return interp(x); }, r[i], r[i + 1]));
      continue;
    }
    // touching-zero candidate: small local minimum of |fr|
    if (i < 8 || i + 8 >= m) continue;
    if (!(std::abs(fr[i]) < std::abs(fr[i - 1]) && std::abs(fr[i]) <= std::abs(fr[i + 1]) &&
          std::abs(fr[i]) < loose_tol))
      continue;
    // Fit each branch on nodes whose derivative stencils do not cross the
    // critical sphere, where the profile may be only C^{1,1}.
    const double lo = r[i - 7], hi = r[i + 7];
    Vec xl, yl, xr, yr;
    for (std::size_t j = i - 7; j <= i - 2; ++j) {
      xl.push_back(r[j]);
      yl.push_back(fr[j]);
    }
    for (std::size_t j = i + 2; j <= i + 7; ++j) {
      xr.push_back(r[j]);
      yr.push_back(fr[j]);
    }
    const auto rootL = detail::branch_root(xl, yl, lo, hi, r[i], loose_tol);
    const auto rootR = detail::branch_root(xr, yr, lo, hi, r[i], loose_tol);
    const double h_loc = (hi - lo) / 14.0;
    if (!rootL || !rootR || std::abs(rootL->x - rootR->x) >= 6.0 * h_loc) continue;
    const double crude = 0.5 * (rootL->x + rootR->x);
    // Refine against the raw warp values. Each side is fitted with two
    // window widths; a side with a well-conditioned (nondegenerate) critical
    // point reproduces the same root from both, so sides are combined with
    // weights inverse to that instability.
    const double wlo = r[i] - 3.0 * h_loc, whi = r[i] + 3.0 * h_loc;
    auto side_estimate = [&](bool left) -> std::optional<std::pair<double, double>> {
      double roots[2];
      for (int wi = 0; wi < 2; ++wi) {
        const std::size_t width = wi == 0 ? 8 : 12;
        Vec xs, ys;
        if (left) {
          const std::size_t a = i >= width ? i - width : 0;
          for (std::size_t j = a; j <= i; ++j) {
            xs.push_back(r[j]);
            ys.push_back(p.f[j]);
          }
        } else {
          const std::size_t bnd = std::min(i + width, m - 1);
          for (std::size_t j = i; j <= bnd; ++j) {
            xs.push_back(r[j]);
            ys.push_back(p.f[j]);
          }
        }
        if (xs.size() < 7) return std::nullopt;
        const auto cp = detail::side_critical_point(xs, ys, wlo, whi, crude);
        if (!cp.ok) return std::nullopt;
        roots[wi] = cp.x;
      }
      return std::make_pair(0.5 * (roots[0] + roots[1]), std::abs(roots[0] - roots[1]));
    };
    const auto sL = side_estimate(true);
    const auto sR = side_estimate(false);
    if (sL && sR) {
      const double wL = 1.0 / (sL->second + 1e-3 * h_loc);
      const double wR = 1.0 / (sR->second + 1e-3 * h_loc);
      push_unique((wL * sL->first + wR * sR->first) / (wL + wR));
    } else if (sL || sR) {
      push_unique(sL ? sL->first : sR->first);
    } else {
      push_unique(crude);
    }
  }
  std::sort(radii.begin(), radii.end());
  return radii;
}

struct NeckContent {
  double e1 = 0.0;
  double e2 = 0.0;
  double radius = 0.0;  // arclength radius of the minimal hypersphere used
};

/// Curvature contents of the region enclosed by the minimal hypersphere at
/// arclength radius R_ms, evaluated on the unit-interval rescaling:
///   E1 = int_0^1 |1-(G')^2|^{n/2}/G dx,  E2 = int_0^1 |G''|^{n/2} G^{n/2-1} dx
/// with G(x) = f(x R_ms)/R_ms, which by substitution equal
///   int_0^{R_ms} |nu_k|^{n/2} f^{n-1} dr.
inline NeckContent e1_e2(const RadialProfile& p, double R_ms,
                         const CurvatureField* curv = nullptr) {
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  const Vec r = arclength(p);
  const Vec fr = radial_deriv_f(p);
  if (!(R_ms > r[3]) || !(R_ms < r.back()))
    throw std::invalid_argument("e1_e2: radius outside the resolvable range");
  // precondition: f increasing strictly before the radius, critical at it
  const Pchip fr_interp(r, fr);
  if (std::abs(fr_interp(R_ms)) > 0.05)
    throw std::invalid_argument("e1_e2: d f/d r does not vanish at the given radius");
  for (std::size_t i = 1; i < r.size() && r[i] < 0.98 * R_ms; ++i)
    if (!(fr[i] > 0.0))
      throw std::invalid_argument("e1_e2: d f/d r must stay positive inside the radius");

  const Pchip nu1i(r, curv->nu1), nu2i(r, curv->nu2), fi(r, p.f);
  const std::size_t K = 2001;
  Vec x(K), i1(K), i2(K);
  const double pw = 0.5 * p.n;
  for (std::size_t k = 0; k < K; ++k) {
    x[k] = double(k) / double(K - 1);
    const double rr = x[k] * R_ms;
    const double fv = std::max(0.0, fi(rr));
    const double fn1 = std::pow(fv, p.n - 1);
    i1[k] = std::pow(std::abs(nu1i(rr)), pw) * fn1 * R_ms;
    i2[k] = std::pow(std::abs(nu2i(rr)), pw) * fn1 * R_ms;
  }
  i1[0] = 0.0;
  i2[0] = 0.0;
  NeckContent out;
  out.e1 = integrate(x, i1);
  out.e2 = integrate(x, i2);
  out.radius = R_ms;
  return out;
}

/// Convenience form using the innermost detected minimal hypersphere.
inline NeckContent e1_e2(const RadialProfile& p) {
  const Vec radii = detect_minimal_hyperspheres(p);
  if (radii.empty()) throw std::invalid_argument("e1_e2: profile has no minimal hypersphere");
  return e1_e2(p, radii.front());
}

// ---------------------------------------------------------------------------
// Dimension-four integral identity and mass
// ---------------------------------------------------------------------------

struct CgbResult {
  double residual = 0.0;      // -1/2 int |E|^2 dV + 1/24 int R^2 dV
  double e2_integral = 0.0;
  double r2_integral = 0.0;
  bool decay_ok = true;
  std::string note;
};

/// Four-dimensional Gauss-Bonnet residual for conformally flat profiles
/// (the Weyl term vanishes identically). Near zero for fast-decaying tails.
inline CgbResult cgb_residual(const RadialProfile& p, const CurvatureField* curv = nullptr,
                              const QuadratureOptions& opts = {}) {
  if (p.n != 4) throw std::invalid_argument("cgb_residual: defined only for n = 4");
  CurvatureField local;
  if (!curv) {
    local = curvature(p);
    curv = &local;
  }
  Vec r2(p.nodes());
  for (std::size_t i = 0; i < r2.size(); ++i) r2[i] = curv->R[i] * curv->R[i];
  CgbResult out;
  out.e2_integral = volume_integral(p, curv->e2, opts);
  out.r2_integral = volume_integral(p, r2, opts);
  out.residual = -0.5 * out.e2_integral + out.r2_integral / 24.0;
  if (!p.tail.flat && p.tail.tau < 1.5) {
    out.decay_ok = false;
    out.note = "tail order " + format17(p.tail.tau) + " too slow; boundary term not negligible";
  }
  return out;
}

struct MassFit {
  double mass = 0.0;
  double coefficient = 0.0;  // fitted a in f/(c s) - 1 ~ a (c s)^{-(n-2)}
  double rel_residual = 0.0;
  bool reliable = true;
  std::string note;
};

/// Mass from the decay of the warp factor on the outer third of the grid:
/// least squares of f/s ~ c + beta x + gamma x^2 with x = s^{-(n-2)}; the
/// intercept c absorbs chart dilations and the quadratic term the next order
/// of the expansion. The mass-normalized coefficient is (n-2) beta c^{n-3},
/// which reproduces the conformal-factor mass of the slice families.
inline MassFit adm_mass(const RadialProfile& p) {
  MassFit out;
  const std::size_t m = p.nodes();
  const std::size_t lo = (2 * m) / 3;
  Vec xs, ys;
  for (std::size_t i = lo; i < m; ++i) {
    xs.push_back(std::pow(p.s[i], -(p.n - 2.0)));
    ys.push_back(p.f[i] / p.s[i]);
  }
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, b0 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x = xs[i], y = ys[i];
    s0 += 1; s1 += x; s2 += x * x; s3 += x * x * x; s4 += x * x * x * x;
    b0 += y; b1 += x * y; b2 += x * x * y;
  }
  Vec coef;
  try {
    coef = solve_dense({s0, s1, s2, s1, s2, s3, s2, s3, s4}, {b0, b1, b2});
  } catch (const std::exception&) {
    out.reliable = false;
    out.note = "degenerate fit";
    return out;
  }
  const double c = coef[0], beta = coef[1], gamma = coef[2];
  double ss = 0.0, dev2 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fitv = c + beta * xs[i] + gamma * xs[i] * xs[i];
    ss += (ys[i] - fitv) * (ys[i] - fitv);
    dev2 += (ys[i] - c) * (ys[i] - c);
  }
  if (!(c > 0.0)) {
    out.reliable = false;
    out.note = "degenerate tail";
    return out;
  }
  if (dev2 < 1e-24 * double(xs.size())) {
    out.note = "tail flat; zero mass";
    return out;
  }
  out.coefficient = beta;
  out.mass = (p.n - 2.0) * beta * std::pow(c, p.n - 3.0);
  out.rel_residual = std::sqrt(ss / dev2);
  out.reliable = out.rel_residual < 0.1;
  if (!out.reliable) out.note = "tail model fit residual above threshold";
  return out;
}

// ---------------------------------------------------------------------------
// Pinching certificate
// ---------------------------------------------------------------------------

struct Certificate {
  double chi = 0.0;
  double sobolev_lb = 0.0;
  double l_n2 = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string one_sidedness_note;
};

inline Certificate certify(const RadialProfile& p, const std::vector<TestFunction>& battery,
                           double threshold, const QuadratureOptions& opts = {}) {
  Certificate cert;
  cert.threshold = threshold;
  const CurvatureField curv = curvature(p);
  cert.sobolev_lb = sobolev_estimate(p, battery, opts).value;
  cert.l_n2 = lp_curvature_norm(p, 0.5 * p.n, &curv, opts);
  cert.chi = cert.sobolev_lb * cert.l_n2;
  cert.pass = cert.chi < threshold;
  cert.one_sidedness_note =
      "sobolev_lb is a battery supremum and underestimates the Sobolev constant, "
      "so chi underestimates the true ratio; a pass certifies only the battery bound";
  return cert;
}

}  // namespace ricci
