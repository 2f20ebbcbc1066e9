#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ricci/curvature.hpp"
#include "ricci/profile.hpp"

namespace ricci {

// Independent curvature computation: hyperspherical coordinates
// (s, t_1, ..., t_{n-1}), diagonal metric components
//   g_00 = phi(s)^2,  g_kk = f(s)^2 * T_k(t),  T_k = prod_{j<k} sin^2 t_j,
// Christoffel symbols from finite differences of the components, the full
// lowered Riemann tensor from the Christoffels, and every curvature quantity
// extracted by frame contractions. No closed-form sectional formulas enter.
namespace oracle_detail {

constexpr double kThetaStep = 1e-3;

/// 5-point centered first derivative of a callable, O(d^4).
template <class F>
inline double fd5(F&& fn, double x, double d = kThetaStep) {
  return (-fn(x + 2 * d) + 8.0 * fn(x + d) - 8.0 * fn(x - d) + fn(x - 2 * d)) / (12.0 * d);
}

struct AngularFactors {
  int n;
  /// T_k for k in [1, n-1] at the angle vector t (T_1 = 1).
  double T(int k, const Vec& t) const {
    double acc = 1.0;
    for (int j = 1; j < k; ++j) acc *= std::sin(t[j - 1]) * std::sin(t[j - 1]);
    return acc;
  }
  /// d T_k / d t_j by finite difference.
  double dT(int k, int j, const Vec& t) const {
    if (j >= k) return 0.0;
    Vec tv = t;
    return fd5([&](double x) {
      tv[j - 1] = x;
      return T(k, tv);
    }, t[j - 1]);
  }
};

/// Flattened Christoffel storage Gamma[l][m][v] for one node and angle.
using Christoffel = std::vector<double>;

inline std::size_t cidx(int n, int l, int m, int v) {
  return std::size_t((l * n + m) * n + v);
}

/// One metric evaluation point: component values and coordinate derivatives.
struct MetricPoint {
  int n;
  Vec g;                 // g[mu], diagonal components
  std::vector<Vec> dg;   // dg[mu][c]: d g_mu / d x^c
};

inline MetricPoint metric_point(int n, double A, double As, double B, double Bs,
                                const AngularFactors& ang, const Vec& t) {
  MetricPoint mp;
  mp.n = n;
  mp.g.assign(n, 0.0);
  mp.dg.assign(n, Vec(n, 0.0));
  mp.g[0] = A;
  mp.dg[0][0] = As;
  for (int k = 1; k < n; ++k) {
    const double Tk = ang.T(k, t);
    mp.g[k] = B * Tk;
    mp.dg[k][0] = Bs * Tk;
    for (int j = 1; j < n; ++j) mp.dg[k][j] = B * ang.dT(k, j, t);
  }
  return mp;
}

inline Christoffel christoffel(const MetricPoint& mp) {
  const int n = mp.n;
  Christoffel G(std::size_t(n) * n * n, 0.0);
  for (int l = 0; l < n; ++l) {
    const double ginv = 1.0 / mp.g[l];
    for (int m = 0; m < n; ++m)
      for (int v = m; v < n; ++v) {
        // diagonal metric: only the rho = l term of the contraction survives
        double val = 0.0;
        if (l == v) val += mp.dg[l][m];
        if (l == m) val += mp.dg[l][v];
        if (m == v) val -= mp.dg[m][l];
        val *= 0.5 * ginv;
        G[cidx(n, l, m, v)] = val;
        G[cidx(n, l, v, m)] = val;
      }
  }
  return G;
}

/// d/ds of the Christoffels at fixed angles, assembled by the chain rule from
/// the radial derivative tables. Differencing the Christoffel values along the
/// grid instead would lose accuracy near the origin, where they vary like 1/s.
inline Christoffel christoffel_sderiv(const MetricPoint& mp, const Christoffel& G,
                                      const std::vector<Vec>& dsdg, const Vec& dsg) {
  // dsdg[mu][c] = d/ds (d g_mu / d x^c), dsg[mu] = d/ds g_mu.
  const int n = mp.n;
  Christoffel out(std::size_t(n) * n * n, 0.0);
  for (int l = 0; l < n; ++l)
    for (int m = 0; m < n; ++m)
      for (int v = m; v < n; ++v) {
        double dnum = 0.0;
        if (l == v) dnum += dsdg[l][m];
        if (l == m) dnum += dsdg[l][v];
        if (m == v) dnum -= dsdg[m][l];
        const double val = 0.5 * dnum / mp.g[l] - G[cidx(n, l, m, v)] * dsg[l] / mp.g[l];
        out[cidx(n, l, m, v)] = val;
        out[cidx(n, l, v, m)] = val;
      }
  return out;
}

}  // namespace oracle_detail

/// Anti-drift oracle for curvature(): assembles the Riemann tensor of the
/// profile metric in coordinates and extracts the same CurvatureField.
inline CurvatureField riemann_oracle(const RadialProfile& p) {
  using namespace oracle_detail;
  detail::check_profile_arrays(p);
  if (p.nodes() < 8) throw std::invalid_argument("riemann_oracle: need at least 8 nodes");
  const int n = p.n;
  const std::size_t m = p.nodes();
  const std::size_t n3 = std::size_t(n) * n * n;

  // Generic base angles, away from coordinate degeneracies.
  Vec theta(std::size_t(std::max(0, n - 1)), 0.0);
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = 1.0 + 0.07 * double(j + 1);
  const AngularFactors ang{n};

  // Metric component arrays and their grid derivatives.
  Vec A(m), B(m);
  for (std::size_t i = 0; i < m; ++i) {
    A[i] = p.phi[i] * p.phi[i];
    B[i] = p.f[i] * p.f[i];
  }
  const Vec As = deriv1(p.s, A), Bs = deriv1(p.s, B);
  const Vec Ass = deriv2(p.s, A), Bss = deriv2(p.s, B);

  CurvatureField out;
  out.n = n;
  out.r = arclength(p);
  out.nu1.assign(m, 0.0);
  out.nu2.assign(m, 0.0);
  out.lam_rad.assign(m, 0.0);
  out.lam_sph.assign(m, 0.0);
  out.R.assign(m, 0.0);
  out.rm2.assign(m, 0.0);
  out.e2.assign(m, 0.0);

  std::vector<double> Rlow(std::size_t(n) * n * n * n);
  auto ridx = [n](int r0, int s0, int m0, int v0) {
    return std::size_t(((r0 * n + s0) * n + m0) * n + v0);
  };

  for (std::size_t i = detail::kOriginWindow; i < m; ++i) {
    const MetricPoint mp = metric_point(n, A[i], As[i], B[i], Bs[i], ang, theta);
    const Christoffel Gi = christoffel(mp);
    // Radial derivative of the Christoffels, chain rule over the tables.
    Vec dsg(n, 0.0);
    std::vector<Vec> dsdg(n, Vec(n, 0.0));
    dsg[0] = As[i];
    dsdg[0][0] = Ass[i];
    for (int k = 1; k < n; ++k) {
      const double Tk = ang.T(k, theta);
      dsg[k] = Bs[i] * Tk;
      dsdg[k][0] = Bss[i] * Tk;
      for (int j = 1; j < n; ++j) dsdg[k][j] = Bs[i] * ang.dT(k, j, theta);
    }
    // Angular derivatives of the Christoffels at this node.
    std::vector<Christoffel> dG(n, Christoffel(n3, 0.0));
    dG[0] = christoffel_sderiv(mp, Gi, dsdg, dsg);
    for (int j = 1; j < n; ++j) {
      const double d = kThetaStep;
      std::array<Christoffel, 4> samples;
      const std::array<double, 4> off = {2 * d, d, -d, -2 * d};
      for (int a = 0; a < 4; ++a) {
        Vec tv = theta;
        tv[j - 1] += off[a];
        samples[a] = christoffel(metric_point(n, A[i], As[i], B[i], Bs[i], ang, tv));
      }
      for (std::size_t c = 0; c < n3; ++c)
        dG[j][c] = (-samples[0][c] + 8.0 * samples[1][c] - 8.0 * samples[2][c] + samples[3][c]) /
                   (12.0 * d);
    }

    for (int r0 = 0; r0 < n; ++r0)
      for (int s0 = 0; s0 < n; ++s0)
        for (int m0 = 0; m0 < n; ++m0)
          for (int v0 = 0; v0 < n; ++v0) {
            double val = dG[m0][cidx(n, r0, v0, s0)] - dG[v0][cidx(n, r0, m0, s0)];
            for (int l = 0; l < n; ++l)
              val += Gi[cidx(n, r0, m0, l)] * Gi[cidx(n, l, v0, s0)] -
                     Gi[cidx(n, r0, v0, l)] * Gi[cidx(n, l, m0, s0)];
            Rlow[ridx(r0, s0, m0, v0)] = mp.g[r0] * val;
          }

    // Sectional curvatures of the two plane types.
    out.nu2[i] = Rlow[ridx(0, 1, 0, 1)] / (mp.g[0] * mp.g[1]);
    if (n >= 3) out.nu1[i] = Rlow[ridx(1, 2, 1, 2)] / (mp.g[1] * mp.g[2]);

    // Ricci diagonal, scalar curvature, Ricci eigenvalues.
    Vec ric(n, 0.0);
    for (int s0 = 0; s0 < n; ++s0)
      for (int r0 = 0; r0 < n; ++r0)
        ric[s0] += Rlow[ridx(r0, s0, r0, s0)] / mp.g[r0];
    double scal = 0.0;
    for (int s0 = 0; s0 < n; ++s0) scal += ric[s0] / mp.g[s0];
    out.R[i] = scal;
    out.lam_rad[i] = ric[0] / mp.g[0];
    out.lam_sph[i] = ric[1] / mp.g[1];

    double rm2 = 0.0;
    for (int r0 = 0; r0 < n; ++r0)
      for (int s0 = 0; s0 < n; ++s0)
        for (int m0 = 0; m0 < n; ++m0)
          for (int v0 = 0; v0 < n; ++v0) {
            const double c = Rlow[ridx(r0, s0, m0, v0)];
            rm2 += c * c / (mp.g[r0] * mp.g[s0] * mp.g[m0] * mp.g[v0]);
          }
    out.rm2[i] = rm2;

    double e2 = 0.0;
    for (int s0 = 0; s0 < n; ++s0) {
      const double dev = ric[s0] / mp.g[s0] - scal / n;
      e2 += dev * dev;
    }
    out.e2[i] = e2;
  }

  for (Vec* field : {&out.nu1, &out.nu2, &out.lam_rad, &out.lam_sph, &out.R, &out.rm2, &out.e2})
    detail::extrapolate_origin(out.r, *field);
  return out;
}

}  // namespace ricci
