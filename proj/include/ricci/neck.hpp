#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ricci/numerics.hpp"

namespace ricci {

/// Constrained radial profile g : [0,1] -> [0,inf) with g(0)=0, g'(0)=1,
/// g'(1)=0 and g' > 0 on [0,1). The derivative is the square of a latent
/// shape-preserving spline, which makes nonnegativity structural; the pinned
/// endpoint values of the latent function pin g'(0) and g'(1).
struct NeckProfileParams {
  Vec latent;  // interior control values of the latent function v, g' = v^2

  std::size_t dimension() const { return latent.size(); }
};

/// g and derivatives sampled on a uniform evaluation grid over [0,1].
struct NeckCurve {
  Vec x, g, dg, d2g;
  double end_value = 0.0;        // D = g(1)
  bool admissible = false;       // g' > 0 strictly on [0,1)
  std::string reason;
};

/// Evaluate the neck profile on `points` uniform nodes. Admissibility is
/// checked on the same grid before any objective uses the curve.
inline NeckCurve eval_neck(const NeckProfileParams& p, std::size_t points = 2001) {
  if (points < 9) throw std::invalid_argument("eval_neck: too few evaluation points");
  NeckCurve out;
  const std::size_t k = p.latent.size();
  Vec knots(k + 2), vals(k + 2);
  for (std::size_t i = 0; i < k + 2; ++i) knots[i] = double(i) / double(k + 1);
  vals.front() = 1.0;
  for (std::size_t i = 0; i < k; ++i) vals[i + 1] = p.latent[i];
  vals.back() = 0.0;
  const Pchip v(knots, vals);

  out.x.resize(points);
  out.dg.resize(points);
  const double h = 1.0 / double(points - 1);
  for (std::size_t i = 0; i < points; ++i) {
    out.x[i] = double(i) * h;
    const double vi = v(out.x[i]);
    out.dg[i] = vi * vi;
  }
  out.dg.back() = 0.0;  // pinned exactly
  for (std::size_t i = 0; i + 1 < points; ++i) {
    if (!(out.dg[i] > 1e-12)) {
      out.reason = "g' vanishes in the interior";
      return out;
    }
    if (!std::isfinite(out.dg[i])) {
      out.reason = "non-finite derivative";
      return out;
    }
  }
  out.g = cumulative_integral(out.x, out.dg);
  out.d2g = deriv1(out.x, out.dg);
  out.end_value = out.g.back();
  out.admissible = true;
  return out;
}

struct NeckEnergies {
  double e1 = 0.0;
  double e2 = 0.0;
};

/// The two curvature contents of a neck curve,
///   E1 = int |1-(g')^2|^{n/2} / g dx,   E2 = int |g''|^{n/2} g^{n/2-1} dx,
/// by quadrature on the evaluation grid. Near x=0 both integrands have a
/// finite (or vanishing) limit since g ~ x there; the first node uses it.
inline NeckEnergies neck_energies(const NeckCurve& c, int n) {
  if (n < 2) throw std::invalid_argument("neck_energies: n must be >= 2");
  const std::size_t m = c.x.size();
  Vec i1(m), i2(m);
  const double p = 0.5 * n;
  for (std::size_t i = 0; i < m; ++i) {
    const double g = c.g[i];
    const double a1 = std::pow(std::abs(1.0 - c.dg[i] * c.dg[i]), p);
    const double a2 = std::pow(std::abs(c.d2g[i]), p);
    if (i == 0) {
      // series limit: |1-g'^2|^{n/2}/g -> 0 for n>2, 2|g''(0)| at n=2;
      // |g''|^{n/2} g^{n/2-1} -> 0 for n>2, |g''(0)| at n=2.
      if (n == 2) {
        i1[i] = 2.0 * std::abs(c.d2g[0]);
        i2[i] = std::abs(c.d2g[0]);
      } else {
        i1[i] = 0.0;
        i2[i] = 0.0;
      }
      continue;
    }
    i1[i] = a1 / g;
    i2[i] = a2 * std::pow(g, p - 1.0);
  }
  NeckEnergies out;
  out.e1 = integrate(c.x, i1);
  out.e2 = integrate(c.x, i2);
  return out;
}

}  // namespace ricci
