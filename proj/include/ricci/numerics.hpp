#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ricci {

using Vec = std::vector<double>;

inline constexpr double kPi = 3.14159265358979323846;

/// Surface area of the unit (n-1)-sphere in R^n.
inline double unit_sphere_area(int n) {
  if (n < 1) throw std::invalid_argument("unit_sphere_area: n must be >= 1");
  return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

/// Sharp constant C in ||u||_{2n/(n-2)}^2 <= C ||grad u||_2^2 on flat R^n.
inline double sharp_sobolev_constant(int n) {
  if (n < 3) throw std::invalid_argument("sharp_sobolev_constant: n must be >= 3");
  const double ratio =
      std::exp((std::lgamma(double(n)) - std::lgamma(0.5 * n)) * 2.0 / n);
  return ratio / (double(n) * (n - 2) * kPi);
}

/// Solve a small dense linear system in place (partial pivoting). A is row-major k x k.
inline Vec solve_dense(std::vector<double> A, Vec b) {
  const std::size_t k = b.size();
  if (A.size() != k * k) throw std::invalid_argument("solve_dense: shape mismatch");
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(A[r * k + col]) > std::abs(A[piv * k + col])) piv = r;
    if (A[piv * k + col] == 0.0) throw std::runtime_error("solve_dense: singular matrix");
    if (piv != col) {
      for (std::size_t c = 0; c < k; ++c) std::swap(A[piv * k + c], A[col * k + c]);
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < k; ++r) {
      const double m = A[r * k + col] / A[col * k + col];
      if (m == 0.0) continue;
      for (std::size_t c = col; c < k; ++c) A[r * k + c] -= m * A[col * k + c];
      b[r] -= m * b[col];
    }
  }
  Vec x(k, 0.0);
  for (std::size_t ri = k; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t c = ri + 1; c < k; ++c) acc -= A[ri * k + c] * x[c];
    x[ri] = acc / A[ri * k + ri];
  }
  return x;
}

inline constexpr int kMaxStencil = 8;

/// Finite-difference weights (Fornberg) for the m-th derivative at x0 from
/// nn <= 8 nodes, written into w. Exact on polynomials of degree nn-1.
inline void fd_weights_into(const double* nodes, int nn, double x0, int m, double* w) {
  if (m >= nn) throw std::invalid_argument("fd_weights: need more nodes than derivative order");
  if (nn > kMaxStencil || m > 2) throw std::invalid_argument("fd_weights: unsupported stencil");
  double c[kMaxStencil][3] = {};  // c[j][k]: weight of node j for k-th derivative
  double c1 = 1.0;
  double c4 = nodes[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < nn; ++i) {
    const int mn = std::min(i, m);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = nodes[i] - x0;
    for (int j = 0; j < i; ++j) {
      const double c3 = nodes[i] - nodes[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  for (int j = 0; j < nn; ++j) w[j] = c[j][m];
}

inline Vec fd_weights(const Vec& nodes, double x0, int m) {
  if (int(nodes.size()) > kMaxStencil)
    throw std::invalid_argument("fd_weights: stencil too wide");
  Vec w(nodes.size());
  fd_weights_into(nodes.data(), int(nodes.size()), x0, m, w.data());
  return w;
}

namespace detail {
inline void check_grid(const Vec& s) {
  if (s.size() < 3) throw std::invalid_argument("grid needs at least 3 nodes");
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s[i] > s[i - 1])) throw std::invalid_argument("grid must be strictly increasing");
}
}  // namespace detail

namespace detail {
/// Apply the derivative stencil of order `der` through nodes [a, a+width) at
/// x0. The nodal values are detrended by the value nearest x0 before the
/// weighted sum; the weights of a derivative stencil sum to zero, so this
/// changes nothing analytically but removes the large-value cancellation
/// that otherwise dominates the roundoff.
inline double apply_stencil(const Vec& s, const Vec& y, std::size_t a, std::size_t width,
                            double x0, int der) {
  double w[kMaxStencil];
  fd_weights_into(s.data() + a, int(width), x0, der, w);
  std::size_t j0 = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (std::abs(s[a + j] - x0) < std::abs(s[a + j0] - x0)) j0 = j;
  const double base = y[a + j0];
  double acc = 0.0;
  for (std::size_t j = 0; j < width; ++j) acc += w[j] * (y[a + j] - base);
  return acc;
}
}  // namespace detail

/// Nodal first derivative on a (possibly nonuniform) grid: 5-point stencils,
/// centered in the interior and one-sided near the ends. O(h^4).
inline Vec deriv1(const Vec& s, const Vec& y) {
  detail::check_grid(s);
  const std::size_t m = s.size();
  if (m < 6) throw std::invalid_argument("deriv1: need at least 6 nodes");
  if (y.size() != m) throw std::invalid_argument("deriv1: size mismatch");
  Vec out(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t a = (i < 2) ? 0 : i - 2;
    if (a + 5 > m) a = m - 5;
    out[i] = detail::apply_stencil(s, y, a, 5, s[i], 1);
  }
  return out;
}

/// Nodal second derivative: 5-point centered stencils in the interior,
/// 6-point one-sided near the ends. O(h^4) throughout.
inline Vec deriv2(const Vec& s, const Vec& y) {
  detail::check_grid(s);
  const std::size_t m = s.size();
  if (m < 6) throw std::invalid_argument("deriv2: need at least 6 nodes");
  if (y.size() != m) throw std::invalid_argument("deriv2: size mismatch");
  Vec out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (i >= 2 && i + 2 < m) {
      out[i] = detail::apply_stencil(s, y, i - 2, 5, s[i], 2);
    } else {
      std::size_t a = (i < 3) ? 0 : m - 6;
      out[i] = detail::apply_stencil(s, y, a, 6, s[i], 2);
    }
  }
  return out;
}

/// Integral over [a,b] of the interpolating polynomial through (xs, ys).
inline double integrate_poly_through(const Vec& xs, const Vec& ys, double a, double b) {
  const std::size_t k = xs.size();
  // Solve for coefficients in a shifted basis (x - x_mid)^j for conditioning.
  const double mid = 0.5 * (xs.front() + xs.back());
  std::vector<double> A(k * k);
  for (std::size_t r = 0; r < k; ++r) {
    double p = 1.0;
    for (std::size_t c = 0; c < k; ++c) {
      A[r * k + c] = p;
      p *= (xs[r] - mid);
    }
  }
  const Vec coef = solve_dense(std::move(A), ys);
  double acc = 0.0, pa = a - mid, pb = b - mid, ppa = pa, ppb = pb;
  for (std::size_t j = 0; j < k; ++j) {
    acc += coef[j] * (ppb - ppa) / double(j + 1);
    ppa *= pa;
    ppb *= pb;
  }
  return acc;
}

/// Composite Simpson-type quadrature on a nonuniform grid (local parabolas
/// over interval pairs; the odd leftover interval uses the last parabola).
inline double integrate(const Vec& s, const Vec& g) {
  detail::check_grid(s);
  if (g.size() != s.size()) throw std::invalid_argument("integrate: size mismatch");
  const std::size_t m = s.size() - 1;  // interval count
  double acc = 0.0;
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const double h0 = s[i + 1] - s[i];
    const double h1 = s[i + 2] - s[i + 1];
    const double H = h0 + h1;
    acc += H / 6.0 *
           ((2.0 - h1 / h0) * g[i] + (H * H / (h0 * h1)) * g[i + 1] + (2.0 - h0 / h1) * g[i + 2]);
  }
  if (i < m) {
    const Vec xs = {s[m - 2], s[m - 1], s[m]};
    const Vec ys = {g[m - 2], g[m - 1], g[m]};
    acc += integrate_poly_through(xs, ys, s[m - 1], s[m]);
  }
  return acc;
}

/// Cumulative integral with piecewise-cubic local interpolation, O(h^4).
/// out[i] = integral of g over [s0, s_i].
inline Vec cumulative_integral(const Vec& s, const Vec& g) {
  detail::check_grid(s);
  const std::size_t m = s.size();
  if (g.size() != m) throw std::invalid_argument("cumulative_integral: size mismatch");
  Vec out(m, 0.0);
  for (std::size_t i = 0; i + 1 < m; ++i) {
    std::size_t a = (i == 0) ? 0 : i - 1;
    if (a + 4 > m) a = m - 4;
    if (m < 4) a = 0;
    const std::size_t k = std::min<std::size_t>(4, m);
    Vec xs(k), ys(k);
    for (std::size_t j = 0; j < k; ++j) {
      xs[j] = s[a + j];
      ys[j] = g[a + j];
    }
    out[i + 1] = out[i] + integrate_poly_through(xs, ys, s[i], s[i + 1]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Monotone (shape-preserving) cubic Hermite interpolation, Fritsch-Carlson.
// ---------------------------------------------------------------------------

struct Pchip {
  Vec x, y, d;  // nodes, values, node slopes

  Pchip() = default;
  Pchip(Vec xs, Vec ys) : x(std::move(xs)), y(std::move(ys)) {
    detail::check_grid(x);
    if (y.size() != x.size()) throw std::invalid_argument("Pchip: size mismatch");
    const std::size_t m = x.size();
    Vec h(m - 1), delta(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) {
      h[i] = x[i + 1] - x[i];
      delta[i] = (y[i + 1] - y[i]) / h[i];
    }
    d.assign(m, 0.0);
    for (std::size_t i = 1; i + 1 < m; ++i) {
      if (delta[i - 1] * delta[i] > 0.0) {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
      }
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
      double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (s * d0 <= 0.0)
        s = 0.0;
      else if (d0 * d1 < 0.0 && std::abs(s) > 3.0 * std::abs(d0))
        s = 3.0 * d0;
      return s;
    };
    d[0] = (m == 2) ? delta[0] : end_slope(h[0], h[1], delta[0], delta[1]);
    d[m - 1] = (m == 2) ? delta[0] : end_slope(h[m - 2], h[m - 3], delta[m - 2], delta[m - 3]);
  }

  std::size_t locate(double xq) const {
    if (xq <= x.front()) return 0;
    if (xq >= x[x.size() - 2]) return x.size() - 2;
    const auto it = std::upper_bound(x.begin(), x.end(), xq);
    return std::size_t(it - x.begin()) - 1;
  }

  double operator()(double xq) const {
    const std::size_t i = locate(xq);
    const double h = x[i + 1] - x[i];
    const double t = (xq - x[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * y[i] + h * h10 * d[i] + h01 * y[i + 1] + h * h11 * d[i + 1];
  }

  double deriv(double xq) const {
    const std::size_t i = locate(xq);
    const double h = x[i + 1] - x[i];
    const double t = (xq - x[i]) / h;
    const double t2 = t * t;
    const double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
    const double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
    return g00 * y[i] + g10 * d[i] + g01 * y[i + 1] + g11 * d[i + 1];
  }
};

// ---------------------------------------------------------------------------
// Small fitting helpers.
// ---------------------------------------------------------------------------

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double rms_residual = 0.0;
  bool ok = false;
};

/// Least-squares straight line y = intercept + slope * x.
inline LineFit fit_line(const Vec& x, const Vec& y) {
  LineFit out;
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) return out;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double det = m * sxx - sx * sx;
  if (det == 0.0) return out;
  out.slope = (m * sxy - sx * sy) / det;
  out.intercept = (sy * sxx - sx * sxy) / det;
  double ss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = y[i] - out.intercept - out.slope * x[i];
    ss += r * r;
  }
  out.rms_residual = std::sqrt(ss / m);
  out.ok = true;
  return out;
}

/// Log-log power-law fit y ~ C * x^p over entries with x,y > 0.
inline LineFit fit_power(const Vec& x, const Vec& y) {
  Vec lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0 && y[i] > 0.0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  return fit_line(lx, ly);
}

/// Analytic continuation of a decaying integrand past the last grid node:
/// fits a power law on the outermost nodes and integrates it to infinity.
/// Returns 0 when the data is flat, nonpositive, or not integrable.
inline double tail_correction(const Vec& s, const Vec& g, std::size_t fit_nodes = 12) {
  const std::size_t m = s.size();
  if (m < fit_nodes + 1 || g.size() != m) return 0.0;
  const double gm = g[m - 1];
  if (!(gm > 0.0)) return 0.0;
  double scale = 0.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  if (gm < 1e-13 * scale) return 0.0;
  Vec xs, ys;
  for (std::size_t i = m - fit_nodes; i < m; ++i) {
    if (!(g[i] > 0.0)) return 0.0;  // sign changes: no reliable model
    xs.push_back(s[i]);
    ys.push_back(g[i]);
  }
  const LineFit fit = fit_power(xs, ys);
  if (!fit.ok || fit.slope >= -1.05) return 0.0;
  return gm * s[m - 1] / (-1.0 - fit.slope);
}

/// Nine-point quartic-preserving smoothing filter (least-squares local
/// polynomial). Exact on quartics, so smooth fields pass through to O(h^5),
/// while grid-scale modes are damped by a factor ~4 per pass. Nodes within
/// four of the right boundary are left untouched; at the left boundary the
/// data is either left untouched or reflected evenly across node 0 (for
/// fields even in the radial coordinate).
inline Vec smooth_quartic9(const Vec& y, bool even_origin = false) {
  static const double c[9] = {15.0 / 429.0,  -55.0 / 429.0, 30.0 / 429.0,
                              135.0 / 429.0, 179.0 / 429.0, 135.0 / 429.0,
                              30.0 / 429.0,  -55.0 / 429.0, 15.0 / 429.0};
  const std::size_t m = y.size();
  Vec out = y;
  if (m < 9) return out;
  const std::size_t lo = even_origin ? 0 : 4;
  for (std::size_t i = lo; i + 4 < m; ++i) {
    double acc = 0.0;
    for (int j = -4; j <= 4; ++j) {
      const long k = long(i) + j;
      acc += c[j + 4] * y[std::size_t(k < 0 ? -k : k)];
    }
    out[i] = acc;
  }
  return out;
}

/// Bisection root finder on [a,b]; requires a sign change.
inline double bisect(const std::function<double(double)>& fn, double a, double b,
                     double tol = 1e-13, int max_iter = 200) {
  double fa = fn(a), fb = fn(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if (fa * fb > 0.0) throw std::invalid_argument("bisect: no sign change in bracket");
  for (int it = 0; it < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    const double c = 0.5 * (a + b);
    const double fc = fn(c);
    if (fc == 0.0) return c;
    if (fa * fc < 0.0) {
      b = c;
      fb = fc;
    } else {
      a = c;
      fa = fc;
    }
  }
  return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// Threading: deterministic blocked parallel-for over an index range.
// ---------------------------------------------------------------------------

inline int& thread_count() {
  static int n = 1;
  return n;
}

inline void set_thread_count(int n) { thread_count() = std::max(1, n); }

template <class F>
inline void parallel_for(std::size_t count, F&& fn) {
  const int nt = std::min<int>(thread_count(), int(count > 0 ? count : 1));
  if (nt <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const std::size_t chunk = (count + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

/// Fixed 17-significant-digit formatting used by every serialized output.
inline std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

}  // namespace ricci
