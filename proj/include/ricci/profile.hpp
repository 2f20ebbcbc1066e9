#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ricci/neck.hpp"
#include "ricci/numerics.hpp"

namespace ricci {

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

struct GridSpec {
  enum class Kind { Uniform, Graded };
  Kind kind = Kind::Uniform;
  double s_max = 20.0;
  int segments = 400;  // node count is segments + 1
  // Graded grids cluster nodes around `center` with Gaussian density profile.
  double center = 2.0;
  double width = 1.0;
  double factor = 4.0;

  Vec make() const {
    if (segments < 8) throw std::invalid_argument("GridSpec: need at least 8 segments");
    if (!(s_max > 0.0)) throw std::invalid_argument("GridSpec: s_max must be positive");
    Vec s(segments + 1);
    if (kind == Kind::Uniform) {
      for (int i = 0; i <= segments; ++i) s[i] = s_max * double(i) / segments;
      s.back() = s_max;
      return s;
    }
    // Node density rho(x) = 1 + (factor-1) exp(-((x-center)/width)^2) on a fine
    // auxiliary grid; nodes are placed at equal increments of its cumulative.
    const int fine = 16 * segments;
    Vec x(fine + 1), cum(fine + 1, 0.0);
    for (int i = 0; i <= fine; ++i) x[i] = s_max * double(i) / fine;
    auto rho = [&](double xx) {
      const double z = (xx - center) / width;
      return 1.0 + (factor - 1.0) * std::exp(-z * z);
    };
    for (int i = 1; i <= fine; ++i)
      cum[i] = cum[i - 1] + 0.5 * (rho(x[i - 1]) + rho(x[i])) * (x[i] - x[i - 1]);
    const double total = cum.back();
    int j = 0;
    for (int i = 0; i <= segments; ++i) {
      const double target = total * double(i) / segments;
      while (j < fine && cum[j + 1] < target) ++j;
      const double denom = cum[j + 1] - cum[j];
      const double t = denom > 0.0 ? (target - cum[j]) / denom : 0.0;
      s[i] = x[j] + t * (x[j + 1] - x[j]);
    }
    s.front() = 0.0;
    s.back() = s_max;
    for (int i = 1; i <= segments; ++i)
      if (!(s[i] > s[i - 1])) throw std::runtime_error("GridSpec: graded grid not monotone");
    return s;
  }
};

// ---------------------------------------------------------------------------
// Radial profile
// ---------------------------------------------------------------------------

/// Fitted asymptotic model of the warp factor on the outer grid region:
///   f(s)/s ~ slope * (1 + a * (slope*s)^{-tau}).
/// `slope` absorbs overall dilations of the chart (1 for as-built profiles).
struct TailFit {
  bool flat = true;       // deviation below resolution; tau effectively unbounded
  double slope = 1.0;
  double a = 0.0;
  double tau = 0.0;
  double rel_residual = 0.0;
};

/// Discrete rotationally symmetric metric g = phi^2 ds^2 + f^2 dsigma^2 on a
/// radial grid. f is the warp radius of the distance sphere, phi the radial
/// lapse; arclength from the origin is the cumulative integral of phi.
struct RadialProfile {
  int n = 3;          // ambient dimension (>= 2; flow needs >= 3)
  double tau = 1.0;   // declared asymptotic decay order
  Vec s, f, phi;
  std::string family = "custom";
  std::map<std::string, double> params;
  TailFit tail;

  std::size_t nodes() const { return s.size(); }
  double s_max() const { return s.back(); }
};

/// Fit the tail model on the outer third of the grid. The chart dilation is
/// the intercept of a quadratic fit of f/s against 1/s, which strips the
/// leading decay terms; the decay order then comes from a log-log fit of the
/// remaining relative deviation.
inline TailFit fit_tail(const RadialProfile& p) {
  TailFit out;
  const std::size_t m = p.s.size();
  const std::size_t lo = (2 * m) / 3;
  double slope;
  {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, b0 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = lo; i < m; ++i) {
      const double x = 1.0 / p.s[i];
      const double y = p.f[i] / p.s[i];
      s0 += 1; s1 += x; s2 += x * x; s3 += x * x * x; s4 += x * x * x * x;
      b0 += y; b1 += x * y; b2 += x * x * y;
    }
    try {
      const Vec coef = solve_dense({s0, s1, s2, s1, s2, s3, s2, s3, s4}, {b0, b1, b2});
      slope = coef[0];
    } catch (const std::exception&) {
      slope = p.f[m - 1] / p.s[m - 1];
    }
    if (!(slope > 0.0)) slope = p.f[m - 1] / p.s[m - 1];
  }
  out.slope = slope;

  Vec xs, ys;
  double dev_max = 0.0;
  std::vector<int> signs;
  for (std::size_t i = lo; i < m; ++i) {
    const double y = p.f[i] / (slope * p.s[i]) - 1.0;
    dev_max = std::max(dev_max, std::abs(y));
    if (std::abs(y) > 1e-14) {
      xs.push_back(slope * p.s[i]);
      ys.push_back(std::abs(y));
      signs.push_back(y > 0.0 ? 1 : -1);
    }
  }
  if (dev_max < 1e-12 || xs.size() < 4) {
    out.flat = true;
    return out;
  }
  const LineFit fit = fit_power(xs, ys);
  if (!fit.ok) {
    out.flat = true;
    return out;
  }
  out.flat = false;
  out.tau = -fit.slope;
  long sum = 0;
  for (int sg : signs) sum += sg;
  out.a = (sum >= 0 ? 1.0 : -1.0) * std::exp(fit.intercept);
  out.rel_residual = fit.rms_residual;
  return out;
}

/// Arclength r(s) = int_0^s phi, fourth-order cumulative quadrature.
inline Vec arclength(const RadialProfile& p) { return cumulative_integral(p.s, p.phi); }

namespace detail {
inline void check_profile_arrays(const RadialProfile& p, bool require_dimension_2 = true) {
  if (require_dimension_2 && p.n < 2)
    throw std::invalid_argument("RadialProfile: dimension must be >= 2");
  check_grid(p.s);
  if (p.s.front() != 0.0) throw std::invalid_argument("RadialProfile: grid must start at 0");
  if (p.f.size() != p.s.size() || p.phi.size() != p.s.size())
    throw std::invalid_argument("RadialProfile: array size mismatch");
  if (std::abs(p.f.front()) > 1e-12 * std::max(1.0, p.f.back()))
    throw std::invalid_argument("RadialProfile: f must vanish at the origin");
  for (std::size_t i = 1; i < p.f.size(); ++i)
    if (!(p.f[i] > 0.0)) throw std::invalid_argument("RadialProfile: f must be positive away from origin");
  for (double v : p.phi)
    if (!(v > 0.0)) throw std::invalid_argument("RadialProfile: phi must be positive");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

struct Flat {};

/// f(s) = s (1 + a exp(-((s-r0)/w)^2)), unit lapse.
struct GaussianBump {
  double a = 0.1, r0 = 2.0, w = 0.5;
};

/// Time-symmetric slice built from the isotropic conformal factor
/// (1 + m/(2 s))^{4/(n-2)} on the exterior, closed off by a smooth polynomial
/// cap inside s = m/2. In dimension 3 the cap meets the exterior exactly at
/// the throat, so the profile carries one minimal hypersphere.
struct SchwarzschildSlice {
  double m = 1.0;
};

/// Neck curve scaled to length `scale`, continued by a derivative ramp of
/// length `ramp` back to unit slope and then a straight flat tail.
struct NeckFamily {
  NeckProfileParams params;
  double scale = 4.0;
  double ramp = 2.0;
};

/// Conformally flat metric e^{2u} |dx|^2 with radial Gaussian u.
struct ConformalBump {
  double u0 = 0.05, r0 = 2.0, w = 0.5;
};

using FamilySpec = std::variant<Flat, GaussianBump, SchwarzschildSlice, NeckFamily, ConformalBump>;

/// Closed-form pieces of the Schwarzschild slice family; exposed so tests can
/// quadrature the exact lapse independently of the grid sampling.
struct SchwarzschildModel {
  double m = 1.0;
  int n = 3;
  double junction = 0.5;   // = m/2
  Vec cap_f;               // quintic coefficients, f_cap(s) = sum c_k s^k
  Vec cap_phi;             // quartic coefficients

  double exterior_u(double s) const { return 1.0 + 0.5 * m / s; }
  double exterior_phi(double s) const { return std::pow(exterior_u(s), 2.0 / (n - 2)); }
  double exterior_f(double s) const { return s * exterior_phi(s); }
  double exterior_df(double s) const {
    const double k = 2.0 / (n - 2);
    const double u = exterior_u(s);
    return std::pow(u, k - 1.0) * (1.0 + (1.0 - k) * 0.5 * m / s);
  }
  double exterior_d2f(double s) const {
    const double k = 2.0 / (n - 2);
    const double u = exterior_u(s);
    const double du = -0.5 * m / (s * s);
    const double d2u = m / (s * s * s);
    // f = s u^k: f'' = 2 k u^{k-1} u' + s k (k-1) u^{k-2} u'^2 + s k u^{k-1} u''
    return 2.0 * k * std::pow(u, k - 1.0) * du +
           s * k * (k - 1.0) * std::pow(u, k - 2.0) * du * du +
           s * k * std::pow(u, k - 1.0) * d2u;
  }
  double exterior_dphi(double s) const {
    const double k = 2.0 / (n - 2);
    return k * std::pow(exterior_u(s), k - 1.0) * (-0.5 * m / (s * s));
  }
  double exterior_d2phi(double s) const {
    const double k = 2.0 / (n - 2);
    const double u = exterior_u(s);
    const double du = -0.5 * m / (s * s);
    const double d2u = m / (s * s * s);
    return k * (k - 1.0) * std::pow(u, k - 2.0) * du * du + k * std::pow(u, k - 1.0) * d2u;
  }

  static double poly(const Vec& c, double s) {
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 0;) acc = acc * s + c[j];
    return acc;
  }
  static double dpoly(const Vec& c, double s) {
    double acc = 0.0;
    for (std::size_t j = c.size(); j-- > 1;) acc = acc * s + double(j) * c[j];
    return acc;
  }

  double f(double s) const { return s <= junction ? poly(cap_f, s) : exterior_f(s); }
  double phi(double s) const { return s <= junction ? poly(cap_phi, s) : exterior_phi(s); }
};

inline SchwarzschildModel make_schwarzschild_model(double m, int n) {
  if (!(m > 0.0)) throw std::invalid_argument("schwarzschild_slice: mass must be positive");
  if (n < 3) throw std::invalid_argument("schwarzschild_slice: requires n >= 3");
  SchwarzschildModel md;
  md.m = m;
  md.n = n;
  md.junction = 0.5 * m;
  const double sj = md.junction;
  const double phi_j = md.exterior_phi(sj);

  // Cap polynomials use parity-constrained bases so the metric stays smooth
  // at the center: the lapse is even in s (1, s^2, s^4, s^6) and the warp odd
  // (s, s^3, s^5, s^7), which keeps |nu1 - nu2| = O(r^2) there.

  // Lapse cap: phi(0) = phi_j plus C^2 junction data.
  {
    std::vector<double> A;
    Vec b;
    const int pow_phi[3] = {2, 4, 6};
    auto row = [&](double s0, int der) {
      for (int k : pow_phi) {
        double coef = 1.0;
        int kk = k;
        for (int d = 0; d < der; ++d) coef *= kk--;
        A.push_back(coef * std::pow(s0, kk));
      }
    };
    row(sj, 0);  b.push_back(0.0);  // deviation from phi_j vanishes at junction
    row(sj, 1);  b.push_back(md.exterior_dphi(sj));
    row(sj, 2);  b.push_back(md.exterior_d2phi(sj));
    const Vec c = solve_dense(std::move(A), std::move(b));
    md.cap_phi = {phi_j, 0.0, c[0], 0.0, c[1], 0.0, c[2]};
  }

  // Warp cap: f'(0) = phi(0) (unit arclength slope at the center). In n=3 the
  // exterior derivative vanishes at the junction (the throat); the cap keeps
  // f'' = 0 there so f' only touches zero, leaving a single minimal
  // hypersphere. In other dimensions the junction is matched to C^2.
  {
    const bool at_throat = (n == 3);
    std::vector<double> A;
    Vec b;
    const int pow_f[3] = {3, 5, 7};
    auto row = [&](double s0, int der) {
      for (int k : pow_f) {
        double coef = 1.0;
        int kk = k;
        for (int d = 0; d < der; ++d) coef *= kk--;
        A.push_back(coef * std::pow(s0, kk));
      }
    };
    row(sj, 0);  b.push_back(md.exterior_f(sj) - phi_j * sj);
    row(sj, 1);  b.push_back(md.exterior_df(sj) - phi_j);
    row(sj, 2);  b.push_back(at_throat ? 0.0 : md.exterior_d2f(sj));
    const Vec c = solve_dense(std::move(A), std::move(b));
    md.cap_f = {0.0, phi_j, 0.0, c[0], 0.0, c[1], 0.0, c[2]};
  }

  // Cap sanity on a fine sample: positive lapse, increasing warp.
  for (int i = 1; i <= 256; ++i) {
    const double s0 = sj * double(i) / 256.0;
    if (!(SchwarzschildModel::poly(md.cap_phi, s0) > 0.0))
      throw std::invalid_argument("schwarzschild_slice: cap lapse not positive");
    if (!(SchwarzschildModel::poly(md.cap_f, s0) > 0.0))
      throw std::invalid_argument("schwarzschild_slice: cap warp not positive");
    if (i < 256 && !(SchwarzschildModel::dpoly(md.cap_f, s0) > 0.0))
      throw std::invalid_argument("schwarzschild_slice: cap warp not increasing");
  }
  return md;
}

inline const char* family_name(const FamilySpec& spec) {
  struct V {
    const char* operator()(const Flat&) const { return "flat"; }
    const char* operator()(const GaussianBump&) const { return "gaussian_bump"; }
    const char* operator()(const SchwarzschildSlice&) const { return "schwarzschild_slice"; }
    const char* operator()(const NeckFamily&) const { return "neck"; }
    const char* operator()(const ConformalBump&) const { return "conformal_bump"; }
  };
  return std::visit(V{}, spec);
}

inline RadialProfile make_profile(const FamilySpec& spec, int n, const GridSpec& grid) {
  if (n < 2) throw std::invalid_argument("make_profile: dimension must be >= 2");
  RadialProfile p;
  p.n = n;
  p.s = grid.make();
  const std::size_t m = p.s.size();
  p.f.resize(m);
  p.phi.resize(m);
  p.family = family_name(spec);
  p.tau = std::max(1.0, double(n - 2));

  if (std::holds_alternative<Flat>(spec)) {
    for (std::size_t i = 0; i < m; ++i) {
      p.f[i] = p.s[i];
      p.phi[i] = 1.0;
    }
  } else if (const auto* gb = std::get_if<GaussianBump>(&spec)) {
    p.params = {{"a", gb->a}, {"r0", gb->r0}, {"w", gb->w}};
    if (!(gb->w > 0.0)) throw std::invalid_argument("gaussian_bump: width must be positive");
    for (std::size_t i = 0; i < m; ++i) {
      const double z = (p.s[i] - gb->r0) / gb->w;
      p.f[i] = p.s[i] * (1.0 + gb->a * std::exp(-z * z));
      p.phi[i] = 1.0;
    }
  } else if (const auto* sc = std::get_if<SchwarzschildSlice>(&spec)) {
    p.params = {{"m", sc->m}};
    p.tau = 1.0;
    const SchwarzschildModel md = make_schwarzschild_model(sc->m, n);
    if (p.s.back() < 4.0 * md.junction)
      throw std::invalid_argument("schwarzschild_slice: grid too short for the exterior region");
    for (std::size_t i = 0; i < m; ++i) {
      p.f[i] = md.f(p.s[i]);
      p.phi[i] = md.phi(p.s[i]);
    }
    p.f[0] = 0.0;
  } else if (const auto* nf = std::get_if<NeckFamily>(&spec)) {
    p.params["scale"] = nf->scale;
    p.params["ramp"] = nf->ramp;
    for (std::size_t i = 0; i < nf->params.latent.size(); ++i)
      p.params["theta" + std::to_string(i)] = nf->params.latent[i];
    if (!(nf->scale > 0.0) || !(nf->ramp > 0.0))
      throw std::invalid_argument("neck: scale and ramp must be positive");
    p.tau = 1.0;  // affine flat tail: f = s - const
    const NeckCurve curve = eval_neck(nf->params, 4097);
    if (!curve.admissible) throw std::invalid_argument("neck: " + curve.reason);
    const Pchip gfit(curve.x, curve.g);
    const double L = nf->scale, T = nf->ramp;
    if (p.s.back() < L + T + 1.0)
      throw std::invalid_argument("neck: grid too short for neck plus ramp");
    const double f_neck_end = L * curve.end_value;
    // Ramp integral: f' = sin^2(pi (s-L) / (2T)); int over [L, L+t].
    auto ramp_f = [&](double t) { return 0.5 * t - T / (2.0 * kPi) * std::sin(kPi * t / T); };
    for (std::size_t i = 0; i < m; ++i) {
      const double s0 = p.s[i];
      if (s0 <= L)
        p.f[i] = L * gfit(s0 / L);
      else if (s0 <= L + T)
        p.f[i] = f_neck_end + ramp_f(s0 - L);
      else
        p.f[i] = f_neck_end + ramp_f(T) + (s0 - L - T);
      p.phi[i] = 1.0;
    }
    p.f[0] = 0.0;
  } else if (const auto* cb = std::get_if<ConformalBump>(&spec)) {
    p.params = {{"u0", cb->u0}, {"r0", cb->r0}, {"w", cb->w}};
    if (!(cb->w > 0.0)) throw std::invalid_argument("conformal_bump: width must be positive");
    for (std::size_t i = 0; i < m; ++i) {
      const double z = (p.s[i] - cb->r0) / cb->w;
      const double e = std::exp(cb->u0 * std::exp(-z * z));
      p.phi[i] = e;
      p.f[i] = p.s[i] * e;
    }
  }

  detail::check_profile_arrays(p);
  p.tail = fit_tail(p);
  return p;
}

// ---------------------------------------------------------------------------
// Metric operations
// ---------------------------------------------------------------------------

/// Profile of lambda^2 g on the same coordinate grid: f and phi scale by
/// lambda, curvatures by lambda^-2, volumes by lambda^n.
inline RadialProfile scale_metric(const RadialProfile& p, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("scale_metric: lambda must be positive");
  RadialProfile out = p;
  for (auto& v : out.f) v *= lambda;
  for (auto& v : out.phi) v *= lambda;
  out.tail = fit_tail(out);
  return out;
}

/// Resample onto a new grid spanning a sub-interval of the old one, with
/// monotone cubic interpolation of f and phi.
inline RadialProfile regrid(const RadialProfile& p, const GridSpec& grid) {
  Vec snew = grid.make();
  if (snew.back() > p.s.back() * (1.0 + 1e-12))
    throw std::invalid_argument("regrid: new grid exceeds the old span");
  RadialProfile out;
  out.n = p.n;
  out.tau = p.tau;
  out.family = p.family;
  out.params = p.params;
  out.s = std::move(snew);
  const std::size_t m = out.s.size();
  out.f.resize(m);
  out.phi.resize(m);
  const Pchip ff(p.s, p.f), pf(p.s, p.phi);
  std::size_t j = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = out.s[i];
    while (j + 1 < p.s.size() && p.s[j] < x) ++j;
    if (p.s[j] == x) {  // node coincidence: copy bitwise
      out.f[i] = p.f[j];
      out.phi[i] = p.phi[j];
    } else {
      out.f[i] = ff(x);
      out.phi[i] = pf(x);
    }
  }
  out.f[0] = 0.0;
  for (std::size_t i = 1; i < m; ++i)
    if (!(out.f[i] > 0.0))
      throw std::invalid_argument("regrid: interpolated f lost positivity");
  for (double v : out.phi)
    if (!(v > 0.0)) throw std::invalid_argument("regrid: interpolated phi lost positivity");
  out.tail = fit_tail(out);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: {n, tau, s[], f[], phi[], family, params}, 17 significant
// digits, fixed key order; round trips are byte stable.
// ---------------------------------------------------------------------------

inline std::string write_profile(const RadialProfile& p) {
  std::ostringstream os;
  auto arr = [&](const Vec& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) os << ",";
      os << format17(v[i]);
    }
    os << "]";
  };
  os << "{\n";
  os << "  \"n\": " << p.n << ",\n";
  os << "  \"tau\": " << format17(p.tau) << ",\n";
  os << "  \"s\": ";
  arr(p.s);
  os << ",\n  \"f\": ";
  arr(p.f);
  os << ",\n  \"phi\": ";
  arr(p.phi);
  os << ",\n  \"family\": \"" << p.family << "\",\n";
  os << "  \"params\": {";
  bool first = true;
  for (const auto& [k, v] : p.params) {
    if (!first) os << ", ";
    first = false;
    os << "\"" << k << "\": " << format17(v);
  }
  os << "}\n}\n";
  return os.str();
}

inline RadialProfile read_profile(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  static const char* required[] = {"n", "tau", "s", "f", "phi", "family", "params"};
  for (const char* k : required)
    if (!j.contains(k)) throw std::invalid_argument(std::string("profile: missing field '") + k + "'");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : required) known = known || (it.key() == k);
    if (!known) throw std::invalid_argument("profile: unknown field '" + it.key() + "'");
  }
  RadialProfile p;
  p.n = j.at("n").get<int>();
  p.tau = j.at("tau").get<double>();
  p.s = j.at("s").get<Vec>();
  p.f = j.at("f").get<Vec>();
  p.phi = j.at("phi").get<Vec>();
  p.family = j.at("family").get<std::string>();
  for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
    p.params[it.key()] = it.value().get<double>();
  detail::check_profile_arrays(p);
  p.tail = fit_tail(p);
  return p;
}

}  // namespace ricci
