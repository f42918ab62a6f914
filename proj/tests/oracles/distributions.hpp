#pragma once

// Student t and Fisher F distribution functions by direct numerical
// integration of their densities (adaptive Simpson), independent of any
// special-function library.

#include <algorithm>
#include <cmath>
#include <functional>

namespace oracle {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                           double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

inline double t_pdf(double x, double df) {
  const double logc = std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0) - 0.5 * std::log(df * M_PI);
  return std::exp(logc - (df + 1.0) / 2.0 * std::log1p(x * x / df));
}

// P(T <= t) = 1/2 + integral of the density over [0, t]; the interval is cut
// into unit pieces so the adaptive rule sees smooth segments.
inline double t_cdf(double t, double df) {
  const double a = std::abs(t);
  double s = 0.0;
  for (double lo = 0.0; lo < a; lo += 1.0)
    s += integrate([df](double x) { return t_pdf(x, df); }, lo, std::min(lo + 1.0, a));
  return t >= 0.0 ? 0.5 + s : 0.5 - s;
}

inline double f_pdf(double x, double d1, double d2) {
  if (x <= 0.0) return 0.0;
  const double logc = std::lgamma((d1 + d2) / 2.0) - std::lgamma(d1 / 2.0) - std::lgamma(d2 / 2.0) +
                      d1 / 2.0 * std::log(d1 / d2);
  return std::exp(logc + (d1 / 2.0 - 1.0) * std::log(x) - (d1 + d2) / 2.0 * std::log1p(d1 * x / d2));
}

// P(F <= f) with x = u^2, which removes the x^(-1/2) singularity at d1 = 1.
// The transformed integrand 2u pdf(u^2) behaves like u^(d1 - 1) near 0.
inline double f_cdf(double f, double d1, double d2) {
  if (f <= 0.0) return 0.0;
  const double log_norm = std::lgamma((d1 + d2) / 2.0) - std::lgamma(d1 / 2.0) - std::lgamma(d2 / 2.0) +
                          d1 / 2.0 * std::log(d1 / d2);
  auto g = [&](double u) {
    if (u > 0.0) return 2.0 * u * f_pdf(u * u, d1, d2);
    return d1 == 1.0 ? 2.0 * std::exp(log_norm) : 0.0;
  };
  const double top = std::sqrt(f);
  double s = 0.0;
  for (double lo = 0.0; lo < top; lo += 0.5) s += integrate(g, lo, std::min(lo + 0.5, top));
  return s;
}

}  // namespace oracle
