#include "inkstat/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <numbers>

#include "inkstat/error.hpp"
#include "quadrature.hpp"

namespace inkstat::dist {
namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxContinuedFractionTerms = 100000;

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxContinuedFractionTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError(fmt::format("incomplete beta continued fraction did not converge (a={}, b={}, x={})", a, b, x));
}

double gamma_series(double a, double x) {
  double ap = a;
  double del = 1.0 / a;
  double sum = del;
  for (int n = 0; n < kMaxContinuedFractionTerms; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError(fmt::format("incomplete gamma series did not converge (a={}, x={})", a, x));
}

double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxContinuedFractionTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw NumericError(fmt::format("incomplete gamma continued fraction did not converge (a={}, x={})", a, x));
}

void require_finite_or_inf(double x) {
  if (std::isnan(x)) throw ParameterError("distribution argument is NaN");
}

double student_t_cdf(double t, double df) {
  if (std::isinf(df)) return normal_cdf(t);
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

double student_t_sf(double t, double df) { return student_t_cdf(-t, df); }

double chi_square_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return regularized_gamma_p(0.5 * df, 0.5 * x);
}

double chi_square_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

double f_cdf(double x, double d1, double d2) {
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return regularized_beta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2));
}

double f_sf(double x, double d1, double d2) {
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return regularized_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * x));
}

// Safeguarded Newton on a bracket [lo, hi] with cdf(lo) <= p <= cdf(hi).
double invert_monotone(const std::function<double(double)>& cdf_fn, const std::function<double(double)>& pdf_fn,
                       double p, double lo, double hi) {
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    const double fx = cdf_fn(x) - p;
    if (fx == 0.0) return x;
    if (fx < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double scale = std::max(1.0, std::abs(x));
    if (hi - lo <= 1e-14 * scale) return 0.5 * (lo + hi);
    const double density = pdf_fn(x);
    double next = density > 0.0 ? x - fx / density : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * scale) return next;
    x = next;
  }
  throw NumericError(fmt::format("quantile iteration did not converge for p={} (bracket [{}, {}])", p, lo, hi));
}

// Expand hi until cdf(hi) >= p.
double bracket_upper(const std::function<double(double)>& cdf_fn, double p, double start) {
  double hi = start;
  for (int i = 0; i < 2000; ++i) {
    if (cdf_fn(hi) >= p) return hi;
    hi *= 2.0;
  }
  throw NumericError(fmt::format("could not bracket quantile for p={}", p));
}

// Moments of S = sqrt(chi2_df / df).
void chi_scale_moments(double df, double& mean, double& sd) {
  if (df > 1e4) {
    mean = 1.0 - 1.0 / (4.0 * df);
    sd = std::sqrt(0.5 / df);
    return;
  }
  mean = std::sqrt(2.0 / df) * std::exp(std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df));
  sd = std::sqrt(std::max(1.0 - mean * mean, 1e-12));
}

double chi_scale_log_density(double s, double df) {
  // f(s) = df^{df/2} s^{df-1} exp(-df s^2 / 2) / (Gamma(df/2) 2^{df/2 - 1})
  if (df < 100.0) {
    return 0.5 * df * std::log(df) + (df - 1.0) * std::log(s) - 0.5 * df * s * s - std::lgamma(0.5 * df) -
           (0.5 * df - 1.0) * std::numbers::ln2;
  }
  // Large df: fold the normalizing constant through Stirling's series so the
  // O(df log df) terms cancel analytically instead of in floating point.
  const double x = 0.5 * df;
  const double x2 = x * x;
  const double stirling_remainder = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2);
  const double delta = s - 1.0;
  return 0.5 * std::log(df / std::numbers::pi) - stirling_remainder + (df - 1.0) * std::log1p(delta) -
         0.5 * df * delta * (s + 1.0);
}

}  // namespace

void validate(const DistSpec& spec) {
  switch (spec.family) {
    case Family::normal:
      return;
    case Family::student_t:
      if (!(spec.df1 > 0.0)) throw ParameterError(fmt::format("student t requires df > 0, got {}", spec.df1));
      return;
    case Family::chi_square:
      if (!(spec.df1 > 0.0) || std::isinf(spec.df1))
        throw ParameterError(fmt::format("chi-square requires finite df > 0, got {}", spec.df1));
      return;
    case Family::f:
      if (!(spec.df1 > 0.0) || !(spec.df2 > 0.0) || std::isinf(spec.df1) || std::isinf(spec.df2))
        throw ParameterError(fmt::format("F requires finite df > 0, got ({}, {})", spec.df1, spec.df2));
      return;
    case Family::studentized_range:
      if (spec.groups < 2)
        throw ParameterError(fmt::format("studentized range requires k >= 2 groups, got {}", spec.groups));
      if (!(spec.df1 > 0.0)) throw ParameterError(fmt::format("studentized range requires df > 0, got {}", spec.df1));
      return;
  }
  throw ParameterError("unknown distribution family");
}

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw ParameterError(fmt::format("regularized_gamma_p domain error (a={}, x={})", a, x));
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw ParameterError(fmt::format("regularized_gamma_q domain error (a={}, x={})", a, x));
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double regularized_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0)
    throw ParameterError(fmt::format("regularized_beta domain error (a={}, b={}, x={})", a, b, x));
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError(fmt::format("probability must lie in (0,1), got {}", p));
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r + .24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + .0151986665636164571966) * r +
               .14810397642748007459) * r + .68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + .0012426609473880784386) * r +
               .026532189526576123093) * r + .29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + .0148753612908506148525) * r + .13692988092273580531) * r +
            .59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_range_cdf(double w, int k) {
  if (k < 2) throw ParameterError(fmt::format("range distribution requires k >= 2, got {}", k));
  if (!(w > 0.0)) return 0.0;
  if (std::isinf(w)) return 1.0;
  // k * integral phi(z) [Phi(z + w) - Phi(z)]^{k-1} dz, z = location of the minimum.
  const auto integrand = [w, k](double z) {
    const double mass = z > 0.0 ? normal_sf(z) - normal_sf(z + w) : normal_cdf(z + w) - normal_cdf(z);
    return normal_pdf(z) * std::pow(mass, k - 1);
  };
  double total = 0.0;
  // phi is below 1e-17 outside [-9, 9]; unit panels keep the adaptive rule honest.
  for (double z = -9.0; z < 9.0; z += 1.0) {
    total += detail::integrate_adaptive(integrand, z, z + 1.0, 1e-13);
  }
  return std::clamp(k * total, 0.0, 1.0);
}

double studentized_range_cdf(double q, int k, double df) {
  validate(DistSpec::studentized_range(k, df));
  if (std::isnan(q)) throw ParameterError("studentized range argument is NaN");
  if (!(q > 0.0)) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (std::isinf(df)) return normal_range_cdf(q, k);

  double mean = 0.0;
  double sd = 0.0;
  chi_scale_moments(df, mean, sd);
  const auto integrand = [q, k, df](double s) {
    if (s <= 0.0) return 0.0;
    const double log_density = chi_scale_log_density(s, df);
    if (log_density < -745.0) return 0.0;
    return std::exp(log_density) * normal_range_cdf(q * s, k);
  };
  // Panels one standard deviation wide out to 14 sd on either side of the mean.
  const double lo = std::max(0.0, mean - 14.0 * sd);
  const double hi = mean + 14.0 * sd;
  const int panels = static_cast<int>(std::ceil((hi - lo) / sd));
  const double width = (hi - lo) / panels;
  double total = 0.0;
  for (int i = 0; i < panels; ++i) {
    total += detail::integrate_adaptive(integrand, lo + i * width, lo + (i + 1) * width, 1e-11);
  }
  return std::clamp(total, 0.0, 1.0);
}

double cdf(const DistSpec& spec, double x) {
  validate(spec);
  require_finite_or_inf(x);
  switch (spec.family) {
    case Family::normal:
      return normal_cdf(x);
    case Family::student_t:
      return student_t_cdf(x, spec.df1);
    case Family::chi_square:
      return chi_square_cdf(x, spec.df1);
    case Family::f:
      return f_cdf(x, spec.df1, spec.df2);
    case Family::studentized_range:
      return studentized_range_cdf(x, spec.groups, spec.df1);
  }
  return 0.0;
}

double sf(const DistSpec& spec, double x) {
  validate(spec);
  require_finite_or_inf(x);
  switch (spec.family) {
    case Family::normal:
      return normal_sf(x);
    case Family::student_t:
      return student_t_sf(x, spec.df1);
    case Family::chi_square:
      return chi_square_sf(x, spec.df1);
    case Family::f:
      return f_sf(x, spec.df1, spec.df2);
    case Family::studentized_range:
      return 1.0 - studentized_range_cdf(x, spec.groups, spec.df1);
  }
  return 0.0;
}

double pdf(const DistSpec& spec, double x) {
  validate(spec);
  require_finite_or_inf(x);
  switch (spec.family) {
    case Family::normal:
      return normal_pdf(x);
    case Family::student_t: {
      const double df = spec.df1;
      if (std::isinf(df)) return normal_pdf(x);
      return std::exp(std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi) -
                      0.5 * (df + 1.0) * std::log1p(x * x / df));
    }
    case Family::chi_square: {
      const double half = 0.5 * spec.df1;
      if (x < 0.0 || std::isinf(x)) return 0.0;
      if (x == 0.0) return half < 1.0 ? kInf : (half == 1.0 ? 0.5 : 0.0);
      return std::exp((half - 1.0) * std::log(x) - 0.5 * x - half * std::numbers::ln2 - std::lgamma(half));
    }
    case Family::f: {
      const double d1 = spec.df1;
      const double d2 = spec.df2;
      if (x < 0.0 || std::isinf(x)) return 0.0;
      if (x == 0.0) return d1 < 2.0 ? kInf : (d1 == 2.0 ? 1.0 : 0.0);
      return std::exp(0.5 * (d1 * std::log(d1) + d2 * std::log(d2)) + (0.5 * d1 - 1.0) * std::log(x) -
                      0.5 * (d1 + d2) * std::log(d2 + d1 * x) - log_beta(0.5 * d1, 0.5 * d2));
    }
    case Family::studentized_range: {
      const double h = 1e-5 * std::max(1.0, x);
      return (studentized_range_cdf(x + h, spec.groups, spec.df1) -
              studentized_range_cdf(std::max(0.0, x - h), spec.groups, spec.df1)) /
             (x + h - std::max(0.0, x - h));
    }
  }
  return 0.0;
}

double quantile(const DistSpec& spec, double p) {
  validate(spec);
  if (!(p > 0.0 && p < 1.0)) throw ParameterError(fmt::format("probability must lie in (0,1), got {}", p));
  switch (spec.family) {
    case Family::normal:
      return normal_quantile(p);
    case Family::student_t: {
      if (std::isinf(spec.df1)) return normal_quantile(p);
      if (p == 0.5) return 0.0;
      const auto cdf_fn = [&](double x) { return student_t_cdf(x, spec.df1); };
      const auto pdf_fn = [&](double x) { return pdf(spec, x); };
      // Symmetric: solve for the upper half and reflect.
      const double upper = p > 0.5 ? p : 1.0 - p;
      const double hi = bracket_upper(cdf_fn, upper, 1.0);
      const double x = invert_monotone(cdf_fn, pdf_fn, upper, 0.0, hi);
      return p > 0.5 ? x : -x;
    }
    case Family::chi_square: {
      const auto cdf_fn = [&](double x) { return chi_square_cdf(x, spec.df1); };
      const auto pdf_fn = [&](double x) { return pdf(spec, x); };
      const double hi = bracket_upper(cdf_fn, p, std::max(1.0, spec.df1));
      return invert_monotone(cdf_fn, pdf_fn, p, 0.0, hi);
    }
    case Family::f: {
      const auto cdf_fn = [&](double x) { return f_cdf(x, spec.df1, spec.df2); };
      const auto pdf_fn = [&](double x) { return pdf(spec, x); };
      const double hi = bracket_upper(cdf_fn, p, 1.0);
      return invert_monotone(cdf_fn, pdf_fn, p, 0.0, hi);
    }
    case Family::studentized_range: {
      // Plain bisection: each cdf call is a double integral and the
      // finite-difference density is not worth the extra evaluations.
      const auto cdf_fn = [&](double x) { return studentized_range_cdf(x, spec.groups, spec.df1); };
      double lo = 0.0;
      double hi = bracket_upper(cdf_fn, p, 4.0);
      while (hi - lo > 1e-9 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        if (cdf_fn(mid) < p) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
  }
  return 0.0;
}

}  // namespace inkstat::dist
