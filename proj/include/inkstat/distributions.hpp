#pragma once

// Reference distributions for the test battery: normal, Student t,
// chi-square, F and the studentized range.
//
// t, chi-square and F are evaluated through the regularized incomplete
// beta/gamma functions (continued fractions), giving roughly 1e-12
// absolute accuracy across the usual parameter range. The studentized
// range CDF is a double integral (chi-distributed scale outside, location
// of the minimum inside) computed with adaptive Gauss-Kronrod quadrature.
//
// Every function here is pure and thread-safe.

#include <limits>

namespace inkstat::dist {

enum class Family { normal, student_t, chi_square, f, studentized_range };

struct DistSpec {
  Family family = Family::normal;
  double df1 = 0.0;  // t, chi-square, F numerator, studentized-range df
  double df2 = 0.0;  // F denominator
  int groups = 0;    // studentized range only

  static DistSpec normal() { return {}; }
  static DistSpec student_t(double df) { return {Family::student_t, df, 0.0, 0}; }
  static DistSpec chi_square(double df) { return {Family::chi_square, df, 0.0, 0}; }
  static DistSpec f(double df_num, double df_den) { return {Family::f, df_num, df_den, 0}; }
  // df may be +infinity (range of k standard normals).
  static DistSpec studentized_range(int k, double df) {
    return {Family::studentized_range, df, 0.0, k};
  }
};

// Throws ParameterError when the spec is invalid.
void validate(const DistSpec& spec);

double cdf(const DistSpec& spec, double x);
// Upper tail 1 - cdf, computed without cancellation. Use this for p-values.
double sf(const DistSpec& spec, double x);
double pdf(const DistSpec& spec, double x);
// Inverse of cdf. Throws ParameterError for p outside (0,1) and
// NumericError if the root finder fails to bracket or converge.
double quantile(const DistSpec& spec, double p);

// Special functions, exposed for tests and reuse.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);
double regularized_beta(double a, double b, double x);

double normal_cdf(double x);
double normal_sf(double x);
double normal_pdf(double x);
// Wichura AS241, about 1e-16 relative accuracy.
double normal_quantile(double p);

// P(range of k iid N(0,1) <= w).
double normal_range_cdf(double w, int k);
double studentized_range_cdf(double q, int k, double df);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace inkstat::dist
