#pragma once

// Adaptive Gauss-Kronrod (7/15) quadrature. Internal to the library.

#include <array>
#include <cmath>

namespace inkstat::detail {

struct GkEstimate {
  double kronrod;
  double error;
};

template <class F>
GkEstimate gauss_kronrod_15(const F& f, double a, double b) {
  static constexpr std::array<double, 8> xgk = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> wgk = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  // Gauss weights for the nodes xgk[1], xgk[3], xgk[5], xgk[7].
  static constexpr std::array<double, 4> wg = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double k = fc * wgk[7];
  double g = fc * wg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * xgk[j];
    const double sum = f(center - dx) + f(center + dx);
    k += wgk[j] * sum;
    if (j % 2 == 1) g += wg[j / 2] * sum;
  }
  return {k * half, std::abs((k - g) * half)};
}

template <class F>
double integrate_adaptive(const F& f, double a, double b, double abs_tol, int depth = 14) {
  const GkEstimate est = gauss_kronrod_15(f, a, b);
  if (est.error <= abs_tol || depth == 0 || !(b - a > 1e-15 * (std::abs(a) + std::abs(b)))) {
    return est.kronrod;
  }
  const double mid = 0.5 * (a + b);
  return integrate_adaptive(f, a, mid, 0.5 * abs_tol, depth - 1) +
         integrate_adaptive(f, mid, b, 0.5 * abs_tol, depth - 1);
}

}  // namespace inkstat::detail
