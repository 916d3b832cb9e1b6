#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <vector>

#include "lsgp/errors.hpp"

namespace lsgp {

template <typename Scalar>
struct QuadratureResult {
  Scalar value{0};
  Scalar error{0};
  int intervals{0};
  bool converged{false};
};

namespace detail {

// 7-point Gauss / 15-point Kronrod pair (QUADPACK qk15 abscissae and weights).
template <typename Scalar>
struct Kronrod15 {
  static constexpr Scalar xgk[8] = {
      Scalar(0.991455371120812639206854697526329), Scalar(0.949107912342758524526189684047851),
      Scalar(0.864864423359769072789712788640926), Scalar(0.741531185599394439863864773280788),
      Scalar(0.586087235467691130294144845693013), Scalar(0.405845151377397166906606412076961),
      Scalar(0.207784955007898467600689403773245), Scalar(0.000000000000000000000000000000000)};
  static constexpr Scalar wgk[8] = {
      Scalar(0.022935322010529224963732008058970), Scalar(0.063092092629978553290700663189204),
      Scalar(0.104790010322250183839876322541518), Scalar(0.140653259715525918745189590510238),
      Scalar(0.169004726639267902826583426598550), Scalar(0.190350578064785409913256402421014),
      Scalar(0.204432940075298892414161999234649), Scalar(0.209482141084727828012999174891714)};
  static constexpr Scalar wg[4] = {
      Scalar(0.129484966168869693270611432679082), Scalar(0.279705391489276667901467771423780),
      Scalar(0.381830050505118944950369775488975), Scalar(0.417959183673469387755102040816327)};
};

template <typename Scalar>
struct Panel {
  Scalar a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename Scalar, typename F>
Panel<Scalar> kronrod_panel(F& f, Scalar a, Scalar b) {
  using K = Kronrod15<Scalar>;
  const Scalar centre = (a + b) / 2;
  const Scalar half = (b - a) / 2;
  const Scalar fc = f(centre);
  Scalar gauss = fc * K::wg[3];
  Scalar kronrod = fc * K::wgk[7];
  for (int j = 0; j < 7; ++j) {
    const Scalar dx = half * K::xgk[j];
    const Scalar pair = f(centre - dx) + f(centre + dx);
    kronrod += K::wgk[j] * pair;
    if (j % 2 == 1) gauss += K::wg[j / 2] * pair;
  }
  return {a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b]. The panel with the
/// largest error estimate is bisected until the summed error falls below
/// max(abs_tol, rel_tol * |integral|) or max_intervals panels are in use.
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate_adaptive(F&& f, Scalar a, Scalar b, Scalar rel_tol,
                                            Scalar abs_tol = Scalar(0),
                                            int max_intervals = 4000) {
  QuadratureResult<Scalar> out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  std::priority_queue<detail::Panel<Scalar>> panels;
  panels.push(detail::kronrod_panel<Scalar>(f, a, b));
  Scalar total = panels.top().value;
  Scalar error = panels.top().error;
  const Scalar floor = 50 * std::numeric_limits<Scalar>::epsilon();
  while (static_cast<int>(panels.size()) < max_intervals) {
    const Scalar target = std::max(abs_tol, rel_tol * std::abs(total));
    if (error <= target) break;
    auto worst = panels.top();
    // Panel too narrow to split further: accept what we have.
    if (std::abs(worst.b - worst.a) <= floor * std::max(std::abs(worst.a), std::abs(worst.b)))
      break;
    panels.pop();
    const Scalar mid = (worst.a + worst.b) / 2;
    auto left = detail::kronrod_panel<Scalar>(f, worst.a, mid);
    auto right = detail::kronrod_panel<Scalar>(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    panels.push(left);
    panels.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  total = Scalar(0);
  error = Scalar(0);
  out.intervals = static_cast<int>(panels.size());
  while (!panels.empty()) {
    total += panels.top().value;
    error += panels.top().error;
    panels.pop();
  }
  out.value = total;
  out.error = error;
  out.converged = error <= std::max(abs_tol, rel_tol * std::abs(total));
  return out;
}

/// Same as integrate_adaptive but throws NumericError when the tolerance is missed.
template <typename Scalar, typename F>
Scalar integrate_or_throw(F&& f, Scalar a, Scalar b, Scalar rel_tol, Scalar abs_tol = Scalar(0)) {
  auto r = integrate_adaptive<Scalar>(f, a, b, rel_tol, abs_tol);
  if (!r.converged) {
    const Scalar rel = r.value != Scalar(0) ? r.error / std::abs(r.value) : r.error;
    throw NumericError("adaptive quadrature did not converge", static_cast<double>(rel));
  }
  return r.value;
}

/// Integral of f over [a, inf). Geometrically growing panels [a, a+1], [a+1, a+2],
/// [a+2, a+4], ... are integrated adaptively until a panel contributes less than
/// tail_rel of the running total and the integrand at the panel end is below
/// peak_rel times the largest sampled value.
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate_to_infinity(F&& f, Scalar a, Scalar rel_tol,
                                               Scalar tail_rel = Scalar(1e-13),
                                               Scalar peak_rel = Scalar(1e-12)) {
  QuadratureResult<Scalar> out;
  out.converged = true;
  Scalar lo = a;
  Scalar width = 1;
  Scalar peak = 0;
  int quiet_panels = 0;
  for (int k = 0; k < 200; ++k) {
    const Scalar hi = lo + width;
    auto sampled = [&](Scalar x) {
      const Scalar v = f(x);
      peak = std::max(peak, std::abs(v));
      return v;
    };
    auto r = integrate_adaptive<Scalar>(sampled, lo, hi, rel_tol, rel_tol * std::abs(out.value));
    out.value += r.value;
    out.error += r.error;
    out.intervals += r.intervals;
    out.converged = out.converged && r.converged;
    const Scalar end_value = std::abs(f(hi));
    const bool small_panel = std::abs(r.value) <= tail_rel * std::abs(out.value);
    const bool small_tail = end_value <= peak_rel * peak;
    quiet_panels = (small_panel && small_tail) ? quiet_panels + 1 : 0;
    if (quiet_panels >= 2 || (peak == Scalar(0) && k > 60)) return out;
    lo = hi;
    if (k > 0) width *= 2;
  }
  out.converged = false;
  return out;
}

}  // namespace lsgp
