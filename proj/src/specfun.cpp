#include "jacobilab/specfun.hpp"

#include <cmath>
#include <stdexcept>

#include "jacobilab/arith.hpp"
#include "jacobilab/mpreal.hpp"

namespace jlab::num {

double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: need x > 0");
  Real r = Real::lngamma(Real(x, 256));
  return r.to_double();
}

std::complex<double> log_gamma(std::complex<double> z) {
  if (!(z.real() > 0.0))
    throw std::domain_error("log_gamma(complex): need Re z > 0");
  // Lanczos approximation, g = 607/128, 15 coefficients (Godfrey's set).
  static const double g = 4.7421875;
  static const double c[15] = {
      0.99999999999999709182,     57.156235665862923517,
      -59.597960355475491248,     14.136097974741747174,
      -0.49191381609762019978,    3.3994649984811888699e-5,
      4.6523628927048575665e-5,   -9.8374475304879564677e-5,
      1.5808870322491248884e-4,   -2.1026444172410488319e-4,
      2.1743961811521264320e-4,   -1.6431810653676389022e-4,
      8.4418223983852743293e-5,   -2.6190838401581408670e-5,
      3.6899182659531622704e-6};
  std::complex<double> zm1 = z - 1.0;
  std::complex<double> s = c[0];
  for (int i = 1; i < 15; ++i) s += c[i] / (zm1 + static_cast<double>(i));
  std::complex<double> t = zm1 + g + 0.5;
  static const double half_log_2pi = 0.91893853320467274178;
  return half_log_2pi + (zm1 + 0.5) * std::log(t) - t + std::log(s);
}

BesselResult bessel_j(double nu, double x, const PrecisionPolicy& policy) {
  policy.validate();
  if (nu < 0.0 || x < 0.0)
    throw std::domain_error("bessel_j: need nu >= 0 and x >= 0");
  if (x == 0.0) return {nu == 0.0 ? 1.0 : 0.0, 0.0, 0, 0};

  // term recurrence t_{j+1} = -t_j (x/2)^2 / ((j+1)(nu+j+1)); once terms
  // decrease the alternating tail is bounded by the first dropped term.
  // Start at a precision sized to the cancellation ~ e^x, then escalate.
  unsigned need = static_cast<unsigned>(1.5 * x) + 64;
  unsigned bits = policy.bits > need ? policy.bits : need;
  if (bits > PrecisionPolicy::kMaxBits) bits = PrecisionPolicy::kMaxBits;

  double best_bound = std::numeric_limits<double>::infinity();
  double best_value = 0.0;
  unsigned best_terms = 0;
  for (;; bits *= 2) {
    if (bits > PrecisionPolicy::kMaxBits) bits = PrecisionPolicy::kMaxBits;
    Real xh(x, bits);
    xh.div_si(2);
    Real q = xh * xh;  // (x/2)^2
    // nu enters exactly; nu + j + 1 must be formed in mpfr, not double: a
    // different sub-ulp perturbation per denominator survives any working
    // precision and wrecks the alternating cancellation for x over ~30.
    Real nu_r(nu, bits);
    Real t = Real::exp(nu_r * Real::log(xh) - Real::lngamma(nu_r + Real(1L, bits)));
    Real sum = t;
    Real max_abs = t.abs();
    unsigned j = 0;
    const unsigned kMaxTerms = 40000;
    double stop_at = policy.tail_tol * 1e-3;
    for (; j < kMaxTerms; ++j) {
      t = -(t * q);
      t.div_si(static_cast<long>(j + 1));
      t /= nu_r + Real(static_cast<long>(j + 1), bits);
      double ta = t.abs().to_double();
      bool decreasing = q.to_double() <= (j + 2.0) * (nu + j + 2.0);
      if (decreasing && ta < stop_at) break;
      sum += t;
      if (t.abs() > max_abs) max_abs = t.abs();
    }
    double tail = t.abs().to_double();
    // rounding: each of the ~j additions perturbs by <= ulp at the running max
    double rounding =
        (j + 4.0) * max_abs.to_double() * std::ldexp(1.0, -static_cast<int>(bits) + 6);
    double bound = tail + rounding;
    double value = sum.to_double();
    if (bound < best_bound) {
      best_bound = bound;
      best_value = value;
      best_terms = j;
    }
    if (bound <= policy.tail_tol) return {value, bound, bits, j};
    if (bits >= PrecisionPolicy::kMaxBits)
      throw precision_exhausted("bessel_j: series not certifiable at precision ceiling",
                                best_bound, policy.tail_tol);
  }
  return {best_value, best_bound, PrecisionPolicy::kMaxBits, best_terms};
}

double kloosterman(std::int64_t a, std::int64_t b, std::int64_t c) {
  if (c <= 0) throw std::domain_error("kloosterman: need c >= 1");
  if (c == 1) return 1.0;
  a %= c;
  if (a < 0) a += c;
  b %= c;
  if (b < 0) b += c;
  const double two_pi_over_c = 2.0 * 3.14159265358979323846 / static_cast<double>(c);
  double sum = 0.0, comp = 0.0;  // Kahan
  for (std::int64_t d = 1; d < c; ++d) {
    if (std::gcd(d, c) != 1) continue;
    std::int64_t dinv = mod_inverse(d, c);
    std::int64_t arg = (a * d + b * dinv) % c;
    double term = std::cos(two_pi_over_c * static_cast<double>(arg));
    double y = term - comp;
    double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace jlab::num
