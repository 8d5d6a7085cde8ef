#pragma once

#include <cmath>
#include <complex>
#include <limits>

namespace jlab::num {

// Nonzero complex value carried as (log |w|, arg w).  Exact zero is
// logmod = -inf.  Keeps products/quotients/powers exact in the exponent and
// makes sums of wildly-scaled terms safe: addition factors out the larger
// modulus, so only the *ratio* of the addends is ever exponentiated.
struct LogComplex {
  double logmod = -std::numeric_limits<double>::infinity();
  double phase = 0.0;  // normalized to (-pi, pi]

  static constexpr double kPi = 3.14159265358979323846;

  static double wrap(double p) {
    if (p > kPi || p <= -kPi) {
      p = std::remainder(p, 2.0 * kPi);  // [-pi, pi], ties to even
      if (p <= -kPi) p += 2.0 * kPi;
    }
    return p;
  }

  LogComplex() = default;
  LogComplex(double lm, double ph) : logmod(lm), phase(wrap(ph)) {}

  static LogComplex zero() { return LogComplex(); }
  static LogComplex one() { return LogComplex(0.0, 0.0); }

  static LogComplex from_complex(const std::complex<double>& w) {
    double a = std::abs(w);
    if (a == 0.0) return zero();
    return LogComplex(std::log(a), std::arg(w));
  }
  // from log-polar data where the modulus is already a log
  static LogComplex from_logpolar(double lm, double ph) { return LogComplex(lm, ph); }

  bool is_zero() const { return logmod == -std::numeric_limits<double>::infinity(); }

  // Safe only when |logmod| is within double exponent range (~709); callers
  // exponentiate ratios, not raw magnitudes.
  std::complex<double> to_complex() const {
    if (is_zero()) return {0.0, 0.0};
    double r = std::exp(logmod);
    return {r * std::cos(phase), r * std::sin(phase)};
  }

  friend LogComplex operator*(const LogComplex& a, const LogComplex& b) {
    if (a.is_zero() || b.is_zero()) return zero();
    return LogComplex(a.logmod + b.logmod, a.phase + b.phase);
  }
  friend LogComplex operator/(const LogComplex& a, const LogComplex& b) {
    return LogComplex(a.logmod - b.logmod, a.phase - b.phase);
  }
  LogComplex pow(double t) const {
    if (is_zero()) return zero();
    return LogComplex(logmod * t, phase * t);
  }
  LogComplex conj() const { return LogComplex(logmod, -phase); }
  LogComplex neg() const { return LogComplex(logmod, phase + kPi); }

  // a + b via factoring out the larger modulus.
  friend LogComplex operator+(const LogComplex& a, const LogComplex& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    const LogComplex* big = &a;
    const LogComplex* small = &b;
    if (b.logmod > a.logmod) std::swap(big, small);
    double d = small->logmod - big->logmod;  // <= 0
    std::complex<double> w =
        std::polar(1.0, big->phase) + std::polar(std::exp(d), small->phase);
    double aw = std::abs(w);
    if (aw == 0.0) return zero();
    return LogComplex(big->logmod + std::log(aw), std::arg(w));
  }
  LogComplex& operator+=(const LogComplex& o) { return *this = *this + o; }
  LogComplex& operator*=(const LogComplex& o) { return *this = *this * o; }
};

}  // namespace jlab::num
