#pragma once

#include <complex>
#include <cstdint>

#include "jacobilab/precision.hpp"

namespace jlab::num {

// ln Γ(x) for real x > 0, evaluated in extended precision and rounded once.
double log_gamma(double x);

// ln Γ(z) for complex z with Re z > 0 (Lanczos, g = 7).  Accurate to ~1e-13
// relative in the right half plane; used for vertical-line contour integrals.
std::complex<double> log_gamma(std::complex<double> z);

// Bessel J_nu(x), nu >= 0 real, x >= 0, by the certified ascending series.
// tail_bound is a rigorous absolute-error bound (alternating-series tail +
// accumulated rounding); escalates working precision up to the policy ceiling
// and throws precision_exhausted when even that cannot reach tail_tol.
struct BesselResult {
  double value;
  double tail_bound;
  unsigned bits_used;
  unsigned terms;
};
BesselResult bessel_j(double nu, double x, const PrecisionPolicy& policy = {});

// Kloosterman sum S(a,b;c) = sum_{d mod c, (d,c)=1} e((a d + b d~)/c); real.
double kloosterman(std::int64_t a, std::int64_t b, std::int64_t c);

}  // namespace jlab::num
