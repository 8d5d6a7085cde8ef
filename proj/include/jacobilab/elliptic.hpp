#pragma once

#include <gmpxx.h>

#include <complex>
#include <cstdint>
#include <map>
#include <vector>

#include "jacobilab/precision.hpp"

namespace jlab::ell {

using num::PrecisionPolicy;
using i64 = std::int64_t;

// ----------------------------------------------------------- exact q-series
// Integer q-expansions a(0..N) of level-one modular forms, exact arithmetic.
struct QExpansion {
  int weight = 0;
  std::vector<mpz_class> a;

  i64 truncation() const { return static_cast<i64>(a.size()) - 1; }
};

QExpansion eisenstein(int k, i64 N);  // E_4, E_6, ... constant term 1
QExpansion delta_form(i64 N);         // weight 12 cusp form, a(1) = 1
QExpansion mul(const QExpansion& f, const QExpansion& g, i64 N);

// dim S_k for even k >= 0, level 1
int dim_cusp(int k);

// Echelonized integer basis of S_k: f_i = q^{i+1} + O(q^{dim+1}).
std::vector<QExpansion> miller_basis(int k, i64 N);

// --------------------------------------------------------------- eigenforms
struct Eigenform {
  int weight = 0;
  std::vector<double> a;    // classical coefficients, a[1] = 1
  std::vector<double> lam;  // a(n) / n^{(k-1)/2}
  double t2 = 0;            // Hecke eigenvalue a(2)

  double coeff(i64 n) const { return a.at(static_cast<std::size_t>(n)); }
};

// Hecke eigenbasis of S_k via diagonalizing T_2 on the Miller basis; sorted
// by a(2) descending.  Residual of the eigen-equation is checked internally.
std::vector<Eigenform> eigenbasis(int k, i64 N);

// Long coefficient table for the one-dimensional spaces (k = 12, 16, 18,
// 20, 22, 26): the eigenform is Delta * E_{k-12}.  a(p) at primes comes from
// an exact integer convolution (128-bit eta-power recursion for tau, exact
// divisor sums for the Eisenstein factor); composites follow multiplicatively
// from the Hecke relations in doubles, so every entry is good to a few ulps.
// The exact route above is O(dim N^2) big-integer work and unusable past a
// few thousand terms, while the twisted-L machinery needs ~10^4..10^5 of
// them -- and its tail certificates assume the Deligne bound, which breaks
// silently if the table carries convolution noise (a plain double-precision
// convolution is off by percents near n = 2000 and is pure noise by 10^4).
// nmax <= 1.2e5, the exactness ceiling of the 128-bit recursion.
Eigenform eigenform_dense(int k, i64 nmax);

// ------------------------------------------------------- Petersson numerics
// <f, f> over SL(2,Z)\H by tensor Gauss-Legendre over the standard
// fundamental domain, q-expansion evaluation with certified series tails.
double petersson_norm(const Eigenform& f, int gl_nodes = 48);

// Petersson trace-formula average Delta_M(s,t) for level M, weight kappa:
//   delta(s,t) + 2 pi (-1)^{kappa/2} sum_{M | c <= cmax} S(s,t;c)/c
//                                                      * J_{kappa-1}(4 pi sqrt(st)/c)
// Certificate: noise = rounding + small-argument c-tail; skipped = envelope
// bound on c whose Bessel argument exceeds the evaluable range.
struct DeltaResult {
  double value;
  double noise_bound;    // certified numerical error of the evaluated part
  double skipped_bound;  // envelope for terms bounded instead of evaluated
  double evaluated_abs;  // sum of |evaluated off-diagonal contributions|
  i64 cmax_used;
};
DeltaResult petersson_delta(i64 M, i64 s, i64 t, int kappa, i64 cmax = 0,
                            const PrecisionPolicy& policy = {});

// ------------------------------------------------ Chebyshev-type recursion
// Row t: integer coefficients c_{p^t}(p^j), j = 0..t, from the three-term
// recursion X_{t+1} = x X_t - X_{t-1}, X_0 = 1, X_1 = x, expanded in the
// divisor variables; row t has nonzero entries only for j = t, t-2, t-4, ...
std::vector<std::vector<i64>> chebyshev_rows(int tmax);

// C(p) = -(1/(p+1)) sum_{t>=1} (p/(p+1)^2)^t sum_j c_{p^t}(p^j)^2, certified
// by a measured-ratio geometric tail; escalates tmax for small p.
struct CpResult {
  double value;
  double tail_bound;
  int tmax_used;
  double last_ratio;
};
CpResult c_of_p(i64 p, int tmax = 40, double tol = 1e-12);

// -------------------------------------------------------------- L-functions
// L(f, s) for real s > (k+1)/2 by direct summation with a certified
// Deligne-bound tail.
struct LValue {
  double value;
  double tail_bound;
  i64 terms;
};
LValue dirichlet_series(const Eigenform& f, double s);

// Smoothed approximate-functional-equation weight
//   V(xi) = (1/2pi i) int_(sigma) Gamma(s0+u)/Gamma(s0) e^{u^2} xi^{-u} du/u.
// contour_weight: production path, fixed trapezoid on a near-saddle sigma
// line with precomputed Gamma nodes and a computable aliasing certificate.
// contour_weight_ref: slow step-halving reference used as its oracle.
// contour_weight_bound: certified envelope min_sigma of the integrand line
// bound; reports the minimizing sigma for tail telescoping.
double contour_weight(double s0, double xi);
double contour_weight_ref(double s0, double xi);
double contour_weight_bound(double s0, double xi, double* sigma_opt = nullptr);

// Central value L(f x chi_D, k/2) of the twist by the Kronecker character
// chi_D, D a fundamental discriminant, via the smoothed approximate
// functional equation with the contour weight V.  balance = X splits the two
// halves as I(X) + eps I(1/X); any X > 0 gives the same value (regression
// knob, and the eps = -1 cancellation test is only meaningful off X = 1).
// The returned tail_bound is honest: V decays only like exp(-ln(xi)^2/4),
// so certifying eps below ~1e-6 needs coefficient tables of ~10^4..10^5
// terms; with a shorter table the value is still returned, with the
// correspondingly larger certificate.
struct CentralTwist {
  double value;
  double tail_bound;
  int eps;           // functional-equation sign
  bool forced_zero;  // eps = -1 and balance == 1: identically zero
  i64 terms;
};
CentralTwist central_L_twist(const Eigenform& f, i64 D, double balance = 1.0,
                             const PrecisionPolicy& policy = {});

// --------------------------------------------------- elliptic Bergman mass
// M_k(tau) = sum_{f in eigenbasis} v^k |f(tau)|^2 / <f,f>, evaluated in the
// log domain; returns log M_k.
double mass_elliptic_log(int k, double u, double v,
                         const std::vector<Eigenform>& basis,
                         const std::vector<double>& norms);

}  // namespace jlab::ell
