#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jacobilab/logcomplex.hpp"
#include "jacobilab/precision.hpp"

namespace jlab::jac {

using num::LogComplex;
using num::PrecisionPolicy;
using i64 = std::int64_t;

// ----------------------------------------------------------------- points
// tau = u + iv in the upper half plane, z = x + iy in C.
struct JacobiPoint {
  double u = 0.0;
  double v = 1.0;
  double x = 0.0;
  double y = 0.0;
};

// Jacobi-group element (M, (lambda, mu)) with M = [[a,b],[c,d]] in SL2(Z);
// the center acts trivially on everything we compute and is dropped.
struct GroupMove {
  i64 a = 1, b = 0, c = 0, d = 1;
  i64 lambda = 0, mu = 0;
};

// Action of a group element on a point: tau' = (a tau + b)/(c tau + d),
// z' = (z + lambda tau' ... ) -- Heisenberg first, then M, matching the
// coset order used by the Poincare series below.
JacobiPoint apply_move(const GroupMove& g, const JacobiPoint& p);

// Standard reduction: translate/invert tau into the SL2 fundamental domain,
// then z mod (Z tau' + Z) so x in [0,1), y in [0, v').  If back is non-null
// it receives the element mapping the reduced point to the original one.
JacobiPoint reduce_point(const JacobiPoint& p, GroupMove* back = nullptr);

// ---------------------------------------------------------- coefficient maps
// Fourier coefficients c(n, r) of a form of weight k, index m.  A coefficient
// depends only on the shell (D = 4nm - r^2, r mod 2m); for even weight
// c(n,r) = c(n,-r), so shells are stored under rt = min(r mod 2m, 2m - r mod 2m)
// in [0, m].  Each shell carries a certified absolute noise bound.
struct JacobiCoeffTable {
  int k = 0;
  i64 m = 1;
  i64 Dmax = 0;

  struct Entry {
    std::complex<double> c{0.0, 0.0};
    double noise = 0.0;        // certified absolute error of c
    double consistency = 0.0;  // max spread over redundant (n,r) extractions
  };
  std::map<std::pair<i64, i64>, Entry> shells;  // key (D, rt)

  static i64 canonical_r(i64 r, i64 m);
  bool has(i64 n, i64 r) const;
  std::complex<double> get(i64 n, i64 r) const;  // 0 outside the table
  double noise_of(i64 n, i64 r) const;

  // {"k":..,"m":..,"Dmax":..,"entries":[[n,r,re,im],...]} with one row per
  // stored shell at its minimal-n representative r = rt.
  std::string to_json() const;
};

// Evaluate a coefficient table as a q-series at p (log-domain; safe for any
// v > 0, y).  tail_log, if non-null, receives the log of a certified bound
// for the dropped D > Dmax shells, based on the trace-formula coefficient
// envelope.  The bound is sound only when the table holds cusp-form
// coefficients of the given (k, m).
LogComplex table_eval(const JacobiCoeffTable& t, const JacobiPoint& p,
                      double* tail_log = nullptr);

// ------------------------------------------------------------- Poincare side
struct PoincareSpec {
  int k = 12;
  i64 m = 1;
  i64 n0 = 1;
  i64 r0 = 0;
  i64 cmax = 30;            // starting truncation radii; raised adaptively
  i64 lmax = 0;             // 0 = default ceil(4/sqrt(m contour_v)) + 6
  double contour_v = 1.2;   // extraction contour, must stay > 1

  void validate() const;  // throws std::invalid_argument on bad data
};

// Petersson normalizer lambda_{k,m}(n,r): <phi, P^{n,r}> = lambda * c_phi(n,r)
// for the inner product with weight e^{-4 pi m y^2 / v} and measure
// v^{k-3} du dv dx dy.  Unfolding against the translation subgroup
// {(T^t,(0,mu))} gives
//   lambda = Gamma(k - 3/2) (pi (4n - r^2/m))^{-(k-3/2)} (4m)^{-1/2}.
// (A published variant differs by sqrt(2); the 4m form is the one consistent
// with this weight, with the trace-formula main term, and with the direct
// quadrature of <P,P> -- see the tests.)
double poincare_normalizer_log(int k, i64 m, i64 n, i64 r);
double poincare_normalizer(int k, i64 m, i64 n, i64 r);

// Certified evaluation of P^{n0,r0}_{k,m} at a point (log-domain).  The sum
// runs over coset representatives (c,d) coprime (both signs, folded into two
// branches) x lambda in Z, windowed; windows grow adaptively until the
// certified tail is <= policy.tail_tol relative to the accumulated value,
// else num::truncation_error.
struct EvalResult {
  LogComplex value;
  double tail_log;  // log of certified absolute tail bound
  i64 cmax_used = 0;
};
EvalResult poincare_eval(const PoincareSpec& spec, const JacobiPoint& p,
                         const PrecisionPolicy& policy = {});

// Fourier coefficients C(n',r'; P) for n' <= nmax, |r'| <= rmax by a 2-D DFT
// of samples on the contour u, x in [0,1), v = contour_v, y = 0, computed in
// MPFR at policy.bits (raised as needed), then unwound by e^{2 pi n' v}.
// noise_target is the absolute noise allowance for the outermost shell
// (n' = nmax); lower shells come out with noise smaller by e^{-2pi(nmax-n')v}.
// grid = 0 selects 8 (nmax + m rmax), the smallest grid the alias bound
// certifies; the DFT is a plain mode sum, so nothing favors powers of two.
JacobiCoeffTable poincare_fourier(const PoincareSpec& spec, i64 nmax, i64 rmax,
                                  i64 grid = 0, double noise_target = 1e-9,
                                  const PrecisionPolicy& policy = {});

// #{(A, lambda) in {+-1} x Z : [[l,r/2],[r/2,m]][[A,0],[lambda,1]] = [[l2,r2/2],[r2/2,m]]},
// the coefficient limit of C(l2,r2; P^{l,r}_{k,m}) as k -> infinity.
i64 delta_count(i64 m, i64 l, i64 r, i64 l2, i64 r2);

// Trace-formula average sum_phi C_phi(n1,r1) conj(C_phi(n2,r2)) computed as
// lambda(n2,r2)^{-1} C(n1,r1; P^{n2,r2}); table must hold that coefficient.
struct TraceValue {
  std::complex<double> value;
  double noise;  // propagated absolute bound
};
TraceValue petersson_trace(int k, i64 m, i64 n1, i64 r1,
                           const JacobiCoeffTable& fourier_p2, i64 n2, i64 r2);

// ------------------------------------------------------------- Gram machine
// Spanning Poincare specs: the `count` smallest admissible discriminants
// D = 3,4,7,8,... distributed over the residue classes r mod 2m.
std::vector<PoincareSpec> spanning_specs(int k, i64 m, int count);

struct GramBasis {
  int k = 0;
  i64 m = 1;
  std::vector<PoincareSpec> specs;
  std::vector<JacobiCoeffTable> spec_tables;  // Fourier tables of each P_i

  std::vector<std::vector<std::complex<double>>> gram;  // G[i][j] = <P_i,P_j>
  double herm_residual = 0.0;  // ||G - G*|| / ||G|| before symmetrization
  double gram_noise = 0.0;     // propagated absolute entry noise

  int rank = 0;
  std::vector<double> eigenvalues;  // of the Hermitized Gram, ascending
  // ortho[e][i]: orthonormal basis element phi_e = sum_i ortho[e][i] P_i
  std::vector<std::vector<std::complex<double>>> ortho;
  std::vector<JacobiCoeffTable> coeff_tables;  // tables of the phi_e
  bool saturated = false;  // rank unchanged when the last two specs are dropped
};

// Gram matrix via the trace formula, eigendecomposition, orthonormal
// combinations.  nmax = 0 takes max n_i over the specs (+1 headroom).
// Throws num::internal_error if an eigenvalue < -rank_tol * spectral radius.
GramBasis gram_orthobasis(int k, i64 m, const std::vector<PoincareSpec>& specs,
                          double rank_tol = 1e-8, i64 nmax = 0,
                          double noise_target = 1e-10,
                          const PrecisionPolicy& policy = {});

// Auto-spanning basis: start from 2 x (a dimension guess) specs, confirm rank
// saturation by dropping the last two, extend if still growing.  table_Dmax
// requests coefficient tables of the orthonormal basis out to that shell.
GramBasis jacobi_basis(int k, i64 m, i64 table_Dmax = 0,
                       const PrecisionPolicy& policy = {});

// --------------------------------------------------------------- mass values
// log of  v^k e^{-4 pi m y^2 / v} sum_e |phi_e(tau,z)|^2  (the diagonal
// Bergman mass) from the orthonormal coefficient tables.
double bergman_spectral_log(const GramBasis& basis, const JacobiPoint& p);

// Same quantity from the geometric kernel sum: (m/2pi)(k - 3/2) times the sum
// of the slashed diagonal kernel h over SL2(Z) x Z^2, with the weight of the
// mass attached.  cmax/lmax = 0 pick adaptive windows (relative tol ~1e-6).
double bergman_geometric_log(int k, i64 m, const JacobiPoint& p, i64 cmax = 0,
                             i64 lmax = 0);

// Identity-coset cross-check pair (test oracle): the Heisenberg-orbit subsum
// of the kernel route and the same object in theta-decomposed form
//   2^{k-2} pi^{-1} (k-3/2) (2m)^{1/2} i^{(k-3/2)+1} 2^{-k} (tau-taubar)^{1/2-k}
//     sum_eta theta_eta(tau,z) conj(theta_eta(tau,z)),
// both with the mass weight attached, in log-domain.  The 2^{-k} reconciles
// the two published normalizations of the kernel (see tests / notes).
double bergman_kernel_identity_log(int k, i64 m, const JacobiPoint& p);
double bergman_theta_identity_log(int k, i64 m, const JacobiPoint& p);

// ------------------------------------------------------------ old-space maps
// V_m on coefficient tables: c_{V_m phi}(n,r) = sum_{a | (n,r,m)} a^{k-1}
// c_phi(nm/a^2, r/a); index-1 input only.
JacobiCoeffTable vm_apply(const JacobiCoeffTable& phi, i64 m);

// |V_m phi evaluated through upper-triangular representatives (a b; 0 d),
// ad = m, b mod d  -  table evaluation of vm_apply(phi, m)| / |value| at p.
double vm_slash_check(const JacobiCoeffTable& phi, i64 m, const JacobiPoint& p);

// <V_m phi, V_m phi> / <phi,phi> = sum_{d|m} psi(d) d^{k-2} lam(m/d) for a
// Hecke eigenform phi with classical (weight 2k-2) eigenvalues lam.
double vp_norm_factor(int k, i64 m, const std::function<double(i64)>& lam);

// Split an index-1 orthonormal basis into Hecke eigenforms through the index-p
// Gram projection of the V_p images; tjp_eigs are eigenvalues of T^J(p) =
// <V_p ., V_p .> - (p+1) p^{k-2}.
struct HeckeSplit {
  i64 p = 2;
  std::vector<std::vector<std::complex<double>>> eigvecs;  // rows, in phi_e coords
  std::vector<double> tjp_eigs;
  std::vector<JacobiCoeffTable> eigen_tables;      // index-1 tables, unit norm
  std::vector<JacobiCoeffTable> vp_tables;         // index-p images V_p phi
  double completeness_residual = 0.0;  // Hermiticity defect of the projected norm matrix
};
HeckeSplit hecke_eigen_split(const GramBasis& base, i64 p,
                             const PrecisionPolicy& policy = {});

// U_l mass: v^k e^{-4 pi l^2 m y^2 / v} sum_e |phi_e(tau, l z)|^2 on an
// index-1 orthonormal basis (log-domain).
double mass_old_Ul_log(i64 l, const GramBasis& basis1, const JacobiPoint& p);

// V_p mass: sum over eigenforms of the index-p mass of V_p phi, each term
// divided by ||V_p phi||^2 (read off T^J(p) spectrum) when normalize is set.
double mass_old_Vp_log(const HeckeSplit& split, const JacobiPoint& p,
                       bool normalize = true);

// ----------------------------------------------------------------- sup scans
struct MassReport {
  double sup_log = 0.0;
  JacobiPoint argmax;
  long evals = 0;
  int grid_u = 0, grid_x = 0, grid_v = 0, grid_y = 0;
  double v_lo = 0.0, v_hi = 0.0;
  int descent_rounds = 0;
};

// Grid + coordinate-descent sup of a log-mass functional over u,x in [0,1),
// v log-spaced in [sqrt(3)/2, v_hi], y = t v with t in [0,1).  density
// scales every axis count.  v_hi = 0 defaults to k.
MassReport mass_scan(const std::function<double(const JacobiPoint&)>& mass_log,
                     int k, double v_hi = 0.0, int density = 1);

}  // namespace jlab::jac
