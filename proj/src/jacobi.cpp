#include "jacobilab/jacobi.hpp"

#include <mpfr.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "jacobilab/arith.hpp"
#include "jacobilab/elliptic.hpp"
#include "jacobilab/scanfit.hpp"
#include "jacobilab/threads.hpp"
#include "json.hpp"

namespace jlab::jac {

namespace {

constexpr double kPi = num::LogComplex::kPi;
constexpr double kTau = 2.0 * kPi;
const double kNinf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNinf) return b;
  if (b == kNinf) return a;
  if (b > a) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}


using C = std::complex<double>;
using num::LogComplex;

// Largest D0 such that every admissible shell (D, rt), D <= D0, has its
// minimal representative (n = (D + rt^2)/(4m), r = rt) within n <= nmax.
i64 dmax_for(i64 nmax, i64 m) {
  i64 best = 0;
  for (i64 D = 1; D <= 4 * nmax * m; ++D) {
    bool ok = true;
    for (i64 rt = 0; rt <= m; ++rt)
      if ((D + rt * rt) % (4 * m) == 0 && (D + rt * rt) / (4 * m) > nmax) ok = false;
    if (!ok) break;
    best = D;
  }
  return best;
}

// ------------------------------------------------------------ mpfr complex
struct MpC {
  mpfr_t re, im;
};

void c_init(MpC& a, mpfr_prec_t p) {
  mpfr_init2(a.re, p);
  mpfr_init2(a.im, p);
}
void c_clear(MpC& a) {
  mpfr_clear(a.re);
  mpfr_clear(a.im);
}
void c_zero(MpC& a) {
  mpfr_set_ui(a.re, 0, MPFR_RNDN);
  mpfr_set_ui(a.im, 0, MPFR_RNDN);
}
void c_one(MpC& a) {
  mpfr_set_ui(a.re, 1, MPFR_RNDN);
  mpfr_set_ui(a.im, 0, MPFR_RNDN);
}
void c_set(MpC& a, const MpC& b) {
  mpfr_set(a.re, b.re, MPFR_RNDN);
  mpfr_set(a.im, b.im, MPFR_RNDN);
}

// Scratch shared by the complex helpers; one per worker row.
struct MpScratch {
  mpfr_t t1, t2, t3, t4, twopi;
  explicit MpScratch(mpfr_prec_t p) {
    mpfr_init2(t1, p);
    mpfr_init2(t2, p);
    mpfr_init2(t3, p);
    mpfr_init2(t4, p);
    mpfr_init2(twopi, p);
    mpfr_const_pi(twopi, MPFR_RNDN);
    mpfr_mul_ui(twopi, twopi, 2, MPFR_RNDN);
  }
  ~MpScratch() {
    mpfr_clear(t1);
    mpfr_clear(t2);
    mpfr_clear(t3);
    mpfr_clear(t4);
    mpfr_clear(twopi);
  }
};

void c_mul(MpC& a, const MpC& b, MpScratch& s) {  // a *= b
  mpfr_mul(s.t1, a.re, b.re, MPFR_RNDN);
  mpfr_mul(s.t2, a.im, b.im, MPFR_RNDN);
  mpfr_sub(s.t1, s.t1, s.t2, MPFR_RNDN);
  mpfr_mul(s.t2, a.re, b.im, MPFR_RNDN);
  mpfr_mul(s.t3, a.im, b.re, MPFR_RNDN);
  mpfr_add(s.t2, s.t2, s.t3, MPFR_RNDN);
  mpfr_set(a.re, s.t1, MPFR_RNDN);
  mpfr_set(a.im, s.t2, MPFR_RNDN);
}
void c_addmul(MpC& acc, const MpC& a, const MpC& b, MpScratch& s) {  // acc += a*b
  mpfr_mul(s.t1, a.re, b.re, MPFR_RNDN);
  mpfr_mul(s.t2, a.im, b.im, MPFR_RNDN);
  mpfr_sub(s.t1, s.t1, s.t2, MPFR_RNDN);
  mpfr_add(acc.re, acc.re, s.t1, MPFR_RNDN);
  mpfr_mul(s.t1, a.re, b.im, MPFR_RNDN);
  mpfr_mul(s.t2, a.im, b.re, MPFR_RNDN);
  mpfr_add(s.t1, s.t1, s.t2, MPFR_RNDN);
  mpfr_add(acc.im, acc.im, s.t1, MPFR_RNDN);
}
void c_add(MpC& a, const MpC& b) {
  mpfr_add(a.re, a.re, b.re, MPFR_RNDN);
  mpfr_add(a.im, a.im, b.im, MPFR_RNDN);
}

// out = e(w) = e^{2 pi i w} for complex w; handles huge |Im w| natively.
void c_exp2pii(MpC& out, const mpfr_t wre, const mpfr_t wim, MpScratch& s) {
  mpfr_mul(s.t4, wim, s.twopi, MPFR_RNDN);
  mpfr_neg(s.t4, s.t4, MPFR_RNDN);
  mpfr_exp(s.t4, s.t4, MPFR_RNDN);  // e^{-2 pi Im w}
  mpfr_mul(s.t3, wre, s.twopi, MPFR_RNDN);
  mpfr_sin_cos(s.t1, s.t2, s.t3, MPFR_RNDN);  // sin, cos
  mpfr_mul(out.re, s.t4, s.t2, MPFR_RNDN);
  mpfr_mul(out.im, s.t4, s.t1, MPFR_RNDN);
}

void c_pow_ui(MpC& out, const MpC& base, unsigned e, MpC& sq, MpScratch& s) {
  c_one(out);
  c_set(sq, base);
  while (e) {
    if (e & 1u) c_mul(out, sq, s);
    e >>= 1u;
    if (e) c_mul(sq, sq, s);
  }
}

// ------------------------------------------------------------- group algebra
GroupMove compose(const GroupMove& g2, const GroupMove& g1) {
  // apply g1 first, then g2
  GroupMove r;
  r.a = g2.a * g1.a + g2.b * g1.c;
  r.b = g2.a * g1.b + g2.b * g1.d;
  r.c = g2.c * g1.a + g2.d * g1.c;
  r.d = g2.c * g1.b + g2.d * g1.d;
  // (lambda, mu) of the product: X2 + X1 . M2^{-1}
  r.lambda = g2.lambda + g1.lambda * g2.d - g1.mu * g2.c;
  r.mu = g2.mu - g1.lambda * g2.b + g1.mu * g2.a;
  return r;
}

GroupMove inverse(const GroupMove& g) {
  GroupMove r;
  r.a = g.d;
  r.b = -g.b;
  r.c = -g.c;
  r.d = g.a;
  r.lambda = -(g.lambda * g.a + g.mu * g.c);
  r.mu = -(g.lambda * g.b + g.mu * g.d);
  return r;
}

}  // namespace

JacobiPoint apply_move(const GroupMove& g, const JacobiPoint& p) {
  C tau(p.u, p.v), z(p.x, p.y);
  C q = C(double(g.c)) * tau + C(double(g.d));
  C taup = (C(double(g.a)) * tau + C(double(g.b))) / q;
  C zp = z / q + C(double(g.lambda)) * taup + C(double(g.mu));
  return {taup.real(), taup.imag(), zp.real(), zp.imag()};
}

JacobiPoint reduce_point(const JacobiPoint& p, GroupMove* back) {
  if (!(p.v > 0.0)) throw std::invalid_argument("reduce_point: need v > 0");
  JacobiPoint q = p;
  GroupMove acc;  // identity
  auto step = [&](const GroupMove& g) {
    q = apply_move(g, q);
    acc = compose(g, acc);
  };
  // SL2 reduction of tau
  for (int it = 0; it < 256; ++it) {
    i64 t = std::llround(q.u);
    if (t != 0) step({1, -t, 0, 1, 0, 0});
    if (q.u * q.u + q.v * q.v < 1.0 - 1e-15) {
      step({0, -1, 1, 0, 0, 0});
    } else {
      break;
    }
  }
  // z modulo the lattice Z tau + Z: y into [0, v), then x into [0, 1)
  i64 lam = -i64(std::floor(q.y / q.v));
  if (lam != 0) step({1, 0, 0, 1, lam, 0});
  i64 mu = -i64(std::floor(q.x));
  if (mu != 0) step({1, 0, 0, 1, 0, mu});
  if (back) *back = inverse(acc);
  return q;
}

// --------------------------------------------------------------- coeff table
i64 JacobiCoeffTable::canonical_r(i64 r, i64 m) {
  i64 rm = ((r % (2 * m)) + 2 * m) % (2 * m);
  return std::min(rm, 2 * m - rm);
}

bool JacobiCoeffTable::has(i64 n, i64 r) const {
  i64 D = 4 * n * m - r * r;
  if (D <= 0) return false;
  return shells.count({D, canonical_r(r, m)}) > 0;
}

C JacobiCoeffTable::get(i64 n, i64 r) const {
  i64 D = 4 * n * m - r * r;
  if (D <= 0) return {0.0, 0.0};
  auto it = shells.find({D, canonical_r(r, m)});
  return it == shells.end() ? C{0.0, 0.0} : it->second.c;
}

double JacobiCoeffTable::noise_of(i64 n, i64 r) const {
  i64 D = 4 * n * m - r * r;
  if (D <= 0) return 0.0;
  auto it = shells.find({D, canonical_r(r, m)});
  return it == shells.end() ? 0.0 : it->second.noise;
}

std::string JacobiCoeffTable::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["m"] = m;
  j["Dmax"] = Dmax;
  auto entries = nlohmann::json::array();
  for (const auto& [key, e] : shells) {
    i64 D = key.first, rt = key.second;
    i64 n = (D + rt * rt) / (4 * m);
    entries.push_back({n, rt, e.c.real(), e.c.imag()});
  }
  j["entries"] = entries;
  return j.dump();
}

LogComplex table_eval(const JacobiCoeffTable& t, const JacobiPoint& p,
                      double* tail_log) {
  if (!(p.v > 0.0)) throw std::invalid_argument("table_eval: need v > 0");
  const i64 m = t.m;
  const double a = kTau * p.v / (4.0 * m);  // Gaussian scale in r
  const double yshift = 2.0 * m * p.y / p.v;
  const double ybump = kTau * m * p.y * p.y / p.v;
  const double Lr = 46.0;
  const double rwin = std::sqrt(Lr / a) + 2.0;
  LogComplex acc = LogComplex::zero();
  for (const auto& [key, e] : t.shells) {
    const i64 D = key.first, rt = key.second;
    if (std::abs(e.c) == 0.0) continue;
    const LogComplex lc = LogComplex::from_complex(e.c);
    const double base_l = lc.logmod - (kTau * p.v / (4.0 * m)) * double(D) + ybump;
    i64 reps[2] = {rt, 2 * m - rt};
    int nrep = (rt == 0 || rt == m) ? 1 : 2;
    for (int s = 0; s < nrep; ++s) {
      i64 r0c = reps[s];
      // r = r0c + 2m t with |r + 2my/v| <= rwin
      i64 tlo = i64(std::ceil((-rwin - yshift - double(r0c)) / (2.0 * m)));
      i64 thi = i64(std::floor((rwin - yshift - double(r0c)) / (2.0 * m)));
      for (i64 tt = tlo; tt <= thi; ++tt) {
        i64 r = r0c + 2 * m * tt;
        i64 n = (D + r * r) / (4 * m);
        double w = double(r) + yshift;
        double lm = base_l - a * w * w;
        double ph = lc.phase + kTau * (double(n) * p.u + double(r) * p.x);
        acc += LogComplex(lm, ph);
      }
    }
  }
  if (tail_log) {
    // Coefficient envelope for a unit-norm cusp form: |c(D)|^2 <= 2.2 / lambda(D).
    auto lenv = [&](double D) {
      return 0.5 * (std::log(2.2) + (t.k - 1.5) * std::log(kPi * D / double(m)) -
                    std::lgamma(t.k - 1.5) + 0.5 * std::log(4.0 * m));
    };
    const double Sr = std::log(2.0 * (1.0 + std::sqrt(kPi / a) / (2.0 * m)));
    double T = kNinf, prev = kNinf;
    i64 D = t.Dmax;
    for (long it = 0;; ++it) {
      if (it > 1000000) throw num::internal_error("table_eval: tail loop stuck");
      ++D;
      bool adm = false;
      for (i64 rt = 0; rt <= m && !adm; ++rt)
        if ((D + rt * rt) % (4 * m) == 0) adm = true;
      if (!adm) continue;
      double pd = lenv(double(D)) - (kTau * p.v / (4.0 * m)) * double(D) + ybump + Sr;
      T = log_add(T, pd);
      if (prev != kNinf && pd - prev < std::log(0.95) && it > 5) {
        double rr = std::exp(pd - prev);
        T = log_add(T, pd + std::log(rr / (1.0 - rr)));
        break;
      }
      prev = pd;
    }
    *tail_log = T;
  }
  return acc;
}

// ---------------------------------------------------------------- Poincare
void PoincareSpec::validate() const {
  if (k < 6 || k % 2 != 0)
    throw std::invalid_argument("PoincareSpec: weight must be even and >= 6");
  if (m < 1) throw std::invalid_argument("PoincareSpec: index must be >= 1");
  if (n0 < 1) throw std::invalid_argument("PoincareSpec: n0 must be >= 1");
  if (4 * n0 * m - r0 * r0 <= 0)
    throw std::invalid_argument("PoincareSpec: need 4 n0 m - r0^2 > 0");
  if (!(contour_v > 1.0))
    throw std::invalid_argument("PoincareSpec: contour_v must be > 1");
  if (cmax < 1 || lmax < 0) throw std::invalid_argument("PoincareSpec: bad windows");
}

double poincare_normalizer_log(int k, i64 m, i64 n, i64 r) {
  i64 D = 4 * n * m - r * r;
  if (D <= 0) throw std::invalid_argument("poincare_normalizer: need 4nm - r^2 > 0");
  return std::lgamma(k - 1.5) - (k - 1.5) * std::log(kPi * double(D) / double(m)) -
         0.5 * std::log(4.0 * double(m));
}

double poincare_normalizer(int k, i64 m, i64 n, i64 r) {
  return std::exp(poincare_normalizer_log(k, m, n, r));
}

namespace {

// One coset family (c,d) with both unfolding branches; c = 0 is the pair of
// translation branches (0, +-1).
struct EvalCtx {
  int k;
  i64 m, n0, r0;
  C tau, z;
  double peak = kNinf;
  double tail = kNinf;
  double fperr = kNinf;  // accumulated double-rounding bound, log scale
  LogComplex acc = LogComplex::zero();
};

// Adds the lambda-sum of one branch: Phi(lam) = P2 lam^2 + P1 lam + P0,
// term = q^{-k} e(Phi(lam)).  Returns the max term logmod seen.
double eval_branch(EvalCtx& E, const C& q, const C& P2, const C& P1, const C& P0,
                   double Lrel) {
  const double klq = -double(E.k) * std::log(std::abs(q));
  const double kaq = -double(E.k) * std::arg(q);
  const double a2 = P2.imag();  // m v' > 0
  double lstar = -P1.imag() / (2.0 * a2);
  i64 lc = std::llround(lstar);
  double rowmax = kNinf;
  // per-accumulation rounding: a few ulps of the larger operand magnitude
  constexpr double kUlps = 2.0794 - 53.0 * 0.6931471805599453;  // log(8 * 2^-53)
  auto term_at = [&](i64 lam) {
    double l = double(lam);
    C phi = P2 * (l * l) + P1 * l + P0;
    double lm = klq - kTau * phi.imag();
    double ph = kaq + kTau * phi.real();
    double pre = E.acc.logmod;
    E.acc += LogComplex(lm, ph);
    E.fperr = log_add(E.fperr, kUlps + log_add(pre, lm));
    rowmax = std::max(rowmax, lm);
    E.peak = std::max(E.peak, lm);
    return lm;
  };
  auto im_at = [&](i64 lam) {
    double l = double(lam);
    return (P2 * (l * l) + P1 * l + P0).imag();
  };
  term_at(lc);
  for (int dir = -1; dir <= 1; dir += 2) {
    i64 lam = lc;
    for (long st = 0;; ++st) {
      if (st > 10000000)
        throw num::truncation_error("poincare_eval: lambda window exploded", 1.0);
      lam += dir;
      double lm = term_at(lam);
      if (lm < E.peak - Lrel && std::llabs(lam - lc) >= 2) {
        // certified geometric tail beyond the first excluded lambda
        i64 l1 = lam + dir;
        double e1 = im_at(l1);
        double ratio = std::exp(-kTau * (im_at(l1 + dir) - e1));
        while (ratio > 0.95) {  // extend until decay is established
          lam = l1;
          double lm2 = term_at(lam);
          rowmax = std::max(rowmax, lm2);
          l1 = lam + dir;
          e1 = im_at(l1);
          ratio = std::exp(-kTau * (im_at(l1 + dir) - e1));
        }
        E.tail = log_add(E.tail, klq - kTau * e1 - std::log1p(-ratio));
        break;
      }
    }
  }
  return rowmax;
}

}  // namespace

EvalResult poincare_eval(const PoincareSpec& spec, const JacobiPoint& p,
                         const PrecisionPolicy& policy) {
  spec.validate();
  policy.validate();
  if (!(p.v > 0.0)) throw std::invalid_argument("poincare_eval: need v > 0");
  const double tol = std::max(policy.tail_tol, 1e-14);  // double-output floor
  const int k = spec.k;
  const i64 m = spec.m, n0 = spec.n0, r0 = spec.r0;
  const C tau(p.u, p.v), z(p.x, p.y);
  const C z2 = z * z;
  const double azr = std::abs(z);
  const double my2v = double(m) * p.y * p.y / p.v;  // Im-units (no 2pi)

  // start shallow: every extra nat of window depth adds terms whose double
  // rounding competes with the tolerance when the sum cancels
  double Lrel = -std::log(tol) + 8.0;
  EvalResult out;
  for (int round = 0; round < 8; ++round) {
    EvalCtx E{k, m, n0, r0, tau, z};
    // c = 0: branches e(n_lam tau +- r_lam z)
    {
      C gt = tau;
      for (int sgn = -1; sgn <= 1; sgn += 2) {
        C P2 = C(double(m)) * gt;
        C P1 = C(double(r0)) * gt + C(2.0 * m * sgn) * z;
        C P0 = C(double(n0)) * gt + C(double(r0) * sgn) * z;
        eval_branch(E, C(1.0, 0.0), P2, P1, P0, Lrel);
      }
    }
    // c >= 1, d coprime: both branches of the (+-)(c,d) fold
    i64 cused = 0;
    auto coset_ub = [&](double aq) {
      // peak coset magnitude through |q| = aq at a general point: quadratic
      // vertex plus the r0- and y-dependent slop
      double vq = p.v / (aq * aq);
      return -double(k) * std::log(aq) +
             kTau * (my2v + 2.0 * std::llabs(r0) * azr / aq +
                     double(r0 * r0) * vq / (4.0 * m));
    };
    for (i64 c = 1;; ++c) {
      if (c > 1000000)
        throw num::truncation_error("poincare_eval: c window exploded", 1.0);
      if (coset_ub(double(c) * p.v) < E.peak - Lrel - 3.0) {
        // tail over all remaining c: the per-c row bound has d(row)/d(log c)
        // <= 2-k, so the first row times 1 + c/(k-3) covers the rest
        double aq = double(c) * p.v;
        double vq = p.v / (aq * aq);
        double lamw = std::log1p(std::sqrt(kPi / (kTau * m * vq)));
        double row = coset_ub(aq) + lamw + std::log(2.0) + std::log(3.0 + 2.0 * aq);
        E.tail = log_add(E.tail, row + std::log1p(double(c) / (k - 3.0)));
        break;
      }
      cused = c;
      i64 d0 = -std::llround(double(c) * p.u);
      for (int dir = -1; dir <= 1; dir += 2) {
        i64 d = d0 + (dir > 0 ? 0 : -1);
        int scanned = 0;
        for (;; d += dir, ++scanned) {
          if (scanned > 2000000)
            throw num::truncation_error("poincare_eval: d window exploded", 1.0);
          C q = C(double(c)) * tau + C(double(d));
          double aq = std::abs(q);
          if (coset_ub(aq) < E.peak - Lrel - 3.0 && scanned >= 2) {
            // excluded-d tail on this side: terms decrease in |q|
            double vq = p.v / (aq * aq);
            double lamw = std::log1p(std::sqrt(kPi / (kTau * m * vq)));
            double side = coset_ub(aq) + lamw + std::log(2.0) + std::log1p(aq);
            E.tail = log_add(E.tail, side);
            break;
          }
          if (std::gcd(c, std::llabs(d)) != 1) continue;
          i64 aa = (c == 1) ? 0 : num::mod_inverse(((d % c) + c) % c, c);
          C invq = C(1.0, 0.0) / q;
          C gt = (C(double(aa)) - invq) / C(double(c));
          C zt = z * invq;
          C pref = -C(double(m * c)) * z2 * invq;
          for (int sgn = -1; sgn <= 1; sgn += 2) {
            C P2 = C(double(m)) * gt;
            C P1 = C(double(r0)) * gt + C(2.0 * m * sgn) * zt;
            C P0 = C(double(n0)) * gt + C(double(r0) * sgn) * zt + pref;
            eval_branch(E, q, P2, P1, P0, Lrel);
          }
        }
      }
    }
    // accumulated double rounding: the certificate must cover cancellation
    // between polynomially-sized cosets and an exponentially small sum
    double fp_log = E.fperr;
    double bound = log_add(E.tail, fp_log);
    double rel = (E.acc.is_zero()) ? 1.0 : std::exp(bound - E.acc.logmod);
    if (rel <= tol) {
      out.value = E.acc;
      out.tail_log = bound;
      out.cmax_used = cused;
      return out;
    }
    // deeper windows only add terms, so a breached fp floor cannot recover
    if (!E.acc.is_zero() && std::exp(fp_log - E.acc.logmod) > tol)
      throw num::truncation_error(
          "poincare_eval: cancellation exceeds double-precision budget",
          std::exp(fp_log));
    Lrel += 12.0;
  }
  throw num::truncation_error("poincare_eval: tolerance not certified", 1.0);
}

// ------------------------------------------------------------ Fourier sampler
namespace {

struct PairPlan {
  i64 c, d, a;
  i64 lam;       // half-width of the per-column lambda window
  i64 llo, lhi;  // global lambda-table range
  double qlo, qhi;
};

struct SamplePlan {
  i64 N = 0;
  unsigned bits = 0;
  std::vector<PairPlan> pairs;
  double trunc_log = kNinf;  // per-sample absolute truncation bound
  double fp_log = kNinf;     // per-sample rounding bound
  double mbar0_log = kNinf;  // full-sum bound on the alias contour v0
  double v0 = 0.0;
  double ops_ps = 0.0;
};

double half_integral(double kk) {  // int_0^inf (t^2+1)^{-kk/2} dt
  return std::sqrt(kPi) * std::exp(std::lgamma((kk - 1.0) / 2.0) - std::lgamma(kk / 2.0)) / 2.0;
}

// Bound on sum over all cosets with c >= 1 of the branch-folded coset sums,
// evaluated on the contour y = 0, |z| <= 1, Im tau = vv.
// log of the per-c row bound: all cosets (c,d), both branches, contour y = 0.
double percterm_log(int k, double sdev, double a) {
  const double Ik = half_integral(double(k));
  const double Ik1 = half_integral(double(k) - 1.0);
  return std::log(2.0) +
         std::log(2.0 * std::pow(a, 1.0 - k) * Ik + std::pow(a, -double(k)) +
                  (2.0 * std::pow(a, 2.0 - k) * Ik1 + std::pow(a, 1.0 - k)) / sdev);
}

// sum_{c >= C} exp(percterm(c v)); d(row)/d(log c) <= 2-k gives the closed form
double csum_from_log(int k, double sdev, double vv, i64 C) {
  return percterm_log(k, sdev, double(C) * vv) + std::log1p(double(C) / (k - 3.0));
}

double csum_all_log(int k, i64 m, double vv) {
  const double sdev = std::sqrt(2.0 * m * vv);
  double total = kNinf;
  for (i64 c = 1; c <= 8; ++c)
    total = log_add(total, percterm_log(k, sdev, double(c) * vv));
  return log_add(total, csum_from_log(k, sdev, vv, 9));
}

SamplePlan plan_sampling(const PoincareSpec& s, i64 nmax, i64 N,
                         double noise_target, const PrecisionPolicy& policy) {
  const int k = s.k;
  const i64 m = s.m;
  const double v = s.contour_v;
  const double log_eps = std::log(noise_target) - kTau * double(nmax) * v;
  const double sdev = std::sqrt(2.0 * m * v);
  auto pair_log = [&](double qlo) {
    return std::log(2.0) + std::log1p(qlo / sdev) - double(k) * std::log(qlo);
  };
  const i64 sh = (std::llabs(s.r0) + 2 * m - 1) / (2 * m);

  SamplePlan plan;
  plan.N = N;
  double cut = log_eps - std::log(64.0);
  for (int round = 0;; ++round) {
    plan.pairs.clear();
    plan.pairs.push_back({0, 1, 0, 0, 0, 0, 1.0, 1.0});
    double dtail = kNinf, ctail = kNinf;
    i64 cbig = 0;
    for (i64 c = 1;; ++c) {
      if (c > 200000)
        throw num::truncation_error("poincare_fourier: c window exploded", 1.0);
      double av = double(c) * v;
      if (pair_log(av) < cut) {
        cbig = c;
        break;
      }
      auto qlo_of = [&](i64 d) {
        if (d >= 0) return std::hypot(double(d), av);
        if (d + c <= 0) return std::hypot(double(-(d + c)), av);
        return av;
      };
      i64 dlo = -c - 2, dhi = 2;
      while (pair_log(qlo_of(dlo - 1)) >= cut) --dlo;
      while (pair_log(qlo_of(dhi + 1)) >= cut) ++dhi;
      for (i64 d = dlo; d <= dhi; ++d) {
        if (std::gcd(c, std::llabs(d)) != 1) continue;
        i64 aa = (c == 1) ? 0 : num::mod_inverse(((d % c) + c) % c, c);
        double qhi = std::hypot(double(std::max(std::llabs(d), std::llabs(d + c))), av);
        plan.pairs.push_back({c, d, aa, 0, 0, 0, qlo_of(d), qhi});
      }
      // excluded |t| >= T have q = hypot(t, av) >= qT, and
      // sum 1/(t^2+av^2) <= min(pi/(2 av), 1/(T-1))
      for (double T : {double(-(dlo - 1) - c), double(dhi + 1)}) {
        double qT = std::hypot(T - 1.0, av);
        double lqT = std::log(qT);
        double env = log_add((2.0 - k) * lqT, (3.0 - k) * lqT - std::log(sdev));
        env += std::log(2.0) + std::log(std::min(kPi / (2.0 * av), 1.0 / (T - 1.0)));
        dtail = log_add(dtail, env);
      }
    }
    ctail = csum_from_log(k, sdev, v, cbig);
    double lam_cut = log_eps + std::log(0.4) - std::log(double(plan.pairs.size() + 4));
    double ltail = kNinf;
    for (auto& pr : plan.pairs) {
      double pb = pair_log(pr.qlo);
      double Ld = std::max(5.0, pb - lam_cut);
      i64 lam = i64(std::ceil(pr.qhi * std::sqrt(Ld / (kTau * m * v)))) + 2;
      lam = std::max<i64>(lam, s.lmax);
      double vq = v / (pr.qhi * pr.qhi);
      const double a = kTau * m * vq;
      // sum_{|l| >= W} e^{-a l^2}: geometric ratio bound or Gaussian integral
      // bound, whichever is smaller
      auto lam_term = [&](i64 lm) {
        double W = double(lm - 1);
        double rho = std::exp(-2.0 * a * W);
        double fgeo = (rho < 1.0) ? -std::log1p(-rho) : kNinf * (-1.0);
        double fint = std::log1p(0.5 * std::sqrt(kPi / a));
        return std::log(4.0) - double(k) * std::log(pr.qlo) - a * W * W +
               std::min(fgeo, fint);
      };
      double term = lam_term(lam);
      for (int grow = 0; term > lam_cut && grow < 500; ++grow) {
        lam += std::max<i64>(1, lam / 4);
        term = lam_term(lam);
      }
      ltail = log_add(ltail, term);
      pr.lam = lam;
      pr.llo = -pr.c - sh - lam - 1;
      pr.lhi = pr.c + sh + lam + 1;
    }
    double total = log_add(log_add(dtail, ctail), ltail);
    if (std::getenv("JLAB_PLAN_DEBUG"))
      std::fprintf(stderr,
                   "round %d: cut=%.2f dtail=%.2f ctail=%.2f ltail=%.2f "
                   "total=%.2f target=%.2f pairs=%zu cbig=%lld\n",
                   round, cut, dtail, ctail, ltail, total,
                   log_eps + std::log(0.6), plan.pairs.size(), (long long)cbig);
    if (total <= log_eps + std::log(0.6)) {
      plan.trunc_log = total;
      break;
    }
    if (round >= 6)
      throw num::truncation_error("poincare_fourier: certificate burden",
                                  std::exp(total));
    cut += (log_eps + std::log(0.5)) - total;
  }

  // alias contour bound and sample magnitude bound
  plan.v0 = std::min(0.3, v / 4.0);
  double c0b = std::log(2.0) + std::log1p(1.0 / std::sqrt(2.0 * m * plan.v0));
  plan.mbar0_log = log_add(c0b, csum_all_log(k, m, plan.v0));
  double c0v = std::log(2.0) + std::log1p(1.0 / sdev);
  double boundsum_log = log_add(c0v, csum_all_log(k, m, v));

  plan.ops_ps = 16.0;
  for (const auto& pr : plan.pairs)
    plan.ops_ps += 8.0 * double(pr.lam) + 16.0 +
                   2.0 * double(pr.lhi - pr.llo + 1) / double(N);
  double need = (std::log(plan.ops_ps + double(N) + 64.0) +
                 std::max(boundsum_log, 0.0) - (log_eps + std::log(0.05))) /
                    std::log(2.0) +
                24.0;
  plan.bits = std::max<unsigned>(policy.bits, unsigned(std::ceil(std::max(need, 64.0))));
  if (plan.bits > PrecisionPolicy::kMaxBits)
    throw num::precision_exhausted("poincare_fourier: working precision",
                                   double(PrecisionPolicy::kMaxBits), double(plan.bits));
  plan.fp_log = std::log(plan.ops_ps + double(N) + 64.0) +
                std::max(boundsum_log, 0.0) + (4.0 - double(plan.bits)) * std::log(2.0);

  // projected complex-mult cost guard
  double cm = 0.0;
  i64 lam_max = 0, wid_max = 0;
  for (const auto& pr : plan.pairs) {
    cm += 2.0 * double(pr.lhi - pr.llo + 1) + double(N) * (4.0 * pr.lam + 18.0);
    lam_max = std::max(lam_max, pr.lam);
    wid_max = std::max(wid_max, pr.lhi - pr.llo + 1);
  }
  cm *= double(N / 2 + 1);
  if (std::getenv("JLAB_PLAN_DEBUG"))
    std::fprintf(stderr,
                 "plan: N=%lld pairs=%zu lam_max=%lld wid_max=%lld bits=%u cut=%.2f "
                 "trunc=%.2f cm=%.3g\n",
                 (long long)N, plan.pairs.size(), (long long)lam_max,
                 (long long)wid_max, plan.bits, cut, plan.trunc_log, cm);
  if (cm > 2.5e10)
    throw num::truncation_error("poincare_fourier: projected cost too large", cm);
  return plan;
}

}  // namespace

JacobiCoeffTable poincare_fourier(const PoincareSpec& spec, i64 nmax, i64 rmax,
                                  i64 grid, double noise_target,
                                  const PrecisionPolicy& policy) {
  spec.validate();
  policy.validate();
  if (nmax < 1 || rmax < spec.m)
    throw std::invalid_argument("poincare_fourier: need nmax >= 1 and rmax >= m");
  if (!(noise_target > 0.0))
    throw std::invalid_argument("poincare_fourier: noise_target must be positive");
  const i64 m = spec.m;
  const int k = spec.k;
  const double v = spec.contour_v;
  // the DFT below is a plain mode sum, so the default grid is the smallest the
  // alias analysis certifies, not a power of two
  const i64 Nmin = 8 * (nmax + m * rmax);
  const i64 N = grid > 0 ? grid : Nmin;
  if (N < Nmin || N % 2 != 0 || N > 4096)
    throw std::invalid_argument("poincare_fourier: bad grid size");

  if ((N - rmax) * (N - rmax) < 4 * nmax * m)
    throw num::internal_error("poincare_fourier: r-fold aliasing not excluded");

  SamplePlan plan = plan_sampling(spec, nmax, N, noise_target, policy);
  const mpfr_prec_t bits = plan.bits;
  const i64 r0 = spec.r0, n0 = spec.n0;

  std::vector<MpC> F(size_t(N) * N);
  for (auto& f : F) {
    c_init(f, bits);
    c_zero(f);
  }
  i64 wtab_max = 0;
  for (const auto& pr : plan.pairs) wtab_max = std::max(wtab_max, pr.lhi - pr.llo + 1);

  const i64 rows = N / 2 + 1;
  num::parallel_for(size_t(rows), 1, std::min(num::worker_threads(), int(rows)),
                    [&](size_t rb, size_t re) {
    MpScratch S(bits);
    MpC q, invq, powk, sq, gt, w, g, rho, rhoinv, fA, fB, fAs, fBs, Pj, Sj, R2P,
        R, Rstep, sumA, sumB, tA, tB;
    for (MpC* cp : {&q, &invq, &powk, &sq, &gt, &w, &g, &rho, &rhoinv, &fA, &fB,
                    &fAs, &fBs, &Pj, &Sj, &R2P, &R, &Rstep, &sumA, &sumB, &tA, &tB})
      c_init(*cp, bits);
    std::vector<MpC> T(static_cast<size_t>(wtab_max));
    for (auto& t : T) c_init(t, bits);
    mpfr_t den;
    mpfr_init2(den, bits);

    for (size_t ri = rb; ri < re; ++ri) {
      const i64 i = i64(ri);
      for (const auto& pr : plan.pairs) {
        const i64 c = pr.c, d = pr.d, aa = pr.a;
        if (c == 0) {
          // q = 1, gt = tau = i/N + i*v
          c_one(q);
          c_one(invq);
          c_one(powk);
          mpfr_set_si(gt.re, i, MPFR_RNDN);
          mpfr_div_ui(gt.re, gt.re, unsigned(N), MPFR_RNDN);
          mpfr_set_d(gt.im, v, MPFR_RNDN);
        } else {
          // q = (c*i/N + d) + i c v
          mpfr_set_si(q.re, c * i + d * N, MPFR_RNDN);
          mpfr_div_ui(q.re, q.re, unsigned(N), MPFR_RNDN);
          mpfr_set_d(q.im, v, MPFR_RNDN);
          mpfr_mul_si(q.im, q.im, c, MPFR_RNDN);
          mpfr_sqr(S.t1, q.re, MPFR_RNDN);
          mpfr_sqr(S.t2, q.im, MPFR_RNDN);
          mpfr_add(den, S.t1, S.t2, MPFR_RNDN);
          mpfr_div(invq.re, q.re, den, MPFR_RNDN);
          mpfr_div(invq.im, q.im, den, MPFR_RNDN);
          mpfr_neg(invq.im, invq.im, MPFR_RNDN);
          c_pow_ui(powk, invq, unsigned(k), sq, S);
          // gt = (aa - invq)/c
          mpfr_sub_si(gt.re, invq.re, aa, MPFR_RNDN);
          mpfr_neg(gt.re, gt.re, MPFR_RNDN);
          mpfr_div_si(gt.re, gt.re, c, MPFR_RNDN);
          mpfr_neg(gt.im, invq.im, MPFR_RNDN);
          mpfr_div_si(gt.im, gt.im, c, MPFR_RNDN);
        }
        const i64 llo = pr.llo, lhi = pr.lhi, W = lhi - llo + 1;
        // T[lam] = e(n_lam * gt), quadratic rotor
        mpfr_mul_si(w.re, gt.re, n0 + r0 * llo + m * llo * llo, MPFR_RNDN);
        mpfr_mul_si(w.im, gt.im, n0 + r0 * llo + m * llo * llo, MPFR_RNDN);
        c_exp2pii(T[0], w.re, w.im, S);
        mpfr_mul_si(w.re, gt.re, r0 + m * (2 * llo + 1), MPFR_RNDN);
        mpfr_mul_si(w.im, gt.im, r0 + m * (2 * llo + 1), MPFR_RNDN);
        c_exp2pii(R, w.re, w.im, S);
        mpfr_mul_si(w.re, gt.re, 2 * m, MPFR_RNDN);
        mpfr_mul_si(w.im, gt.im, 2 * m, MPFR_RNDN);
        c_exp2pii(Rstep, w.re, w.im, S);
        for (i64 t = 1; t < W; ++t) {
          c_set(T[size_t(t)], T[size_t(t - 1)]);
          c_mul(T[size_t(t)], R, S);
          c_mul(R, Rstep, S);
        }
        // per-column rotors: prefactor e(w_c j^2), fA = e(r0 j invq / N),
        // rho = e(2m j invq / N)
        c_one(Pj);
        if (c != 0) {
          // wP = -m c invq / N^2
          mpfr_mul_si(w.re, invq.re, -m * c, MPFR_RNDN);
          mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
          mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
          mpfr_mul_si(w.im, invq.im, -m * c, MPFR_RNDN);
          mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
          mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
          c_exp2pii(Sj, w.re, w.im, S);
          mpfr_mul_ui(w.re, w.re, 2, MPFR_RNDN);
          mpfr_mul_ui(w.im, w.im, 2, MPFR_RNDN);
          c_exp2pii(R2P, w.re, w.im, S);
        } else {
          c_one(Sj);
          c_one(R2P);
        }
        c_one(fA);
        c_one(fB);
        c_one(rho);
        c_one(rhoinv);
        mpfr_mul_si(w.re, invq.re, r0, MPFR_RNDN);
        mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
        mpfr_mul_si(w.im, invq.im, r0, MPFR_RNDN);
        mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
        c_exp2pii(fAs, w.re, w.im, S);
        mpfr_neg(w.re, w.re, MPFR_RNDN);
        mpfr_neg(w.im, w.im, MPFR_RNDN);
        c_exp2pii(fBs, w.re, w.im, S);
        mpfr_mul_si(w.re, invq.re, 2 * m, MPFR_RNDN);
        mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
        mpfr_mul_si(w.im, invq.im, 2 * m, MPFR_RNDN);
        mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
        c_exp2pii(rho, w.re, w.im, S);
        mpfr_neg(w.re, w.re, MPFR_RNDN);
        mpfr_neg(w.im, w.im, MPFR_RNDN);
        c_exp2pii(rhoinv, w.re, w.im, S);  // e(-2m invq/N); not conj(rho) off the axis

        MpC rhoj, rhoinvj;
        c_init(rhoj, bits);
        c_init(rhoinvj, bits);
        c_one(rhoj);
        c_one(rhoinvj);
        const double r0sh = double(r0) / (2.0 * m);
        for (i64 j = 0; j < N; ++j) {
          // branch A window
          double lcA = double(c) * double(j) / double(N) - r0sh;
          i64 alo = std::max(llo, i64(std::ceil(lcA - double(pr.lam))));
          i64 ahi = std::min(lhi, i64(std::floor(lcA + double(pr.lam))));
          c_zero(sumA);
          if (alo <= ahi) {
            mpfr_mul_si(w.re, invq.re, 2 * m * alo * j, MPFR_RNDN);
            mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
            mpfr_mul_si(w.im, invq.im, 2 * m * alo * j, MPFR_RNDN);
            mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
            c_exp2pii(g, w.re, w.im, S);
            for (i64 lam = alo; lam <= ahi; ++lam) {
              c_addmul(sumA, T[size_t(lam - llo)], g, S);
              if (lam < ahi) c_mul(g, rhoj, S);
            }
          }
          // branch B window
          double lcB = -double(c) * double(j) / double(N) - r0sh;
          i64 blo = std::max(llo, i64(std::ceil(lcB - double(pr.lam))));
          i64 bhi = std::min(lhi, i64(std::floor(lcB + double(pr.lam))));
          c_zero(sumB);
          if (blo <= bhi) {
            mpfr_mul_si(w.re, invq.re, -2 * m * blo * j, MPFR_RNDN);
            mpfr_div_ui(w.re, w.re, unsigned(N), MPFR_RNDN);
            mpfr_mul_si(w.im, invq.im, -2 * m * blo * j, MPFR_RNDN);
            mpfr_div_ui(w.im, w.im, unsigned(N), MPFR_RNDN);
            c_exp2pii(g, w.re, w.im, S);
            for (i64 lam = blo; lam <= bhi; ++lam) {
              c_addmul(sumB, T[size_t(lam - llo)], g, S);
              if (lam < bhi) c_mul(g, rhoinvj, S);
            }
          }
          c_set(tA, sumA);
          c_mul(tA, fA, S);
          c_set(tB, sumB);
          c_mul(tB, fB, S);
          c_add(tA, tB);
          c_mul(tA, Pj, S);
          c_mul(tA, powk, S);
          c_add(F[size_t(i) * N + size_t(j)], tA);
          // advance rotors to column j+1
          c_mul(fA, fAs, S);
          c_mul(fB, fBs, S);
          c_mul(rhoj, rho, S);
          c_mul(rhoinvj, rhoinv, S);
          c_mul(Pj, Sj, S);
          c_mul(Sj, R2P, S);
        }
        c_clear(rhoj);
        c_clear(rhoinvj);
      }
    }
    for (auto& t : T) c_clear(t);
    for (MpC* cp : {&q, &invq, &powk, &sq, &gt, &w, &g, &rho, &rhoinv, &fA, &fB,
                    &fAs, &fBs, &Pj, &Sj, &R2P, &R, &Rstep, &sumA, &sumB, &tA, &tB})
      c_clear(*cp);
    mpfr_clear(den);
  });

  // conjugate reflection F(-u,-x) = conj F(u,x) fills the remaining rows
  for (i64 i = N / 2 + 1; i < N; ++i)
    for (i64 j = 0; j < N; ++j) {
      const MpC& src = F[size_t(N - i) * N + size_t((N - j) % N)];
      MpC& dst = F[size_t(i) * N + size_t(j)];
      mpfr_set(dst.re, src.re, MPFR_RNDN);
      mpfr_neg(dst.im, src.im, MPFR_RNDN);
    }

  // exact-twiddle DFT, unwind, class merge
  JacobiCoeffTable out;
  out.k = k;
  out.m = m;
  out.Dmax = dmax_for(nmax, m);
  {
    MpScratch S(bits);
    std::vector<MpC> tw(static_cast<size_t>(N));
    for (auto& t : tw) c_init(t, bits);
    for (i64 t = 0; t < N; ++t) {
      mpfr_set_si(S.t1, -t, MPFR_RNDN);
      mpfr_div_ui(S.t1, S.t1, unsigned(N), MPFR_RNDN);
      mpfr_set_ui(S.t2, 0, MPFR_RNDN);
      c_exp2pii(tw[size_t(t)], S.t1, S.t2, S);
    }
    MpC acc;
    c_init(acc, bits);
    struct Cand {
      C val;
      double noise;
    };
    std::map<std::pair<i64, i64>, std::vector<Cand>> cands;
    for (i64 np = 1; np <= nmax; ++np) {
      const double noise_log =
          log_add(log_add(plan.trunc_log, plan.fp_log) + kTau * double(np) * v,
                  plan.mbar0_log + std::log(double(N)) + kTau * double(np) * plan.v0 -
                      kTau * double(N) * (v - plan.v0) -
                      std::log1p(-std::exp(-kTau * (v - plan.v0))));
      for (i64 rp = -rmax; rp <= rmax; ++rp) {
        i64 D = 4 * np * m - rp * rp;
        if (D <= 0 || D > out.Dmax) continue;
        c_zero(acc);
        for (i64 i = 0; i < N; ++i)
          for (i64 j = 0; j < N; ++j) {
            i64 t = ((np * i + rp * j) % N + N) % N;
            c_addmul(acc, F[size_t(i) * N + size_t(j)], tw[size_t(t)], S);
          }
        mpfr_div_ui(acc.re, acc.re, unsigned(N), MPFR_RNDN);
        mpfr_div_ui(acc.re, acc.re, unsigned(N), MPFR_RNDN);
        mpfr_div_ui(acc.im, acc.im, unsigned(N), MPFR_RNDN);
        mpfr_div_ui(acc.im, acc.im, unsigned(N), MPFR_RNDN);
        mpfr_set_d(S.t1, kTau * double(np) * v, MPFR_RNDN);
        mpfr_exp(S.t1, S.t1, MPFR_RNDN);
        mpfr_mul(acc.re, acc.re, S.t1, MPFR_RNDN);
        mpfr_mul(acc.im, acc.im, S.t1, MPFR_RNDN);
        C val(mpfr_get_d(acc.re, MPFR_RNDN), mpfr_get_d(acc.im, MPFR_RNDN));
        cands[{D, JacobiCoeffTable::canonical_r(rp, m)}].push_back(
            {val, std::exp(noise_log)});
      }
    }
    for (auto& [key, list] : cands) {
      JacobiCoeffTable::Entry e;
      size_t best = 0;
      for (size_t i = 1; i < list.size(); ++i)
        if (list[i].noise < list[best].noise) best = i;
      e.c = list[best].val;
      e.noise = list[best].noise;
      for (const auto& cd : list)
        e.consistency = std::max(e.consistency, std::abs(cd.val - e.c));
      out.shells[key] = e;
    }
    for (auto& t : tw) c_clear(t);
    c_clear(acc);
  }
  for (auto& f : F) c_clear(f);

  // contract: every admissible shell up to Dmax is present
  for (i64 D = 1; D <= out.Dmax; ++D)
    for (i64 rt = 0; rt <= m; ++rt)
      if ((D + rt * rt) % (4 * m) == 0 && !out.shells.count({D, rt}))
        throw num::internal_error("poincare_fourier: missing shell");
  return out;
}

i64 delta_count(i64 m, i64 l, i64 r, i64 l2, i64 r2) {
  if (m < 1) throw std::invalid_argument("delta_count: need m >= 1");
  i64 cnt = 0;
  for (i64 A : {i64(1), i64(-1)}) {
    i64 num = r2 - A * r;
    if (num % (2 * m) != 0) continue;
    i64 lam = num / (2 * m);
    if (l2 == l + A * r * lam + m * lam * lam) ++cnt;
  }
  return cnt;
}

TraceValue petersson_trace(int k, i64 m, i64 n1, i64 r1,
                           const JacobiCoeffTable& fourier_p2, i64 n2, i64 r2) {
  if (fourier_p2.k != k || fourier_p2.m != m)
    throw std::invalid_argument("petersson_trace: table weight/index mismatch");
  if (!fourier_p2.has(n1, r1))
    throw std::invalid_argument("petersson_trace: coefficient not tabulated");
  double lam = poincare_normalizer(k, m, n2, r2);
  return {fourier_p2.get(n1, r1) / lam, fourier_p2.noise_of(n1, r1) / lam};
}

// --------------------------------------------------------------- Gram machine
std::vector<PoincareSpec> spanning_specs(int k, i64 m, int count) {
  std::vector<PoincareSpec> out;
  for (i64 D = 1; int(out.size()) < count; ++D) {
    if (D > 4 * m * i64(count + 4) * i64(count + 4))
      throw num::internal_error("spanning_specs: enumeration stuck");
    for (i64 rt = 0; rt <= m; ++rt)
      if ((D + rt * rt) % (4 * m) == 0) {
        PoincareSpec s;
        s.k = k;
        s.m = m;
        s.n0 = (D + rt * rt) / (4 * m);
        s.r0 = rt;
        out.push_back(s);
        break;  // smallest rt only
      }
  }
  return out;
}

GramBasis gram_orthobasis(int k, i64 m, const std::vector<PoincareSpec>& specs,
                          double rank_tol, i64 nmax, double noise_target,
                          const PrecisionPolicy& policy) {
  if (specs.empty()) throw std::invalid_argument("gram_orthobasis: no specs");
  i64 maxn = 0;
  for (const auto& s : specs) {
    if (s.k != k || s.m != m)
      throw std::invalid_argument("gram_orthobasis: spec weight/index mismatch");
    maxn = std::max(maxn, s.n0);
  }
  const i64 nm = (nmax > 0) ? std::max(nmax, maxn) : maxn + 1;
  GramBasis B;
  B.k = k;
  B.m = m;
  B.specs = specs;
  for (const auto& s : specs)
    B.spec_tables.push_back(poincare_fourier(s, nm, m, 0, noise_target, policy));

  const int s = int(specs.size());
  Eigen::MatrixXcd G(s, s);
  double gnoise = 0.0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      double lam = poincare_normalizer(k, m, specs[j].n0, specs[j].r0);
      G(i, j) = lam * B.spec_tables[i].get(specs[j].n0, specs[j].r0);
      gnoise = std::max(gnoise, lam * B.spec_tables[i].noise_of(specs[j].n0, specs[j].r0));
    }
  B.gram_noise = gnoise;
  B.gram.assign(s, std::vector<C>(s));
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) B.gram[i][j] = G(i, j);
  double gn = G.norm();
  B.herm_residual = gn > 0 ? (G - G.adjoint()).norm() / gn : 0.0;
  Eigen::MatrixXcd H = 0.5 * (G + G.adjoint());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  if (es.info() != Eigen::Success)
    throw num::internal_error("gram_orthobasis: eigensolver failed");
  Eigen::VectorXd ev = es.eigenvalues();  // ascending
  double evmax = std::max(std::abs(ev(0)), std::abs(ev(s - 1)));
  if (evmax == 0.0) throw num::internal_error("gram_orthobasis: zero Gram");
  for (int i = 0; i < s; ++i) {
    if (ev(i) < -rank_tol * evmax)
      throw num::internal_error("gram_orthobasis: negative Gram eigenvalue");
    B.eigenvalues.push_back(ev(i));
  }
  int rank = 0;
  for (int i = 0; i < s; ++i)
    if (ev(i) > rank_tol * evmax) ++rank;
  B.rank = rank;

  for (int e = 0; e < rank; ++e) {
    int idx = s - 1 - e;  // dominant first
    double lam = ev(idx);
    std::vector<C> w(static_cast<size_t>(s));
    for (int i = 0; i < s; ++i)
      w[size_t(i)] = std::conj(es.eigenvectors()(i, idx)) / std::sqrt(lam);
    B.ortho.push_back(w);
    JacobiCoeffTable tab;
    tab.k = k;
    tab.m = m;
    tab.Dmax = B.spec_tables[0].Dmax;
    for (const auto& [key, e0] : B.spec_tables[0].shells) {
      JacobiCoeffTable::Entry en;
      for (int i = 0; i < s; ++i) {
        const auto& sh = B.spec_tables[size_t(i)].shells.at(key);
        en.c += w[size_t(i)] * sh.c;
        en.noise += std::abs(w[size_t(i)]) * sh.noise;
        en.consistency += std::abs(w[size_t(i)]) * sh.consistency;
      }
      tab.shells[key] = en;
    }
    B.coeff_tables.push_back(std::move(tab));
  }

  if (s >= 3) {
    Eigen::MatrixXcd Hs = H.topLeftCorner(s - 2, s - 2);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es2(Hs);
    int r2 = 0;
    for (int i = 0; i < s - 2; ++i)
      if (es2.eigenvalues()(i) > rank_tol * evmax) ++r2;
    B.saturated = (r2 == rank);
  } else {
    B.saturated = (rank == 0);
  }
  return B;
}

GramBasis jacobi_basis(int k, i64 m, i64 table_Dmax, const PrecisionPolicy& policy) {
  int g0 = std::max(1, ell::dim_cusp(2 * k - 2)) + int(m > 1 ? m - 1 : 0);
  int count = 2 * g0;
  i64 nmax_req = 0;
  if (table_Dmax > 0) {
    while (nmax_req < 64 && dmax_for(nmax_req, m) < table_Dmax) ++nmax_req;
    if (dmax_for(nmax_req, m) < table_Dmax)
      throw std::invalid_argument("jacobi_basis: table_Dmax too deep");
  }
  for (int attempt = 0; attempt < 5; ++attempt) {
    auto specs = spanning_specs(k, m, count);
    // 1e-7 outer-shell noise: basis coefficients feed 1e-3..1e-4-level
    // comparisons, and the rank threshold sits orders below the smallest
    // genuine Gram eigenvalue at the sizes in play
    GramBasis B = gram_orthobasis(k, m, specs, 1e-8, nmax_req, 1e-7, policy);
    if (B.saturated) return B;
    count += 2;
  }
  throw num::internal_error("jacobi_basis: rank did not saturate");
}

// ----------------------------------------------------------------- mass values
double bergman_spectral_log(const GramBasis& basis, const JacobiPoint& p) {
  double acc = kNinf;
  for (const auto& t : basis.coeff_tables) {
    LogComplex val = table_eval(t, p);
    acc = log_add(acc, 2.0 * val.logmod);
  }
  return basis.k * std::log(p.v) - 2.0 * kTau * basis.m * p.y * p.y / p.v + acc;
}

namespace {

// Diagonal slashed-kernel sum over SL2(Z) x Z^2 in log-domain; L is the
// depth below the running peak at which rows/rings are abandoned.
LogComplex bk_geometric_core(int k, i64 m, const JacobiPoint& p, double L,
                             i64 cmax, i64 lmax) {
  const C tau(p.u, p.v), z(p.x, p.y);
  const C taub = std::conj(tau), zb = std::conj(z);
  LogComplex acc = LogComplex::zero();
  double peak = kNinf;

  auto do_matrix = [&](i64 a, i64 b, i64 c, i64 d) {
    const C j = C(double(c)) * tau + C(double(d));
    const C taup = (C(double(a)) * tau + C(double(b))) / j;
    const C Wq = (taup - taub) / C(0.0, 2.0);
    const double base_l =
        -double(k) * (std::log(std::abs(j)) + std::log(std::abs(Wq)) + std::log(2.0));
    const double base_p = -double(k) * (std::arg(j) + std::arg(Wq));
    const C invj = C(1.0, 0.0) / j;
    const C itt = C(1.0, 0.0) / (taup - taub);
    double mrowmax = kNinf;
    i64 lc = -std::llround(p.y / p.v);
    for (int ldir = -1; ldir <= 1; ldir += 2) {
      i64 lam = lc + (ldir > 0 ? 0 : -1);
      int lbelow = 0;
      for (;; lam += ldir) {
        if (std::llabs(lam) > (lmax > 0 ? lmax : 4000000))
          throw num::truncation_error("bergman_geometric: lambda window", 1.0);
        const C zl = z + C(double(lam)) * tau;
        const C head = C(double(m)) * (C(double(lam) * double(lam)) * tau +
                                       C(2.0 * double(lam)) * z);
        i64 mc = std::llround((j * zb - zl).real());
        double rowmax = kNinf;
        for (int mdir = -1; mdir <= 1; mdir += 2) {
          i64 mu = mc + (mdir > 0 ? 0 : -1);
          int below = 0;
          for (;; mu += mdir) {
            const C z1 = zl + C(double(mu));
            C args = head - C(double(m)) * (z1 * invj - zb) * (z1 * invj - zb) * itt;
            if (c != 0) args -= C(double(m) * double(c)) * z1 * z1 * invj;
            double lm = base_l - kTau * args.imag();
            double ph = base_p + kTau * args.real();
            acc += LogComplex(lm, ph);
            rowmax = std::max(rowmax, lm);
            peak = std::max(peak, lm);
            if (lm < peak - L) {
              if (++below >= 2) break;
            } else {
              below = 0;
            }
            if (std::llabs(mu - mc) > 10000000)
              throw num::truncation_error("bergman_geometric: mu ring", 1.0);
          }
        }
        mrowmax = std::max(mrowmax, rowmax);
        if (rowmax < peak - L) {
          if (++lbelow >= 2) break;
        } else {
          lbelow = 0;
        }
      }
    }
    return mrowmax;
  };

  // c = 0: translations (1,t;0,1) and their negatives
  for (int sgn = -1; sgn <= 1; sgn += 2) {
    i64 t = 0;
    int below = 0;
    for (int tdir = -1; tdir <= 1; tdir += 2) {
      below = 0;
      t = (tdir > 0) ? 0 : -1;
      for (;; t += tdir) {
        double rm = (sgn > 0) ? do_matrix(1, t, 0, 1) : do_matrix(-1, -t, 0, -1);
        if (rm < peak - L) {
          if (++below >= 2) break;
        } else {
          below = 0;
        }
        if (std::llabs(t) > 1000000)
          throw num::truncation_error("bergman_geometric: t window", 1.0);
      }
    }
  }
  // c >= 1
  int cbelow = 0;
  for (i64 c = 1; c <= (cmax > 0 ? cmax : i64(1) << 40); ++c) {
    double crowmax = kNinf;
    i64 dc = -std::llround(double(c) * p.u);
    for (int ddir = -1; ddir <= 1; ddir += 2) {
      i64 d = dc + (ddir > 0 ? 0 : -1);
      int dbelow = 0;
      for (;; d += ddir) {
        if (std::llabs(d) > 10000000)
          throw num::truncation_error("bergman_geometric: d window", 1.0);
        if (std::gcd(c, std::llabs(d)) != 1) continue;
        i64 a0 = (c == 1) ? 0 : num::mod_inverse(((d % c) + c) % c, c);
        i64 b0 = (a0 * d - 1) / c;
        // t-shift family a = a0 + t c, b = b0 + t d moves tau' by t
        C taup0 = (C(double(a0)) * tau + C(double(b0))) / (C(double(c)) * tau + C(double(d)));
        i64 t0 = std::llround(p.u - taup0.real());
        double drowmax = kNinf;
        for (int tdir = -1; tdir <= 1; tdir += 2) {
          i64 t = t0 + (tdir > 0 ? 0 : -1);
          int tbelow = 0;
          for (;; t += tdir) {
            double rm = std::max(do_matrix(a0 + t * c, b0 + t * d, c, d),
                                 do_matrix(-(a0 + t * c), -(b0 + t * d), -c, -d));
            drowmax = std::max(drowmax, rm);
            if (rm < peak - L) {
              if (++tbelow >= 2) break;
            } else {
              tbelow = 0;
            }
            if (std::llabs(t - t0) > 1000000)
              throw num::truncation_error("bergman_geometric: t window", 1.0);
          }
        }
        crowmax = std::max(crowmax, drowmax);
        if (drowmax < peak - L) {
          if (++dbelow >= 2) break;
        } else {
          dbelow = 0;
        }
      }
    }
    if (crowmax < peak - L) {
      if (++cbelow >= 2) break;
    } else {
      cbelow = 0;
    }
  }
  return acc;
}

}  // namespace

double bergman_geometric_log(int k, i64 m, const JacobiPoint& p, i64 cmax,
                             i64 lmax) {
  if (!(p.v > 0.0)) throw std::invalid_argument("bergman_geometric: need v > 0");
  const double weight = k * std::log(p.v) - 2.0 * kTau * m * p.y * p.y / p.v;
  const double lgeo = std::log(double(m) * (double(k) - 1.5) / kTau);
  LogComplex prev = LogComplex::zero();
  bool have = false;
  for (double L : {32.0, 40.0, 48.0, 56.0, 64.0}) {
    LogComplex cur = bk_geometric_core(k, m, p, L, cmax, lmax);
    if (have) {
      double rel = std::exp((cur + prev.neg()).logmod - cur.logmod);
      if (rel <= 1e-6) return weight + lgeo + cur.logmod;
    }
    prev = cur;
    have = true;
  }
  throw num::truncation_error("bergman_geometric: window agreement", 1.0);
}

double bergman_kernel_identity_log(int k, i64 m, const JacobiPoint& p) {
  const C tau(p.u, p.v), z(p.x, p.y);
  const C zb = std::conj(z);
  const double L = 46.0;
  const double weight = k * std::log(p.v) - 2.0 * kTau * m * p.y * p.y / p.v;
  const double lgeo = std::log(double(m) * (double(k) - 1.5) / kTau);
  LogComplex acc = LogComplex::zero();
  double peak = kNinf;
  const double lamw = std::sqrt(L / (kPi * m * p.v)) + 2.0 * std::abs(p.y) / p.v + 2.0;
  const i64 llo = -i64(std::ceil(lamw)), lhi = i64(std::ceil(lamw));
  for (i64 lam = llo; lam <= lhi; ++lam) {
    const C zl = z + C(double(lam)) * tau;
    const C head = C(double(m)) * (C(double(lam) * double(lam)) * tau +
                                   C(2.0 * double(lam)) * z);
    i64 mc = std::llround((zb - zl).real());
    for (int mdir = -1; mdir <= 1; mdir += 2) {
      i64 mu = mc + (mdir > 0 ? 0 : -1);
      int below = 0;
      for (;; mu += mdir) {
        const C w = zl + C(double(mu)) - zb;
        C args = head - C(double(m)) * w * w / C(0.0, 2.0 * p.v);
        double lm = -double(k) * std::log(2.0 * p.v) - kTau * args.imag();
        double ph = kTau * args.real();
        acc += LogComplex(lm, ph);
        peak = std::max(peak, lm);
        if (lm < peak - L) {
          if (++below >= 2) break;
        } else {
          below = 0;
        }
        if (std::llabs(mu - mc) > 10000000)
          throw num::truncation_error("bergman_kernel_identity: mu ring", 1.0);
      }
    }
  }
  return weight + lgeo + acc.logmod;
}

double bergman_theta_identity_log(int k, i64 m, const JacobiPoint& p) {
  const C tau(p.u, p.v), z(p.x, p.y);
  const double L = 46.0;
  const double weight = k * std::log(p.v) - 2.0 * kTau * m * p.y * p.y / p.v;
  const double rwin = std::sqrt(L / (kTau * m * p.v)) + 2.0;
  double sum = kNinf;
  for (i64 s = 0; s < 2 * m; ++s) {
    const double eta = double(s) / (2.0 * m);
    LogComplex th = LogComplex::zero();
    i64 rlo = i64(std::floor(-rwin - p.y / p.v - eta)),
        rhi = i64(std::ceil(rwin - p.y / p.v - eta));
    for (i64 r = rlo; r <= rhi; ++r) {
      double x = double(r) + eta;
      C e = tau * C(double(m) * x * x) + C(2.0 * double(m) * x) * z;
      th += LogComplex(-kTau * e.imag(), kTau * e.real());
    }
    sum = log_add(sum, 2.0 * th.logmod);
  }
  const double cst = std::log((double(k) - 1.5) * std::sqrt(2.0 * m) / (2.0 * kTau));
  return weight + cst + (0.5 - double(k)) * std::log(2.0 * p.v) + sum;
}

// -------------------------------------------------------------- old-space maps
JacobiCoeffTable vm_apply(const JacobiCoeffTable& phi, i64 m) {
  if (phi.m != 1) throw std::invalid_argument("vm_apply: index-1 input only");
  if (m < 1) throw std::invalid_argument("vm_apply: need m >= 1");
  JacobiCoeffTable out;
  out.k = phi.k;
  out.m = m;
  out.Dmax = phi.Dmax;
  for (i64 D = 1; D <= out.Dmax; ++D)
    for (i64 rt = 0; rt <= m; ++rt) {
      if ((D + rt * rt) % (4 * m) != 0) continue;
      i64 n = (D + rt * rt) / (4 * m);
      JacobiCoeffTable::Entry e;
      for (i64 a : num::divisors(num::content(n, rt, m))) {
        double w = std::pow(double(a), phi.k - 1);
        e.c += w * phi.get(n * m / (a * a), rt / a);
        e.noise += w * phi.noise_of(n * m / (a * a), rt / a);
      }
      out.shells[{D, rt}] = e;
    }
  return out;
}

double vm_slash_check(const JacobiCoeffTable& phi, i64 m, const JacobiPoint& p) {
  if (phi.m != 1) throw std::invalid_argument("vm_slash_check: index-1 input only");
  LogComplex A = table_eval(vm_apply(phi, m), p);
  LogComplex acc = LogComplex::zero();
  for (i64 a : num::divisors(m)) {
    i64 d = m / a;
    for (i64 b = 0; b < d; ++b) {
      JacobiPoint q{(double(a) * p.u + double(b)) / double(d), double(a) * p.v / double(d),
                    double(a) * p.x, double(a) * p.y};
      LogComplex t = table_eval(phi, q);
      acc += LogComplex(-double(phi.k) * std::log(double(d)), 0.0) * t;
    }
  }
  LogComplex B = LogComplex((phi.k - 1) * std::log(double(m)), 0.0) * acc;
  if (B.is_zero()) return A.is_zero() ? 0.0 : std::numeric_limits<double>::infinity();
  return std::exp((A + B.neg()).logmod - B.logmod);
}

double vp_norm_factor(int k, i64 m, const std::function<double(i64)>& lam) {
  if (m < 1) throw std::invalid_argument("vp_norm_factor: need m >= 1");
  double total = 0.0;
  for (i64 d : num::divisors(m)) {
    double psi = double(d);
    i64 dd = d;
    for (i64 q = 2; q * q <= dd; ++q)
      if (dd % q == 0) {
        psi *= 1.0 + 1.0 / double(q);
        while (dd % q == 0) dd /= q;
      }
    if (dd > 1) psi *= 1.0 + 1.0 / double(dd);
    total += psi * std::pow(double(d), k - 2) * lam(m / d);
  }
  return total;
}

HeckeSplit hecke_eigen_split(const GramBasis& base, i64 p,
                             const PrecisionPolicy& policy) {
  if (base.m != 1) throw std::invalid_argument("hecke_eigen_split: index-1 base only");
  if (!num::is_prime(p)) throw std::invalid_argument("hecke_eigen_split: p must be prime");
  const int k = base.k;
  const int ne = base.rank;
  if (ne == 0) throw std::invalid_argument("hecke_eigen_split: empty basis");

  std::vector<JacobiCoeffTable> vp0;
  for (const auto& t : base.coeff_tables) vp0.push_back(vm_apply(t, p));

  GramBasis basisP = jacobi_basis(k, p, 0, policy);
  i64 maxD = 0;
  for (const auto& s : basisP.specs) maxD = std::max(maxD, 4 * s.n0 * p - s.r0 * s.r0);
  if (maxD > vp0[0].Dmax)
    throw std::invalid_argument(
        "hecke_eigen_split: base tables too shallow for the index-p projection");

  const int rP = basisP.rank;
  Eigen::MatrixXcd X(ne, rP);
  for (int a = 0; a < ne; ++a)
    for (int e = 0; e < rP; ++e) {
      C s(0.0, 0.0);
      for (size_t i = 0; i < basisP.specs.size(); ++i) {
        const auto& sp = basisP.specs[i];
        double lam = poincare_normalizer(k, p, sp.n0, sp.r0);
        s += std::conj(basisP.ortho[size_t(e)][i]) * lam *
             vp0[size_t(a)].get(sp.n0, sp.r0);
      }
      X(a, e) = s;
    }
  Eigen::MatrixXcd M = X * X.adjoint();
  double mn = M.norm();
  HeckeSplit out;
  out.p = p;
  out.completeness_residual = mn > 0 ? (M - M.adjoint()).norm() / mn : 0.0;
  Eigen::MatrixXcd T =
      0.5 * (M + M.adjoint()) -
      (double(p) + 1.0) * std::pow(double(p), k - 2) * Eigen::MatrixXcd::Identity(ne, ne);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(T);
  if (es.info() != Eigen::Success)
    throw num::internal_error("hecke_eigen_split: eigensolver failed");
  for (int al = 0; al < ne; ++al) {
    int idx = ne - 1 - al;  // dominant eigenvalue first
    out.tjp_eigs.push_back(es.eigenvalues()(idx));
    std::vector<C> w(static_cast<size_t>(ne));
    for (int a = 0; a < ne; ++a) w[size_t(a)] = std::conj(es.eigenvectors()(a, idx));
    out.eigvecs.push_back(w);
    JacobiCoeffTable tab;
    tab.k = k;
    tab.m = 1;
    tab.Dmax = base.coeff_tables[0].Dmax;
    for (const auto& [key, e0] : base.coeff_tables[0].shells) {
      JacobiCoeffTable::Entry en;
      for (int a = 0; a < ne; ++a) {
        const auto& sh = base.coeff_tables[size_t(a)].shells.at(key);
        en.c += w[size_t(a)] * sh.c;
        en.noise += std::abs(w[size_t(a)]) * sh.noise;
        en.consistency += std::abs(w[size_t(a)]) * sh.consistency;
      }
      tab.shells[key] = en;
    }
    out.eigen_tables.push_back(std::move(tab));
  }
  for (const auto& t : out.eigen_tables) out.vp_tables.push_back(vm_apply(t, p));
  return out;
}

double mass_old_Ul_log(i64 l, const GramBasis& basis1, const JacobiPoint& p) {
  if (basis1.m != 1) throw std::invalid_argument("mass_old_Ul_log: index-1 basis only");
  if (l < 1) throw std::invalid_argument("mass_old_Ul_log: need l >= 1");
  JacobiPoint q{p.u, p.v, double(l) * p.x, double(l) * p.y};
  double acc = kNinf;
  for (const auto& t : basis1.coeff_tables)
    acc = log_add(acc, 2.0 * table_eval(t, q).logmod);
  return basis1.k * std::log(p.v) -
         2.0 * kTau * double(l) * double(l) * p.y * p.y / p.v + acc;
}

double mass_old_Vp_log(const HeckeSplit& split, const JacobiPoint& p, bool normalize) {
  const i64 pp = split.p;
  const int k = split.eigen_tables.empty() ? 0 : split.eigen_tables[0].k;
  if (split.vp_tables.empty())
    throw std::invalid_argument("mass_old_Vp_log: empty split");
  double acc = kNinf;
  for (size_t al = 0; al < split.vp_tables.size(); ++al) {
    double term = 2.0 * table_eval(split.vp_tables[al], p).logmod;
    if (normalize) {
      double mu = split.tjp_eigs[al] + (double(pp) + 1.0) * std::pow(double(pp), k - 2);
      if (!(mu > 0.0)) throw num::internal_error("mass_old_Vp_log: nonpositive norm");
      term -= std::log(mu);
    }
    acc = log_add(acc, term);
  }
  return k * std::log(p.v) - 2.0 * kTau * double(pp) * p.y * p.y / p.v + acc;
}

MassReport mass_scan(const std::function<double(const JacobiPoint&)>& mass_log,
                     int k, double v_hi, int density) {
  if (density < 1) throw std::invalid_argument("mass_scan: density >= 1");
  const double vh = v_hi > 0.0 ? v_hi : double(k);
  std::vector<num::ScanAxis> axes = {
      {0.0, 1.0, 8 * density, false, true},                  // u
      {0.0, 1.0, 8 * density, false, true},                  // x
      {std::sqrt(3.0) / 2.0, vh, 12 * density, true, false}, // v
      {0.0, 1.0, 8 * density, false, false},                 // t, y = t v
  };
  auto f = [&](const std::vector<double>& c) {
    JacobiPoint p{c[0], c[2], c[1], c[3] * c[2]};
    return mass_log(p);
  };
  num::ScanResult r = num::sup_scan(axes, f, 30);
  MassReport rep;
  rep.sup_log = r.best;
  rep.argmax = {r.argmax[0], r.argmax[2], r.argmax[1], r.argmax[3] * r.argmax[2]};
  rep.evals = r.evals;
  rep.grid_u = 8 * density;
  rep.grid_x = 8 * density;
  rep.grid_v = 12 * density;
  rep.grid_y = 8 * density;
  rep.v_lo = std::sqrt(3.0) / 2.0;
  rep.v_hi = vh;
  rep.descent_rounds = r.descent_rounds;
  return rep;
}

}  // namespace jlab::jac
