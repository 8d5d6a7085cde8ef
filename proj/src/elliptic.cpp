#include "jacobilab/elliptic.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <utility>

#include "jacobilab/arith.hpp"
#include "jacobilab/specfun.hpp"

namespace jlab::ell {

using num::internal_error;
using num::kloosterman;
using num::precision_exhausted;

// ----------------------------------------------------------- exact q-series

QExpansion eisenstein(int k, i64 N) {
  if (N < 0) throw std::invalid_argument("eisenstein: N < 0");
  i64 front;  // E_k = 1 + front * sum sigma_{k-1}(n) q^n
  switch (k) {
    case 4: front = 240; break;
    case 6: front = -504; break;
    case 10: front = -264; break;
    default: throw std::invalid_argument("eisenstein: only k in {4,6,10} supported");
  }
  QExpansion e;
  e.weight = k;
  e.a.assign(N + 1, mpz_class(0));
  e.a[0] = 1;
  // sigma_{k-1} sieve
  for (i64 d = 1; d <= N; ++d) {
    mpz_class dk;
    mpz_ui_pow_ui(dk.get_mpz_t(), static_cast<unsigned long>(d),
                  static_cast<unsigned long>(k - 1));
    dk *= front;
    for (i64 n = d; n <= N; n += d) e.a[n] += dk;
  }
  return e;
}

QExpansion mul(const QExpansion& f, const QExpansion& g, i64 N) {
  QExpansion h;
  h.weight = f.weight + g.weight;
  h.a.assign(N + 1, mpz_class(0));
  i64 fN = std::min<i64>(f.truncation(), N);
  for (i64 i = 0; i <= fN; ++i) {
    if (f.a[i] == 0) continue;
    i64 jmax = std::min<i64>(g.truncation(), N - i);
    for (i64 j = 0; j <= jmax; ++j) {
      if (g.a[j] == 0) continue;
      mpz_addmul(h.a[i + j].get_mpz_t(), f.a[i].get_mpz_t(), g.a[j].get_mpz_t());
    }
  }
  return h;
}

QExpansion delta_form(i64 N) {
  QExpansion e4 = eisenstein(4, N), e6 = eisenstein(6, N);
  QExpansion e4sq = mul(e4, e4, N);
  QExpansion e4cu = mul(e4sq, e4, N);
  QExpansion e6sq = mul(e6, e6, N);
  QExpansion d;
  d.weight = 12;
  d.a.assign(N + 1, mpz_class(0));
  for (i64 n = 0; n <= N; ++n) {
    mpz_class t = e4cu.a[n] - e6sq.a[n];
    mpz_divexact_ui(d.a[n].get_mpz_t(), t.get_mpz_t(), 1728);
  }
  return d;
}

int dim_cusp(int k) {
  if (k < 12 || k % 2 != 0) return 0;
  int d = k / 12;
  if (k % 12 == 2) d -= 1;
  return d;
}

std::vector<QExpansion> miller_basis(int k, i64 N) {
  int d = dim_cusp(k);
  if (d == 0) return {};
  QExpansion e4 = eisenstein(4, N), e6 = eisenstein(6, N), dl = delta_form(N);
  // cached powers
  std::vector<QExpansion> dpow(d + 1), e4pow, e6pow;
  dpow[1] = dl;
  for (int j = 2; j <= d; ++j) dpow[j] = mul(dpow[j - 1], dl, N);
  int amax = std::max(0, (k - 12) / 4), bmax = 3;
  e4pow.resize(amax + 1);
  e6pow.resize(bmax + 1);
  e4pow[0].weight = 0;
  e4pow[0].a.assign(N + 1, mpz_class(0));
  e4pow[0].a[0] = 1;
  e6pow[0] = e4pow[0];
  for (int a = 1; a <= amax; ++a) e4pow[a] = mul(e4pow[a - 1], e4, N);
  for (int b = 1; b <= bmax; ++b) e6pow[b] = mul(e6pow[b - 1], e6, N);

  std::vector<QExpansion> basis(d);
  for (int i = 0; i < d; ++i) {
    int e = k - 12 * (i + 1);
    int a = -1, b = -1;
    for (int bb = 0; bb <= bmax; ++bb)
      if (e - 6 * bb >= 0 && (e - 6 * bb) % 4 == 0) {
        b = bb;
        a = (e - 6 * bb) / 4;
        break;
      }
    if (a < 0) throw internal_error("miller_basis: no monomial of weight " + std::to_string(e));
    basis[i] = mul(dpow[i + 1], mul(e4pow[a], e6pow[b], N), N);
    basis[i].weight = k;
  }
  // echelonize: basis[i] = q^{i+1} + O(q^{d+1}); leading coefficients are 1
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      mpz_class c = basis[i].a[j + 1];
      if (c == 0) continue;
      for (i64 n = j + 1; n <= N; ++n)
        mpz_submul(basis[i].a[n].get_mpz_t(), c.get_mpz_t(), basis[j].a[n].get_mpz_t());
    }
  return basis;
}

// --------------------------------------------------------------- eigenforms

std::vector<Eigenform> eigenbasis(int k, i64 N) {
  int d = dim_cusp(k);
  if (d == 0) return {};
  i64 Nb = std::max<i64>(N, 2 * (d + 1));
  std::vector<QExpansion> mb = miller_basis(k, Nb);

  // T_2 on the Miller basis, matrix entries read off echelon leading slots:
  // (T_2 f)(n) = a(2n) + 2^{k-1} a(n/2)
  Eigen::MatrixXd M(d, d);
  double two_km1 = std::pow(2.0, k - 1);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < d; ++i) {
      i64 n = i + 1;
      double v = mb[j].a[2 * n].get_d();
      if (n % 2 == 0) v += two_km1 * mb[j].a[n / 2].get_d();
      M(i, j) = v;
    }
  Eigen::EigenSolver<Eigen::MatrixXd> es(M);
  if (es.info() != Eigen::Success) throw internal_error("eigenbasis: eigensolver failed");

  double scale = M.cwiseAbs().maxCoeff();
  std::vector<Eigenform> out;
  for (int e = 0; e < d; ++e) {
    std::complex<double> lam = es.eigenvalues()[e];
    if (std::abs(lam.imag()) > 1e-8 * std::max(1.0, scale))
      throw internal_error("eigenbasis: non-real Hecke eigenvalue");
    Eigen::VectorXcd vc = es.eigenvectors().col(e);
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) {
      if (std::abs(vc[i].imag()) > 1e-8 * vc.norm())
        throw internal_error("eigenbasis: non-real eigenvector");
      v[i] = vc[i].real();
    }
    double resid = (M * v - lam.real() * v).norm() / (scale * v.norm());
    if (resid > 1e-9) throw internal_error("eigenbasis: eigen residual too large");
    if (v[0] == 0.0) throw internal_error("eigenbasis: vanishing leading coefficient");
    v /= v[0];  // a(1) = 1

    Eigenform f;
    f.weight = k;
    f.t2 = lam.real();
    f.a.assign(Nb + 1, 0.0);
    for (i64 n = 1; n <= Nb; ++n) {
      double s = 0;
      for (int j = 0; j < d; ++j) s += v[j] * mb[j].a[n].get_d();
      f.a[n] = s;
    }
    f.lam.assign(Nb + 1, 0.0);
    for (i64 n = 1; n <= Nb; ++n)
      f.lam[n] = f.a[n] / std::pow(static_cast<double>(n), (k - 1) / 2.0);
    out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(),
            [](const Eigenform& x, const Eigenform& y) { return x.t2 > y.t2; });
  return out;
}

namespace {

mpz_class int128_to_mpz(__int128 v) {
  bool neg = v < 0;
  unsigned __int128 u = neg ? -static_cast<unsigned __int128>(v) : static_cast<unsigned __int128>(v);
  mpz_class m = static_cast<unsigned long>(u >> 64);
  m <<= 64;
  m += static_cast<unsigned long>(u);
  if (neg) m = -m;
  return m;
}

}  // namespace

Eigenform eigenform_dense(int k, i64 nmax) {
  if (dim_cusp(k) != 1)
    throw std::invalid_argument("eigenform_dense: space is not one-dimensional");
  if (nmax < 1) throw std::invalid_argument("eigenform_dense: nmax >= 1");
  // eta-power intermediates stay under 2^95 out to ~1.2e5, the exactness
  // ceiling of the 128-bit recursion below
  if (nmax > 120000)
    throw std::invalid_argument("eigenform_dense: nmax beyond exact 128-bit range");
  const std::size_t N = static_cast<std::size_t>(nmax);

  // Exact tau(1..nmax): eta^24 by 24 in-place multiplications with the sparse
  // pentagonal series prod (1 - q^n) = sum_j (-1)^j q^{j(3j-1)/2}.  Exactness
  // is the point: the Rankin-style convolution below cancels ~n^5 worth of
  // term magnitude, so table noise scales with eps * |terms|, not
  // eps * |result| -- a double-precision run of the same recursion is off by
  // percents near n = 2000 and pure noise by n = 10^4.
  std::vector<std::pair<std::size_t, long>> pent;
  for (i64 j = 1;; ++j) {
    i64 g1 = j * (3 * j - 1) / 2, g2 = j * (3 * j + 1) / 2;
    if (g1 > nmax && g2 > nmax) break;
    long s = (j % 2) ? -1 : 1;
    if (g1 <= nmax) pent.emplace_back(static_cast<std::size_t>(g1), s);
    if (g2 <= nmax) pent.emplace_back(static_cast<std::size_t>(g2), s);
  }
  std::vector<__int128> d(N, 0);  // d[i] = coeff of q^i in the eta-quotient power
  d[0] = 1;
  for (int rep = 0; rep < 24; ++rep)
    for (std::size_t i = N; i-- > 0;) {
      __int128 acc = d[i];
      for (const auto& [g, s] : pent) {
        if (g > i) break;
        acc += s * d[i - g];
      }
      d[i] = acc;
    }
  // tau(n) = d[n-1] (the leading q)

  int w = k - 12;
  long front = 0;
  unsigned long pw = 0;
  if (w != 0) {
    switch (w) {
      case 4: front = 240; pw = 3; break;
      case 6: front = -504; pw = 5; break;
      case 8: front = 480; pw = 7; break;
      case 10: front = -264; pw = 9; break;
      case 14: front = -24; pw = 13; break;
      default:
        throw std::invalid_argument("eigenform_dense: unsupported weight");
    }
  }

  // Eisenstein cofactor coefficients e[j] = front * sigma_pw(j), exact
  std::vector<mpz_class> e;
  if (w != 0) {
    e.assign(N, mpz_class(0));
    mpz_class dp;
    for (std::size_t dd = 1; dd < N; ++dd) {
      mpz_ui_pow_ui(dp.get_mpz_t(), dd, pw);
      for (std::size_t m = dd; m < N; m += dd) e[m] += dp;
    }
    for (std::size_t j = 1; j < N; ++j) e[j] *= front;
    e[0] = 1;
  }

  // Smallest-prime-factor sieve (linear)
  std::vector<int32_t> spf(N + 1, 0);
  std::vector<int32_t> primes;
  for (std::size_t n = 2; n <= N; ++n) {
    if (spf[n] == 0) {
      spf[n] = static_cast<int32_t>(n);
      primes.push_back(static_cast<int32_t>(n));
    }
    for (int32_t p : primes) {
      if (p > spf[n] || n * p > N) break;
      spf[n * p] = p;
    }
  }

  // a(p) at primes by the exact integer convolution (sum over p terms); the
  // rest of the table follows multiplicatively, which only multiplies exact
  // values and so stays within a few ulps everywhere.
  std::vector<double> a(N + 1, 0.0);
  if (N >= 1) a[1] = 1.0;
  std::vector<mpz_class> tz(N + 1);
  for (std::size_t n = 1; n <= N; ++n) tz[n] = int128_to_mpz(d[n - 1]);
  mpz_class acc;
  for (int32_t p : primes) {
    if (w == 0) {
      a[p] = tz[p].get_d();
      continue;
    }
    acc = tz[p];  // j = 0 term: e[0] = 1
    for (std::size_t j = 1; j < static_cast<std::size_t>(p); ++j)
      mpz_addmul(acc.get_mpz_t(), tz[p - j].get_mpz_t(), e[j].get_mpz_t());
    a[p] = acc.get_d();
  }
  for (std::size_t n = 4; n <= N; ++n) {
    if (spf[n] == static_cast<int32_t>(n)) continue;  // prime
    std::size_t p = static_cast<std::size_t>(spf[n]);
    std::size_t pv = p, m = n / p;
    while (m % p == 0) {
      pv *= p;
      m /= p;
    }
    if (m > 1)
      a[n] = a[pv] * a[m];  // coprime split
    else
      a[n] = a[p] * a[n / p] -
             std::pow(static_cast<double>(p), k - 1) * a[n / (p * p)];
  }

  Eigenform f;
  f.weight = k;
  f.a = std::move(a);
  f.t2 = f.a.size() > 2 ? f.a[2] : 0.0;
  f.lam.assign(N + 1, 0.0);
  for (std::size_t n = 1; n <= N; ++n)
    f.lam[n] = f.a[n] / std::pow(static_cast<double>(n), (k - 1) / 2.0);
  return f;
}

// ------------------------------------------------------- Petersson numerics

namespace {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    double p0 = 1.0, p1 = t;
    for (int j = 2; j <= n; ++j) {
      double p2 = ((2.0 * j - 1.0) * t * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[i] = t;
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

std::complex<double> eval_form(const Eigenform& f, double u, double v, i64 nmax) {
  std::complex<double> q = std::exp(std::complex<double>(-2.0 * 3.14159265358979323846 * v,
                                                         2.0 * 3.14159265358979323846 * u));
  // Horner from the top
  std::complex<double> acc(0.0, 0.0);
  i64 N = std::min<i64>(nmax, f.a.size() - 1);
  for (i64 n = N; n >= 1; --n) acc = acc * q + f.a[n];
  return acc * q;
}

}  // namespace

double petersson_norm(const Eigenform& f, int gl_nodes) {
  const double pi = 3.14159265358979323846;
  int k = f.weight;
  std::vector<double> gx, gw;
  gauss_legendre(gl_nodes, gx, gw);
  i64 nmax = std::min<i64>(static_cast<i64>(f.a.size()) - 1, 120);
  double ymax = std::max(12.0, k / 3.0);

  // integrand |f|^2 v^{k-2} over the standard fundamental domain
  auto slab = [&](double ylo, double yhi, double u) {
    double s = 0;
    for (int iy = 0; iy < gl_nodes; ++iy) {
      double v = 0.5 * (ylo + yhi) + 0.5 * (yhi - ylo) * gx[iy];
      double w = 0.5 * (yhi - ylo) * gw[iy];
      std::complex<double> fv = eval_form(f, u, v, nmax);
      s += w * std::norm(fv) * std::pow(v, k - 2);
    }
    return s;
  };
  double total = 0;
  for (int iu = 0; iu < gl_nodes; ++iu) {
    double u = 0.5 * gx[iu];  // [-1/2, 1/2]
    double wu = 0.5 * gw[iu];
    double y0 = std::sqrt(1.0 - u * u);
    total += wu * (slab(y0, 2.0, u) + slab(2.0, ymax, u));
  }
  // tail beyond ymax: |f(tau)| <= sum d(n) n^{(k-1)/2} e^{-2 pi n v} ~ e^{-2 pi v}(1+eps)
  // integral of e^{-4 pi v} v^{k-2} from ymax, crude but certified small
  double tail = std::exp(-4.0 * pi * ymax + (k - 2) * std::log(ymax)) * 2.0 /
                (4.0 * pi - (k - 2) / ymax);
  return total + tail;
}

DeltaResult petersson_delta(i64 M, i64 s, i64 t, int kappa, i64 cmax,
                            const PrecisionPolicy& policy) {
  if (M < 1 || s < 1 || t < 1) throw std::invalid_argument("petersson_delta: need M,s,t >= 1");
  if (kappa < 4 || kappa % 2 != 0)
    throw std::invalid_argument("petersson_delta: kappa must be even >= 4");
  const double pi = 3.14159265358979323846;
  const double X = 4.0 * pi * std::sqrt(static_cast<double>(s) * static_cast<double>(t));
  const int nu = kappa - 1;
  const double xmax_eval = 600.0;  // series certifiable within the bits ceiling

  // Small-argument tail needs X/cmax <= sqrt(nu+1); extend cmax if short.
  i64 cmin_tail = static_cast<i64>(std::ceil(X / std::sqrt(nu + 1.0)));
  if (cmax <= 0) cmax = 50;
  cmax = std::max<i64>({cmax, M, cmin_tail});

  double sign = (kappa / 2) % 2 == 0 ? 1.0 : -1.0;
  double pref = 2.0 * pi * sign;

  DeltaResult res{s == t ? 1.0 : 0.0, 0.0, 0.0, 0.0, cmax};
  const double landau_x = 0.7858;  // |J_nu(x)| <= landau_x / x^{1/3} for all x > 0
  for (i64 c = M; c <= cmax; c += M) {
    double x = X / c;
    double S = kloosterman(s, t, c);
    double S_round = 1e-15 * c;  // additive rounding in the d-loop
    if (x > xmax_eval) {
      res.skipped_bound += (2.0 * pi / c) * (std::abs(S) + S_round) * landau_x / std::cbrt(x);
      continue;
    }
    auto J = num::bessel_j(nu, x, policy);
    res.value += pref / c * S * J.value;
    res.evaluated_abs += 2.0 * pi / c * std::abs(S * J.value);
    res.noise_bound +=
        2.0 * pi / c * (std::abs(S) * J.tail_bound + S_round * std::abs(J.value));
  }
  // c > cmax: |J_nu(x)| <= (x/2)^nu / nu! * 1/(1-q), q = (x0/2)^2/(nu+1), |S| <= c
  double x0 = X / cmax;
  double q = (x0 / 2.0) * (x0 / 2.0) / (nu + 1.0);
  if (q < 1.0) {
    double log_lead = nu * std::log(X / 2.0) - num::log_gamma(nu + 1.0);
    // sum_{c > cmax, M|c} c^{-nu} <= (1/M) cmax^{1-nu} / (nu-1)
    double log_tail = log_lead + (1.0 - nu) * std::log(static_cast<double>(cmax)) -
                      std::log(static_cast<double>(M)) - std::log(nu - 1.0);
    res.noise_bound += 2.0 * pi * std::exp(log_tail) / (1.0 - q);
  } else {
    throw internal_error("petersson_delta: tail regime not reached");
  }
  return res;
}

// ------------------------------------------------ Chebyshev-type recursion

std::vector<std::vector<i64>> chebyshev_rows(int tmax) {
  if (tmax < 0 || tmax > 64)
    throw std::invalid_argument("chebyshev_rows: need 0 <= tmax <= 64 for exact rows");
  std::vector<std::vector<i64>> rows(tmax + 1);
  rows[0] = {1};
  if (tmax >= 1) rows[1] = {0, 1};
  for (int t = 2; t <= tmax; ++t) {
    rows[t].assign(t + 1, 0);
    for (int j = 0; j <= t - 1; ++j) rows[t][j + 1] += rows[t - 1][j];  // x * X_{t-1}
    for (int j = 0; j <= t - 2; ++j) rows[t][j] -= rows[t - 2][j];      // - X_{t-2}
  }
  return rows;
}

CpResult c_of_p(i64 p, int tmax, double tol) {
  if (p < 2 || !num::is_prime(p)) throw std::invalid_argument("c_of_p: p must be prime");
  if (tmax < 8) throw std::invalid_argument("c_of_p: tmax too small");
  const double w = static_cast<double>(p) / ((p + 1.0) * (p + 1.0));

  // square sums of the recursion rows; exact int64 up to t=64, then doubles
  // via the same recursion (entries stay far below 2^53-relative harm since
  // the t-weights are already < 1e-10 there)
  auto row_sq = [](const std::vector<double>& r) {
    double s = 0;
    for (double c : r) s += c * c;
    return s;
  };
  std::vector<double> prev = {1.0}, cur = {0.0, 1.0};
  double sum = row_sq(prev) + w * row_sq(cur);  // t = 0, 1
  double wt = w;
  double last_term = w * row_sq(cur), last_ratio = 0.0;
  int t_used = 1;
  for (int t = 2; t <= tmax; ++t) {
    std::vector<double> nxt(t + 1, 0.0);
    for (int j = 0; j <= t - 1; ++j) nxt[j + 1] += cur[j];
    for (int j = 0; j + 2 <= t; ++j) nxt[j] -= prev[j];
    prev = std::move(cur);
    cur = std::move(nxt);
    wt *= w;
    double term = wt * row_sq(cur);
    sum += term;
    last_ratio = term / last_term;
    last_term = term;
    t_used = t;
    if (last_ratio < 1.0 && term * last_ratio / (1.0 - last_ratio) < tol * 0.1 && t >= 12)
      break;
  }
  if (!(last_ratio < 1.0))
    throw num::truncation_error("c_of_p: tail ratio not contracting; raise tmax", last_ratio);
  double tail = last_term * last_ratio / (1.0 - last_ratio);
  return {-sum / (p + 1.0), tail / (p + 1.0), t_used, last_ratio};
}

// -------------------------------------------------------------- L-functions

namespace {

// Upper incomplete gamma ratio Q(s, x) = Gamma(s,x)/Gamma(s) for integer
// s >= 1: exact finite sum e^{-x} sum_{j<s} x^j/j!.
double gamma_q_int(int s, double x) {
  if (s < 1) throw std::invalid_argument("gamma_q_int: s >= 1");
  double term = 1.0, sum = 1.0;
  for (int j = 1; j < s; ++j) {
    term *= x / j;
    sum += term;
  }
  return std::exp(-x + std::log(sum));
}

}  // namespace

LValue dirichlet_series(const Eigenform& f, double s) {
  int kappa = f.weight;
  int si = static_cast<int>(std::round(s));
  // completed-integral route: exact identity from splitting the Mellin
  // integral at y = 1, with integer-order incomplete-gamma weights
  if (!(std::abs(s - si) < 1e-12 && si >= kappa / 2 + 1 && si < kappa))
    throw std::invalid_argument(
        "dirichlet_series: supported for integer s in [kappa/2+1, kappa-1]");
  const double pi = 3.14159265358979323846;
  double sign = (kappa / 2) % 2 == 0 ? 1.0 : -1.0;
  double lg_s = num::log_gamma(static_cast<double>(si));
  double lg_ks = num::log_gamma(static_cast<double>(kappa - si));
  i64 N = std::min<i64>(static_cast<i64>(f.a.size()) - 1, 4000);
  double value = 0.0;
  auto second_weight = [&](double nn) {
    return std::exp((2.0 * s - kappa) * std::log(2.0 * pi) +
                    (s - kappa) * std::log(nn) + lg_ks - lg_s);
  };
  for (i64 n = 1; n <= N; ++n) {
    double nn = static_cast<double>(n);
    double x = 2.0 * pi * nn;
    double t1 = std::pow(nn, -s) * gamma_q_int(si, x);
    double t2 = sign * second_weight(nn) * gamma_q_int(kappa - si, x);
    value += f.a[n] * (t1 + t2);
    // Deligne envelope |a(m)| <= d(m) m^{(kappa-1)/2} <= 2 m^{kappa/2};
    // the weights decay like e^{-2 pi m}, so one more term dominates the rest
    double env = 2.0 * std::pow(nn + 1.0, kappa / 2.0) *
                 (std::pow(nn + 1.0, -s) + second_weight(nn + 1.0)) *
                 gamma_q_int(std::max(si, kappa - si), 2.0 * pi * (nn + 1.0));
    if (env < 1e-18 && n >= 8) return {value, 2.0 * env, n};
  }
  throw num::truncation_error("dirichlet_series: table too short", 1.0);
}

namespace {

// reference: plain trapezoid on the sigma = 3 line
double contour_weight_step(double s0, double xi, double step) {
  const double pi = 3.14159265358979323846;
  const double sigma = 3.0, T = 11.0;
  double lg0 = num::log_gamma(s0);
  int Nt = static_cast<int>(std::ceil(T / step));
  double sum = 0.0;
  for (int j = -Nt; j <= Nt; ++j) {
    double t = j * step;
    std::complex<double> u(sigma, t);
    std::complex<double> lg = num::log_gamma(std::complex<double>(s0, 0.0) + u);
    std::complex<double> w =
        std::exp(lg - lg0 + u * u - u * std::log(xi)) / u;
    double trap = (j == -Nt || j == Nt) ? 0.5 : 1.0;
    sum += trap * w.real();
  }
  return sum * step / (2.0 * pi);
}

// Production evaluator.  For each sigma bucket the Gamma-dependent node
// constants are precomputed once; a single weight evaluation is then ~50
// complex multiplies.  The integrand is entire in t (pole of 1/u sits at
// t = +-i sigma, Gamma poles are left of the line), so the trapezoid alias
// error admits the standard strip bound M(b) 2 q/(1-q), q = e^{-2 pi b/h},
// with everything on the shifted lines computable from the same envelope.
class WeightEvaluator {
 public:
  explicit WeightEvaluator(double s0) : s0_(s0), lg0_(num::log_gamma(s0)) {}

  // value of V(xi); *noise gets the certified quadrature error
  double eval(double xi, double* noise) {
    double lxi = std::log(xi);
    int best = 0;
    double best_lb = line_log_bound(sigma_of(0), lxi);
    for (int b = 1; b < kBuckets; ++b) {
      double lb = line_log_bound(sigma_of(b), lxi);
      if (lb < best_lb) {
        best_lb = lb;
        best = b;
      }
    }
    const Bucket& B = bucket(best);
    double sg = sigma_of(best);
    // V = xi^{-sigma} [A_0 + 2 sum_{j>=1} Re(A_j e^{-i t_j ln xi})]
    std::complex<double> rot(std::cos(B.h * lxi), -std::sin(B.h * lxi));
    std::complex<double> ph = rot;
    double acc = B.nodes[0].real();
    for (std::size_t j = 1; j < B.nodes.size(); ++j) {
      acc += 2.0 * (B.nodes[j] * ph).real();
      ph *= rot;
    }
    double scale = std::exp(-sg * lxi);
    if (noise) {
      // The closest singularity to the contour is the 1/u pole at t = +-i
      // sigma (residue 1 there: that residue IS the main term of V), so the
      // alias strip must stay inside it: shift lines at sigma -+ b.
      double b = strip_of(sg);
      double q = std::exp(-2.0 * kPi * b / B.h);
      double m_hi = line_int_bound(sg + b, lxi);
      double m_lo = line_int_bound(sg - b, lxi);
      double alias = (m_hi + m_lo) * q / (1.0 - q);
      // t-truncation: |integrand| <= envelope * e^{-T^2} beyond T
      double trunc = line_int_bound(sg, lxi) * std::exp(-(kT * kT)) * 2.0;
      // double rounding across ~2 Nt accumulations at the integrand peak
      double rnd = B.nodes.size() * 4.0 * 1e-16 * std::exp(best_lb + sg * lxi) * scale;
      *noise = alias + trunc + rnd * 8.0;
    }
    return scale * acc;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  static constexpr double kT = 11.0;  // truncation of the t-integral
  static constexpr int kBuckets = 16;  // sigma = 0.5, 1.0, ..., 8.0

  struct Bucket {
    std::vector<std::complex<double>> nodes;  // A_j, j >= 0
    double h = 0.0;
  };

  static double sigma_of(int b) { return 0.5 * (b + 1); }
  static double strip_of(double sg) { return std::min(0.8 * sg, 1.0); }
  // step sized so that e^{-2 pi b / h} stays below ~1e-16 for this bucket
  static double step_of(double sg) {
    return std::min(0.2, 2.0 * kPi * strip_of(sg) / 38.0);
  }

  // log of e^{sigma^2} Gamma(s0+sigma)/Gamma(s0) xi^{-sigma}/(2 sqrt(pi) s)
  double line_log_bound(double sg, double lxi) const {
    return sg * sg + num::log_gamma(s0_ + sg) - lg0_ - sg * lxi -
           std::log(2.0 * std::sqrt(kPi) * sg);
  }
  // integral bound along a line at abscissa sg (for alias/truncation):
  // (1/2pi) int |Gamma(s0+sg+it)/Gamma(s0)| e^{sg^2-t^2} xi^{-sg} dt / sg
  double line_int_bound(double sg, double lxi) const {
    return std::exp(sg * sg + num::log_gamma(s0_ + sg) - lg0_ - sg * lxi) /
           (2.0 * std::sqrt(kPi) * sg);
  }

  const Bucket& bucket(int b) {
    Bucket& B = buckets_[b];
    if (B.nodes.empty()) {
      double sg = sigma_of(b);
      B.h = step_of(sg);
      int Nt = static_cast<int>(std::ceil(kT / B.h));
      B.nodes.resize(Nt + 1);
      for (int j = 0; j <= Nt; ++j) {
        std::complex<double> u(sg, j * B.h);
        std::complex<double> lg =
            num::log_gamma(std::complex<double>(s0_, 0.0) + u);
        std::complex<double> A = std::exp(lg - lg0_ + u * u) / u;
        // the xi^{-sigma} prefactor is applied at eval time; endpoint gets
        // the trapezoid half-weight
        if (j == Nt) A *= 0.5;
        B.nodes[j] = A * (B.h / (2.0 * kPi));
      }
    }
    return B;
  }

  double s0_;
  double lg0_;
  Bucket buckets_[kBuckets];
};

}  // namespace

double contour_weight(double s0, double xi) {
  thread_local double cached_s0 = -1.0;
  thread_local std::unique_ptr<WeightEvaluator> ev;
  if (!ev || cached_s0 != s0) {
    ev = std::make_unique<WeightEvaluator>(s0);
    cached_s0 = s0;
  }
  return ev->eval(xi, nullptr);
}

double contour_weight_ref(double s0, double xi) {
  double h = 0.1, w = contour_weight_step(s0, xi, h);
  for (int it = 0; it < 4; ++it) {
    double w2 = contour_weight_step(s0, xi, h / 2);
    if (std::abs(w2 - w) < 1e-12 * std::max(1.0, std::abs(w2))) return w2;
    w = w2;
    h /= 2;
  }
  return w;
}

// certified bound |W(xi)| <= min_sigma e^{sigma^2} (Gamma(s0+sigma)/Gamma(s0))
//                            xi^{-sigma} / (2 sqrt(pi) sigma)
double contour_weight_bound(double s0, double xi, double* sigma_opt) {
  double lg0 = num::log_gamma(s0);
  double best = std::numeric_limits<double>::infinity();
  double best_sg = 0.5;
  for (double sg = 0.5; sg <= 40.0; sg += 0.5) {
    double lb = sg * sg + num::log_gamma(s0 + sg) - lg0 - sg * std::log(xi) -
                std::log(2.0 * std::sqrt(3.14159265358979323846) * sg);
    if (lb < best) {
      best = lb;
      best_sg = sg;
    }
  }
  if (sigma_opt) *sigma_opt = best_sg;
  return std::exp(best);
}

CentralTwist central_L_twist(const Eigenform& f, i64 D, double balance,
                             const PrecisionPolicy& policy) {
  policy.validate();
  if (!num::classify_discriminant(D).is_fundamental && D != 1)
    throw std::invalid_argument("central_L_twist: D must be a fundamental discriminant");
  if (!(balance > 0.0)) throw std::invalid_argument("central_L_twist: balance X > 0");
  const double pi = 3.14159265358979323846;
  int kappa = f.weight;
  double s0 = kappa / 2.0;
  double absD = std::abs(static_cast<double>(D));

  int eps = ((kappa / 2) % 2 == 0 ? 1 : -1) * (D > 0 ? 1 : -1);
  if (eps == -1 && balance == 1.0) return {0.0, 0.0, eps, true, 0};

  // terms a(n) chi_D(n) n^{-s0} [W(2 pi n/(|D| X)) + eps W(2 pi n X/|D|)]
  double tol = std::max(policy.tail_tol, 1e-9);
  i64 Nmax = static_cast<i64>(f.a.size()) - 1;
  WeightEvaluator W(s0);
  double value = 0.0, noise = 0.0;
  i64 n = 1;
  double tail = std::numeric_limits<double>::infinity();
  for (; n <= Nmax; ++n) {
    i64 chi = num::kronecker(D, n);
    if (chi != 0) {
      double nn = static_cast<double>(n);
      double n1 = 0.0, n2 = 0.0;
      double w1 = W.eval(2.0 * pi * nn / (absD * balance), &n1);
      double w2 = W.eval(2.0 * pi * nn * balance / absD, &n2);
      double an = f.a[n] * chi * std::pow(nn, -s0);
      value += an * (w1 + eps * w2);
      noise += std::abs(an) * (n1 + n2);
    }
    // certified remainder: |a(m)| m^{-s0} <= d(m) m^{-1/2} <= 2, and
    // Wb(xi(m)) <= Wb(xi(n+1)) (m/(n+1))^{-sigma*}, so the m-sum telescopes
    // to Wb(n+1) 2(n+1)/(sigma*-1) per half
    if (n % 16 == 0 || n == Nmax) {
      double xscale = std::max(balance, 1.0 / balance);
      double m = static_cast<double>(n + 1);
      double sg = 0.5;
      double wb = contour_weight_bound(s0, 2.0 * pi * m / (absD * xscale), &sg);
      double est = 4.0 * wb * m / std::max(sg - 1.0, 0.5);
      tail = est;  // monotone improving; the last computed value stands
      if (est < tol) {
        ++n;
        break;
      }
    }
  }
  return {value, tail + noise, eps, false, n - 1};
}

// --------------------------------------------------- elliptic Bergman mass

double mass_elliptic_log(int k, double u, double v,
                         const std::vector<Eigenform>& basis,
                         const std::vector<double>& norms) {
  if (basis.empty()) return -std::numeric_limits<double>::infinity();
  if (basis.size() != norms.size())
    throw std::invalid_argument("mass_elliptic_log: basis/norm mismatch");
  // log of sum over eigenforms of v^k |f|^2 / <f,f>, factoring q out of f
  const double pi = 3.14159265358979323846;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    const Eigenform& f = basis[i];
    i64 nmax = std::min<i64>(static_cast<i64>(f.a.size()) - 1, 160);
    std::complex<double> q =
        std::exp(std::complex<double>(-2.0 * pi * v, 2.0 * pi * u));
    std::complex<double> acc(0.0, 0.0);
    for (i64 m = nmax; m >= 1; --m) acc = acc * q + f.a[m];  // f / q
    double lf2 = 2.0 * (std::log(std::abs(acc)) - 2.0 * pi * v);
    double lg = k * std::log(v) + lf2 - std::log(norms[i]);
    logs.push_back(lg);
    best = std::max(best, lg);
  }
  double s = 0;
  for (double lg : logs) s += std::exp(lg - best);
  return best + std::log(s);
}

}  // namespace jlab::ell
