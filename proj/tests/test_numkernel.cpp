#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <gmpxx.h>

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "jacobilab/arith.hpp"
#include "jacobilab/logcomplex.hpp"
#include "jacobilab/mpreal.hpp"
#include "jacobilab/precision.hpp"
#include "jacobilab/scanfit.hpp"
#include "jacobilab/specfun.hpp"
#include "jacobilab/threads.hpp"

using namespace jlab::num;

TEST_CASE("kronecker symbol matches gmp over a dense box") {
  for (long a = -60; a <= 60; ++a)
    for (long n = -60; n <= 60; ++n) {
      mpz_class am(a), nm(n);
      CHECK(kronecker(a, n) == mpz_kronecker(am.get_mpz_t(), nm.get_mpz_t()));
    }
}

TEST_CASE("kronecker spot values") {
  CHECK(kronecker(-4, 3) == -1);
  CHECK(kronecker(-4, 5) == 1);
  CHECK(kronecker(5, 5) == 0);
  CHECK(kronecker(-3, 2) == -1);
  CHECK(kronecker(12, 1) == 1);
  CHECK(kronecker(-8, 3) == 1);
}

TEST_CASE("content and divisors") {
  CHECK(content(4, 6, 8) == 2);
  CHECK(content(0, 0, 5) == 5);
  CHECK(content(-9, 3, 0) == 3);
  CHECK_THROWS_AS(content(0, 0, 0), std::invalid_argument);
  CHECK(divisors(12) == std::vector<i64>({1, 2, 3, 4, 6, 12}));
  CHECK(divisor_count(36) == 9);
  CHECK(mobius(1) == 1);
  CHECK(mobius(2) == -1);
  CHECK(mobius(4) == 0);
  CHECK(mobius(6) == 1);
  CHECK(mobius(30) == -1);
}

TEST_CASE("modular inverse") {
  CHECK(mod_inverse(3, 7) == 5);
  CHECK(mod_inverse(10, 17) == 12);
  CHECK_THROWS_AS(mod_inverse(6, 9), std::invalid_argument);
  for (i64 c : {5, 12, 101}) {
    for (i64 a = 1; a < c; ++a) {
      if (std::gcd(a, c) != 1) continue;
      CHECK((a * mod_inverse(a, c)) % c == 1);
    }
  }
}

TEST_CASE("discriminant classification") {
  CHECK(classify_discriminant(-3).is_fundamental);
  CHECK(classify_discriminant(-4).is_fundamental);
  CHECK(classify_discriminant(5).is_fundamental);
  CHECK(classify_discriminant(8).is_fundamental);
  CHECK_FALSE(classify_discriminant(-12).is_fundamental);
  CHECK_FALSE(classify_discriminant(9).is_fundamental);
  CHECK_THROWS_AS(classify_discriminant(3), std::invalid_argument);
  CHECK_THROWS_AS(classify_discriminant(0), std::invalid_argument);
}

TEST_CASE("log_gamma real: classical values and functional equations") {
  CHECK(log_gamma(0.5) == doctest::Approx(0.57236494292470008707).epsilon(1e-14));
  CHECK(log_gamma(11.0) == doctest::Approx(std::log(3628800.0)).epsilon(1e-14));
  CHECK(log_gamma(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  // recurrence at large argument; both logs are ~8e4, so the two double
  // conversions alone can cost ~2e-12 relative to log(x)
  double x = 9999.5;
  CHECK(log_gamma(x + 1.0) - log_gamma(x) == doctest::Approx(std::log(x)).epsilon(1e-11));
  // Legendre duplication at x = 5000
  x = 5000.0;
  double lhs = log_gamma(2 * x);
  double rhs = log_gamma(x) + log_gamma(x + 0.5) + (2 * x - 1) * std::log(2.0) -
               0.5 * std::log(3.14159265358979323846);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  CHECK_THROWS_AS(log_gamma(0.0), std::domain_error);
  CHECK_THROWS_AS(log_gamma(-2.5), std::domain_error);
}

TEST_CASE("log_gamma complex: |Gamma(1/2+it)|^2 = pi/cosh(pi t)") {
  const double pi = 3.14159265358979323846;
  for (double t : {0.5, 1.0, 3.0}) {
    std::complex<double> lg = log_gamma(std::complex<double>(0.5, t));
    double lhs = 2.0 * lg.real();
    double rhs = std::log(pi / std::cosh(pi * t));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  // agreement with the real routine on the real axis
  for (double x : {1.5, 11.0, 200.0}) {
    CHECK(log_gamma(std::complex<double>(x, 0.0)).real() ==
          doctest::Approx(log_gamma(x)).epsilon(1e-12));
    CHECK(std::abs(log_gamma(std::complex<double>(x, 0.0)).imag()) < 1e-12);
  }
  // conjugate symmetry
  auto a = log_gamma(std::complex<double>(3.0, 2.0));
  auto b = log_gamma(std::complex<double>(3.0, -2.0));
  CHECK(a.real() == doctest::Approx(b.real()).epsilon(1e-14));
  CHECK(a.imag() == doctest::Approx(-b.imag()).epsilon(1e-14));
}

TEST_CASE("bessel_j: classical values") {
  PrecisionPolicy pol;
  pol.tail_tol = 1e-18;
  auto r = bessel_j(0.0, 1.0, pol);
  CHECK(r.value == doctest::Approx(0.76519768655796655145).epsilon(1e-14));
  CHECK(r.tail_bound <= pol.tail_tol);
  r = bessel_j(1.0, 1.0, pol);
  CHECK(r.value == doctest::Approx(0.44005058574493351596).epsilon(1e-14));
  r = bessel_j(0.0, 10.0, pol);
  CHECK(r.value == doctest::Approx(-0.24593576445134833520).epsilon(1e-13));
  CHECK(bessel_j(0.0, 0.0).value == 1.0);
  CHECK(bessel_j(2.5, 0.0).value == 0.0);
}

TEST_CASE("bessel_j agrees with an independent implementation") {
  PrecisionPolicy pol;
  pol.tail_tol = 1e-16;
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> unu(0.0, 40.0), ux(0.01, 80.0);
  for (int i = 0; i < 60; ++i) {
    double nu = unu(rng), x = ux(rng);
    auto mine = bessel_j(nu, x, pol);
    double ref = boost::math::cyl_bessel_j(nu, x);
    CHECK(mine.value == doctest::Approx(ref).epsilon(5e-12));
    CHECK(std::abs(mine.value - ref) <= mine.tail_bound + 5e-13 * (1.0 + std::abs(ref)));
  }
  // large order, moderate argument
  auto big = bessel_j(199.5, 120.0, pol);
  CHECK(big.value == doctest::Approx(boost::math::cyl_bessel_j(199.5, 120.0)).epsilon(1e-10));
}

TEST_CASE("bessel_j: certified failure beyond the precision ceiling") {
  PrecisionPolicy pol;
  pol.tail_tol = 1e-12;
  CHECK_THROWS_AS(bessel_j(2.0, 5000.0, pol), precision_exhausted);
  CHECK_THROWS_AS(bessel_j(-1.0, 1.0, pol), std::domain_error);
  PrecisionPolicy bad;
  bad.bits = 16;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("kloosterman: spot values and brute-force oracle") {
  CHECK(kloosterman(1, 1, 1) == doctest::Approx(1.0));
  CHECK(kloosterman(1, 1, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(kloosterman(1, 1, 3) == doctest::Approx(-1.0).epsilon(1e-13));
  CHECK(kloosterman(1, 1, 5) == doctest::Approx(0.38196601125010515180).epsilon(1e-12));

  auto oracle = [](i64 a, i64 b, i64 c) {
    long double s = 0.0L;
    const long double two_pi = 6.283185307179586476925286L;
    for (i64 d = 1; d <= c; ++d) {
      if (std::gcd(d, c) != 1) continue;
      i64 dinv = 0;
      for (i64 e = 1; e <= c; ++e)
        if ((d * e) % c == 1) {
          dinv = e;
          break;
        }
      s += cosl(two_pi * static_cast<long double>((a % c) * d + (b % c) * dinv) / c);
    }
    return static_cast<double>(s);
  };
  std::mt19937 rng(777);
  std::uniform_int_distribution<i64> uc(2, 150), uab(1, 1000);
  for (int i = 0; i < 40; ++i) {
    i64 c = uc(rng), a = uab(rng), b = uab(rng);
    CHECK(kloosterman(a, b, c) == doctest::Approx(oracle(a, b, c)).epsilon(1e-9));
    CHECK(kloosterman(a, b, c) == doctest::Approx(kloosterman(b, a, c)).epsilon(1e-9));
  }
  // Weil bound with gcd refinement left out: |S| <= d(c) sqrt(c) sqrt(gcd(a,b,c))
  for (int i = 0; i < 60; ++i) {
    i64 c = uc(rng), a = uab(rng), b = uab(rng);
    double bound = divisor_count(c) * std::sqrt(static_cast<double>(c)) *
                   std::sqrt(static_cast<double>(std::gcd(std::gcd(a, b), c)));
    CHECK(std::abs(kloosterman(a, b, c)) <= bound + 1e-6);
  }
  CHECK_THROWS_AS(kloosterman(1, 1, 0), std::domain_error);
}

TEST_CASE("LogComplex: round trips, arithmetic, extreme scales") {
  std::mt19937 rng(4242);
  std::uniform_real_distribution<double> ulm(-500.0, 500.0), uph(-3.1, 3.1);
  for (int i = 0; i < 200; ++i) {
    LogComplex a(ulm(rng), uph(rng));
    if (std::abs(a.logmod) < 700.0) {
      LogComplex back = LogComplex::from_complex(a.to_complex());
      if (std::abs(a.logmod) < 300) {
        CHECK(back.logmod == doctest::Approx(a.logmod).epsilon(1e-13));
        CHECK(std::abs(LogComplex::wrap(back.phase - a.phase)) < 1e-12);
      }
    }
  }
  // product/power stay exact in the exponent at huge scales
  LogComplex big(1.0e5, 0.7), small(-9.9e4, -0.3);
  LogComplex prod = big * small;
  CHECK(prod.logmod == doctest::Approx(1.0e3).epsilon(1e-14));
  CHECK(prod.phase == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(big.pow(3.0).logmod == doctest::Approx(3.0e5).epsilon(1e-14));

  // addition factors the dominant modulus
  LogComplex x(1000.0, 0.3), y(990.0, -0.2);
  LogComplex s = x + y;
  std::complex<double> expect =
      std::polar(1.0, 0.3) + std::polar(std::exp(-10.0), -0.2);
  CHECK(s.logmod == doctest::Approx(1000.0 + std::log(std::abs(expect))).epsilon(1e-13));
  CHECK(std::abs(LogComplex::wrap(s.phase - std::arg(expect))) < 1e-12);

  // cancellation to (numerical) zero
  LogComplex p = LogComplex::from_complex({3.0, 4.0});
  LogComplex q = LogComplex::from_complex({-3.0, -4.0});
  CHECK((p + q).logmod < p.logmod - 30.0);
  CHECK((p + p.neg()).logmod < p.logmod - 30.0);

  // zero element
  CHECK(LogComplex::zero().is_zero());
  CHECK((LogComplex::zero() + p).logmod == doctest::Approx(p.logmod));
  CHECK((LogComplex::zero() * p).is_zero());
}

TEST_CASE("LogComplex: commutative/associative within tolerance") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> ulm(-5.0, 5.0), uph(-3.1, 3.1);
  for (int i = 0; i < 200; ++i) {
    LogComplex a(ulm(rng), uph(rng)), b(ulm(rng), uph(rng)), c(ulm(rng), uph(rng));
    LogComplex ab = a + b, ba = b + a;
    CHECK(ab.logmod == doctest::Approx(ba.logmod).epsilon(1e-13));
    LogComplex l = (a + b) + c, r = a + (b + c);
    if (l.logmod > -20.0)  // skip near-total cancellation
      CHECK(l.logmod == doctest::Approx(r.logmod).epsilon(1e-10));
  }
}

TEST_CASE("sup_scan finds interior maxima") {
  auto f = [](const std::vector<double>& c) {
    double dx = c[0] - 0.3, dy = c[1] - 0.7;
    return -(dx * dx + dy * dy);
  };
  ScanResult r = sup_scan({{0.0, 1.0, 11, false, false}, {0.0, 1.0, 11, false, false}}, f, 60);
  CHECK(r.argmax[0] == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(r.argmax[1] == doctest::Approx(0.7).epsilon(1e-3));
  CHECK(r.best == doctest::Approx(0.0).epsilon(1e-6));

  auto g = [](const std::vector<double>& c) {
    double d = std::log(c[0]) - std::log(5.0);
    return -d * d;
  };
  ScanResult rg = sup_scan({{1.0, 100.0, 15, true, false}}, g, 60);
  CHECK(rg.argmax[0] == doctest::Approx(5.0).epsilon(1e-3));
}

TEST_CASE("exponent_fit recovers exact power laws") {
  std::vector<double> ks{10, 14, 20, 28, 40}, lv;
  for (double k : ks) lv.push_back(std::log(3.7) + 2.5 * std::log(k));
  auto fit = exponent_fit(ks, lv);
  CHECK(fit.slope == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(std::log(3.7)).epsilon(1e-12));
  CHECK(fit.max_residual < 1e-12);
  CHECK(fit.r2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(exponent_fit({1.0}, {0.0}), std::invalid_argument);
}

TEST_CASE("parallel_reduce is thread-count independent") {
  std::vector<double> xs(200000);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& x : xs) x = u(rng);
  auto chunk_sum = [&](std::size_t b, std::size_t e) {
    double s = 0;
    for (std::size_t i = b; i < e; ++i) s += xs[i];
    return s;
  };
  auto comb = [](double a, double b) { return a + b; };
  double s1 = parallel_reduce<double>(xs.size(), 64, 1, 0.0, chunk_sum, comb);
  double s4 = parallel_reduce<double>(xs.size(), 64, 4, 0.0, chunk_sum, comb);
  CHECK(s1 == s4);  // bitwise: combination order is fixed
  double serial = 0;
  for (double x : xs) serial += x;
  CHECK(s1 == doctest::Approx(serial).epsilon(1e-12));
}

TEST_CASE("Real wrapper basics") {
  Real a(1.5, 128), b(2.0, 128);
  CHECK((a * b).to_double() == doctest::Approx(3.0));
  CHECK(Real::sqrt(Real(2.0, 256)).to_double() == doctest::Approx(std::sqrt(2.0)));
  CHECK(Real::exp(Real(1.0, 128)).to_double() == doctest::Approx(std::exp(1.0)));
  CHECK(Real::pi(128).to_double() == doctest::Approx(3.14159265358979323846));
  Real c = a;
  c += b;
  CHECK(c.to_double() == doctest::Approx(3.5));
  CHECK(Real::pow_si(Real(3.0, 128), 4).to_double() == doctest::Approx(81.0));
}
