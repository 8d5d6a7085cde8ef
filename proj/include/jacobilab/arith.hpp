#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

namespace jlab::num {

using i64 = std::int64_t;

// gcd of the triple (|n|, |r|, |m|); the all-zero triple has no content.
inline i64 content(i64 n, i64 r, i64 m) {
  i64 g = std::gcd(std::gcd(n < 0 ? -n : n, r < 0 ? -r : r), m < 0 ? -m : m);
  if (g == 0) throw std::invalid_argument("content: all three arguments are zero");
  return g;
}

inline std::vector<i64> divisors(i64 n) {
  if (n <= 0) throw std::invalid_argument("divisors: need n >= 1");
  std::vector<i64> small, large;
  for (i64 d = 1; d * d <= n; ++d)
    if (n % d == 0) {
      small.push_back(d);
      if (d * d != n) large.push_back(n / d);
    }
  for (auto it = large.rbegin(); it != large.rend(); ++it) small.push_back(*it);
  return small;
}

inline int divisor_count(i64 n) { return static_cast<int>(divisors(n).size()); }

inline int mobius(i64 n) {
  if (n <= 0) throw std::invalid_argument("mobius: need n >= 1");
  int mu = 1;
  for (i64 p = 2; p * p <= n; ++p)
    if (n % p == 0) {
      n /= p;
      if (n % p == 0) return 0;
      mu = -mu;
    }
  if (n > 1) mu = -mu;
  return mu;
}

inline bool is_prime(i64 n) {
  if (n < 2) return false;
  for (i64 p = 2; p * p <= n; ++p)
    if (n % p == 0) return false;
  return true;
}

// Kronecker symbol (a|n), the Jacobi symbol extended to all integers.
inline int kronecker(i64 a, i64 n) {
  if (n == 0) return (a == 1 || a == -1) ? 1 : 0;
  if ((a & 1) == 0 && (n & 1) == 0) return 0;
  int k = 1;
  if (n < 0) {
    n = -n;
    if (a < 0) k = -k;
  }
  int v = 0;
  while ((n & 1) == 0) {
    n >>= 1;
    ++v;
  }
  if (v & 1) {
    int am8 = static_cast<int>(((a % 8) + 8) % 8);
    if (am8 == 3 || am8 == 5) k = -k;
  }
  // now n odd positive; standard Jacobi loop with 2-extraction + reciprocity
  a %= n;
  if (a < 0) a += n;
  while (a != 0) {
    v = 0;
    while ((a & 1) == 0) {
      a >>= 1;
      ++v;
    }
    if (v & 1) {
      int nm8 = static_cast<int>(n % 8);
      if (nm8 == 3 || nm8 == 5) k = -k;
    }
    if ((a % 4 == 3) && (n % 4 == 3)) k = -k;
    i64 t = n % a;
    n = a;
    a = t;
  }
  return n == 1 ? k : 0;
}

// A nonzero integer D with D ≡ 0,1 (mod 4) is a discriminant; it is
// fundamental iff it is squarefree ≡ 1 (mod 4), or D/4 is squarefree
// ≡ 2,3 (mod 4).
struct Discriminant {
  i64 D;
  bool is_fundamental;
};

inline Discriminant classify_discriminant(i64 D) {
  if (D == 0) throw std::invalid_argument("discriminant: D must be nonzero");
  i64 mod4 = ((D % 4) + 4) % 4;
  if (mod4 != 0 && mod4 != 1)
    throw std::invalid_argument("discriminant: D must be 0 or 1 mod 4");
  auto squarefree = [](i64 n) {
    if (n < 0) n = -n;
    for (i64 p = 2; p * p <= n; ++p)
      if (n % (p * p) == 0) return false;
    return true;
  };
  bool fund;
  if (mod4 == 1) {
    fund = squarefree(D);
  } else {
    i64 q = D / 4;
    i64 qm4 = ((q % 4) + 4) % 4;
    fund = squarefree(q) && (qm4 == 2 || qm4 == 3);
  }
  return {D, fund};
}

// e(x) helpers live with the callers; here only small modular utilities.
inline i64 mod_pow(i64 b, i64 e, i64 mod) {
  __int128 acc = 1, bb = ((b % mod) + mod) % mod;
  while (e > 0) {
    if (e & 1) acc = (acc * bb) % mod;
    bb = (bb * bb) % mod;
    e >>= 1;
  }
  return static_cast<i64>(acc);
}

// inverse of a mod n (gcd(a,n)=1) via extended Euclid
inline i64 mod_inverse(i64 a, i64 n) {
  i64 t = 0, newt = 1, r = n, newr = ((a % n) + n) % n;
  while (newr != 0) {
    i64 q = r / newr;
    t = std::exchange(newt, t - q * newt);
    r = std::exchange(newr, r - q * newr);
  }
  if (r != 1) throw std::invalid_argument("mod_inverse: arguments not coprime");
  return ((t % n) + n) % n;
}

}  // namespace jlab::num
