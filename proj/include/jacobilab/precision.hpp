#pragma once

#include <stdexcept>
#include <string>

namespace jlab::num {

// Knobs shared by every escalate-and-retry numerical routine.  bits is the
// *starting* working precision; routines may double it internally up to
// kMaxBits before giving up.
struct PrecisionPolicy {
  unsigned bits = 128;
  double tail_tol = 1e-20;

  static constexpr unsigned kMinBits = 53;
  static constexpr unsigned kMaxBits = 1024;

  void validate() const {
    if (bits < kMinBits)
      throw std::invalid_argument("PrecisionPolicy: bits must be >= 53, got " +
                                  std::to_string(bits));
    if (bits > kMaxBits)
      throw std::invalid_argument("PrecisionPolicy: bits must be <= 1024, got " +
                                  std::to_string(bits));
    if (!(tail_tol > 0.0))
      throw std::invalid_argument("PrecisionPolicy: tail_tol must be positive");
  }
};

// A certified series/sum could not reach the requested tolerance even at the
// precision ceiling.  Carries what was achieved so callers can decide.
struct precision_exhausted : std::runtime_error {
  double achieved;
  double requested;
  precision_exhausted(const std::string& what, double ach, double req)
      : std::runtime_error(what + " (achieved " + std::to_string(ach) +
                           ", requested " + std::to_string(req) + ")"),
        achieved(ach),
        requested(req) {}
};

// A truncated sum's certified tail bound exceeds what the caller asked for.
struct truncation_error : std::runtime_error {
  double tail_bound;
  truncation_error(const std::string& what, double bound)
      : std::runtime_error(what + " (certified tail " + std::to_string(bound) + ")"),
        tail_bound(bound) {}
};

// Internal consistency violated (indefinite Gram matrix, failed invariant...).
struct internal_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace jlab::num
