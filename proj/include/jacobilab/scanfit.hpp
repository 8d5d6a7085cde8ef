#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace jlab::num {

// Box-grid maximizer with coordinate-descent refinement, for log-scale
// objectives f(coords) on a product of intervals.  Axes marked log_axis are
// gridded geometrically.  Deterministic for fixed inputs.
struct ScanAxis {
  double lo;
  double hi;
  int count;       // grid points along the axis
  bool log_scale;  // geometric spacing
  bool periodic;   // wrap during descent
};

struct ScanResult {
  double best;                 // max of f over grid + descent (log scale in our uses)
  std::vector<double> argmax;  // coordinates
  long evals = 0;
  int descent_rounds = 0;
};

ScanResult sup_scan(const std::vector<ScanAxis>& axes,
                    const std::function<double(const std::vector<double>&)>& f,
                    int descent_rounds = 30);

// Least-squares fit of log(values) = intercept + slope * log(ks).
struct ExponentFit {
  double slope;
  double intercept;
  double max_residual;  // max |fit - data| in log space
  double r2;
};

// xs: abscissae (e.g. weights k); log_values: already-logged ordinates.
ExponentFit exponent_fit(const std::vector<double>& xs,
                         const std::vector<double>& log_values);

}  // namespace jlab::num
