#include "jacobilab/scanfit.hpp"

#include <cmath>
#include <stdexcept>

namespace jlab::num {

static std::vector<double> axis_points(const ScanAxis& ax) {
  std::vector<double> pts;
  pts.reserve(ax.count);
  if (ax.count == 1) {
    pts.push_back(ax.lo);
    return pts;
  }
  for (int i = 0; i < ax.count; ++i) {
    double t = static_cast<double>(i) / (ax.count - (ax.periodic ? 0 : 1));
    if (ax.log_scale)
      pts.push_back(ax.lo * std::pow(ax.hi / ax.lo, t));
    else
      pts.push_back(ax.lo + (ax.hi - ax.lo) * t);
  }
  return pts;
}

ScanResult sup_scan(const std::vector<ScanAxis>& axes,
                    const std::function<double(const std::vector<double>&)>& f,
                    int descent_rounds) {
  if (axes.empty()) throw std::invalid_argument("sup_scan: no axes");
  for (const auto& ax : axes) {
    if (ax.count < 1 || !(ax.hi >= ax.lo))
      throw std::invalid_argument("sup_scan: malformed axis");
    if (ax.log_scale && !(ax.lo > 0))
      throw std::invalid_argument("sup_scan: log axis needs lo > 0");
  }
  std::vector<std::vector<double>> grids;
  for (const auto& ax : axes) grids.push_back(axis_points(ax));

  ScanResult res;
  res.best = -std::numeric_limits<double>::infinity();
  std::vector<double> coords(axes.size());
  std::vector<std::size_t> idx(axes.size(), 0);
  // full grid sweep
  for (;;) {
    for (std::size_t a = 0; a < axes.size(); ++a) coords[a] = grids[a][idx[a]];
    double v = f(coords);
    ++res.evals;
    if (v > res.best) {
      res.best = v;
      res.argmax = coords;
    }
    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < grids[a].size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }

  // coordinate descent from the grid argmax, shrinking steps
  std::vector<double> steps(axes.size());
  for (std::size_t a = 0; a < axes.size(); ++a) {
    const auto& ax = axes[a];
    steps[a] = ax.count > 1 ? (ax.log_scale ? std::pow(ax.hi / ax.lo, 1.0 / (ax.count - 1))
                                            : (ax.hi - ax.lo) / (ax.count - 1))
                            : 0.0;
  }
  coords = res.argmax;
  for (int round = 0; round < descent_rounds; ++round) {
    bool improved = false;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& ax = axes[a];
      if (steps[a] == 0.0) continue;
      for (int dir : {-1, +1}) {
        std::vector<double> trial = coords;
        if (ax.log_scale)
          trial[a] = coords[a] * std::pow(steps[a], dir);
        else
          trial[a] = coords[a] + dir * steps[a];
        if (ax.periodic) {
          double span = ax.hi - ax.lo;
          while (trial[a] >= ax.hi) trial[a] -= span;
          while (trial[a] < ax.lo) trial[a] += span;
        } else {
          if (trial[a] < ax.lo || trial[a] > ax.hi) continue;
        }
        double v = f(trial);
        ++res.evals;
        if (v > res.best) {
          res.best = v;
          res.argmax = trial;
          coords = trial;
          improved = true;
        }
      }
    }
    if (!improved) {
      for (auto& s : steps) {
        s = (s == 0.0) ? 0.0 : s;
      }
      for (std::size_t a = 0; a < axes.size(); ++a)
        steps[a] = axes[a].log_scale ? std::sqrt(steps[a]) : steps[a] * 0.5;
      // stop once linear steps are negligible and log steps ~1
      bool done = true;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        if (axes[a].count == 1) continue;
        if (axes[a].log_scale ? (steps[a] > 1.0 + 1e-6)
                              : (steps[a] > 1e-6 * (axes[a].hi - axes[a].lo)))
          done = false;
      }
      if (done) break;
    }
    res.descent_rounds = round + 1;
  }
  return res;
}

ExponentFit exponent_fit(const std::vector<double>& xs,
                         const std::vector<double>& log_values) {
  if (xs.size() != log_values.size() || xs.size() < 2)
    throw std::invalid_argument("exponent_fit: need >= 2 matching samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  std::vector<double> lx(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0)) throw std::invalid_argument("exponent_fit: abscissae must be > 0");
    lx[i] = std::log(xs[i]);
    sx += lx[i];
    sy += log_values[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * log_values[i];
  }
  double denom = n * sxx - sx * sx;
  if (denom == 0) throw std::invalid_argument("exponent_fit: degenerate abscissae");
  ExponentFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.max_residual = 0.0;
  double ss_res = 0, ss_tot = 0, ybar = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = log_values[i] - (fit.intercept + fit.slope * lx[i]);
    fit.max_residual = std::max(fit.max_residual, std::abs(r));
    ss_res += r * r;
    ss_tot += (log_values[i] - ybar) * (log_values[i] - ybar);
  }
  fit.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

}  // namespace jlab::num
