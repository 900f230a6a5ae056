#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tgfc/errors.hpp"

namespace tgfc {

/// One operating point of a rate-quality curve. `quality` is top-1 accuracy in % or PSNR in dB.
struct CurvePoint {
  double rate = 0;  // bpp
  double quality = 0;
};

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch–Butland
/// derivatives, one-sided three-point end slopes).
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);

  double operator()(double t) const;
  /// Exact integral over [a, b] (a ≤ b, both inside the knot range).
  double integrate(double a, double b) const;
  const std::vector<double>& derivatives() const { return d_; }

 private:
  size_t segment(double t) const;
  double eval(size_t k, double t) const;

  std::vector<double> x_, y_, d_;
};

inline Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw MetricError("interpolation needs at least two points");
  for (size_t k = 0; k + 1 < n; ++k)
    if (!(x_[k + 1] > x_[k])) throw MetricError("interpolation abscissae must be strictly increasing");
  d_.assign(n, 0.0);
  std::vector<double> h(n - 1), m(n - 1);
  for (size_t k = 0; k + 1 < n; ++k) {
    h[k] = x_[k + 1] - x_[k];
    m[k] = (y_[k + 1] - y_[k]) / h[k];
  }
  if (n == 2) {
    d_[0] = d_[1] = m[0];
    return;
  }
  for (size_t k = 1; k + 1 < n; ++k) {
    if (m[k - 1] * m[k] <= 0) continue;
    const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    auto sgn = [](double v) { return (v > 0) - (v < 0); };
    if (sgn(d) != sgn(m0)) return 0.0;
    if (sgn(m0) != sgn(m1) && std::abs(d) > 3 * std::abs(m0)) return 3 * m0;
    return d;
  };
  d_[0] = edge(h[0], h[1], m[0], m[1]);
  d_[n - 1] = edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
}

inline size_t Pchip::segment(double t) const {
  const auto it = std::upper_bound(x_.begin(), x_.end(), t);
  size_t k = it == x_.begin() ? 0 : static_cast<size_t>(it - x_.begin()) - 1;
  return std::min(k, x_.size() - 2);
}

inline double Pchip::eval(size_t k, double t) const {
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * d_[k] + (-2 * s3 + 3 * s2) * y_[k + 1] +
         (s3 - s2) * h * d_[k + 1];
}

inline double Pchip::operator()(double t) const { return eval(segment(t), t); }

inline double Pchip::integrate(double a, double b) const {
  if (b < a) return -integrate(b, a);
  double total = 0;
  for (size_t k = 0; k + 1 < x_.size(); ++k) {
    const double lo = std::max(a, x_[k]), hi = std::min(b, x_[k + 1]);
    if (hi <= lo) continue;
    // Simpson's rule is exact for a cubic.
    total += (hi - lo) / 6.0 * (eval(k, lo) + 4 * eval(k, 0.5 * (lo + hi)) + eval(k, hi));
  }
  return total;
}

enum class BdMode { Rate, Quality };

struct BdResult {
  /// Rate mode: average rate change of `test` vs `anchor` in percent.
  /// Quality mode: average quality change (accuracy points or dB).
  double value = 0;
  /// Mean difference of the integrated curves: log-rate (natural log) in rate
  /// mode, quality in quality mode. Swapping the curves negates it exactly.
  double delta = 0;
  double interval_lo = 0, interval_hi = 0;
};

/// Bjøntegaard delta of `test` against `anchor`. Curves need ≥ 4 points with
/// strictly increasing rate; rate mode additionally needs strictly increasing quality.
inline BdResult bd_metric(const std::vector<CurvePoint>& anchor, const std::vector<CurvePoint>& test, BdMode mode) {
  auto prepare = [mode](const std::vector<CurvePoint>& c, const char* which) {
    if (c.size() < 4) throw MetricError(std::string(which) + " curve needs at least 4 points");
    std::vector<CurvePoint> s = c;
    std::sort(s.begin(), s.end(), [](const CurvePoint& p, const CurvePoint& q) { return p.rate < q.rate; });
    std::vector<double> lr, q;
    for (size_t k = 0; k < s.size(); ++k) {
      if (!(s[k].rate > 0) || !std::isfinite(s[k].quality)) throw MetricError(std::string(which) + " curve has invalid point");
      if (k && !(s[k].rate > s[k - 1].rate)) throw MetricError(std::string(which) + " curve rates must be distinct");
      lr.push_back(std::log(s[k].rate));
      q.push_back(s[k].quality);
    }
    if (mode == BdMode::Quality) return Pchip(lr, q);
    for (size_t k = 1; k < q.size(); ++k)
      if (!(q[k] > q[k - 1])) throw MetricError(std::string(which) + " curve quality must increase with rate");
    return Pchip(q, lr);
  };
  const Pchip pa = prepare(anchor, "anchor"), pb = prepare(test, "test");

  auto range = [mode](const std::vector<CurvePoint>& c) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : c) {
      const double v = mode == BdMode::Rate ? p.quality : std::log(p.rate);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return std::pair{lo, hi};
  };
  const auto [alo, ahi] = range(anchor);
  const auto [blo, bhi] = range(test);
  BdResult r;
  r.interval_lo = std::max(alo, blo);
  r.interval_hi = std::min(ahi, bhi);
  if (!(r.interval_hi > r.interval_lo)) throw MetricError("curves do not overlap");
  const double width = r.interval_hi - r.interval_lo;
  r.delta = (pb.integrate(r.interval_lo, r.interval_hi) - pa.integrate(r.interval_lo, r.interval_hi)) / width;
  r.value = mode == BdMode::Rate ? std::expm1(r.delta) * 100.0 : r.delta;
  return r;
}

}  // namespace tgfc
