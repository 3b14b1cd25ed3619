#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilchart/expr.hpp"
#include "nilchart/linalg.hpp"

namespace nilchart {

struct Interval {
  double lo = -1.0;
  double hi = 1.0;
};

/// Axis-aligned box [lo_i, hi_i] with lo_i < hi_i.
class Box {
 public:
  Box() = default;
  explicit Box(std::vector<Interval> iv) : iv_(std::move(iv)) {
    for (std::size_t i = 0; i < iv_.size(); ++i)
      if (!(iv_[i].lo < iv_[i].hi))
        throw std::invalid_argument("box interval " + std::to_string(i + 1) + " must satisfy lo < hi");
  }
  static Box cube(int d, double lo, double hi) { return Box(std::vector<Interval>(d, Interval{lo, hi})); }

  int dim() const { return static_cast<int>(iv_.size()); }
  const Interval& operator[](int i) const { return iv_[i]; }
  const std::vector<Interval>& intervals() const { return iv_; }

  Vec center() const {
    Vec c(dim());
    for (int i = 0; i < dim(); ++i) c(i) = 0.5 * (iv_[i].lo + iv_[i].hi);
    return c;
  }
  double half_width(int i) const { return 0.5 * (iv_[i].hi - iv_[i].lo); }
  double max_half_width() const {
    double w = 0.0;
    for (int i = 0; i < dim(); ++i) w = std::max(w, half_width(i));
    return w;
  }
  double diameter() const {
    double s = 0.0;
    for (const auto& v : iv_) s += (v.hi - v.lo) * (v.hi - v.lo);
    return std::sqrt(s);
  }
  bool contains(const Vec& p) const {
    for (int i = 0; i < dim(); ++i)
      if (!(p(i) >= iv_[i].lo && p(i) <= iv_[i].hi)) return false;
    return true;
  }
  /// Each side grown by frac times its width on both ends.
  Box inflated(double frac) const {
    std::vector<Interval> out = iv_;
    for (auto& v : out) {
      double w = (v.hi - v.lo) * frac;
      v.lo -= w;
      v.hi += w;
    }
    return Box(out);
  }

 private:
  std::vector<Interval> iv_;
};

/// splitmix64 stream; portable, so sample sets are identical across platforms.
class SampleRng {
 public:
  explicit SampleRng(std::uint64_t seed) : s_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t s_;
};

/// Uniform random points only.
inline std::vector<Vec> random_points(const Box& box, int count, std::uint64_t seed) {
  SampleRng rng(seed);
  std::vector<Vec> pts;
  pts.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vec p(box.dim());
    for (int i = 0; i < box.dim(); ++i) p(i) = rng.uniform(box[i].lo, box[i].hi);
    pts.push_back(p);
  }
  return pts;
}

/// Box corners, the center, then `samples` fixed-seed uniform points.
inline std::vector<Vec> sample_points(const Box& box, int samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  std::vector<Vec> pts;
  const int d = box.dim();
  if (d <= 10) {
    for (int mask = 0; mask < (1 << d); ++mask) {
      Vec p(d);
      for (int i = 0; i < d; ++i) p(i) = (mask >> i) & 1 ? box[i].hi : box[i].lo;
      pts.push_back(p);
    }
  }
  pts.push_back(box.center());
  auto r = random_points(box, samples, seed);
  pts.insert(pts.end(), r.begin(), r.end());
  return pts;
}

/// Regular grid with k points per axis (k >= 2), or the center when k == 1.
inline std::vector<Vec> grid_points(const Box& box, int k) {
  const int d = box.dim();
  std::vector<Vec> pts;
  std::vector<int> idx(d, 0);
  for (;;) {
    Vec p(d);
    for (int i = 0; i < d; ++i)
      p(i) = k == 1 ? 0.5 * (box[i].lo + box[i].hi) : box[i].lo + (box[i].hi - box[i].lo) * idx[i] / (k - 1);
    pts.push_back(p);
    int i = 0;
    while (i < d && ++idx[i] == k) idx[i++] = 0;
    if (i == d) break;
  }
  return pts;
}

struct ZeroCheck {
  bool zero = true;
  double max_residual = 0.0;
  Vec argmax;
  int points_used = 0;
};

/// |e(p)| <= tol at every sampled point, skipping points within kink_h of a
/// pospow kink.
inline ZeroCheck is_zero_on_box(const ScalarExpr& e, const Box& box, int samples, double tol, std::uint64_t seed,
                                double kink_h = 1e-6) {
  ZeroCheck out;
  out.argmax = box.center();
  Program prog({e});
  std::vector<double> scratch;
  for (const Vec& p : sample_points(box, samples, seed)) {
    if (near_kink(e, p.data(), kink_h)) continue;
    double v = 0.0;
    prog.eval(p.data(), &v, scratch);
    ++out.points_used;
    if (std::abs(v) > out.max_residual || !std::isfinite(v)) {
      out.max_residual = std::isfinite(v) ? std::abs(v) : INFINITY;
      out.argmax = p;
    }
  }
  out.zero = out.max_residual <= tol;
  return out;
}

}  // namespace nilchart
