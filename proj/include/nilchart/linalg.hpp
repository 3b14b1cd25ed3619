#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

namespace nilchart {

/// Ambient dimensions handled by the numeric layers.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec to_vec(const std::vector<double>& v) {
  Vec r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

inline std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct NumericRank {
  int rank = 0;
  std::vector<double> singular_values;
  bool ill_conditioned = false;
};

/// rank = #{sigma_i > rel_tol * sigma_max * d}; rank 0 below the absolute floor.
/// Flags ill-conditioning when a singular value sits within a factor 10 of the
/// threshold.
inline NumericRank numeric_rank(const Mat& m, double rel_tol = 1e-8, double abs_floor = 1e-12) {
  NumericRank out;
  if (m.size() == 0) return out;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  out.singular_values.assign(s.data(), s.data() + s.size());
  double smax = s.size() ? s(0) : 0.0;
  if (smax <= abs_floor) return out;
  double thr = rel_tol * smax * static_cast<double>(std::max(m.rows(), m.cols()));
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > thr) ++out.rank;
    if (s(i) > thr / 10.0 && s(i) < thr * 10.0) out.ill_conditioned = true;
  }
  return out;
}

/// Orthonormal basis (columns) of the column space, using rank r.
inline Mat column_basis(const Mat& m, int r) {
  if (r <= 0) return Mat(m.rows(), 0);
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU);
  return svd.matrixU().leftCols(r);
}

inline Mat column_basis(const Mat& m, double rel_tol = 1e-8) { return column_basis(m, numeric_rank(m, rel_tol).rank); }

/// Orthonormal basis of the kernel of m (m square or wide), using rank r.
inline Mat null_basis(const Mat& m, int r) {
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(m.cols() - r);
}

/// Distance from v to the span of the orthonormal columns of q.
inline double span_residual(const Mat& q, const Vec& v) {
  if (q.cols() == 0) return v.norm();
  Vec r = v - q * (q.transpose() * v);
  return r.norm();
}

/// Largest distance from a unit vector of span(a) to span(b), both given by
/// orthonormal columns. Zero iff span(a) is contained in span(b).
inline double containment_gap(const Mat& a, const Mat& b) {
  if (a.cols() == 0) return 0.0;
  Mat r = a - b * (b.transpose() * a);
  if (b.cols() == 0) r = a;
  Eigen::JacobiSVD<Mat> svd(r);
  return svd.singularValues()(0);
}

/// Max absolute entry.
inline double max_abs(const Mat& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace nilchart
