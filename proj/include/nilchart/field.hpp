#pragma once

// Vector fields and endomorphism fields with symbolic entries, the Lie
// bracket, and the torsion tensors built from it.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nilchart/box.hpp"
#include "nilchart/expr.hpp"
#include "nilchart/linalg.hpp"

namespace nilchart {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::vector<ScalarExpr> c) : c_(std::move(c)) {}
  static VectorField zero(int d) { return VectorField(std::vector<ScalarExpr>(d, constant(0.0))); }
  /// The coordinate field d/dx_i (0-based i).
  static VectorField coordinate(int d, int i) {
    VectorField v = zero(d);
    v.c_[i] = constant(1.0);
    return v;
  }

  int dim() const { return static_cast<int>(c_.size()); }
  const ScalarExpr& operator[](int i) const { return c_[i]; }
  ScalarExpr& operator[](int i) { return c_[i]; }
  const std::vector<ScalarExpr>& components() const { return c_; }

 private:
  std::vector<ScalarExpr> c_;
};

inline void require_same_dim(int a, int b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": dimension mismatch " + std::to_string(a) + " vs " + std::to_string(b));
}

inline VectorField operator+(const VectorField& x, const VectorField& y) {
  require_same_dim(x.dim(), y.dim(), "vector field sum");
  VectorField r = x;
  for (int i = 0; i < x.dim(); ++i) r[i] = x[i] + y[i];
  return r;
}
inline VectorField operator-(const VectorField& x, const VectorField& y) {
  require_same_dim(x.dim(), y.dim(), "vector field difference");
  VectorField r = x;
  for (int i = 0; i < x.dim(); ++i) r[i] = x[i] - y[i];
  return r;
}
inline VectorField operator*(const ScalarExpr& f, const VectorField& x) {
  VectorField r = x;
  for (int i = 0; i < x.dim(); ++i) r[i] = f * x[i];
  return r;
}
inline VectorField operator*(double s, const VectorField& x) { return constant(s) * x; }

/// d x d matrix of expressions; column j holds the components of A(d/dx_j).
class EndoField {
 public:
  EndoField() = default;
  EndoField(int d, std::vector<ScalarExpr> row_major) : d_(d), e_(std::move(row_major)) {
    if (static_cast<int>(e_.size()) != d * d) throw DimensionError("endomorphism field must be square");
  }
  static EndoField zero(int d) { return EndoField(d, std::vector<ScalarExpr>(d * d, constant(0.0))); }
  static EndoField identity(int d) {
    EndoField r = zero(d);
    for (int i = 0; i < d; ++i) r(i, i) = constant(1.0);
    return r;
  }
  static EndoField from_constant(const Mat& m) {
    EndoField r = zero(static_cast<int>(m.rows()));
    for (int i = 0; i < r.dim(); ++i)
      for (int j = 0; j < r.dim(); ++j) r(i, j) = constant(m(i, j));
    return r;
  }

  int dim() const { return d_; }
  const ScalarExpr& operator()(int i, int j) const { return e_[i * d_ + j]; }
  ScalarExpr& operator()(int i, int j) { return e_[i * d_ + j]; }
  const std::vector<ScalarExpr>& entries() const { return e_; }

  VectorField column(int j) const {
    std::vector<ScalarExpr> c(d_);
    for (int i = 0; i < d_; ++i) c[i] = (*this)(i, j);
    return VectorField(std::move(c));
  }

 private:
  int d_ = 0;
  std::vector<ScalarExpr> e_;
};

inline EndoField operator*(const EndoField& a, const EndoField& b) {
  require_same_dim(a.dim(), b.dim(), "endomorphism product");
  const int d = a.dim();
  EndoField r = EndoField::zero(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      ScalarExpr s = constant(0.0);
      for (int k = 0; k < d; ++k) s = s + a(i, k) * b(k, j);
      r(i, j) = s;
    }
  return r;
}
inline EndoField operator+(const EndoField& a, const EndoField& b) {
  require_same_dim(a.dim(), b.dim(), "endomorphism sum");
  EndoField r = a;
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) r(i, j) = a(i, j) + b(i, j);
  return r;
}
inline EndoField operator-(const EndoField& a, const EndoField& b) {
  require_same_dim(a.dim(), b.dim(), "endomorphism difference");
  EndoField r = a;
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) r(i, j) = a(i, j) - b(i, j);
  return r;
}
inline EndoField operator*(double s, const EndoField& a) {
  EndoField r = a;
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) r(i, j) = s * a(i, j);
  return r;
}

/// Pointwise (AX)^i = sum_j A_ij X^j.
inline VectorField apply_endo(const EndoField& a, const VectorField& x) {
  require_same_dim(a.dim(), x.dim(), "apply_endo");
  const int d = a.dim();
  VectorField r = VectorField::zero(d);
  for (int i = 0; i < d; ++i) {
    ScalarExpr s = constant(0.0);
    for (int j = 0; j < d; ++j) s = s + a(i, j) * x[j];
    r[i] = s;
  }
  return r;
}
inline VectorField operator*(const EndoField& a, const VectorField& x) { return apply_endo(a, x); }

inline EndoField endo_power(const EndoField& a, int p) {
  if (p < 0) throw std::invalid_argument("endo_power: p must be >= 0");
  EndoField r = EndoField::identity(a.dim());
  for (int k = 0; k < p; ++k) r = r * a;
  return r;
}

/// Horner evaluation of sum_k coeffs[k] A^k (ascending coefficients).
inline EndoField polynomial_of(const EndoField& a, const std::vector<double>& coeffs) {
  const int d = a.dim();
  EndoField r = EndoField::zero(d);
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) r = r * a + (*it) * EndoField::identity(d);
  return r;
}

/// [X,Y]^i = sum_j (X^j d_j Y^i - Y^j d_j X^i).
inline VectorField lie_bracket(const VectorField& x, const VectorField& y) {
  require_same_dim(x.dim(), y.dim(), "lie_bracket");
  const int d = x.dim();
  VectorField r = VectorField::zero(d);
  for (int i = 0; i < d; ++i) {
    ScalarExpr s = constant(0.0);
    for (int j = 0; j < d; ++j) s = s + x[j] * differentiate(y[i], j) - y[j] * differentiate(x[i], j);
    r[i] = s;
  }
  return r;
}

/// N_A(X,Y) = [AX,AY] - A[X,AY] - A[AX,Y] + A^2[X,Y].
inline VectorField nijenhuis(const EndoField& a, const VectorField& x, const VectorField& y) {
  VectorField ax = a * x, ay = a * y;
  return lie_bracket(ax, ay) - a * lie_bracket(x, ay) - a * lie_bracket(ax, y) + a * (a * lie_bracket(x, y));
}

/// N'_{A,B}(X,Y) = [AX,BY] - A[X,BY] - B[AX,Y] + AB[X,Y], expanded without
/// checking that A and B commute.
inline VectorField nprime_expand(const EndoField& a, const EndoField& b, const VectorField& x, const VectorField& y) {
  VectorField ax = a * x, by = b * y;
  return lie_bracket(ax, by) - a * lie_bracket(x, by) - b * lie_bracket(ax, y) + a * (b * lie_bracket(x, y));
}

/// S_{A,B} = N'_{A,B} + N'_{B,A}; defined whether or not A and B commute.
inline VectorField torsion_S(const EndoField& a, const EndoField& b, const VectorField& x, const VectorField& y) {
  return nprime_expand(a, b, x, y) + nprime_expand(b, a, x, y);
}

class NonCommutingError : public std::runtime_error {
 public:
  NonCommutingError(double residual, Vec where)
      : std::runtime_error("endomorphism fields do not commute: max |AB - BA| = " + std::to_string(residual)),
        residual_(residual),
        where_(std::move(where)) {}
  double residual() const { return residual_; }
  const Vec& where() const { return where_; }

 private:
  double residual_;
  Vec where_;
};

struct SampleCheck {
  Box box;
  int samples = 50;
  std::uint64_t seed = 1;
  double tol = 1e-9;
};

/// Evaluates many vector fields at a point in one pass.
class FieldBundleEvaluator {
 public:
  explicit FieldBundleEvaluator(const std::vector<VectorField>& fields) {
    std::vector<ScalarExpr> all;
    for (const auto& f : fields) {
      offsets_.push_back(static_cast<int>(all.size()));
      dims_.push_back(f.dim());
      all.insert(all.end(), f.components().begin(), f.components().end());
    }
    prog_ = Program(all);
    buf_.resize(all.size());
  }
  void eval(const Vec& p) { prog_.eval(p.data(), buf_.data(), scratch_); }
  Vec value(std::size_t k) const {
    Vec v(dims_[k]);
    for (int i = 0; i < dims_[k]; ++i) v(i) = buf_[offsets_[k] + i];
    return v;
  }
  std::size_t size() const { return dims_.size(); }

 private:
  Program prog_;
  std::vector<int> offsets_, dims_;
  std::vector<double> buf_, scratch_;
};

/// Max entry of a scalar family over the box sample set.
struct MaxResidual {
  double value = 0.0;
  Vec where;
  int which = -1;  // index of the field (or pair) achieving it
};

/// Max over sample points of the Euclidean norm of each field.
inline MaxResidual max_norm_on_samples(const std::vector<VectorField>& fields, const std::vector<Vec>& points) {
  MaxResidual out;
  if (fields.empty() || points.empty()) return out;
  out.where = points.front();
  FieldBundleEvaluator ev(fields);
  for (const Vec& p : points) {
    ev.eval(p);
    for (std::size_t k = 0; k < fields.size(); ++k) {
      double n = ev.value(k).norm();
      if (n > out.value || !std::isfinite(n)) {
        out.value = std::isfinite(n) ? n : INFINITY;
        out.where = p;
        out.which = static_cast<int>(k);
      }
    }
  }
  return out;
}

/// Max |entry| of an endomorphism field over the sample set.
inline MaxResidual max_entry_on_samples(const EndoField& a, const std::vector<Vec>& points) {
  MaxResidual out;
  Program prog(a.entries());
  std::vector<double> buf(a.entries().size()), scratch;
  for (const Vec& p : points) {
    prog.eval(p.data(), buf.data(), scratch);
    for (std::size_t k = 0; k < buf.size(); ++k) {
      double v = std::abs(buf[k]);
      if (v > out.value || out.where.size() == 0) {
        out.value = v;
        out.where = p;
        out.which = static_cast<int>(k);
      }
    }
  }
  return out;
}

/// Magnitude scale of A on the sample set, used to scale tolerances.
inline double entry_scale(const EndoField& a, const std::vector<Vec>& points) {
  return max_entry_on_samples(a, points).value;
}

/// N'_{A,B}(X,Y) after checking [A,B] = 0 on the sample set.
inline VectorField nprime(const EndoField& a, const EndoField& b, const VectorField& x, const VectorField& y,
                          const SampleCheck& check) {
  auto pts = sample_points(check.box, check.samples, check.seed);
  EndoField comm = a * b - b * a;
  MaxResidual r = max_entry_on_samples(comm, pts);
  double scale = 1.0 + entry_scale(a, pts) * entry_scale(b, pts);
  if (r.value > check.tol * scale) throw NonCommutingError(r.value, r.where);
  return nprime_expand(a, b, x, y);
}

/// Max norm of N_A over all coordinate pairs (i < j) and sample points.
struct TensorResidual {
  double value = 0.0;
  Vec where;
  int i = -1, j = -1;
};

inline TensorResidual nijenhuis_residual(const EndoField& a, const std::vector<Vec>& points) {
  const int d = a.dim();
  std::vector<VectorField> fs;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      fs.push_back(nijenhuis(a, VectorField::coordinate(d, i), VectorField::coordinate(d, j)));
      pairs.emplace_back(i, j);
    }
  TensorResidual out;
  if (fs.empty()) return out;
  MaxResidual m = max_norm_on_samples(fs, points);
  out.value = m.value;
  out.where = m.where;
  if (m.which >= 0) std::tie(out.i, out.j) = pairs[m.which];
  return out;
}

/// A^d vanishes on the sample set.
inline bool is_nilpotent_on(const EndoField& a, const std::vector<Vec>& points, double tol) {
  auto pts = points;
  double scale = entry_scale(a, pts);
  MaxResidual r = max_entry_on_samples(endo_power(a, a.dim()), pts);
  return r.value <= tol * (1.0 + std::pow(scale, a.dim()));
}

class NotNilpotentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Prop22Residual {
  double identity_i = 0.0;   // N'_{A,A^q}(X,Y) - sum_k A^{q-k} N_A(X, A^{k-1} Y)
  double identity_ii = 0.0;  // N'_{A^p,A^q}(X,Y) - sum_k A^{p-k} N'_{A,A^q}(A^{k-1} X, Y)
  Vec where_i, where_ii;
  std::pair<int, int> pair_i{-1, -1}, pair_ii{-1, -1};
  double max() const { return std::max(identity_i, identity_ii); }
};

/// Both expansion identities for N'_{A^p,A^q} in terms of N_A, over all
/// coordinate pairs. They hold for every A, so the result is a consistency
/// measure of the symbolic machinery rather than a property of A.
inline Prop22Residual prop22_residual(const EndoField& a, int p, int q, const Box& box, int samples, std::uint64_t seed,
                                      double nil_tol = 1e-9) {
  if (p < 1 || q < 1) throw std::invalid_argument("prop22_residual: p, q must be >= 1");
  auto pts = sample_points(box, samples, seed);
  if (!is_nilpotent_on(a, pts, nil_tol)) throw NotNilpotentError("prop22_residual: field is not nilpotent on the box");
  const int d = a.dim();
  std::vector<EndoField> pw;
  for (int k = 0; k <= std::max(p, q); ++k) pw.push_back(endo_power(a, k));

  std::vector<VectorField> f1, f2;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      VectorField x = VectorField::coordinate(d, i), y = VectorField::coordinate(d, j);
      VectorField lhs1 = nprime_expand(a, pw[q], x, y);
      VectorField rhs1 = VectorField::zero(d);
      for (int k = 1; k <= q; ++k) rhs1 = rhs1 + pw[q - k] * nijenhuis(a, x, pw[k - 1] * y);
      VectorField lhs2 = nprime_expand(pw[p], pw[q], x, y);
      VectorField rhs2 = VectorField::zero(d);
      for (int k = 1; k <= p; ++k) rhs2 = rhs2 + pw[p - k] * nprime_expand(a, pw[q], pw[k - 1] * x, y);
      f1.push_back(lhs1 - rhs1);
      f2.push_back(lhs2 - rhs2);
      pairs.emplace_back(i, j);
    }
  Prop22Residual out;
  MaxResidual m1 = max_norm_on_samples(f1, pts), m2 = max_norm_on_samples(f2, pts);
  out.identity_i = m1.value;
  out.where_i = m1.where;
  if (m1.which >= 0) out.pair_i = pairs[m1.which];
  out.identity_ii = m2.value;
  out.where_ii = m2.where;
  if (m2.which >= 0) out.pair_ii = pairs[m2.which];
  return out;
}

/// Compiled numeric evaluation of A(x), its powers, and its first partials.
class EndoEvaluator {
 public:
  explicit EndoEvaluator(const EndoField& a) : d_(a.dim()), value_(a.entries()) {
    std::vector<ScalarExpr> der;
    for (int l = 0; l < d_; ++l)
      for (const auto& e : a.entries()) der.push_back(differentiate(e, l));
    deriv_ = Program(der);
  }
  int dim() const { return d_; }

  Mat value(const Vec& x) const {
    Mat m(d_, d_);
    double buf[kMaxDim * kMaxDim];
    std::vector<double> scratch;
    value_.eval(x.data(), buf, scratch);
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) m(i, j) = buf[i * d_ + j];
    return m;
  }

  /// dA/dx_l for l = 0..d-1.
  std::vector<Mat> partials(const Vec& x) const {
    std::vector<double> buf(static_cast<std::size_t>(d_) * d_ * d_), scratch;
    deriv_.eval(x.data(), buf.data(), scratch);
    std::vector<Mat> out(d_, Mat(d_, d_));
    for (int l = 0; l < d_; ++l)
      for (int i = 0; i < d_; ++i)
        for (int j = 0; j < d_; ++j) out[l](i, j) = buf[(l * d_ + i) * d_ + j];
    return out;
  }

  static std::vector<Mat> powers(const Mat& a, int max_power) {
    std::vector<Mat> p;
    p.push_back(Mat::Identity(a.rows(), a.cols()));
    for (int k = 1; k <= max_power; ++k) p.push_back(p.back() * a);
    return p;
  }

 private:
  int d_;
  Program value_;
  Program deriv_;
};

}  // namespace nilchart
