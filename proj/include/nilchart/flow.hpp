#pragma once

// ODE flows of vector fields, their differentials through the variational
// equation, and transport of vectors along them.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nilchart/box.hpp"
#include "nilchart/field.hpp"
#include "nilchart/linalg.hpp"

namespace nilchart {

class BoxExitError : public std::runtime_error {
 public:
  BoxExitError(double time, Vec where)
      : std::runtime_error("trajectory left the working box at t = " + std::to_string(time)),
        time_(time),
        where_(std::move(where)) {}
  double time() const { return time_; }
  const Vec& where() const { return where_; }

 private:
  double time_;
  Vec where_;
};

class StepFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A vector field evaluable at points, with a Jacobian.
class FieldFunction {
 public:
  virtual ~FieldFunction() = default;
  virtual int dim() const = 0;
  virtual Vec value(const Vec& x) const = 0;
  /// d x d matrix of partials dV^i/dx_j.
  virtual Mat jacobian(const Vec& x) const = 0;
  /// Value and Jacobian together; override when sharing work pays.
  virtual void value_and_jacobian(const Vec& x, Vec& v, Mat& j) const {
    v = value(x);
    j = jacobian(x);
  }
};

using FieldPtr = std::shared_ptr<const FieldFunction>;

/// Compiled symbolic field with its exact Jacobian.
class SymbolicField : public FieldFunction {
 public:
  explicit SymbolicField(const VectorField& v) : d_(v.dim()), value_(v.components()) {
    std::vector<ScalarExpr> all = v.components();
    for (int i = 0; i < d_; ++i)
      for (int j = 0; j < d_; ++j) all.push_back(differentiate(v[i], j));
    both_ = Program(all);
    std::vector<ScalarExpr> jac(all.begin() + d_, all.end());
    jac_ = Program(jac);
  }
  int dim() const override { return d_; }
  Vec value(const Vec& x) const override {
    Vec v(d_);
    thread_local std::vector<double> scratch;
    value_.eval(x.data(), v.data(), scratch);
    return v;
  }
  Mat jacobian(const Vec& x) const override {
    double buf[kMaxDim * kMaxDim];
    thread_local std::vector<double> scratch;
    jac_.eval(x.data(), buf, scratch);
    Mat j(d_, d_);
    for (int i = 0; i < d_; ++i)
      for (int k = 0; k < d_; ++k) j(i, k) = buf[i * d_ + k];
    return j;
  }
  void value_and_jacobian(const Vec& x, Vec& v, Mat& j) const override {
    double buf[kMaxDim + kMaxDim * kMaxDim];
    thread_local std::vector<double> scratch;
    both_.eval(x.data(), buf, scratch);
    v.resize(d_);
    j.resize(d_, d_);
    for (int i = 0; i < d_; ++i) v(i) = buf[i];
    for (int i = 0; i < d_; ++i)
      for (int k = 0; k < d_; ++k) j(i, k) = buf[d_ + i * d_ + k];
  }

 private:
  int d_;
  Program value_, jac_, both_;
};

/// Thread-safe memo of point -> vector keyed by coordinates rounded to 12
/// decimals.
class PointCache {
 public:
  explicit PointCache(std::size_t capacity = 200000) : capacity_(capacity) {}

  std::optional<Vec> find(const Vec& x) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key(x));
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  void insert(const Vec& x, const Vec& v) {
    std::lock_guard<std::mutex> lock(mu_);
    if (map_.size() >= capacity_) map_.clear();
    map_.emplace(key(x), v);
  }
  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return map_.size();
  }

 private:
  static std::string key(const Vec& x) {
    std::string k(sizeof(long long) * x.size(), '\0');
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      long long r = std::llround(x(i) * 1e12);
      std::memcpy(k.data() + i * sizeof(long long), &r, sizeof(long long));
    }
    return k;
  }
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, Vec> map_;
};

/// Central-difference Jacobian of an arbitrary evaluation procedure.
inline Mat central_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  const int d = static_cast<int>(x.size());
  Mat j;
  for (int k = 0; k < d; ++k) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    Vec c = (f(xp) - f(xm)) / (2.0 * h);
    if (k == 0) j.resize(c.size(), d);
    j.col(k) = c;
  }
  return j;
}

/// Field given by an evaluation procedure; values are cached and the
/// Jacobian comes from central differences with step h_jac.
class ComputedVectorField : public FieldFunction {
 public:
  ComputedVectorField(int d, std::function<Vec(const Vec&)> eval, double h_jac)
      : d_(d), eval_(std::move(eval)), h_(h_jac), cache_(std::make_shared<PointCache>()) {}
  int dim() const override { return d_; }
  Vec value(const Vec& x) const override {
    if (auto hit = cache_->find(x)) return *hit;
    Vec v = eval_(x);
    cache_->insert(x, v);
    return v;
  }
  Mat jacobian(const Vec& x) const override {
    return central_jacobian([this](const Vec& y) { return value(y); }, x, h_);
  }
  double h_jac() const { return h_; }
  const PointCache& cache() const { return *cache_; }

 private:
  int d_;
  std::function<Vec(const Vec&)> eval_;
  double h_;
  std::shared_ptr<PointCache> cache_;
};

enum class Integrator { RK4, Adaptive };

inline Integrator parse_integrator(const std::string& s) {
  if (s == "rk4") return Integrator::RK4;
  if (s == "adaptive") return Integrator::Adaptive;
  throw std::invalid_argument("unknown integrator '" + s + "' (expected rk4 or adaptive)");
}

inline std::string to_string(Integrator k) { return k == Integrator::RK4 ? "rk4" : "adaptive"; }

struct FlowSettings {
  Integrator kind = Integrator::RK4;
  double step = 1e-2;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int max_steps = 1000000;
  std::optional<Box> domain;  // trajectory must stay inside when set
  int fixed_steps = 0;        // RK4 step count override (0: ceil(|t|/step))

  void validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("flow step must be > 0");
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw std::invalid_argument("adaptive tolerances must be > 0");
  }
};

/// Generator plus integrator settings.
struct FlowSpec {
  FieldPtr field;
  FlowSettings settings;
};

/// Trajectory point with transported columns C(t) = DPhi^t * C(0).
struct FlowState {
  Vec x;
  Mat cols;
};

namespace detail {

struct Deriv {
  Vec dx;
  Mat dc;
};

inline Deriv flow_rhs(const FieldFunction& f, const Vec& x, const Mat& c, bool with_cols) {
  Deriv d;
  if (with_cols && c.cols() > 0) {
    Mat j;
    f.value_and_jacobian(x, d.dx, j);
    d.dc = j * c;
  } else {
    d.dx = f.value(x);
    d.dc = Mat::Zero(c.rows(), c.cols());
  }
  return d;
}

inline void check_domain(const FlowSettings& s, const Vec& x, double t) {
  if (s.domain && !s.domain->contains(x)) throw BoxExitError(t, x);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i))) throw StepFailureError("non-finite state at t = " + std::to_string(t));
}

inline FlowState rk4(const FieldFunction& f, FlowState s, double t, const FlowSettings& set, bool with_cols) {
  const int n = set.fixed_steps > 0 ? set.fixed_steps : static_cast<int>(std::ceil(std::abs(t) / set.step - 1e-12));
  if (n == 0) return s;
  const double h = t / n;
  for (int k = 0; k < n; ++k) {
    Deriv k1 = flow_rhs(f, s.x, s.cols, with_cols);
    Deriv k2 = flow_rhs(f, s.x + 0.5 * h * k1.dx, s.cols + 0.5 * h * k1.dc, with_cols);
    Deriv k3 = flow_rhs(f, s.x + 0.5 * h * k2.dx, s.cols + 0.5 * h * k2.dc, with_cols);
    Deriv k4 = flow_rhs(f, s.x + h * k3.dx, s.cols + h * k3.dc, with_cols);
    s.x += (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    if (with_cols) s.cols += (h / 6.0) * (k1.dc + 2.0 * k2.dc + 2.0 * k3.dc + k4.dc);
    check_domain(set, s.x, h * (k + 1));
  }
  return s;
}

// Dormand-Prince 5(4) with error control on the state and the columns.
inline FlowState dopri5(const FieldFunction& f, FlowState s, double t, const FlowSettings& set, bool with_cols) {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;
  if (t == 0.0) return s;
  const double dir = t > 0 ? 1.0 : -1.0;
  double done = 0.0;
  double h = std::min(set.step, std::abs(t));
  Deriv k1 = flow_rhs(f, s.x, s.cols, with_cols);
  for (int it = 0; done < std::abs(t); ++it) {
    if (it >= set.max_steps) throw StepFailureError("adaptive integrator exceeded max_steps");
    h = std::min(h, std::abs(t) - done);
    if (h < 1e-14 * (1.0 + std::abs(t))) throw StepFailureError("adaptive step size underflow");
    const double hs = dir * h;
    auto stage = [&](const Vec& dx, const Mat& dc) { return flow_rhs(f, s.x + hs * dx, s.cols + hs * dc, with_cols); };
    Deriv k2 = stage(a21 * k1.dx, a21 * k1.dc);
    Deriv k3 = stage(a31 * k1.dx + a32 * k2.dx, a31 * k1.dc + a32 * k2.dc);
    Deriv k4 = stage(a41 * k1.dx + a42 * k2.dx + a43 * k3.dx, a41 * k1.dc + a42 * k2.dc + a43 * k3.dc);
    Deriv k5 = stage(a51 * k1.dx + a52 * k2.dx + a53 * k3.dx + a54 * k4.dx,
                     a51 * k1.dc + a52 * k2.dc + a53 * k3.dc + a54 * k4.dc);
    Deriv k6 = stage(a61 * k1.dx + a62 * k2.dx + a63 * k3.dx + a64 * k4.dx + a65 * k5.dx,
                     a61 * k1.dc + a62 * k2.dc + a63 * k3.dc + a64 * k4.dc + a65 * k5.dc);
    Vec xn = s.x + hs * (b1 * k1.dx + b3 * k3.dx + b4 * k4.dx + b5 * k5.dx + b6 * k6.dx);
    Mat cn = s.cols + hs * (b1 * k1.dc + b3 * k3.dc + b4 * k4.dc + b5 * k5.dc + b6 * k6.dc);
    Deriv k7 = flow_rhs(f, xn, cn, with_cols);
    Vec ex = hs * (e1 * k1.dx + e3 * k3.dx + e4 * k4.dx + e5 * k5.dx + e6 * k6.dx + e7 * k7.dx);
    Mat ec = hs * (e1 * k1.dc + e3 * k3.dc + e4 * k4.dc + e5 * k5.dc + e6 * k6.dc + e7 * k7.dc);
    double err = 0.0;
    for (Eigen::Index i = 0; i < ex.size(); ++i) {
      double sc = set.abs_tol + set.rel_tol * std::max(std::abs(s.x(i)), std::abs(xn(i)));
      err = std::max(err, std::abs(ex(i)) / sc);
    }
    if (with_cols)
      for (Eigen::Index i = 0; i < ec.size(); ++i) {
        double sc = set.abs_tol + set.rel_tol * std::max(std::abs(s.cols.data()[i]), std::abs(cn.data()[i]));
        err = std::max(err, std::abs(ec.data()[i]) / sc);
      }
    if (!std::isfinite(err)) throw StepFailureError("non-finite error estimate");
    if (err <= 1.0) {
      done += h;
      s.x = xn;
      s.cols = cn;
      k1 = k7;
      check_domain(set, s.x, dir * done);
    }
    double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= fac;
  }
  return s;
}

}  // namespace detail

/// Moves x and the columns of C along the flow of f for time t.
inline FlowState flow_transport(const FieldFunction& f, const Vec& x0, const Mat& c0, double t,
                                const FlowSettings& set) {
  set.validate();
  detail::check_domain(set, x0, 0.0);
  FlowState s{x0, c0};
  const bool cols = c0.cols() > 0;
  return set.kind == Integrator::RK4 ? detail::rk4(f, s, t, set, cols) : detail::dopri5(f, s, t, set, cols);
}

/// x(t) with x' = V(x), x(0) = p0.
inline Vec integrate_flow(const FlowSpec& spec, const Vec& p0, double t) {
  return flow_transport(*spec.field, p0, Mat(p0.size(), 0), t, spec.settings).x;
}

/// DPhi^t at p0 from the variational equation J' = DV(x(t)) J, J(0) = I.
inline Mat flow_differential(const FlowSpec& spec, const Vec& p0, double t) {
  const int d = static_cast<int>(p0.size());
  return flow_transport(*spec.field, p0, Mat::Identity(d, d), t, spec.settings).cols;
}

/// (Phi^t)_* W as a computed field: q -> DPhi^t(Phi^{-t} q) W(Phi^{-t} q).
inline std::shared_ptr<ComputedVectorField> pushforward(const FlowSpec& spec, FieldPtr w, double t, double h_jac) {
  FlowSpec s = spec;
  auto eval = [s, w, t](const Vec& q) {
    Vec x0 = flow_transport(*s.field, q, Mat(q.size(), 0), -t, s.settings).x;
    Mat c(x0.size(), 1);
    c.col(0) = w->value(x0);
    return Vec(flow_transport(*s.field, x0, c, t, s.settings).cols.col(0));
  };
  return std::make_shared<ComputedVectorField>(spec.field->dim(), eval, h_jac);
}

/// [X,Y](p) = DY X - DX Y with central-difference Jacobians of step h.
inline Vec numeric_bracket(const FieldFunction& x, const FieldFunction& y, const Vec& p, double h) {
  auto fx = [&x](const Vec& q) { return x.value(q); };
  auto fy = [&y](const Vec& q) { return y.value(q); };
  Mat jx = central_jacobian(fx, p, h), jy = central_jacobian(fy, p, h);
  return jy * x.value(p) - jx * y.value(p);
}

/// [X,Y](p) using each field's own Jacobian.
inline Vec bracket_at(const FieldFunction& x, const FieldFunction& y, const Vec& p) {
  return y.jacobian(p) * x.value(p) - x.jacobian(p) * y.value(p);
}

inline FieldPtr symbolic(const VectorField& v) { return std::make_shared<SymbolicField>(v); }

}  // namespace nilchart
