#pragma once

// Built-in example fields, the quadrature chart for the cyclic family, and
// fields conjugated from constant matrices with a known chart.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilchart/box.hpp"
#include "nilchart/chart.hpp"
#include "nilchart/expr.hpp"
#include "nilchart/field.hpp"
#include "nilchart/parse.hpp"
#include "nilchart/structure.hpp"

namespace nilchart {

class PositivityError : public std::runtime_error {
 public:
  PositivityError(const std::string& what, Vec where) : std::runtime_error(what), where_(std::move(where)) {}
  const Vec& where() const { return where_; }

 private:
  Vec where_;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// The cyclic family: A d1 = 0, A d_i = d_{i-1}, A d_n = sum alpha_i d_i.

struct CyclicSpec {
  int n = 0;
  std::vector<ScalarExpr> alpha;  // alpha_1 .. alpha_{n-1}

  /// alpha_{n-1} = 1/(1 + x_{n-1} theta(x_n)) with theta(t) = t^{r+1}, either
  /// for t >= 0 only (pospow) or everywhere (analytic). The lower alpha
  /// follow from the compatibility relations; n = 2 and n = 3 are supported.
  static CyclicSpec from_theta(int n, int r, bool analytic) {
    if (n < 2 || n > 3) throw std::invalid_argument("theta-generated family supports n = 2 and n = 3");
    ScalarExpr xn = variable(n - 1), xm = variable(n - 2);
    ScalarExpr theta = analytic ? pow(xn, r + 1) : pospow(xn, r + 1);
    CyclicSpec s;
    s.n = n;
    ScalarExpr top = 1.0 / (1.0 + xm * theta);
    if (n == 2) {
      s.alpha = {top};
    } else {
      // d_1 alpha_1 = d_2 alpha_2, alpha_1 = 0 on x_1 = 0
      s.alpha = {-variable(0) * theta / pow(1.0 + xm * theta, 2), top};
    }
    return s;
  }

  static CyclicSpec constant_alpha(const std::vector<double>& a) {
    CyclicSpec s;
    s.n = static_cast<int>(a.size()) + 1;
    for (double v : a) s.alpha.push_back(constant(v));
    return s;
  }
};

inline EndoField cyclic_field(const CyclicSpec& s) {
  const int n = s.n;
  if (static_cast<int>(s.alpha.size()) != n - 1) throw std::invalid_argument("need n - 1 coefficient functions");
  EndoField a = EndoField::zero(n);
  for (int i = 1; i < n - 1; ++i) a(i - 1, i) = constant(1.0);
  for (int i = 0; i < n - 1; ++i) a(i, n - 1) = s.alpha[i];
  return a;
}

/// Natural coordinates x_i carry label (i, i).
inline AdaptedChart cyclic_chart(int n, const Box& box) {
  std::vector<CoordGroup> g;
  for (int i = 1; i <= n; ++i) g.push_back({{i, i}, {i - 1}});
  return AdaptedChart::from_groups(n, n, g, box);
}

inline void check_cyclic_positive(const CyclicSpec& s, const Box& box, int samples = 200, std::uint64_t seed = 3) {
  for (const Vec& p : sample_points(box, samples, seed)) {
    double v = evaluate(s.alpha.back(), p.data());
    if (!(v > 0.0)) throw PositivityError("alpha_" + std::to_string(s.n - 1) + " is not positive on the box", p);
  }
}

/// Max defect of d_k alpha_i = d_{k+1} alpha_{i+1} (k <= n-2, alpha_n = 0)
/// and d_1 alpha_i = 0 (i >= 2) over sample points.
inline double cyclic_compat_residual(const CyclicSpec& s, const Box& box, int samples, std::uint64_t seed) {
  const int n = s.n;
  std::vector<ScalarExpr> defects;
  auto alpha = [&](int i) { return i <= n - 1 ? s.alpha[i - 1] : constant(0.0); };
  for (int i = 1; i <= n - 1; ++i)
    for (int k = 1; k <= n - 2; ++k) defects.push_back(differentiate(alpha(i), k - 1) - differentiate(alpha(i + 1), k));
  for (int i = 2; i <= n - 1; ++i) defects.push_back(differentiate(alpha(i), 0));
  if (defects.empty()) return 0.0;
  Program prog(defects);
  std::vector<double> out(defects.size()), scratch;
  double worst = 0.0;
  for (const Vec& p : sample_points(box, samples, seed)) {
    prog.eval(p.data(), out.data(), scratch);
    for (double v : out) worst = std::max(worst, std::abs(v));
  }
  return worst;
}

/// P_1 = 1/alpha_{n-1}, P_i = -sum_{j<i} (alpha_{n-i+j-1}/alpha_{n-1}) P_j.
inline std::vector<ScalarExpr> cyclic_P(const CyclicSpec& s) {
  const int n = s.n;
  std::vector<ScalarExpr> p;
  p.push_back(1.0 / s.alpha[n - 2]);
  for (int i = 2; i <= n - 1; ++i) {
    ScalarExpr acc = constant(0.0);
    for (int j = 1; j < i; ++j) acc = acc + (s.alpha[n - i + j - 2] / s.alpha[n - 2]) * p[j - 1];
    p.push_back(-acc);
  }
  return p;
}

/// Integral chart y(x) of the cyclic family with y_n = x_n and y_i = 0 on
/// x_1 = .. = x_{n-1} = 0, by nested composite Simpson quadrature along
/// coordinate segments.
class CyclicQuadratureChart {
 public:
  explicit CyclicQuadratureChart(const CyclicSpec& s, int panels = 128) : n_(s.n), panels_(panels) {
    if (panels_ < 2 || panels_ % 2) throw QuadratureError("Simpson quadrature needs an even panel count >= 2");
    auto p = cyclic_P(s);
    // d^l/dx_n^l P_i for l up to n
    for (const auto& pi : p) {
      std::vector<ScalarExpr> ders{pi};
      for (int l = 1; l <= n_; ++l) ders.push_back(differentiate(ders.back(), n_ - 1));
      pder_.emplace_back(ders);
    }
  }

  int dim() const { return n_; }

  /// All components y_1..y_n at x.
  Vec operator()(const Vec& x) const {
    Vec y(n_);
    for (int j = 1; j <= n_; ++j) y(j - 1) = component(j, 0, x);
    return y;
  }

  /// d^m/dx_n^m of y_j at x (1-based j).
  double component(int j, int m, const Vec& x) const {
    if (j > n_) return 0.0;
    if (j == n_) return m == 0 ? x(n_ - 1) : (m == 1 ? 1.0 : 0.0);
    const int k = n_ - j;
    Vec q = x;
    double total = simpson(
        [&](double t) {
          q(n_ - 2) = t;
          return g(n_ - k, m, q);
        },
        x(n_ - 2));
    for (int i = 2; i <= n_ - 1; ++i) {
      Vec r = x;
      for (int l = n_ - i; l <= n_ - 2; ++l) r(l) = 0.0;
      total += simpson(
          [&](double t) {
            r(n_ - i - 1) = t;
            return g(n_ - k + i - 1, m, r);
          },
          x(n_ - i - 1));
    }
    return total;
  }

 private:
  // d^m/dx_n^m of dy_j/dx_{n-1} = sum_i P_i d y_{j+i}/dx_n
  double g(int j, int m, const Vec& x) const {
    double s = 0.0;
    for (int i = 1; i <= n_ - j; ++i) {
      double binom = 1.0;
      for (int l = 0; l <= m; ++l) {
        if (l > 0) binom = binom * (m - l + 1) / l;
        double dp = pder_[i - 1].value(l, x);
        if (dp == 0.0) continue;
        s += binom * dp * component(j + i, 1 + m - l, x);
      }
    }
    return s;
  }

  double simpson(const std::function<double(double)>& f, double upper) const {
    if (upper == 0.0) return 0.0;
    const double h = upper / panels_;
    double s = f(0.0) + f(upper);
    for (int k = 1; k < panels_; ++k) s += (k % 2 ? 4.0 : 2.0) * f(k * h);
    double v = s * h / 3.0;
    if (!std::isfinite(v)) throw QuadratureError("non-finite quadrature value");
    return v;
  }

  struct Derivs {
    explicit Derivs(const std::vector<ScalarExpr>& d) : prog(d), zero(d.size()) {
      for (std::size_t l = 0; l < d.size(); ++l) zero[l] = d[l].is_constant(0.0);
    }
    double value(int l, const Vec& x) const {
      if (zero[l]) return 0.0;
      thread_local std::vector<double> out, scratch;
      out.resize(prog.output_count());
      prog.eval(x.data(), out.data(), scratch);
      return out[l];
    }
    Program prog;
    std::vector<bool> zero;
  };

  int n_;
  int panels_;
  std::vector<Derivs> pder_;
};

// ---------------------------------------------------------------------------
// Two four-dimensional fields of nilpotency index 2.

/// A d3 = exp(x2) d1, A d4 = d1.
inline EndoField torsion_free_nonintegrable_field() {
  EndoField a = EndoField::zero(4);
  a(0, 2) = exp(variable(1));
  a(0, 3) = constant(1.0);
  return a;
}

/// A d3 = exp(x2) d1, A d4 = d2.
inline EndoField involutive_torsion_field() {
  EndoField a = EndoField::zero(4);
  a(0, 2) = exp(variable(1));
  a(1, 3) = constant(1.0);
  return a;
}

/// x1, x2 span Im A = ker A; x3, x4 are quotient coordinates.
inline AdaptedChart involutive_torsion_chart(const Box& box) {
  return AdaptedChart::from_groups(4, 2, {{{1, 1}, {0, 1}}, {{2, 2}, {2, 3}}}, box);
}

// ---------------------------------------------------------------------------
// Fields conjugated from a constant matrix by a polynomial triangular shear.

struct ConjugatedField {
  EndoField a;
  Mat m;                            // the constant matrix
  std::vector<ScalarExpr> shear;    // phi: y -> x
  std::vector<ScalarExpr> inverse;  // psi = phi^{-1}: x -> y, a chart in which A is m
};

/// phi_i(y) = y_i + sum of monomials of degree 2..degree in the y_j, j > i,
/// with y_j allowed only when allowed(i, j). A(x) = Dphi M Dphi^{-1} at psi(x).
inline ConjugatedField conjugate_constant(const Mat& m, std::uint64_t seed, int degree,
                                          const std::function<bool(int, int)>& allowed) {
  const int d = static_cast<int>(m.rows());
  SampleRng rng(seed);
  // phi_i = x_i g_i + h_i with g_i, h_i depending on allowed later coordinates
  std::vector<ScalarExpr> phi, g(d, constant(1.0)), h(d, constant(0.0));
  for (int i = 0; i < d; ++i) {
    std::vector<int> vars;
    for (int j = i + 1; j < d; ++j)
      if (allowed(i, j)) vars.push_back(j);
    // monomials as non-decreasing index tuples
    std::function<void(std::size_t, int, ScalarExpr)> rec = [&](std::size_t from, int deg, ScalarExpr mono) {
      if (deg >= 2) {
        double c = std::round(rng.uniform(-0.5, 0.5) * 16.0) / 16.0;
        if (c != 0.0) h[i] = h[i] + c * mono;
      }
      if (deg == degree) return;
      for (std::size_t k = from; k < vars.size(); ++k) rec(k, deg + 1, deg == 0 ? variable(vars[k]) : mono * variable(vars[k]));
    };
    if (degree >= 2 && !vars.empty()) {
      rec(0, 0, constant(1.0));
      int k = vars[static_cast<std::size_t>(rng.next() % vars.size())];
      double c = std::round(rng.uniform(-0.5, 0.5) * 16.0) / 16.0;
      g[i] = 1.0 + (c != 0.0 ? c : 0.25) * variable(k);
    }
    phi.push_back(variable(i) * g[i] + h[i]);
  }
  // Dphi is upper triangular
  std::vector<std::vector<ScalarExpr>> u(d, std::vector<ScalarExpr>(d, constant(0.0)));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) u[i][j] = differentiate(phi[i], j);
  std::vector<std::vector<ScalarExpr>> inv(d, std::vector<ScalarExpr>(d, constant(0.0)));
  for (int j = 0; j < d; ++j) {
    inv[j][j] = 1.0 / u[j][j];
    for (int i = j - 1; i >= 0; --i) {
      ScalarExpr acc = constant(0.0);
      for (int k = i + 1; k <= j; ++k) acc = acc + u[i][k] * inv[k][j];
      inv[i][j] = -acc / u[i][i];
    }
  }
  // psi by back-substitution
  std::vector<ScalarExpr> psi(d);
  for (int i = d - 1; i >= 0; --i) {
    std::vector<ScalarExpr> sub(d);
    for (int k = 0; k < d; ++k) sub[k] = k > i ? psi[k] : constant(0.0);
    psi[i] = (variable(i) - substitute(h[i], sub)) / substitute(g[i], sub);
  }
  EndoField a = EndoField::zero(d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      ScalarExpr acc = constant(0.0);
      for (int k = 0; k < d; ++k) {
        if (u[r][k].is_constant(0.0)) continue;
        ScalarExpr inner = constant(0.0);
        for (int l = 0; l < d; ++l)
          if (m(k, l) != 0.0 && !inv[l][c].is_constant(0.0)) inner = inner + m(k, l) * inv[l][c];
        acc = acc + u[r][k] * inner;
      }
      a(r, c) = substitute(acc, psi);
    }
  return {a, m, phi, psi};
}

/// Conjugate of the Jordan matrix of the given multiplicities. Coordinates
/// follow the Jordan basis order, so their labels are adapted; the shear only
/// couples y_j into y_i when every flag subspace containing e_j contains e_i.
inline ConjugatedField conjugated_nilpotent(const Multiplicities& mult, std::uint64_t seed, int degree) {
  FrameLayout l = make_layout(mult);
  auto allowed = [&](int i, int j) {
    CoordLabel li = l.label(i), lj = l.label(j);
    return li.i <= lj.i && li.j <= lj.j;
  };
  return conjugate_constant(jordan_matrix(mult), seed, degree, allowed);
}

inline AdaptedChart jordan_basis_chart(const Multiplicities& mult, const Box& box) {
  FrameLayout l = make_layout(mult);
  std::map<CoordLabel, std::vector<int>> g;
  for (int c = 0; c < l.d; ++c) g[l.label(c)].push_back(c);
  std::vector<CoordGroup> groups;
  for (const auto& [label, coords] : g) groups.push_back({label, coords});
  return AdaptedChart::from_groups(l.d, l.n, groups, box);
}

inline Multiplicities multiplicities_from(std::vector<int> counts) {
  Multiplicities m;
  m.n = static_cast<int>(counts.size());
  m.mult = std::move(counts);
  return m;
}

// ---------------------------------------------------------------------------
// Registry of named examples.

struct CorpusEntry {
  std::string name;
  std::string description;
  EndoField a;
  Box box;
  std::optional<AdaptedChart> chart;
  std::vector<std::vector<double>> factors;  // corollary mode when non-empty
  std::optional<CyclicSpec> cyclic;
  std::optional<ConjugatedField> conjugated;
};

inline std::vector<std::string> corpus_names() {
  return {"example37", "example38", "example35", "example35-n2", "constant-jordan", "conjugated-constant",
          "block-diagonal"};
}

inline CorpusEntry corpus_entry(const std::string& name) {
  CorpusEntry e;
  e.name = name;
  if (name == "example37") {
    e.description = "vanishing torsion, ker A not involutive";
    e.a = torsion_free_nonintegrable_field();
    e.box = Box::cube(4, -1, 1);
  } else if (name == "example38") {
    e.description = "ker A involutive, nonvanishing torsion";
    e.a = involutive_torsion_field();
    e.box = Box::cube(4, -1, 1);
    e.chart = involutive_torsion_chart(e.box);
  } else if (name == "example35" || name == "example35-n2") {
    const int n = name == "example35" ? 3 : 2;
    e.description = "cyclic field with alpha_{n-1} = 1/(1 + x_{n-1} x_n^4), n = " + std::to_string(n);
    e.cyclic = CyclicSpec::from_theta(n, 3, true);
    e.a = cyclic_field(*e.cyclic);
    e.box = Box::cube(n, -0.3, 0.3);
    check_cyclic_positive(*e.cyclic, e.box);
    e.chart = cyclic_chart(n, e.box);
  } else if (name == "constant-jordan") {
    Multiplicities m = multiplicities_from({1, 2});
    e.description = "constant Jordan matrix with blocks of sizes 1, 2, 2";
    e.a = EndoField::from_constant(jordan_matrix(m));
    e.box = Box::cube(m.dim(), -0.5, 0.5);
    e.chart = jordan_basis_chart(m, e.box);
  } else if (name == "conjugated-constant") {
    Multiplicities m = multiplicities_from({1, 1});
    e.description = "Jordan blocks of sizes 1 and 2 conjugated by a quadratic shear";
    e.conjugated = conjugated_nilpotent(m, 2024, 2);
    e.a = e.conjugated->a;
    e.box = Box::cube(3, -0.5, 0.5);
    e.chart = jordan_basis_chart(m, e.box);
  } else if (name == "block-diagonal") {
    Mat m = Mat::Zero(4, 4);
    m << 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 2;
    e.description = "eigenvalues 1 (one block of size 2) and 2 (two blocks of size 1), conjugated by a quadratic shear";
    e.conjugated = conjugate_constant(m, 77, 2, [](int, int) { return true; });
    e.a = e.conjugated->a;
    e.box = Box::cube(4, -0.5, 0.5);
    // (X - 1)^2 and X - 2, ascending coefficients
    e.factors = {{1, -2, 1}, {-2, 1}};
  } else {
    throw std::invalid_argument("unknown corpus example '" + name + "'");
  }
  return e;
}

}  // namespace nilchart
