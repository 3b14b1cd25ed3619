#pragma once

// Pointwise and box-uniform linear structure of an endomorphism field:
// rank profiles of its powers, Jordan multiplicities, smooth kernel and
// image frames, and involutivity tests on those frames.

#include <Eigen/QR>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilchart/box.hpp"
#include "nilchart/field.hpp"
#include "nilchart/linalg.hpp"

namespace nilchart {

class InconsistentSequenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PivotDegenerationError : public std::runtime_error {
 public:
  PivotDegenerationError(const std::string& what, Vec where) : std::runtime_error(what), where_(std::move(where)) {}
  const Vec& where() const { return where_; }

 private:
  Vec where_;
};

class FactorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RankOptions {
  double rel_tol = 1e-8;
  double abs_floor = 1e-12;
};

/// Ranks of A^0, A^1, ..., A^d at one point.
struct RankProfile {
  std::vector<int> ranks;
  bool ill_conditioned = false;
  bool operator==(const RankProfile& o) const { return ranks == o.ranks; }
};

inline RankProfile rank_profile(const Mat& a, RankOptions opt = {}) {
  RankProfile out;
  const int d = static_cast<int>(a.rows());
  Mat p = Mat::Identity(d, d);
  out.ranks.push_back(d);
  for (int k = 1; k <= d; ++k) {
    p = p * a;
    NumericRank r = numeric_rank(p, opt.rel_tol, opt.abs_floor);
    out.ranks.push_back(r.rank);
    out.ill_conditioned = out.ill_conditioned || r.ill_conditioned;
  }
  return out;
}

inline RankProfile rank_profile(const EndoField& a, const Vec& p, RankOptions opt = {}) {
  return rank_profile(EndoEvaluator(a).value(p), opt);
}

/// Jordan data of a nilpotent rank sequence: n and d_1..d_n (mult[a-1] = d_a).
struct Multiplicities {
  int n = 0;
  std::vector<int> mult;

  int dim() const {
    int d = 0;
    for (int a = 1; a <= n; ++a) d += a * mult[a - 1];
    return d;
  }
  int count(int a) const { return a >= 1 && a <= n ? mult[a - 1] : 0; }
  bool operator==(const Multiplicities& o) const { return n == o.n && mult == o.mult; }
};

/// d_a = r_{a-1} - 2 r_a + r_{a+1}, with r_k = 0 past the end of the sequence.
inline Multiplicities invariant_factors(const std::vector<int>& ranks) {
  if (ranks.empty()) throw InconsistentSequenceError("empty rank sequence");
  if (ranks.back() != 0) throw InconsistentSequenceError("rank sequence does not reach 0: field is not nilpotent");
  auto r = [&](int k) { return k < static_cast<int>(ranks.size()) ? ranks[k] : 0; };
  Multiplicities m;
  for (int a = 1; a < static_cast<int>(ranks.size()); ++a) {
    int da = r(a - 1) - 2 * r(a) + r(a + 1);
    if (da < 0) throw InconsistentSequenceError("negative block count d_" + std::to_string(a));
    m.mult.push_back(da);
    if (r(a - 1) > 0) m.n = a;
  }
  m.mult.resize(m.n);
  return m;
}

/// Block sizes in descending order, e.g. (d_1,d_2) = (2,1) gives {2,1,1}.
inline std::vector<int> partition_of(const Multiplicities& m) {
  std::vector<int> out;
  for (int a = m.n; a >= 1; --a)
    for (int k = 0; k < m.count(a); ++k) out.push_back(a);
  return out;
}

struct ConstancyResult {
  bool constant = true;
  RankProfile profile;  // at the first sample point
  Vec first, witness;   // disagreeing pair when !constant
  RankProfile witness_profile;
  bool ill_conditioned = false;
};

inline ConstancyResult constancy_check(const EndoField& a, const Box& box, int samples, std::uint64_t seed,
                                       RankOptions opt = {}) {
  EndoEvaluator ev(a);
  ConstancyResult out;
  auto pts = sample_points(box, samples, seed);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    RankProfile rp = rank_profile(ev.value(pts[k]), opt);
    out.ill_conditioned = out.ill_conditioned || rp.ill_conditioned;
    if (k == 0) {
      out.profile = rp;
      out.first = pts[k];
    } else if (!(rp == out.profile)) {
      out.constant = false;
      out.witness = pts[k];
      out.witness_profile = rp;
      return out;
    }
  }
  return out;
}

/// Constancy of rank A alone (profile.ranks holds the single rank).
inline ConstancyResult rank_constancy(const EndoField& a, const Box& box, int samples, std::uint64_t seed,
                                      RankOptions opt = {}) {
  EndoEvaluator ev(a);
  ConstancyResult out;
  auto pts = sample_points(box, samples, seed);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    NumericRank r = numeric_rank(ev.value(pts[k]), opt.rel_tol, opt.abs_floor);
    out.ill_conditioned = out.ill_conditioned || r.ill_conditioned;
    RankProfile rp{{r.rank}, r.ill_conditioned};
    if (k == 0) {
      out.profile = rp;
      out.first = pts[k];
    } else if (!(rp == out.profile)) {
      out.constant = false;
      out.witness = pts[k];
      out.witness_profile = rp;
      return out;
    }
  }
  return out;
}

/// A smooth frame with its nominal rank.
struct Distribution {
  std::vector<VectorField> frame;
  int rank = 0;
  std::string tag;
  Box box;
};

namespace detail {

using ExprMatrix = std::vector<std::vector<ScalarExpr>>;

inline ExprMatrix to_rows(const EndoField& a) {
  ExprMatrix m(a.dim(), std::vector<ScalarExpr>(a.dim()));
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) m[i][j] = a(i, j);
  return m;
}

inline Mat eval_rows(const ExprMatrix& m, const Vec& p) {
  const int r = static_cast<int>(m.size()), c = r ? static_cast<int>(m[0].size()) : 0;
  Mat out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out(i, j) = evaluate(m[i][j], p.data());
  return out;
}

// Every pivot keeps the sign it has at the box center on all samples.
inline void check_pivots(const std::vector<ScalarExpr>& pivots, const Box& box, int samples, std::uint64_t seed,
                         const char* what) {
  if (pivots.empty()) return;
  Program prog(pivots);
  std::vector<double> c(pivots.size()), v(pivots.size()), scratch;
  Vec center = box.center();
  prog.eval(center.data(), c.data(), scratch);
  for (const Vec& p : sample_points(box, samples, seed)) {
    try {
      prog.eval(p.data(), v.data(), scratch);
    } catch (const EvaluationError&) {
      throw PivotDegenerationError(std::string(what) + ": pivot expression undefined on box", p);
    }
    for (std::size_t k = 0; k < v.size(); ++k)
      if (!(v[k] * c[k] > 0.0) || !std::isfinite(v[k]))
        throw PivotDegenerationError(std::string(what) + ": pivot vanishes on box; shrink the box", p);
  }
}

}  // namespace detail

struct FrameOptions {
  int samples = 100;
  std::uint64_t seed = 7;
  RankOptions rank{};
};

/// Frame of ker A^p by symbolic Gauss-Jordan elimination of A^p, pivots fixed
/// by complete pivoting at the box center.
inline Distribution kernel_frame(const EndoField& a, int p, const Box& box, FrameOptions opt = {}) {
  const int d = a.dim();
  Distribution out;
  out.tag = "ker A^" + std::to_string(p);
  out.box = box;
  detail::ExprMatrix m = detail::to_rows(endo_power(a, p));
  Vec center = box.center();
  Mat m0 = detail::eval_rows(m, center);
  const int r = numeric_rank(m0, opt.rank.rel_tol, opt.rank.abs_floor).rank;

  std::vector<int> pivot_row, pivot_col;
  std::vector<bool> row_used(d, false), col_used(d, false);
  std::vector<ScalarExpr> pivots;
  for (int step = 0; step < r; ++step) {
    int br = -1, bc = -1;
    double best = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (!row_used[i] && !col_used[j] && std::abs(m0(i, j)) > best) {
          best = std::abs(m0(i, j));
          br = i;
          bc = j;
        }
    row_used[br] = col_used[bc] = true;
    pivot_row.push_back(br);
    pivot_col.push_back(bc);
    pivots.push_back(m[br][bc]);
    ScalarExpr piv = m[br][bc];
    for (int i = 0; i < d; ++i) {
      if (i == br || m[i][bc].is_constant(0.0)) continue;
      ScalarExpr f = m[i][bc] / piv;
      for (int j = 0; j < d; ++j) m[i][j] = j == bc ? constant(0.0) : m[i][j] - f * m[br][j];
    }
    m0 = detail::eval_rows(m, center);
  }
  detail::check_pivots(pivots, box, opt.samples, opt.seed, "kernel_frame");

  for (int f = 0; f < d; ++f) {
    if (col_used[f]) continue;
    VectorField v = VectorField::coordinate(d, f);
    for (int k = 0; k < r; ++k) v[pivot_col[k]] = -(m[pivot_row[k]][f] / m[pivot_row[k]][pivot_col[k]]);
    out.frame.push_back(v);
  }
  out.rank = static_cast<int>(out.frame.size());
  return out;
}

namespace detail {

// Indices of r independent columns of m by column-pivoted QR.
inline std::vector<int> pivot_columns(const Mat& m, int r) {
  Eigen::ColPivHouseholderQR<Mat> qr(m);
  std::vector<int> cols;
  for (int k = 0; k < r; ++k) cols.push_back(qr.colsPermutation().indices()(k));
  return cols;
}

// Selected columns keep full rank at every sample point.
inline void check_full_rank(const std::vector<VectorField>& frame, const Box& box, int samples, std::uint64_t seed,
                            RankOptions opt, const char* what) {
  if (frame.empty()) return;
  FieldBundleEvaluator ev(frame);
  const int d = frame[0].dim(), k = static_cast<int>(frame.size());
  for (const Vec& p : sample_points(box, samples, seed)) {
    ev.eval(p);
    Mat f(d, k);
    for (int j = 0; j < k; ++j) f.col(j) = ev.value(j);
    if (numeric_rank(f, opt.rel_tol, opt.abs_floor).rank < k)
      throw PivotDegenerationError(std::string(what) + ": frame loses rank on box; shrink the box", p);
  }
}

inline Mat frame_matrix(FieldBundleEvaluator& ev, int d, int k) {
  Mat f(d, k);
  for (int j = 0; j < k; ++j) f.col(j) = ev.value(j);
  return f;
}

}  // namespace detail

/// rank A^p columns of A^p, chosen by pivoting at the box center.
inline Distribution image_frame(const EndoField& a, int p, const Box& box, FrameOptions opt = {}) {
  Distribution out;
  out.tag = "Im A^" + std::to_string(p);
  out.box = box;
  EndoField ap = endo_power(a, p);
  Mat m0 = EndoEvaluator(ap).value(box.center());
  const int r = numeric_rank(m0, opt.rank.rel_tol, opt.rank.abs_floor).rank;
  for (int c : detail::pivot_columns(m0, r)) out.frame.push_back(ap.column(c));
  detail::check_full_rank(out.frame, box, opt.samples, opt.seed, opt.rank, "image_frame");
  out.rank = r;
  return out;
}

/// Concatenated frame reduced to full rank by pivoting at the box center.
inline Distribution sum_distribution(const Distribution& d1, const Distribution& d2, FrameOptions opt = {}) {
  Distribution out;
  out.tag = d1.tag + " + " + d2.tag;
  out.box = d1.box;
  std::vector<VectorField> all = d1.frame;
  all.insert(all.end(), d2.frame.begin(), d2.frame.end());
  if (all.empty()) return out;
  const int d = all[0].dim();
  FieldBundleEvaluator ev(all);
  ev.eval(out.box.center());
  Mat m0 = detail::frame_matrix(ev, d, static_cast<int>(all.size()));
  const int r = numeric_rank(m0, opt.rank.rel_tol, opt.rank.abs_floor).rank;
  std::vector<int> cols = detail::pivot_columns(m0, r);
  std::sort(cols.begin(), cols.end());
  for (int c : cols) out.frame.push_back(all[c]);
  detail::check_full_rank(out.frame, out.box, opt.samples, opt.seed, opt.rank, "sum_distribution");
  out.rank = r;
  return out;
}

/// Full frame of a distribution given by explicit fields, rank fixed at the center.
inline Distribution user_distribution(std::vector<VectorField> frame, const Box& box, std::string tag = "user") {
  Distribution out;
  out.frame = std::move(frame);
  out.rank = static_cast<int>(out.frame.size());
  out.tag = std::move(tag);
  out.box = box;
  return out;
}

struct InvolutivityResult {
  bool involutive = true;
  double max_residual = 0.0;
  double frame_scale = 0.0;
  double threshold = 0.0;
  Vec where;
  int i = -1, j = -1;  // frame pair achieving the max
};

/// Least-squares residual of every frame bracket against the frame span.
inline InvolutivityResult involutivity_residual(const Distribution& dist, const Box& box, int samples,
                                                std::uint64_t seed, double tol = 1e-9) {
  InvolutivityResult out;
  out.where = box.center();
  const int k = static_cast<int>(dist.frame.size());
  if (k == 0) return out;
  const int d = dist.frame[0].dim();
  std::vector<VectorField> all = dist.frame;
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      all.push_back(lie_bracket(dist.frame[i], dist.frame[j]));
      pairs.emplace_back(i, j);
    }
  FieldBundleEvaluator ev(all);
  for (const Vec& p : sample_points(box, samples, seed)) {
    ev.eval(p);
    Mat f = detail::frame_matrix(ev, d, k);
    for (int c = 0; c < k; ++c) out.frame_scale = std::max(out.frame_scale, f.col(c).norm());
    Mat q = column_basis(f, k);
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      double r = span_residual(q, ev.value(k + b));
      if (r > out.max_residual || !std::isfinite(r)) {
        out.max_residual = std::isfinite(r) ? r : INFINITY;
        out.where = p;
        std::tie(out.i, out.j) = pairs[b];
      }
    }
  }
  out.threshold = tol * (1.0 + out.frame_scale);
  out.involutive = out.max_residual <= out.threshold;
  return out;
}

/// A single verdict line of a structure report.
struct Condition {
  std::string name;
  bool pass = false;
  bool evaluated = true;
  double residual = 0.0;
  double threshold = 0.0;
  Vec witness;
  std::string detail;
};

struct StructureOptions {
  int samples = 200;
  std::uint64_t seed = 1;
  double tol = 1e-9;
  RankOptions rank{};
};

namespace detail {

inline std::string ranks_string(const RankProfile& r) {
  std::string s = "(";
  for (std::size_t k = 0; k < r.ranks.size(); ++k) s += (k ? "," : "") + std::to_string(r.ranks[k]);
  return s + ")";
}

inline Condition constancy_condition(const std::string& name, const ConstancyResult& c) {
  Condition out;
  out.name = name;
  out.pass = c.constant;
  out.residual = c.constant ? 0.0 : 1.0;
  out.witness = c.constant ? c.first : c.witness;
  out.detail = "ranks " + ranks_string(c.profile);
  if (!c.constant) out.detail += " vs " + ranks_string(c.witness_profile) + " at witness";
  if (c.ill_conditioned) out.detail += "; ill-conditioned singular values near the rank threshold";
  return out;
}

inline Condition nijenhuis_condition(const EndoField& a, const std::vector<Vec>& pts, double tol) {
  Condition out;
  out.name = "nijenhuis";
  TensorResidual r = nijenhuis_residual(a, pts);
  double scale = entry_scale(a, pts);
  out.residual = r.value;
  out.threshold = tol * (1.0 + scale);
  out.pass = r.value <= out.threshold;
  out.witness = r.where.size() ? r.where : pts.front();
  if (r.i >= 0) out.detail = "max at pair (d" + std::to_string(r.i + 1) + ", d" + std::to_string(r.j + 1) + ")";
  return out;
}

inline Condition involutivity_condition(const std::string& name, const std::function<Distribution()>& make,
                                        const Box& box, const StructureOptions& opt) {
  Condition out;
  out.name = name;
  try {
    Distribution dist = make();
    InvolutivityResult r = involutivity_residual(dist, box, opt.samples, opt.seed, opt.tol);
    out.pass = r.involutive;
    out.residual = r.max_residual;
    out.threshold = r.threshold;
    out.witness = r.where;
    out.detail = "rank " + std::to_string(dist.rank);
    if (r.i >= 0) out.detail += ", max at frame pair (" + std::to_string(r.i + 1) + "," + std::to_string(r.j + 1) + ")";
  } catch (const PivotDegenerationError& e) {
    out.pass = false;
    out.evaluated = false;
    out.witness = e.where();
    out.detail = e.what();
  }
  return out;
}

}  // namespace detail

struct StructureReport {
  std::string kind;  // "nilpotent" or "factors"
  RankProfile profile;
  std::optional<Multiplicities> multiplicities;
  std::vector<Condition> conditions;
  bool integrable() const {
    for (const auto& c : conditions)
      if (!c.pass) return false;
    return !conditions.empty();
  }
  const Condition* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// Nilpotency index on the box from the rank profile at the center, or 0 if A
/// is not nilpotent there.
inline int nilpotency_index(const EndoField& a, const Box& box, RankOptions opt = {}) {
  RankProfile rp = rank_profile(a, box.center(), opt);
  if (rp.ranks.back() != 0) return 0;
  int n = 0;
  while (rp.ranks[n] > 0) ++n;
  return n;
}

/// The three integrability conditions for a nilpotent field: constant
/// invariant factors, vanishing torsion, involutive kernels of all powers.
inline StructureReport theorem13_report(const EndoField& a, const Box& box, StructureOptions opt = {}) {
  auto pts = sample_points(box, opt.samples, opt.seed);
  if (!is_nilpotent_on(a, pts, opt.tol))
    throw NotNilpotentError("field is not nilpotent on the box; supply invariant factors (corollary mode)");
  StructureReport rep;
  rep.kind = "nilpotent";
  ConstancyResult c = constancy_check(a, box, opt.samples, opt.seed, opt.rank);
  rep.profile = c.profile;
  rep.conditions.push_back(detail::constancy_condition("invariant_factors", c));
  if (c.constant) rep.multiplicities = invariant_factors(c.profile.ranks);
  rep.conditions.push_back(detail::nijenhuis_condition(a, pts, opt.tol));

  const int n = rep.multiplicities ? rep.multiplicities->n : nilpotency_index(a, box, opt.rank);
  FrameOptions fo{opt.samples, opt.seed, opt.rank};
  for (int p = 1; p <= n - 1; ++p) {
    std::string name = "involutive_ker_A^" + std::to_string(p);
    if (!c.constant) {
      Condition skip;
      skip.name = name;
      skip.evaluated = false;
      skip.detail = "skipped: invariant factors are not constant on the box";
      rep.conditions.push_back(skip);
      continue;
    }
    rep.conditions.push_back(
        detail::involutivity_condition(name, [&] { return kernel_frame(a, p, box, fo); }, box, opt));
  }
  return rep;
}

/// Invariant-factor check for a general field with user-supplied factors
/// (coefficient lists in ascending powers).
inline StructureReport corollary15_report(const EndoField& a, const std::vector<std::vector<double>>& factors,
                                          const Box& box, StructureOptions opt = {}) {
  if (factors.empty()) throw FactorError("no invariant factors supplied");
  auto pts = sample_points(box, opt.samples, opt.seed);
  const int d = a.dim();
  std::vector<EndoField> pa;
  EndoField prod = EndoField::identity(d);
  for (const auto& f : factors) {
    if (f.empty()) throw FactorError("empty factor polynomial");
    pa.push_back(polynomial_of(a, f));
    prod = prod * pa.back();
  }
  double scale = entry_scale(a, pts);
  double deg = 0;
  for (const auto& f : factors) deg += static_cast<double>(f.size() - 1);
  MaxResidual ann = max_entry_on_samples(prod, pts);
  double coef = 0.0;
  for (const auto& f : factors)
    for (double v : f) coef = std::max(coef, std::abs(v));
  if (ann.value > opt.tol * std::pow(1.0 + scale + coef, deg))
    throw FactorError("supplied factors do not annihilate the field: max |prod P(A)| = " + std::to_string(ann.value));

  StructureReport rep;
  rep.kind = "factors";
  rep.profile = rank_profile(a, box.center(), opt.rank);
  FrameOptions fo{opt.samples, opt.seed, opt.rank};
  for (std::size_t k = 0; k < pa.size(); ++k) {
    ConstancyResult c = rank_constancy(pa[k], box, opt.samples, opt.seed, opt.rank);
    Condition cond = detail::constancy_condition("constant_rank_P" + std::to_string(k + 1), c);
    rep.conditions.push_back(cond);
  }
  rep.conditions.push_back(detail::nijenhuis_condition(a, pts, opt.tol));
  for (std::size_t k = 0; k < pa.size(); ++k) {
    rep.conditions.push_back(detail::involutivity_condition(
        "involutive_ker_P" + std::to_string(k + 1), [&] { return kernel_frame(pa[k], 1, box, fo); }, box, opt));
  }
  return rep;
}

/// Orthonormal basis of Im A^a ∩ ker A^b for a numeric matrix.
inline Mat image_kernel_intersection(const Mat& a, int img_power, int ker_power, RankOptions opt = {}) {
  const int d = static_cast<int>(a.rows());
  auto pw = EndoEvaluator::powers(a, std::max(img_power, ker_power));
  Mat u = column_basis(pw[img_power], numeric_rank(pw[img_power], opt.rel_tol, opt.abs_floor).rank);
  if (u.cols() == 0) return Mat(d, 0);
  Mat k = pw[ker_power] * u;
  int r = numeric_rank(k, opt.rel_tol, opt.abs_floor).rank;
  Mat nb = null_basis(k, r);
  if (nb.cols() == 0) return Mat(d, 0);
  return column_basis(Mat(u * nb), static_cast<int>(nb.cols()));
}

}  // namespace nilchart
