#pragma once

// Construction of an integral chart for an integrable nilpotent field: frame
// induction over charts stacked by flows, the per-step checks, and the final
// verification that Mat(A) is the constant Jordan matrix in the chart.

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilchart/chart.hpp"
#include "nilchart/field.hpp"
#include "nilchart/structure.hpp"

namespace nilchart {

class HkViolation : public std::runtime_error {
 public:
  HkViolation(int step, Condition clause)
      : std::runtime_error("induction step " + std::to_string(step) + " fails clause " + clause.name + ": " +
                           clause.detail),
        step_(step),
        clause_(std::move(clause)) {}
  int step() const { return step_; }
  const Condition& clause() const { return clause_; }

 private:
  int step_;
  Condition clause_;
};

/// Checks that the coordinate fields with labels i <= p, j <= q span
/// Im A^{n-p} meet ker A^q at every sample point.
struct AdaptedValidation {
  bool pass = true;
  bool sizes_ok = true;
  double max_gap = 0.0;
  int p = 0, q = 0;
  Vec where;
  std::string detail;
};

inline AdaptedValidation validate_adapted_chart(const EndoField& a, const AdaptedChart& chart,
                                                const Multiplicities& mult, int samples, std::uint64_t seed,
                                                double tol = 1e-8, RankOptions opt = {}) {
  AdaptedValidation out;
  const int d = a.dim(), n = chart.n;
  if (!chart.sizes_match(mult)) {
    out.pass = out.sizes_ok = false;
    out.detail = "group sizes do not match the invariant factors";
    return out;
  }
  EndoEvaluator ev(a);
  for (const Vec& x : sample_points(chart.box, samples, seed)) {
    Mat m = ev.value(x);
    for (int p = 1; p <= n; ++p)
      for (int q = 1; q <= n; ++q) {
        Mat inter = image_kernel_intersection(m, n - p, q, opt);
        std::vector<int> coords;
        for (int c = 0; c < d; ++c)
          if (chart.labels[c].i <= p && chart.labels[c].j <= q) coords.push_back(c);
        Mat e = Mat::Zero(d, static_cast<Eigen::Index>(coords.size()));
        for (std::size_t k = 0; k < coords.size(); ++k) e(coords[k], static_cast<Eigen::Index>(k)) = 1.0;
        const bool mismatch = inter.cols() != e.cols();
        double gap = mismatch ? 1.0 : containment_gap(e, inter);
        if (gap > out.max_gap) {
          out.max_gap = gap;
          out.p = p;
          out.q = q;
          out.where = x;
          out.detail = mismatch ? "Im A^" + std::to_string(n - p) + " meet ker A^" + std::to_string(q) +
                                      " has rank " + std::to_string(inter.cols()) + " but " +
                                      std::to_string(e.cols()) + " coordinates are labelled"
                                : "";
        }
        if (gap > tol) out.pass = false;
      }
  }
  if (out.pass) out.detail.clear();
  else if (out.detail.empty())
    out.detail = "coordinate fields leave Im A^" + std::to_string(n - out.p) + " meet ker A^" + std::to_string(out.q);
  return out;
}

struct JordanizerOptions {
  double step = 1e-2;            // RK4 step
  Integrator integrator = Integrator::RK4;
  double shrink = 0.8;           // chart box half-width relative to the ambient box
  int hk_samples = 30;
  int grid = 5;
  std::uint64_t seed = 1;
  double tol = 1e-6;             // structural threshold, scaled by 1 + frame scale
  double h_diff = 1e-4;          // relative to the box diameter
  bool reverse_order = false;    // compose flows in the opposite order
  int hk_max_step = 1;           // induction checks beyond this step are left to the final verification
};

/// Everything fixed before the induction starts.
struct JordanSetup {
  EndoField a;
  std::shared_ptr<const EndoEvaluator> ev;
  AdaptedChart adapted;
  Multiplicities mult;
  FrameLayout layout;
  Box ybox;  // chart coordinate box
  Mat jordan;

  JordanSetup(const EndoField& field, const AdaptedChart& chart, const Multiplicities& m, double shrink = 0.8)
      : a(field),
        ev(std::make_shared<EndoEvaluator>(field)),
        adapted(chart),
        mult(m),
        layout(make_layout(m, chart)),
        jordan(jordan_matrix(m)) {
    std::vector<Interval> iv;
    for (int c = 0; c < layout.d; ++c) {
      int x = layout.beta[c].pair;
      double mid = chart.box.center()(x) - (c < layout.flows() ? chart.section_level(x) : 0.0);
      double h = shrink * chart.box.half_width(x);
      iv.push_back({mid - h, mid + h});
    }
    ybox = Box(iv);
  }
};

/// Frame Z^(k): the fields e_m of the chart built at step k - 1.
struct FrameState {
  int k = 0;
  ChartPtr chart;
};

inline FrameState initial_frame(const JordanSetup& s) {
  return {0, std::make_shared<BaseChart>(s.ev, s.layout, s.adapted.section_level)};
}

inline ChartSettings stage_settings(const JordanSetup& s, const JordanizerOptions& opt) {
  ChartSettings cs;
  cs.flow.kind = opt.integrator;
  cs.flow.step = opt.step;
  double tmax = 0.0;
  for (int c = 0; c < s.layout.flows(); ++c)
    tmax = std::max({tmax, std::abs(s.ybox[c].lo), std::abs(s.ybox[c].hi)});
  cs.flow.fixed_steps = std::max(1, static_cast<int>(std::ceil(tmax / opt.step - 1e-12)));
  cs.flow.validate();
  cs.h_diff = opt.h_diff * s.adapted.box.diameter();
  if (opt.reverse_order)
    for (int c = s.layout.flows() - 1; c >= 0; --c) cs.order.push_back(c);
  return cs;
}

/// Pushes Z^(k) by the flows of the A^a Z^(k), a >= 1, from the section.
inline FrameState induction_step(const JordanSetup& s, const FrameState& st, const JordanizerOptions& opt) {
  return {st.k + 1, std::make_shared<FlowChart>(st.chart, s.layout, s.ev, stage_settings(s, opt))};
}

/// Residuals of the five induction clauses for Z^(k).
struct HkReport {
  int k = 0;
  std::vector<Condition> clauses;  // section, basic, order, bracket_image, bracket_generators
  double frame_scale = 0.0;
  bool pass() const {
    for (const auto& c : clauses)
      if (!c.pass) return false;
    return true;
  }
  const Condition* first_failure() const {
    for (const auto& c : clauses)
      if (!c.pass) return &c;
    return nullptr;
  }
};

namespace detail {

inline std::string frame_name(const FrameLayout& l, int a, int z) {
  std::string s = a == 0 ? "" : (a == 1 ? "A " : "A^" + std::to_string(a) + " ");
  return s + "Z" + std::to_string(z + 1);
}

inline Mat power_partial(const std::vector<Mat>& pw, const Mat& da, int q) {
  Mat out = Mat::Zero(da.rows(), da.cols());
  for (int r = 0; r < q; ++r) out += pw[r] * da * pw[q - 1 - r];
  return out;
}

struct Tracker {
  Condition c;
  std::string pair;
  void offer(double v, const Vec& where, const std::string& what) {
    if (v > c.residual || c.witness.size() == 0) {
      c.residual = std::max(c.residual, v);
      c.witness = where;
      pair = what;
    }
  }
};

}  // namespace detail

inline HkReport hk_residuals(const JordanSetup& s, const FrameState& st, int samples, std::uint64_t seed,
                             double tol) {
  const FrameLayout& l = s.layout;
  const int d = l.d, n = l.n, nz = static_cast<int>(l.z_order.size());
  const Chart& chart = *st.chart;
  HkReport rep;
  rep.k = st.k;
  detail::Tracker sec, basic, order, img, gen;
  sec.c.name = "section";
  basic.c.name = "basic";
  order.c.name = "order";
  img.c.name = "bracket_image";
  gen.c.name = "bracket_generators";

  auto kernel_rank = [&](int q) { return d - rank_profile(jordan_matrix(s.mult)).ranks[q]; };
  std::vector<Vec> pts = sample_points(s.ybox, samples, seed);
  double min_last = std::numeric_limits<double>::infinity();
  for (const Vec& y : pts) {
    Jet jt = chart.jet(y);
    Pulled pa = chart.pulled(y, true);
    auto pw = EndoEvaluator::powers(pa.a, n);
    Mat ax = s.ev->value(jt.x);
    auto pwx = EndoEvaluator::powers(ax, n);
    Mat frame(d, d);
    for (int c = 0; c < d; ++c) {
      const auto& e = l.beta[c];
      frame.col(c) = jt.j * pw[e.a].col(l.m_index(e.z));
      rep.frame_scale = std::max(rep.frame_scale, frame.col(c).norm());
    }
    // order and independence
    for (int z = 0; z < nz; ++z) {
      int o = l.z_order[z];
      Vec top = jt.j * pw[o].col(l.m_index(z));
      order.offer(top.norm(), jt.x, "A^" + std::to_string(o) + " Z" + std::to_string(z + 1));
      min_last = std::min(min_last, (jt.j * pw[o - 1].col(l.m_index(z))).norm());
    }
    NumericRank fr = numeric_rank(frame);
    if (fr.rank < d) order.offer(std::numeric_limits<double>::infinity(), jt.x, "frame rank deficient");
    // basic: A^q [Z, F] = -(d_m A^q) F for F in ker A^q
    Eigen::PartialPivLU<Mat> jlu(jt.j);
    for (int q = 1; q < n; ++q) {
      Mat fx = null_basis(pwx[q], d - kernel_rank(q));
      Mat fy = jlu.solve(fx);
      for (int z = 0; z < nz; ++z) {
        Mat dq = detail::power_partial(pw, pa.da[l.m_index(z)], q);
        Mat r = jt.j * (dq * fy);
        double v = 0.0;
        for (int c = 0; c < r.cols(); ++c) v = std::max(v, r.col(c).norm());
        basic.offer(v, jt.x, "Z" + std::to_string(z + 1) + " on ker A^" + std::to_string(q));
      }
    }
    // brackets [A^a Z_i, A^b Z_j] in chart coordinates, measured in x
    std::vector<Mat> dcol(d);  // D(A^a e_m) for each frame entry
    for (int c = 0; c < d; ++c) {
      const auto& e = l.beta[c];
      dcol[c].resize(d, d);
      for (int k = 0; k < d; ++k) dcol[c].col(k) = detail::power_partial(pw, pa.da[k], e.a).col(l.m_index(e.z));
    }
    auto image_basis = [&](int p) -> Mat {
      if (p >= n) return Mat(d, 0);
      int r = rank_profile(jordan_matrix(s.mult)).ranks[p];
      return column_basis(pwx[p], r);
    };
    Mat im1 = image_basis(st.k + 1), im2 = image_basis(st.k + 2);
    for (int c1 = 0; c1 < d; ++c1)
      for (int c2 = c1 + 1; c2 < d; ++c2) {
        const auto& e1 = l.beta[c1];
        const auto& e2 = l.beta[c2];
        Vec v1 = pw[e1.a].col(l.m_index(e1.z)), v2 = pw[e2.a].col(l.m_index(e2.z));
        Vec br = jt.j * (dcol[c2] * v1 - dcol[c1] * v2);
        std::string what = "[" + detail::frame_name(l, e1.a, e1.z) + ", " + detail::frame_name(l, e2.a, e2.z) + "]";
        img.offer(span_residual(im1, br), jt.x, what);
        if (e1.a >= 1 && e2.a >= 1) gen.offer(span_residual(im2, br), jt.x, what);
      }
  }
  // section: Z^(k) equals the coordinate field of its section coordinate
  SampleRng rng(seed ^ 0x5eC7);
  for (int t = 0; t < std::max(4, samples / 3); ++t) {
    Vec y(d);
    for (int c = 0; c < d; ++c) y(c) = c < l.flows() ? 0.0 : rng.uniform(s.ybox[c].lo, s.ybox[c].hi);
    Jet jt = chart.jet(y);
    for (int z = 0; z < nz; ++z) {
      Vec dz = jt.j.col(l.m_index(z)) - Vec::Unit(d, l.z_coord[z]);
      sec.offer(dz.norm(), jt.x, "Z" + std::to_string(z + 1));
    }
  }
  const double thr = tol * (1.0 + rep.frame_scale);
  for (detail::Tracker* t : {&sec, &basic, &order, &img, &gen}) {
    t->c.threshold = thr;
    t->c.pass = t->c.residual <= thr;
    t->c.detail = t->pair.empty() ? "no pairs" : "max at " + t->pair;
  }
  if (min_last <= thr) {
    order.c.pass = false;
    order.c.detail = "a field Z vanishes one power early";
  }
  img.c.detail += " against Im A^" + std::to_string(st.k + 1);
  gen.c.detail += " against Im A^" + std::to_string(st.k + 2);
  rep.clauses = {sec.c, basic.c, order.c, img.c, gen.c};
  return rep;
}

/// Deviation of Mat(A) in the chart from the constant Jordan matrix.
struct ChartVerification {
  double deviation = 0.0;
  Vec where_y, where_x;
  int grid_points = 0;
  double generator_brackets = 0.0;       // [A^a Z, A^b Z], a, b >= 1, at the last flow step
  std::optional<double> frame_brackets;  // full frame of the final Z, when affordable
  double max_box_excursion = 0.0;        // how far chart points leave the ambient box
  double tol = 1e-5;
  bool pass() const {
    return deviation <= tol && generator_brackets <= tol && (!frame_brackets || *frame_brackets <= tol);
  }
};

/// The final chart with its inverse.
class ChartMap {
 public:
  ChartMap(ChartPtr chart, FrameLayout layout, Box ybox)
      : chart_(std::move(chart)), layout_(std::move(layout)), ybox_(std::move(ybox)) {}
  int dim() const { return layout_.d; }
  Vec forward(const Vec& y) const { return chart_->forward(y); }
  Jet jet(const Vec& y) const { return chart_->jet(y); }
  Vec inverse(const Vec& x, std::optional<Vec> start = std::nullopt) const { return chart_inverse(*chart_, x, start); }
  Mat pulled_matrix(const Vec& y) const { return chart_->pulled(y, false).a; }
  const Chart& chart() const { return *chart_; }
  ChartPtr chart_ptr() const { return chart_; }
  const FrameLayout& layout() const { return layout_; }
  const Box& domain() const { return ybox_; }

 private:
  ChartPtr chart_;
  FrameLayout layout_;
  Box ybox_;
};

/// Chart of the final induction step: the flows of the A^a Z^(n-2), a >= 1,
/// from the section. For n = 1 the relabelled identity.
inline ChartMap build_chart(const JordanSetup& s, const FrameState& last) {
  return ChartMap(last.chart, s.layout, s.ybox);
}

inline ChartVerification verify_integral_chart(const JordanSetup& s, const ChartMap& chart,
                                               const std::vector<FrameState>& states, int grid,
                                               const JordanizerOptions& opt, double tol = 1e-5) {
  ChartVerification out;
  out.tol = tol;
  for (const Vec& y : grid_points(chart.domain(), grid)) {
    Jet jt = chart.jet(y);
    Mat m = jt.j.partialPivLu().solve(s.ev->value(jt.x) * jt.j);
    double dev = max_abs(m - s.jordan);
    if (dev > out.deviation || out.where_y.size() == 0) {
      out.deviation = std::max(out.deviation, dev);
      out.where_y = y;
      out.where_x = jt.x;
    }
    for (int i = 0; i < s.adapted.dim(); ++i) {
      const auto& iv = s.adapted.box[i];
      out.max_box_excursion = std::max({out.max_box_excursion, iv.lo - jt.x(i), jt.x(i) - iv.hi});
    }
    ++out.grid_points;
  }
  // the final flows are generated by A^a Z^(n-2); the final Z^(n-1) live in the chart itself
  const int n = s.layout.n;
  if (n >= 2) {
    const FrameState& gen_state = states[n - 2];
    HkReport g = hk_residuals(s, gen_state, std::max(8, opt.hk_samples / 2), opt.seed + 11, opt.tol);
    // with k = n - 2 the generator clause measures against Im A^n = 0, i.e. raw norms
    out.generator_brackets = g.clauses[4].residual;
  }
  if (n <= 2) {
    HkReport f = hk_residuals(s, states.back(), std::max(8, opt.hk_samples / 2), opt.seed + 13, opt.tol);
    // with k = n - 1 the image clause measures against Im A^n = 0
    out.frame_brackets = f.clauses[3].residual;
  }
  return out;
}

/// Largest distance between two charts over sampled chart coordinates.
struct ChartComparison {
  double max_distance = 0.0;
  Vec where;
  int samples = 0;
};

inline ChartComparison compare_charts(const ChartMap& a, const ChartMap& b, int samples, std::uint64_t seed) {
  ChartComparison out;
  for (const Vec& y : random_points(a.domain(), samples, seed)) {
    double dist = (a.forward(y) - b.forward(y)).norm();
    if (dist > out.max_distance || out.where.size() == 0) {
      out.max_distance = std::max(out.max_distance, dist);
      out.where = y;
    }
    ++out.samples;
  }
  return out;
}

/// Outcome of the full pipeline.
struct JordanizeResult {
  enum class Status { Ok, ConditionFailure, NotAdapted, InductionFailure, VerificationFailure };
  Status status = Status::Ok;
  std::optional<StructureReport> structure;
  std::optional<AdaptedValidation> adapted;
  std::vector<HkReport> induction;
  std::optional<ChartVerification> verification;
  std::optional<ChartMap> chart;
  std::vector<FrameState> states;
  double seconds = 0.0;
  std::string message;
  bool ok() const { return status == Status::Ok; }
};

inline std::string to_string(JordanizeResult::Status s) {
  switch (s) {
    case JordanizeResult::Status::Ok: return "ok";
    case JordanizeResult::Status::ConditionFailure: return "integrability conditions fail";
    case JordanizeResult::Status::NotAdapted: return "coordinates are not adapted";
    case JordanizeResult::Status::InductionFailure: return "induction hypothesis fails";
    default: return "verification fails";
  }
}

/// Checks the conditions, then builds and verifies an integral chart. With
/// force set the pipeline runs past failed conditions, taking the invariant
/// factors from the box centre, and stops at the first failed step instead.
inline JordanizeResult jordanize(const EndoField& a, const AdaptedChart& chart, const JordanizerOptions& opt = {},
                                 bool force = false, StructureOptions sopt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  JordanizeResult res;
  auto finish = [&](JordanizeResult::Status st, std::string msg) {
    res.status = st;
    res.message = std::move(msg);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  };
  res.structure = theorem13_report(a, chart.box, sopt);
  std::optional<Multiplicities> mult = res.structure->multiplicities;
  if (!res.structure->integrable()) {
    if (!force) return finish(JordanizeResult::Status::ConditionFailure, "integrability conditions fail");
    if (!mult) mult = invariant_factors(rank_profile(a, chart.box.center(), sopt.rank).ranks);
  }
  res.adapted = validate_adapted_chart(a, chart, *mult, std::min(sopt.samples, 50), sopt.seed);
  if (!res.adapted->pass) return finish(JordanizeResult::Status::NotAdapted, res.adapted->detail);

  JordanSetup setup(a, chart, *mult, opt.shrink);
  const int n = mult->n;
  FrameState st = initial_frame(setup);
  res.states.push_back(st);
  for (int k = 0;; ++k) {
    if (k <= opt.hk_max_step) {
      res.induction.push_back(hk_residuals(setup, st, opt.hk_samples, opt.seed + k, opt.tol));
      if (const Condition* bad = res.induction.back().first_failure())
        return finish(JordanizeResult::Status::InductionFailure,
                      "step " + std::to_string(k) + " fails clause " + bad->name + " (" + bad->detail + ")");
    }
    if (k >= n - 1) break;
    st = induction_step(setup, st, opt);
    res.states.push_back(st);
  }
  // the chart is the one whose flows produced Z^(n-1)
  res.chart = build_chart(setup, res.states.back());
  res.verification = verify_integral_chart(setup, *res.chart, res.states, opt.grid, opt);
  if (!res.verification->pass()) return finish(JordanizeResult::Status::VerificationFailure, "chart verification fails");
  return finish(JordanizeResult::Status::Ok, "ok");
}

}  // namespace nilchart
