#pragma once

// Coordinate labels of flag-adapted charts, the Jordan basis layout, and the
// chart maps built by composing flows from a section.
//
// A chart maps chart coordinates y = (t_1..t_N, m_1..m_s) to points x. Each
// stage is a FlowChart stacked on the previous one: its flows run in the
// previous chart's coordinates, where the pushed fields Z are constant.

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nilchart/box.hpp"
#include "nilchart/field.hpp"
#include "nilchart/flow.hpp"
#include "nilchart/linalg.hpp"
#include "nilchart/structure.hpp"

namespace nilchart {

/// Group label (i, j) of an adapted coordinate, n >= i >= j >= 1.
struct CoordLabel {
  int i = 0, j = 0;
  bool operator==(const CoordLabel& o) const { return i == o.i && j == o.j; }
  bool operator<(const CoordLabel& o) const { return i != o.i ? i < o.i : j < o.j; }
};

struct CoordGroup {
  CoordLabel label;
  std::vector<int> coords;  // 0-based
};

/// Ambient coordinates partitioned into adapted groups, plus the working box
/// and the section level of the non-quotient coordinates.
struct AdaptedChart {
  int n = 0;
  std::vector<CoordLabel> labels;  // per coordinate
  Box box;
  Vec section_level;  // value of each coordinate with i < n on the section

  int dim() const { return static_cast<int>(labels.size()); }

  static AdaptedChart from_groups(int d, int n, const std::vector<CoordGroup>& groups, const Box& box) {
    AdaptedChart c;
    c.n = n;
    c.labels.assign(d, CoordLabel{});
    std::vector<bool> seen(d, false);
    for (const auto& g : groups) {
      if (!(g.label.i >= g.label.j && g.label.j >= 1 && g.label.i <= n))
        throw std::invalid_argument("group label (" + std::to_string(g.label.i) + "," + std::to_string(g.label.j) +
                                    ") violates n >= i >= j >= 1");
      for (int x : g.coords) {
        if (x < 0 || x >= d) throw std::invalid_argument("group coordinate out of range");
        if (seen[x]) throw std::invalid_argument("coordinate x" + std::to_string(x + 1) + " is in two groups");
        seen[x] = true;
        c.labels[x] = g.label;
      }
    }
    for (int x = 0; x < d; ++x)
      if (!seen[x]) throw std::invalid_argument("coordinate x" + std::to_string(x + 1) + " is in no group");
    if (box.dim() != d) throw std::invalid_argument("box dimension does not match the field");
    c.box = box;
    c.section_level = Vec::Zero(d);
    return c;
  }

  std::vector<CoordGroup> groups() const {
    std::map<CoordLabel, std::vector<int>> m;
    for (int x = 0; x < dim(); ++x) m[labels[x]].push_back(x);
    std::vector<CoordGroup> out;
    for (auto it = m.rbegin(); it != m.rend(); ++it) out.push_back({it->first, it->second});
    return out;
  }

  /// Group sizes as implied by the multiplicities: |x^{i,j}| = d_{n-i+j}.
  bool sizes_match(const Multiplicities& mult) const {
    if (mult.n != n) return false;
    std::map<CoordLabel, int> count;
    for (const auto& l : labels) ++count[l];
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= i; ++j) {
        auto it = count.find({i, j});
        int have = it == count.end() ? 0 : it->second;
        if (have != mult.count(n - i + j)) return false;
      }
    return true;
  }
};

/// Order of the Jordan basis beta = (A^a Z_z): power a descending, then Z
/// index ascending, keeping A^a Z_z only when a < order(Z_z). The first N
/// entries (a >= 1) are flow generators, the last s are the Z themselves.
struct FrameLayout {
  struct Entry {
    int a = 0;     // power of A
    int z = 0;     // index of Z
    int pair = 0;  // ambient coordinate carrying the same label
  };
  int n = 0, d = 0;
  std::vector<int> z_order;  // kernel order of each Z, ascending
  std::vector<int> z_coord;  // ambient coordinate of each Z (section coordinate)
  std::vector<Entry> beta;

  int flows() const { return d - static_cast<int>(z_order.size()); }
  int m_index(int z) const { return flows() + z; }
  CoordLabel label(int c) const { return {n - beta[c].a, z_order[beta[c].z] - beta[c].a}; }
};

/// Layout from multiplicities alone; section coordinates are ranked
/// positions 0..s-1 and pairs are left as chart coordinates.
inline FrameLayout make_layout(const Multiplicities& mult) {
  FrameLayout l;
  l.n = mult.n;
  l.d = mult.dim();
  for (int o = 1; o <= mult.n; ++o)
    for (int k = 0; k < mult.count(o); ++k) l.z_order.push_back(o);
  for (int a = mult.n - 1; a >= 0; --a)
    for (int z = 0; z < static_cast<int>(l.z_order.size()); ++z)
      if (l.z_order[z] > a) l.beta.push_back({a, z, static_cast<int>(l.beta.size())});
  l.z_coord.resize(l.z_order.size());
  for (std::size_t z = 0; z < l.z_order.size(); ++z) l.z_coord[z] = l.m_index(static_cast<int>(z));
  return l;
}

/// Layout bound to an adapted chart: each beta entry A^a Z_z pairs with the
/// ambient coordinate of the same rank in group (n - a, order - a).
inline FrameLayout make_layout(const Multiplicities& mult, const AdaptedChart& chart) {
  if (!chart.sizes_match(mult)) throw std::invalid_argument("adapted groups do not match the multiplicities");
  FrameLayout l = make_layout(mult);
  std::map<CoordLabel, std::vector<int>> groups;
  for (int x = 0; x < chart.dim(); ++x) groups[chart.labels[x]].push_back(x);
  // rank of Z_z among the Z of the same order
  std::vector<int> rank(l.z_order.size(), 0);
  for (std::size_t z = 1; z < l.z_order.size(); ++z)
    rank[z] = l.z_order[z] == l.z_order[z - 1] ? rank[z - 1] + 1 : 0;
  for (auto& e : l.beta) e.pair = groups[l.label(static_cast<int>(&e - l.beta.data()))][rank[e.z]];
  for (std::size_t z = 0; z < l.z_order.size(); ++z) l.z_coord[z] = l.beta[l.m_index(static_cast<int>(z))].pair;
  return l;
}

/// A^a Z_z -> A^{a+1} Z_z (or 0 at the kernel order), in the beta order.
inline Mat jordan_matrix(const Multiplicities& mult) {
  FrameLayout l = make_layout(mult);
  if (l.d > kMaxDim) throw std::invalid_argument("dimension exceeds the supported maximum");
  Mat m = Mat::Zero(l.d, l.d);
  for (int c = 0; c < l.d; ++c) {
    const auto& e = l.beta[c];
    if (e.a + 1 >= l.z_order[e.z]) continue;
    for (int r = 0; r < l.d; ++r)
      if (l.beta[r].z == e.z && l.beta[r].a == e.a + 1) m(r, c) = 1.0;
  }
  return m;
}

/// Point and differential of a chart map.
struct Jet {
  Vec x;
  Mat j;
};

/// Mat(A) in chart coordinates and, optionally, its partials.
struct Pulled {
  Mat a;
  std::vector<Mat> da;
};

class NewtonError : public std::runtime_error {
 public:
  NewtonError(const std::string& what, Vec where, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        where_(std::move(where)),
        residual_(residual) {}
  const Vec& where() const { return where_; }
  double residual() const { return residual_; }

 private:
  Vec where_;
  double residual_;
};

class Chart {
 public:
  virtual ~Chart() = default;
  virtual int dim() const = 0;
  /// -1 for the base chart, k for the chart built at induction step k.
  virtual int stage() const = 0;
  virtual Vec forward(const Vec& y) const = 0;
  virtual Jet jet(const Vec& y) const = 0;
  virtual Pulled pulled(const Vec& y, bool partials) const = 0;
  /// Starting point for inverting the chart at x.
  virtual Vec guess(const Vec& x) const = 0;
};

using ChartPtr = std::shared_ptr<const Chart>;

/// Relabelling x_{pair(c)} = y_c + level of the adapted coordinates; the
/// chart of induction step -1.
class BaseChart : public Chart {
 public:
  BaseChart(std::shared_ptr<const EndoEvaluator> a, const FrameLayout& layout, const Vec& section_level)
      : layout_(layout), ev_(std::move(a)), level_(section_level) {
    const int d = layout.d;
    off_ = Vec::Zero(d);
    for (int c = 0; c < layout.flows(); ++c) off_(c) = level_(layout.beta[c].pair);
  }
  int dim() const override { return layout_.d; }
  int stage() const override { return -1; }
  Vec forward(const Vec& y) const override {
    Vec x(layout_.d);
    for (int c = 0; c < layout_.d; ++c) x(layout_.beta[c].pair) = y(c) + off_(c);
    return x;
  }
  Jet jet(const Vec& y) const override {
    Jet out{forward(y), Mat::Zero(layout_.d, layout_.d)};
    for (int c = 0; c < layout_.d; ++c) out.j(layout_.beta[c].pair, c) = 1.0;
    return out;
  }
  Pulled pulled(const Vec& y, bool partials) const override {
    Vec x = forward(y);
    Pulled out{permute(ev_->value(x)), {}};
    if (partials) {
      auto dx = ev_->partials(x);
      for (int c = 0; c < layout_.d; ++c) out.da.push_back(permute(dx[layout_.beta[c].pair]));
    }
    return out;
  }
  Vec guess(const Vec& x) const override {
    Vec y(layout_.d);
    for (int c = 0; c < layout_.d; ++c) y(c) = x(layout_.beta[c].pair) - off_(c);
    return y;
  }
  const FrameLayout& layout() const { return layout_; }

 private:
  Mat permute(const Mat& m) const {
    const int d = layout_.d;
    Mat out(d, d);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) out(r, c) = m(layout_.beta[r].pair, layout_.beta[c].pair);
    return out;
  }
  FrameLayout layout_;
  std::shared_ptr<const EndoEvaluator> ev_;
  Vec level_;
  Vec off_;
};

/// The field A^a Z_z of the next induction step, written in the coordinates
/// of a chart in which Z_z is the coordinate field e_m.
class StageGenerator : public FieldFunction {
 public:
  StageGenerator(ChartPtr chart, int power, int m) : chart_(std::move(chart)), a_(power), m_(m) {}
  int dim() const override { return chart_->dim(); }
  Vec value(const Vec& y) const override {
    Pulled p = chart_->pulled(y, false);
    return apply_power(p.a);
  }
  Mat jacobian(const Vec& y) const override {
    Vec v;
    Mat j;
    value_and_jacobian(y, v, j);
    return j;
  }
  void value_and_jacobian(const Vec& y, Vec& v, Mat& j) const override {
    Pulled p = chart_->pulled(y, true);
    const int d = dim();
    auto pw = EndoEvaluator::powers(p.a, a_);
    v = pw[a_].col(m_);
    j.resize(d, d);
    for (int l = 0; l < d; ++l) {
      Mat dpow = Mat::Zero(d, d);
      for (int r = 0; r < a_; ++r) dpow += pw[r] * p.da[l] * pw[a_ - 1 - r];
      j.col(l) = dpow.col(m_);
    }
  }

 private:
  Vec apply_power(const Mat& a) const {
    Vec v = Vec::Unit(a.rows(), m_);
    for (int k = 0; k < a_; ++k) v = a * v;
    return v;
  }
  ChartPtr chart_;
  int a_, m_;
};

struct ChartSettings {
  FlowSettings flow;       // fixed_steps is set per chart
  double h_diff = 1e-4;    // step for central differences of Mat(A)
  std::vector<int> order;  // flow composition order, outermost first; empty = beta order
};

/// y -> Phi_{o_1}^{t} o ... o Phi_{o_N}^{t}(sigma(m)), evaluated in the
/// coordinates of the parent chart and mapped through it.
class FlowChart : public Chart {
 public:
  FlowChart(ChartPtr parent, const FrameLayout& layout, std::shared_ptr<const EndoEvaluator> a,
            ChartSettings settings)
      : parent_(std::move(parent)), layout_(layout), set_(std::move(settings)), a_(std::move(a)) {
    const int n_flows = layout_.flows();
    if (set_.order.empty())
      for (int k = 0; k < n_flows; ++k) set_.order.push_back(k);
    std::vector<int> check = set_.order;
    std::sort(check.begin(), check.end());
    for (int k = 0; k < n_flows; ++k)
      if (static_cast<int>(check.size()) != n_flows || check[k] != k)
        throw std::invalid_argument("flow order must be a permutation of the flow indices");
    for (int c = 0; c < n_flows; ++c)
      gens_.push_back(
          std::make_shared<StageGenerator>(parent_, layout_.beta[c].a, layout_.m_index(layout_.beta[c].z)));
  }

  int dim() const override { return layout_.d; }
  int stage() const override { return parent_->stage() + 1; }
  const Chart& parent() const { return *parent_; }
  const std::vector<int>& order() const { return set_.order; }

  /// Point in parent coordinates reached from the section.
  Vec inner(const Vec& y) const {
    Vec p = start(y);
    const Mat none(layout_.d, 0);
    for (auto it = set_.order.rbegin(); it != set_.order.rend(); ++it)
      p = flow_transport(*gens_[*it], p, none, y(*it), set_.flow).x;
    return p;
  }

  Vec forward(const Vec& y) const override { return parent_->forward(inner(y)); }

  Jet jet(const Vec& y) const override {
    if (auto hit = cached(y)) return *hit;
    const int d = layout_.d;
    Vec p = start(y);
    Mat c = Mat::Zero(d, d);
    for (int z = 0; z < static_cast<int>(layout_.z_order.size()); ++z) c(layout_.m_index(z), layout_.m_index(z)) = 1.0;
    for (auto it = set_.order.rbegin(); it != set_.order.rend(); ++it) {
      FlowState s = flow_transport(*gens_[*it], p, c, y(*it), set_.flow);
      p = s.x;
      c = s.cols;
      c.col(*it) = gens_[*it]->value(p);
    }
    Jet pj = parent_->jet(p);
    Jet out{pj.x, pj.j * c};
    remember(y, out);
    return out;
  }

  Pulled pulled(const Vec& y, bool partials) const override {
    Pulled out{mat_a(y), {}};
    if (partials) {
      const double h = set_.h_diff;
      for (int l = 0; l < layout_.d; ++l) {
        Vec yp = y, ym = y;
        yp(l) += h;
        ym(l) -= h;
        out.da.push_back((mat_a(yp) - mat_a(ym)) / (2.0 * h));
      }
    }
    return out;
  }

  Vec guess(const Vec& x) const override { return parent_->guess(x); }

 private:
  Vec start(const Vec& y) const {
    Vec p = y;
    for (int c = 0; c < layout_.flows(); ++c) p(c) = 0.0;
    return p;
  }
  Mat mat_a(const Vec& y) const {
    Jet j = jet(y);
    return j.j.partialPivLu().solve(a_->value(j.x) * j.j);
  }
  std::optional<Jet> cached(const Vec& y) const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : memo_)
      if (k == y) return v;
    return std::nullopt;
  }
  void remember(const Vec& y, const Jet& j) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (memo_.size() >= 64) memo_.erase(memo_.begin());
    memo_.emplace_back(y, j);
  }

  ChartPtr parent_;
  FrameLayout layout_;
  ChartSettings set_;
  std::shared_ptr<const EndoEvaluator> a_;
  std::vector<std::shared_ptr<StageGenerator>> gens_;
  mutable std::mutex mu_;
  mutable std::vector<std::pair<Vec, Jet>> memo_;
};

struct NewtonOptions {
  int max_iter = 50;
  double tol = 1e-13;
  double accept = 1e-10;
};

/// Chart coordinates of x by damped Newton on the chart map.
inline Vec chart_inverse(const Chart& chart, const Vec& x, std::optional<Vec> start = std::nullopt,
                         NewtonOptions opt = {}) {
  Vec y = start ? *start : chart.guess(x);
  Jet j = chart.jet(y);
  double res = (j.x - x).norm();
  const double goal = opt.tol * (1.0 + x.norm());
  for (int it = 0; it < opt.max_iter && res > goal; ++it) {
    Vec step = j.j.partialPivLu().solve(j.x - x);
    double lambda = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 12; ++ls) {
      Vec cand = y - lambda * step;
      Jet jc = chart.jet(cand);
      double rc = (jc.x - x).norm();
      if (std::isfinite(rc) && rc < res) {
        y = cand;
        j = jc;
        res = rc;
        improved = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!improved) break;
  }
  if (!(res <= opt.accept)) throw NewtonError("chart inverse did not converge", x, res);
  return y;
}

}  // namespace nilchart
