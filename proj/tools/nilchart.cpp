// Command-line driver: integrability checks, chart construction, built-in
// examples and the property self-test.
//
// Exit codes: 0 pass, 2 a condition or pipeline stage fails, 1 usage or I/O error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nilchart/corpus.hpp"
#include "nilchart/document.hpp"
#include "nilchart/jordanizer.hpp"
#include "nilchart/structure.hpp"
#include "nilchart/suites.hpp"

using namespace nilchart;

namespace {

struct Settings {
  double tol = 1e-9;
  int samples = 200;
  std::uint64_t seed = 1;
  double step = 1e-2;
  std::string box;
  std::string out;
  int grid = 5;
  std::string integrator = "rk4";
  bool force = false;
  int oracle_samples = 50;
};

constexpr int kPass = 0, kUsage = 1, kFail = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::optional<Box> parse_box(const std::string& s, int d) {
  if (s.empty()) return std::nullopt;
  auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--box expects lo,hi");
  double lo = 0, hi = 0;
  try {
    lo = std::stod(s.substr(0, comma));
    hi = std::stod(s.substr(comma + 1));
  } catch (const std::exception&) {
    throw UsageError("--box expects two numbers lo,hi");
  }
  if (!(lo < hi)) throw UsageError("--box interval is degenerate");
  return Box::cube(d, lo, hi);
}

StructureOptions structure_options(const Settings& s) { return {s.samples, s.seed, s.tol, {}}; }

JordanizerOptions jordanizer_options(const Settings& s) {
  JordanizerOptions o;
  o.step = s.step;
  o.grid = s.grid;
  o.seed = s.seed;
  try {
    o.integrator = parse_integrator(s.integrator);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return o;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string point(const Vec& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v(i));
  return s + ")";
}

void print_conditions(const StructureReport& r) {
  std::cout << "ranks " << detail::ranks_string(r.profile) << "\n";
  for (const auto& c : r.conditions) {
    std::cout << "  " << (c.evaluated ? (c.pass ? "pass" : "FAIL") : "skip") << "  " << c.name;
    if (c.evaluated) std::cout << "  residual " << fmt(c.residual) << " (threshold " << fmt(c.threshold) << ")";
    if (!c.pass && c.witness.size()) std::cout << "  at " << point(c.witness);
    if (!c.detail.empty()) std::cout << "  [" << c.detail << "]";
    std::cout << "\n";
  }
}

void print_pipeline(const JordanizeResult& r) {
  if (r.adapted && !r.adapted->pass) std::cout << "adapted chart: FAIL  " << r.adapted->detail << "\n";
  for (const auto& h : r.induction) {
    std::cout << "step " << h.k << ":\n";
    for (const auto& c : h.clauses) {
      std::cout << "  " << (c.pass ? "pass" : "FAIL") << "  " << c.name << "  residual " << fmt(c.residual);
      if (!c.pass) std::cout << "  at " << point(c.witness);
      std::cout << "  [" << c.detail << "]\n";
    }
  }
  if (r.verification) {
    const auto& v = *r.verification;
    std::cout << "verification on " << v.grid_points << " grid points: deviation " << fmt(v.deviation)
              << ", generator brackets " << fmt(v.generator_brackets);
    if (v.frame_brackets) std::cout << ", frame brackets " << fmt(*v.frame_brackets);
    std::cout << "\n";
  }
  std::cout << "result: " << to_string(r.status) << " (" << fmt(r.seconds) << " s)\n";
}

void emit(const Json& rep, const Settings& s) {
  if (!s.out.empty()) write_json(rep, s.out);
}

int status_code(const JordanizeResult& r) { return r.ok() ? kPass : kFail; }

StructureReport run_check(const EndoField& a, const Box& box, const std::vector<std::vector<double>>& factors,
                          const Settings& s) {
  if (!factors.empty()) return corollary15_report(a, factors, box, structure_options(s));
  try {
    return theorem13_report(a, box, structure_options(s));
  } catch (const NotNilpotentError& e) {
    throw UsageError(e.what());
  }
}

int cmd_check(const std::string& path, const Settings& s) {
  FieldDocument doc = load_field_document(path);
  std::optional<Box> box = parse_box(s.box, doc.dim);
  if (!box) box = doc.box;
  if (!box) throw UsageError("no box: give --box or a 'box' key");
  StructureReport r = run_check(doc.a, *box, doc.factors, s);
  print_conditions(r);
  Json rep = make_report("check", path);
  rep["conditions"] = to_json(r);
  rep["status"] = r.integrable() ? "pass" : "fail";
  emit(rep, s);
  std::cout << (r.integrable() ? "integrable" : "not integrable") << "\n";
  return r.integrable() ? kPass : kFail;
}

JordanizeResult run_pipeline(const EndoField& a, const AdaptedChart& chart, const Settings& s) {
  return jordanize(a, chart, jordanizer_options(s), s.force, structure_options(s));
}

/// Chart requires the nilpotency index, which comes from the ranks at the box center.
AdaptedChart chart_from(const FieldDocument& doc, const Box& box) {
  if (!doc.groups) throw UsageError("jordanize needs adapted coordinate 'groups' in the field file");
  int n = nilpotency_index(doc.a, box);
  if (n == 0) throw UsageError("field is not nilpotent at the box center");
  return *doc.chart(box, n);
}

int cmd_jordanize(const std::string& path, const Settings& s) {
  FieldDocument doc = load_field_document(path);
  std::optional<Box> box = parse_box(s.box, doc.dim);
  if (!box) box = doc.box;
  if (!box) throw UsageError("no box: give --box or a 'box' key");
  JordanizeResult r = run_pipeline(doc.a, chart_from(doc, *box), s);
  if (r.structure) print_conditions(*r.structure);
  print_pipeline(r);
  Json rep = make_report("jordanize", path);
  fill_report(rep, r);
  if (r.chart) rep["chart_grid"] = chart_grid(*r.chart, s.grid);
  emit(rep, s);
  return status_code(r);
}

// Built-in example extras.

Json torsion_closed_form(const CorpusEntry& e, const Settings& s) {
  VectorField n = nijenhuis(e.a, VectorField::coordinate(4, 2), VectorField::coordinate(4, 3));
  VectorField expect = VectorField::zero(4);
  expect[0] = -exp(variable(1));
  MaxResidual m = max_norm_on_samples({n - expect}, sample_points(e.box, s.samples, s.seed));
  MaxResidual size = max_norm_on_samples({n}, sample_points(e.box, s.samples, s.seed));
  std::cout << "torsion on (d3, d4) vs -exp(x2) d1: max error " << fmt(m.value) << ", max norm " << fmt(size.value)
            << "\n";
  return {{"torsion_d3_d4_error", m.value}, {"torsion_d3_d4_norm", size.value}};
}

Json cyclic_extras(const CorpusEntry& e, const JordanizeResult& r, const Settings& s) {
  Json j;
  const int n = e.cyclic->n;
  j["compatibility_residual"] = cyclic_compat_residual(*e.cyclic, e.box, s.samples, s.seed);
  if (!r.chart) return j;
  CyclicQuadratureChart oracle(*e.cyclic);
  double dist = 0.0, slope = 0.0;
  Vec at;
  for (const Vec& y : random_points(r.chart->domain(), s.oracle_samples, s.seed + 101)) {
    Jet jt = r.chart->jet(y);
    double dv = (oracle(jt.x) - y).norm();
    if (dv > dist || at.size() == 0) {
      dist = std::max(dist, dv);
      at = jt.x;
    }
    double inv = jt.j.inverse()(n - 2, n - 2);
    slope = std::max(slope, std::abs(inv - 1.0 / evaluate(e.cyclic->alpha[n - 2], jt.x.data())));
  }
  std::cout << "quadrature chart vs flow chart: max distance " << fmt(dist) << " over " << s.oracle_samples
            << " samples\n";
  std::cout << "d y_" << n - 1 << " / d x_" << n - 1 << " vs 1/alpha_" << n - 1 << ": max error " << fmt(slope)
            << "\n";
  j["oracle_distance"] = dist;
  j["oracle_distance_at"] = detail::vec_to_json(at);
  j["top_slope_error"] = slope;
  return j;
}

int cmd_corpus(const std::string& name, const Settings& s) {
  CorpusEntry e = corpus_entry(name);
  if (auto b = parse_box(s.box, e.a.dim())) {
    e.box = *b;
    if (e.chart) e.chart->box = *b;
  }
  std::cout << name << ": " << e.description << "\n";
  Json rep = make_report("corpus", name);
  Json extras = Json::object();
  int code = kPass;
  if (!e.factors.empty() || !e.chart) {
    StructureReport r = run_check(e.a, e.box, e.factors, s);
    print_conditions(r);
    rep["conditions"] = to_json(r);
    rep["status"] = r.integrable() ? "pass" : "fail";
    code = r.integrable() ? kPass : kFail;
  } else {
    JordanizeResult r = run_pipeline(e.a, *e.chart, s);
    if (r.structure) print_conditions(*r.structure);
    print_pipeline(r);
    fill_report(rep, r);
    if (e.cyclic) extras = cyclic_extras(e, r, s);
    code = status_code(r);
  }
  if (name == "example38") extras.update(torsion_closed_form(e, s));
  rep["extras"] = extras;
  emit(rep, s);
  return code;
}

int cmd_selftest(const Settings& s) {
  bool ok = true;
  auto line = [&](const std::string& what, bool pass, const std::string& info) {
    ok = ok && pass;
    std::cout << (pass ? "pass" : "FAIL") << "  " << what << "  " << info << "\n";
  };
  const int samples = std::min(s.samples, 30);
  Json rep = make_report("selftest", "corpus");
  Json lines = Json::array();
  for (const CorpusEntry& e : nilpotent_corpus()) {
    SweepResult t = torsion_identity_sweep(e.a, e.box, samples, s.seed);
    line(e.name + " torsion identities", t.value <= 1e-8, fmt(t.value) + " " + t.where);
    lines.push_back({{"field", e.name}, {"suite", "torsion_identities"}, {"residual", t.value}});
    StructureReport r = theorem13_report(e.a, e.box, {samples, s.seed, s.tol, {}});
    if (!r.find("nijenhuis")->pass || !r.find("invariant_factors")->pass) continue;
    SweepResult k = kernel_bracket_sweep(e.a, e.box, samples, s.seed);
    line(e.name + " kernel brackets", k.value <= 1e-8, fmt(k.value) + " " + k.where);
    SweepResult v = image_involutivity_sweep(e.a, e.box, samples, s.seed, {}, r.integrable());
    line(e.name + " image involutivity", v.value <= 1e-8, fmt(v.value) + " " + v.where);
    lines.push_back({{"field", e.name}, {"suite", "kernel_brackets"}, {"residual", k.value}});
    lines.push_back({{"field", e.name}, {"suite", "image_involutivity"}, {"residual", v.value}});
  }
  CorpusEntry c = corpus_entry("conjugated-constant");
  JordanizeResult r = run_pipeline(c.a, *c.chart, s);
  line("conjugated-constant chart", r.ok(), r.verification ? fmt(r.verification->deviation) : r.message);
  rep["conditions"] = {{"suites", lines}};
  rep["status"] = ok ? "pass" : "fail";
  emit(rep, s);
  return ok ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrability checks and integral charts for nilpotent endomorphism fields"};
  app.require_subcommand(1);
  Settings s;
  app.add_option("--tol", s.tol, "zero-test tolerance for the integrability conditions")->check(CLI::PositiveNumber);
  app.add_option("--samples", s.samples, "sample points per check")->check(CLI::PositiveNumber);
  app.add_option("--seed", s.seed, "sampling seed");
  app.add_option("--step", s.step, "RK4 step")->check(CLI::PositiveNumber);
  app.add_option("--box", s.box, "cube lo,hi overriding the field's box");
  app.add_option("--out", s.out, "write the JSON report here");
  app.add_option("--grid", s.grid, "verification grid points per axis")->check(CLI::Range(2, 50));
  app.add_option("--integrator", s.integrator, "rk4 or adaptive");
  app.add_option("--oracle-samples", s.oracle_samples, "samples for the quadrature comparison")
      ->check(CLI::PositiveNumber);

  std::string path, name;
  auto* check = app.add_subcommand("check", "check the integrability conditions of a field file");
  check->fallthrough();
  check->add_option("field", path, "field file")->required();
  auto* jord = app.add_subcommand("jordanize", "build and verify an integral chart");
  jord->fallthrough();
  jord->add_option("field", path, "field file")->required();
  jord->add_flag("--force", s.force, "run the construction even if the conditions fail");
  auto* corpus = app.add_subcommand("corpus", "run a built-in example end to end");
  corpus->fallthrough();
  std::string names;
  for (const auto& n : corpus_names()) names += (names.empty() ? "" : ", ") + n;
  corpus->add_option("name", name, "one of: " + names)->required();
  corpus->add_flag("--force", s.force, "run the construction even if the conditions fail");
  app.add_subcommand("selftest", "run the property suites on the built-in examples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kPass : kUsage;
  }
  try {
    if (*check) return cmd_check(path, s);
    if (*jord) return cmd_jordanize(path, s);
    if (*corpus) return cmd_corpus(name, s);
    return cmd_selftest(s);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DocumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "pipeline error: " << e.what() << "\n";
    return kFail;
  }
}
