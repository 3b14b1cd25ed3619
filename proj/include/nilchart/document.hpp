#pragma once

// Field files and reports as JSON documents.
//
// Field file keys: "version", "dim", "matrix" (row-major expression strings,
// entry (i, j) is component i of A(d/dx_j); a list of rows is also accepted),
// optional "groups" ([{"i", "j", "coords" (1-based)}]), "box" ([[lo, hi]]),
// "factors" (ascending coefficient lists) and "section" (level of each
// coordinate on the section).

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nilchart/chart.hpp"
#include "nilchart/field.hpp"
#include "nilchart/jordanizer.hpp"
#include "nilchart/parse.hpp"
#include "nilchart/structure.hpp"

namespace nilchart {

using Json = nlohmann::ordered_json;

inline constexpr int kDocumentVersion = 1;

class DocumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldDocument {
  int dim = 0;
  std::vector<std::string> matrix;  // row-major source strings
  EndoField a;
  std::optional<std::vector<CoordGroup>> groups;
  std::optional<Box> box;
  std::vector<std::vector<double>> factors;
  std::optional<Vec> section;

  Box box_or(const Box& fallback) const { return box ? *box : fallback; }

  /// The adapted chart on the given box, if groups are present.
  std::optional<AdaptedChart> chart(const Box& b, int n) const {
    if (!groups) return std::nullopt;
    AdaptedChart c = AdaptedChart::from_groups(dim, n, *groups, b);
    if (section) {
      if (section->size() != dim) throw DocumentError("section has " + std::to_string(section->size()) + " entries, expected " + std::to_string(dim));
      c.section_level = *section;
    }
    return c;
  }
};

namespace detail {

inline Box box_from_json(const Json& j, int d) {
  if (!j.is_array() || static_cast<int>(j.size()) != d)
    throw DocumentError("box must list " + std::to_string(d) + " intervals");
  std::vector<Interval> iv;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
      throw DocumentError("box intervals must be [lo, hi] number pairs");
    iv.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  try {
    return Box(iv);
  } catch (const std::invalid_argument& err) {
    throw DocumentError(std::string("degenerate box: ") + err.what());
  }
}

inline Json box_to_json(const Box& b) {
  Json j = Json::array();
  for (const auto& v : b.intervals()) j.push_back({v.lo, v.hi});
  return j;
}

inline Json vec_to_json(const Vec& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

}  // namespace detail

inline FieldDocument parse_field_document(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw DocumentError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DocumentError("field document must be a JSON object");
  if (j.contains("version") && j["version"] != kDocumentVersion)
    throw DocumentError("unsupported document version " + j["version"].dump());
  if (!j.contains("dim") || !j["dim"].is_number_integer()) throw DocumentError("missing integer key 'dim'");
  FieldDocument doc;
  doc.dim = j["dim"].get<int>();
  if (doc.dim < 1 || doc.dim > kMaxDim)
    throw DocumentError("dim must be between 1 and " + std::to_string(kMaxDim));
  if (!j.contains("matrix") || !j["matrix"].is_array()) throw DocumentError("missing list 'matrix'");
  const int d = doc.dim;
  for (const auto& e : j["matrix"]) {
    if (e.is_array()) {
      if (static_cast<int>(e.size()) != d) throw DocumentError("matrix rows must have " + std::to_string(d) + " entries");
      for (const auto& x : e) doc.matrix.push_back(x.is_string() ? x.get<std::string>() : x.dump());
    } else {
      doc.matrix.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    }
  }
  if (static_cast<int>(doc.matrix.size()) != d * d)
    throw DocumentError("matrix has " + std::to_string(doc.matrix.size()) + " entries, expected " + std::to_string(d * d));
  std::vector<ScalarExpr> entries;
  for (int k = 0; k < d * d; ++k) {
    try {
      ScalarExpr e = parse_expression(doc.matrix[k]);
      if (max_variable(e) >= d)
        throw DocumentError("matrix entry (" + std::to_string(k / d + 1) + "," + std::to_string(k % d + 1) +
                            ") uses x" + std::to_string(max_variable(e) + 1) + " beyond dim");
      entries.push_back(e);
    } catch (const ParseError& err) {
      throw DocumentError("matrix entry (" + std::to_string(k / d + 1) + "," + std::to_string(k % d + 1) +
                          "), column " + std::to_string(err.column()) + ": " + err.what());
    }
  }
  doc.a = EndoField(d, entries);
  if (j.contains("box")) doc.box = detail::box_from_json(j["box"], d);
  if (j.contains("groups")) {
    std::vector<CoordGroup> gs;
    for (const auto& g : j["groups"]) {
      if (!g.contains("i") || !g.contains("j") || !g.contains("coords"))
        throw DocumentError("each group needs 'i', 'j' and 'coords'");
      CoordGroup cg;
      cg.label = {g["i"].get<int>(), g["j"].get<int>()};
      for (const auto& c : g["coords"]) cg.coords.push_back(c.get<int>() - 1);
      gs.push_back(cg);
    }
    doc.groups = gs;
  }
  if (j.contains("factors"))
    for (const auto& f : j["factors"]) doc.factors.push_back(f.get<std::vector<double>>());
  if (j.contains("section")) doc.section = to_vec(j["section"].get<std::vector<double>>());
  return doc;
}

inline FieldDocument load_field_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DocumentError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_field_document(ss.str());
}

inline Json to_json(const FieldDocument& doc) {
  Json j;
  j["version"] = kDocumentVersion;
  j["dim"] = doc.dim;
  j["matrix"] = doc.matrix;
  if (doc.groups) {
    Json gs = Json::array();
    for (const auto& g : *doc.groups) {
      std::vector<int> coords;
      for (int c : g.coords) coords.push_back(c + 1);
      gs.push_back({{"i", g.label.i}, {"j", g.label.j}, {"coords", coords}});
    }
    j["groups"] = gs;
  }
  if (doc.box) j["box"] = detail::box_to_json(*doc.box);
  if (!doc.factors.empty()) j["factors"] = doc.factors;
  if (doc.section) j["section"] = detail::vec_to_json(*doc.section);
  return j;
}

/// Document for a field built in code.
inline FieldDocument make_document(const EndoField& a, std::optional<Box> box = std::nullopt,
                                   std::optional<AdaptedChart> chart = std::nullopt,
                                   std::vector<std::vector<double>> factors = {}) {
  FieldDocument doc;
  doc.dim = a.dim();
  for (const auto& e : a.entries()) doc.matrix.push_back(to_string(e));
  doc.a = a;
  doc.box = box;
  if (chart) doc.groups = chart->groups();
  doc.factors = std::move(factors);
  return doc;
}

// ---------------------------------------------------------------------------
// Reports.

inline Json to_json(const Condition& c) {
  Json j;
  j["name"] = c.name;
  j["pass"] = c.pass;
  j["evaluated"] = c.evaluated;
  j["residual"] = c.residual;
  j["threshold"] = c.threshold;
  j["witness"] = detail::vec_to_json(c.witness);
  j["detail"] = c.detail;
  return j;
}

inline Json to_json(const StructureReport& r) {
  Json j;
  j["kind"] = r.kind;
  j["ranks"] = r.profile.ranks;
  if (r.multiplicities) j["multiplicities"] = r.multiplicities->mult;
  j["integrable"] = r.integrable();
  Json cs = Json::array();
  for (const auto& c : r.conditions) cs.push_back(to_json(c));
  j["conditions"] = cs;
  return j;
}

inline Json to_json(const HkReport& h) {
  Json j;
  j["step"] = h.k;
  j["pass"] = h.pass();
  j["frame_scale"] = h.frame_scale;
  Json cs = Json::array();
  for (const auto& c : h.clauses) cs.push_back(to_json(c));
  j["clauses"] = cs;
  return j;
}

inline Json to_json(const ChartVerification& v) {
  Json j;
  j["pass"] = v.pass();
  j["tolerance"] = v.tol;
  j["grid_points"] = v.grid_points;
  j["deviation"] = v.deviation;
  j["deviation_at_chart"] = detail::vec_to_json(v.where_y);
  j["deviation_at"] = detail::vec_to_json(v.where_x);
  j["generator_brackets"] = v.generator_brackets;
  if (v.frame_brackets) j["frame_brackets"] = *v.frame_brackets;
  j["box_excursion"] = v.max_box_excursion;
  return j;
}

inline Json to_json(const AdaptedValidation& a) {
  Json j;
  j["pass"] = a.pass;
  j["max_gap"] = a.max_gap;
  if (!a.pass) {
    j["p"] = a.p;
    j["q"] = a.q;
    j["witness"] = detail::vec_to_json(a.where);
    j["detail"] = a.detail;
  }
  return j;
}

/// Report with sections conditions, induction and verification.
inline Json make_report(const std::string& command, const std::string& subject) {
  Json j;
  j["version"] = kDocumentVersion;
  j["command"] = command;
  j["subject"] = subject;
  j["status"] = "pass";
  j["conditions"] = Json::object();
  j["induction"] = Json::array();
  j["verification"] = nullptr;
  return j;
}

inline void fill_report(Json& rep, const JordanizeResult& r) {
  if (r.structure) rep["conditions"] = to_json(*r.structure);
  if (r.adapted) rep["adapted"] = to_json(*r.adapted);
  Json ind = Json::array();
  for (const auto& h : r.induction) ind.push_back(to_json(h));
  rep["induction"] = ind;
  if (r.verification) rep["verification"] = to_json(*r.verification);
  rep["status"] = r.ok() ? "pass" : "fail";
  rep["message"] = r.message;
}

/// Chart values on a grid of chart coordinates.
inline Json chart_grid(const ChartMap& chart, int k) {
  Json pts = Json::array();
  for (const Vec& y : grid_points(chart.domain(), k))
    pts.push_back({{"chart", detail::vec_to_json(y)}, {"point", detail::vec_to_json(chart.forward(y))}});
  return pts;
}

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DocumentError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

/// Numeric-tolerant structural comparison; returns the first difference.
inline std::optional<std::string> json_difference(const Json& a, const Json& b, double rel_tol,
                                                  const std::string& path = "$") {
  if (a.is_number() && b.is_number()) {
    double x = a.get<double>(), y = b.get<double>();
    if (std::abs(x - y) <= rel_tol * (1.0 + std::max(std::abs(x), std::abs(y)))) return std::nullopt;
    return path + ": " + a.dump() + " vs " + b.dump();
  }
  if (a.type() != b.type()) return path + ": type differs";
  if (a.is_object()) {
    if (a.size() != b.size()) return path + ": key count differs";
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!b.contains(it.key())) return path + ": missing key " + it.key();
      if (auto d = json_difference(it.value(), b[it.key()], rel_tol, path + "." + it.key())) return d;
    }
    return std::nullopt;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) return path + ": length differs";
    for (std::size_t i = 0; i < a.size(); ++i)
      if (auto d = json_difference(a[i], b[i], rel_tol, path + "[" + std::to_string(i) + "]")) return d;
    return std::nullopt;
  }
  if (a != b) return path + ": " + a.dump() + " vs " + b.dump();
  return std::nullopt;
}

}  // namespace nilchart
