#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "nilchart/field.hpp"
#include "nilchart/parse.hpp"

namespace testing_support {

using namespace nilchart;

inline EndoField parse_endo(int d, const std::vector<std::string>& rows) {
  std::vector<ScalarExpr> e;
  for (const auto& s : rows) e.push_back(parse_expression(s));
  return EndoField(d, e);
}

inline Vec at(std::initializer_list<double> v) { return to_vec(std::vector<double>(v)); }

inline Vec eval_field(const VectorField& f, const Vec& p) {
  Vec v(f.dim());
  for (int i = 0; i < f.dim(); ++i) v(i) = evaluate(f[i], p.data());
  return v;
}

inline Mat eval_endo(const EndoField& a, const Vec& p) { return EndoEvaluator(a).value(p); }

}  // namespace testing_support
