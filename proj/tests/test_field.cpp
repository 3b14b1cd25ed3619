#include <gtest/gtest.h>

#include "nilchart/field.hpp"
#include "nilchart/parse.hpp"

using namespace nilchart;

namespace {

EndoField parse_endo(int d, const std::vector<std::string>& rows) {
  std::vector<ScalarExpr> e;
  for (const auto& s : rows) e.push_back(parse_expression(s));
  return EndoField(d, e);
}

// A(d3) = exp(x2) d1, A(d4) = d1.
EndoField ex37() {
  return parse_endo(4, {"0", "0", "exp(x2)", "1",  //
                        "0", "0", "0", "0",        //
                        "0", "0", "0", "0",        //
                        "0", "0", "0", "0"});
}

// A(d3) = exp(x2) d1, A(d4) = d2.
EndoField ex38() {
  return parse_endo(4, {"0", "0", "exp(x2)", "0",  //
                        "0", "0", "0", "1",        //
                        "0", "0", "0", "0",        //
                        "0", "0", "0", "0"});
}

// n = 3 cyclic field with the analytic compatible alpha.
EndoField ex35n3() {
  return parse_endo(3, {"0", "1", "(-x1)*x3^4/(1 + x2*x3^4)^2",  //
                        "0", "0", "1/(1 + x2*x3^4)",             //
                        "0", "0", "0"});
}

Vec at(std::initializer_list<double> v) { return to_vec(std::vector<double>(v)); }

Vec eval_field(const VectorField& f, const Vec& p) {
  Vec v(f.dim());
  for (int i = 0; i < f.dim(); ++i) v(i) = evaluate(f[i], p.data());
  return v;
}

VectorField coord(int d, int i) { return VectorField::coordinate(d, i); }

}  // namespace

TEST(ApplyEndo, Examples) {
  VectorField r = apply_endo(ex37(), coord(4, 2));
  Vec p = at({0.1, 0.7, -0.3, 0.2});
  Vec v = eval_field(r, p);
  EXPECT_DOUBLE_EQ(v(0), std::exp(0.7));
  EXPECT_EQ(v.tail(3).norm(), 0.0);

  VectorField x({parse_expression("x1*x2"), parse_expression("exp(x3)"), constant(2.0), variable(3)});
  EXPECT_EQ((eval_field(EndoField::identity(4) * x, p) - eval_field(x, p)).norm(), 0.0);
  EXPECT_EQ(eval_field(EndoField::zero(4) * x, p).norm(), 0.0);
  EXPECT_THROW(apply_endo(ex37(), coord(3, 0)), DimensionError);
}

TEST(EndoPower, Examples) {
  Box box = Box::cube(4, -1, 1);
  auto pts = sample_points(box, 50, 1);
  EXPECT_EQ(max_entry_on_samples(endo_power(ex37(), 2), pts).value, 0.0);
  auto pts3 = sample_points(Box::cube(3, -0.3, 0.3), 50, 1);
  EXPECT_LE(max_entry_on_samples(endo_power(ex35n3(), 3), pts3).value, 1e-15);
  EXPECT_GT(max_entry_on_samples(endo_power(ex35n3(), 2), pts3).value, 0.5);
  EXPECT_EQ(max_entry_on_samples(endo_power(ex37(), 0) - EndoField::identity(4), pts).value, 0.0);
  EXPECT_THROW(endo_power(ex37(), -1), std::invalid_argument);
}

TEST(LieBracket, Examples) {
  Vec p = at({0.3, -0.4, 0.5, 0.9});
  EXPECT_EQ(eval_field(lie_bracket(coord(4, 0), coord(4, 1)), p).norm(), 0.0);

  VectorField x = exp(variable(1)) * coord(4, 0);
  Vec b = eval_field(lie_bracket(x, coord(4, 1)), p);
  EXPECT_NEAR(b(0), -std::exp(-0.4), 1e-15);
  EXPECT_EQ(b.tail(3).norm(), 0.0);

  VectorField y = variable(0) * coord(1, 0);
  EXPECT_DOUBLE_EQ(evaluate(lie_bracket(y, coord(1, 0))[0], std::vector<double>{0.7}), -1.0);
}

TEST(Nijenhuis, Examples) {
  Mat m = Mat::Zero(3, 3);
  m(0, 1) = 1;
  m(1, 2) = 1;
  EndoField c = EndoField::from_constant(m);
  auto pts = sample_points(Box::cube(3, -1, 1), 20, 3);
  EXPECT_EQ(nijenhuis_residual(c, pts).value, 0.0);

  Vec p = at({0.1, 0.6, -0.2, 0.3});
  Vec n = eval_field(nijenhuis(ex38(), coord(4, 2), coord(4, 3)), p);
  EXPECT_NEAR(n(0), -std::exp(0.6), 1e-15);
  EXPECT_EQ(n.tail(3).norm(), 0.0);

  EXPECT_LE(nijenhuis_residual(ex37(), sample_points(Box::cube(4, -1, 1), 200, 1)).value, 1e-12);
  EXPECT_LE(nijenhuis_residual(ex35n3(), sample_points(Box::cube(3, -0.3, 0.3), 200, 1)).value, 1e-12);
}

TEST(Nprime, ReducesToNijenhuis) {
  SampleCheck check{Box::cube(4, -1, 1), 20, 1, 1e-9};
  Vec p = at({0.2, -0.1, 0.4, 0.5});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      Vec a = eval_field(nprime(ex38(), ex38(), coord(4, i), coord(4, j), check), p);
      Vec b = eval_field(nijenhuis(ex38(), coord(4, i), coord(4, j)), p);
      EXPECT_NEAR((a - b).norm(), 0.0, 1e-14);
    }
}

TEST(Nprime, ChecksCommutation) {
  SampleCheck check{Box::cube(4, -1, 1), 20, 1, 1e-9};
  EndoField b = EndoField::from_constant(Mat::Identity(4, 4) * 2.0);
  b(0, 1) = constant(1.0);
  EXPECT_THROW(nprime(ex38(), b, coord(4, 0), coord(4, 1), check), NonCommutingError);
  try {
    nprime(ex38(), b, coord(4, 0), coord(4, 1), check);
  } catch (const NonCommutingError& e) {
    EXPECT_GT(e.residual(), 0.5);
    EXPECT_EQ(e.where().size(), 4);
  }
}

TEST(Nprime, SquareOnCompatibleField) {
  SampleCheck check{Box::cube(3, -0.3, 0.3), 30, 2, 1e-9};
  EndoField a = ex35n3();
  EndoField a2 = endo_power(a, 2);
  std::vector<VectorField> fs;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) fs.push_back(nprime(a, a2, coord(3, i), coord(3, j), check));
  EXPECT_LE(max_norm_on_samples(fs, sample_points(check.box, 30, 2)).value, 1e-12);
}

TEST(TorsionS, Examples) {
  auto pts = sample_points(Box::cube(4, -1, 1), 30, 8);
  std::vector<VectorField> diff, idb;
  EndoField b = ex37();
  b(1, 0) = parse_expression("x1*x3");
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      VectorField x = coord(4, i), y = coord(4, j);
      diff.push_back(torsion_S(ex38(), ex38(), x, y) - 2.0 * nijenhuis(ex38(), x, y));
      diff.push_back(torsion_S(ex38(), b, x, y) - torsion_S(b, ex38(), x, y));
      idb.push_back(torsion_S(EndoField::identity(4), b, x, y));
    }
  EXPECT_LE(max_norm_on_samples(diff, pts).value, 1e-13);
  EXPECT_LE(max_norm_on_samples(idb, pts).value, 1e-13);
}

TEST(Prop22, IdentitiesHoldForAllFields) {
  struct Case {
    EndoField a;
    Box box;
  };
  std::vector<Case> cases{{ex37(), Box::cube(4, -1, 1)}, {ex38(), Box::cube(4, -1, 1)},
                          {ex35n3(), Box::cube(3, -0.3, 0.3)}};
  for (const auto& c : cases)
    for (int p = 1; p <= 3; ++p)
      for (int q = 1; q <= 3; ++q) {
        Prop22Residual r = prop22_residual(c.a, p, q, c.box, 20, 4);
        EXPECT_LE(r.max(), 1e-10) << p << "," << q;
      }
  EXPECT_THROW(prop22_residual(EndoField::identity(2), 1, 1, Box::cube(2, -1, 1), 5, 1), NotNilpotentError);
  EXPECT_THROW(prop22_residual(ex37(), 0, 1, Box::cube(4, -1, 1), 5, 1), std::invalid_argument);
}

TEST(Properties, Tensoriality) {
  auto pts = sample_points(Box::cube(3, -0.3, 0.3), 50, 9);
  ScalarExpr f = parse_expression("exp(x1 - 2*x3) + x2^2");
  EndoField a = ex35n3();
  a(0, 2) = a(0, 2) + variable(0);  // break compatibility so the tensor is nonzero
  std::vector<VectorField> fs;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      VectorField x = coord(3, i), y = coord(3, j);
      fs.push_back(nijenhuis(a, f * x, y) - f * nijenhuis(a, x, y));
      fs.push_back(nijenhuis(a, x, f * y) - f * nijenhuis(a, x, y));
      fs.push_back(nijenhuis(a, x, y) + nijenhuis(a, y, x));
      EndoField a2 = endo_power(a, 2);
      fs.push_back(nprime_expand(a, a2, x, y) + nprime_expand(a2, a, y, x));
    }
  EXPECT_LE(max_norm_on_samples(fs, pts).value, 1e-9);
  EXPECT_GT(nijenhuis_residual(a, pts).value, 1e-3);
}

TEST(EndoEvaluator, ValueAndPartials) {
  EndoEvaluator ev(ex35n3());
  Vec p = at({0.1, -0.2, 0.25});
  Mat v = ev.value(p);
  EXPECT_NEAR(v(1, 2), 1.0 / (1.0 - 0.2 * std::pow(0.25, 4)), 1e-15);
  auto d = ev.partials(p);
  const double h = 1e-6;
  for (int l = 0; l < 3; ++l) {
    Vec pp = p, pm = p;
    pp(l) += h;
    pm(l) -= h;
    Mat fd = (ev.value(pp) - ev.value(pm)) / (2 * h);
    EXPECT_LE(max_abs(fd - d[l]), 1e-8);
  }
}
