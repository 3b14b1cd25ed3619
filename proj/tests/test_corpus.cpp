#include <gtest/gtest.h>

#include <cmath>

#include "nilchart/corpus.hpp"
#include "nilchart/jordanizer.hpp"

using namespace nilchart;

namespace {

double nijenhuis_max(const EndoField& a, const Box& box, int samples, std::uint64_t seed) {
  return nijenhuis_residual(a, sample_points(box, samples, seed)).value;
}

}  // namespace

TEST(Cyclic, FieldShape) {
  CyclicSpec s = CyclicSpec::constant_alpha({0.5, 2.0});
  EndoField a = cyclic_field(s);
  Mat m = EndoEvaluator(a).value(Vec::Zero(3));
  Mat want(3, 3);
  want << 0, 1, 0.5, 0, 0, 2, 0, 0, 0;
  EXPECT_EQ(m, want);
  EXPECT_THROW(cyclic_field(CyclicSpec{3, {constant(1.0)}}), std::invalid_argument);
}

TEST(Cyclic, PositivityChecked) {
  CyclicSpec s = CyclicSpec::constant_alpha({-1.0});
  EXPECT_THROW(check_cyclic_positive(s, Box::cube(2, -1, 1)), PositivityError);
}

TEST(Cyclic, CompatibilityMatchesTorsion) {
  Box box = Box::cube(3, -0.5, 0.5);
  // constants and functions of x_n alone
  for (CyclicSpec s : {CyclicSpec::constant_alpha({0.3, 1.5}),
                       CyclicSpec{3, {exp(variable(2)), 2.0 + pow(variable(2), 2)}}}) {
    EXPECT_EQ(cyclic_compat_residual(s, box, 50, 1), 0.0);
    EXPECT_LE(nijenhuis_max(cyclic_field(s), box, 50, 1), 1e-12);
  }
  // generated family: compatible and torsion-free
  CyclicSpec g = CyclicSpec::from_theta(3, 3, true);
  EXPECT_LE(cyclic_compat_residual(g, box, 100, 2), 1e-12);
  EXPECT_LE(nijenhuis_max(cyclic_field(g), box, 100, 2), 1e-12);
  // alpha_1 = x_1 breaks d_1 alpha_1 = d_2 alpha_2: both residuals are nonzero
  CyclicSpec bad{3, {variable(0), constant(1.0)}};
  EXPECT_GT(cyclic_compat_residual(bad, box, 50, 1), 0.5);
  EXPECT_GT(nijenhuis_max(cyclic_field(bad), box, 50, 1), 0.5);
}

TEST(Cyclic, RecursionForP) {
  CyclicSpec s{3, {variable(0) + 2.0, 1.0 + pow(variable(2), 2)}};
  auto p = cyclic_P(s);
  ASSERT_EQ(p.size(), 2u);
  Vec x(3);
  x << 0.3, -0.2, 0.7;
  double a1 = 2.3, a2 = 1.49;
  EXPECT_NEAR(evaluate(p[0], x.data()), 1.0 / a2, 1e-15);
  EXPECT_NEAR(evaluate(p[1], x.data()), -(a1 / a2) / a2, 1e-15);
  EXPECT_EQ(cyclic_P(CyclicSpec::constant_alpha({2.0})).size(), 1u);
}

TEST(Quadrature, GeneratedFamily) {
  CyclicSpec s = CyclicSpec::from_theta(3, 1, true);
  CyclicQuadratureChart q(s);
  EXPECT_THROW(CyclicQuadratureChart(s, 7), QuadratureError);
  for (const Vec& x : random_points(Box::cube(3, -0.5, 0.5), 10, 6)) {
    Vec y = q(x);
    EXPECT_EQ(y(2), x(2));
    // y_2 = x_2 + x_2^2 theta / 2 with theta = x_3^2
    double th = x(2) * x(2);
    EXPECT_NEAR(y(1), x(1) + 0.5 * x(1) * x(1) * th, 1e-12);
  }
  // section: y_i = 0 when x_1 = x_2 = 0
  Vec sx(3);
  sx << 0.0, 0.0, 0.4;
  EXPECT_EQ(q(sx)(0), 0.0);
  EXPECT_EQ(q(sx)(1), 0.0);
}

TEST(Quadrature, ConstantAlphaGivesAffineChartWithConstantMatrix) {
  CyclicSpec s = CyclicSpec::constant_alpha({0.5, 2.0});
  CyclicQuadratureChart q(s, 16);
  EndoEvaluator ev(cyclic_field(s));
  Mat target = jordan_matrix(multiplicities_from({0, 0, 1}));
  for (const Vec& x : random_points(Box::cube(3, -1, 1), 5, 2)) {
    Mat dy(3, 3);
    for (int l = 0; l < 3; ++l) {
      Vec xp = x, xm = x;
      xp(l) += 1e-3;
      xm(l) -= 1e-3;
      dy.col(l) = (q(xp) - q(xm)) / 2e-3;
    }
    EXPECT_LE(max_abs(dy * ev.value(x) * dy.inverse() - target), 1e-10);
  }
}

TEST(FourDim, RankProfilesAndTorsion) {
  Box box = Box::cube(4, -1, 1);
  EndoField a = torsion_free_nonintegrable_field(), b = involutive_torsion_field();
  EXPECT_EQ(rank_profile(a, box.center()).ranks, (std::vector<int>{4, 1, 0, 0, 0}));
  EXPECT_EQ(rank_profile(b, box.center()).ranks, (std::vector<int>{4, 2, 0, 0, 0}));
  StructureReport ra = theorem13_report(a, box);
  EXPECT_TRUE(ra.find("invariant_factors")->pass);
  EXPECT_TRUE(ra.find("nijenhuis")->pass);
  EXPECT_FALSE(ra.find("involutive_ker_A^1")->pass);
  VectorField n = nijenhuis(b, VectorField::coordinate(4, 2), VectorField::coordinate(4, 3));
  Vec x(4);
  x << 0.1, 0.7, -0.3, 0.2;
  EXPECT_NEAR(evaluate(n[0], x.data()), -std::exp(0.7), 1e-14);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(evaluate(n[i], x.data()), 0.0);
}

TEST(Conjugated, DegreeZeroIsConstant) {
  Multiplicities m = multiplicities_from({1, 1});
  ConjugatedField c = conjugated_nilpotent(m, 5, 0);
  EXPECT_EQ(EndoEvaluator(c.a).value(Vec::Constant(3, 0.3)), jordan_matrix(m));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(to_string(c.inverse[i]), to_string(variable(i)));
}

TEST(Conjugated, TorsionFreeForAnySeed) {
  Multiplicities m = multiplicities_from({1, 1});
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    ConjugatedField c = conjugated_nilpotent(m, seed, 2);
    Box box = Box::cube(3, -0.5, 0.5);
    EXPECT_LE(nijenhuis_max(c.a, box, 100, seed), 1e-9);
    EXPECT_TRUE(theorem13_report(c.a, box, {50, seed, 1e-9, {}}).integrable());
    // the known chart carries A to the constant matrix
    Program psi(c.inverse);
    EndoEvaluator ev(c.a);
    for (const Vec& x : random_points(box, 4, seed)) {
      Mat dpsi(3, 3);
      for (int l = 0; l < 3; ++l) {
        Vec xp = x, xm = x;
        xp(l) += 1e-5;
        xm(l) -= 1e-5;
        std::vector<double> u(3), v(3);
        psi.eval(xp.data(), u.data());
        psi.eval(xm.data(), v.data());
        for (int i = 0; i < 3; ++i) dpsi(i, l) = (u[i] - v[i]) / 2e-5;
      }
      EXPECT_LE(max_abs(dpsi * ev.value(x) * dpsi.inverse() - c.m), 1e-8);
    }
  }
}

TEST(Conjugated, LargerFlagStaysAdapted) {
  Multiplicities m = multiplicities_from({1, 1, 1});
  ConjugatedField c = conjugated_nilpotent(m, 3, 2);
  Box box = Box::cube(6, -0.4, 0.4);
  EXPECT_TRUE(validate_adapted_chart(c.a, jordan_basis_chart(m, box), m, 20, 1).pass);
}

TEST(Registry, AllNamesBuild) {
  for (const auto& name : corpus_names()) {
    CorpusEntry e = corpus_entry(name);
    EXPECT_EQ(e.a.dim(), e.box.dim()) << name;
  }
  EXPECT_THROW(corpus_entry("nope"), std::invalid_argument);
}

TEST(Registry, BlockFieldPassesWithFactors) {
  CorpusEntry e = corpus_entry("block-diagonal");
  StructureReport r = corollary15_report(e.a, e.factors, e.box, {50, 1, 1e-9, {}});
  EXPECT_TRUE(r.integrable());
}
