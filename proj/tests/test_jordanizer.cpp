#include <gtest/gtest.h>

#include <cmath>

#include "nilchart/corpus.hpp"
#include "nilchart/jordanizer.hpp"

using namespace nilchart;

TEST(JordanMatrix, Examples) {
  Mat m = jordan_matrix(multiplicities_from({1, 1}));
  Mat want = Mat::Zero(3, 3);
  want(0, 2) = 1.0;
  EXPECT_EQ(m, want);
  EXPECT_EQ(jordan_matrix(multiplicities_from({4})), Mat::Zero(4, 4));
  Mat cyc = jordan_matrix(multiplicities_from({0, 0, 1}));
  Mat block = Mat::Zero(3, 3);
  block(0, 1) = block(1, 2) = 1.0;
  EXPECT_EQ(cyc, block);
}

TEST(Layout, CyclicPairsAndLabels) {
  Multiplicities m = multiplicities_from({0, 0, 1});
  AdaptedChart c = cyclic_chart(3, Box::cube(3, -1, 1));
  FrameLayout l = make_layout(m, c);
  ASSERT_EQ(l.flows(), 2);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(l.beta[k].pair, k);
    EXPECT_EQ(l.label(k), (CoordLabel{k + 1, k + 1}));
  }
  EXPECT_EQ(l.z_coord[0], 2);
}

TEST(Layout, RejectsMismatchedGroups) {
  AdaptedChart c = cyclic_chart(3, Box::cube(3, -1, 1));
  EXPECT_THROW(make_layout(multiplicities_from({1, 1}), c), std::invalid_argument);
  EXPECT_THROW(AdaptedChart::from_groups(2, 2, {{{1, 2}, {0}}, {{2, 2}, {1}}}, Box::cube(2, -1, 1)),
               std::invalid_argument);
}

TEST(ValidateAdapted, NaturalAndPermutedCoordinates) {
  CorpusEntry e = corpus_entry("example35");
  Multiplicities m = multiplicities_from({0, 0, 1});
  EXPECT_TRUE(validate_adapted_chart(e.a, *e.chart, m, 30, 1).pass);

  // swap the labels of x1 and x2
  AdaptedChart bad = AdaptedChart::from_groups(3, 3, {{{2, 2}, {0}}, {{1, 1}, {1}}, {{3, 3}, {2}}}, e.box);
  AdaptedValidation v = validate_adapted_chart(e.a, bad, m, 30, 1);
  EXPECT_FALSE(v.pass);
  EXPECT_GT(v.p, 0);
  EXPECT_GT(v.where.size(), 0);

  CorpusEntry k = corpus_entry("constant-jordan");
  EXPECT_TRUE(validate_adapted_chart(k.a, *k.chart, multiplicities_from({1, 2}), 10, 1).pass);
}

TEST(Jordanize, ConstantFieldGivesIdentityChart) {
  CorpusEntry e = corpus_entry("constant-jordan");
  JordanizeResult r = jordanize(e.a, *e.chart);
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_LE(r.verification->deviation, 1e-12);
  for (const Vec& y : random_points(r.chart->domain(), 20, 4)) EXPECT_LE((r.chart->forward(y) - y).norm(), 1e-9);
  for (const auto& h : r.induction) EXPECT_TRUE(h.pass());
}

TEST(Jordanize, ShearedTwoStepField) {
  CorpusEntry e = corpus_entry("conjugated-constant");
  StructureReport s = theorem13_report(e.a, e.box);
  EXPECT_TRUE(s.integrable());
  JordanizeResult r = jordanize(e.a, *e.chart);
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_LE(r.verification->deviation, 1e-5);
  ASSERT_TRUE(r.verification->frame_brackets.has_value());
  EXPECT_LE(*r.verification->frame_brackets, 1e-5);
  EXPECT_EQ(r.verification->grid_points, 125);

  // the final Z commute with everything: clause 4 at k = 1 is a raw norm
  ASSERT_EQ(r.induction.size(), 2u);
  EXPECT_LE(r.induction[1].clauses[3].residual, 1e-6);

  // the chart differs from the known one by a map preserving the Jordan matrix
  Mat m = e.conjugated->m;
  Program psi(e.conjugated->inverse);
  for (const Vec& y : random_points(r.chart->domain(), 10, 8)) {
    Jet j = r.chart->jet(y);
    Mat dpsi(3, 3);
    for (int l = 0; l < 3; ++l) {
      Vec xp = j.x, xm = j.x;
      xp(l) += 1e-5;
      xm(l) -= 1e-5;
      std::vector<double> a(3), b(3);
      psi.eval(xp.data(), a.data());
      psi.eval(xm.data(), b.data());
      for (int i = 0; i < 3; ++i) dpsi(i, l) = (a[i] - b[i]) / 2e-5;
    }
    Mat t = dpsi * j.j;
    EXPECT_LE(max_abs(t * m - m * t), 1e-6);
  }
}

TEST(Jordanize, InverseRoundTrip) {
  CorpusEntry e = corpus_entry("conjugated-constant");
  JordanizeResult r = jordanize(e.a, *e.chart);
  ASSERT_TRUE(r.ok());
  for (const Vec& y : random_points(r.chart->domain(), 10, 5)) {
    Vec x = r.chart->forward(y);
    EXPECT_LE((r.chart->inverse(x) - y).norm(), 1e-9);
  }
}

TEST(Jordanize, TorsionFieldFailsFirstStep) {
  CorpusEntry e = corpus_entry("example38");
  JordanizeResult plain = jordanize(e.a, *e.chart);
  EXPECT_EQ(plain.status, JordanizeResult::Status::ConditionFailure);

  JordanizeResult r = jordanize(e.a, *e.chart, {}, true);
  ASSERT_EQ(r.status, JordanizeResult::Status::InductionFailure);
  ASSERT_EQ(r.induction.size(), 1u);
  const Condition* bad = r.induction[0].first_failure();
  ASSERT_NE(bad, nullptr);
  EXPECT_EQ(bad->name, "bracket_generators");
  EXPECT_NE(bad->detail.find("[A Z1, A Z2]"), std::string::npos) << bad->detail;
  EXPECT_GT(bad->residual, 0.3);
  // clause 4 holds: the bracket lies in Im A
  EXPECT_TRUE(r.induction[0].clauses[3].pass);
}

TEST(Jordanize, CyclicTwoStep) {
  CorpusEntry e = corpus_entry("example35-n2");
  JordanizeResult r = jordanize(e.a, *e.chart);
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_LE(r.verification->deviation, 1e-5);
  // d y_1 / d x_1 = 1 / alpha_1
  for (const Vec& y : random_points(r.chart->domain(), 10, 3)) {
    Jet j = r.chart->jet(y);
    Mat inv = j.j.inverse();
    double a1 = evaluate(e.cyclic->alpha[0], j.x.data());
    EXPECT_NEAR(inv(0, 0), 1.0 / a1, 1e-6);
  }
}

TEST(InductionChecks, StepZeroExactForCoordinateFrames) {
  CorpusEntry e = corpus_entry("example35");
  JordanSetup s(e.a, *e.chart, multiplicities_from({0, 0, 1}));
  HkReport h = hk_residuals(s, initial_frame(s), 20, 3, 1e-6);
  EXPECT_TRUE(h.pass());
  EXPECT_EQ(h.clauses[0].residual, 0.0);
  EXPECT_LE(h.clauses[3].residual, 1e-12);
}

// Three induction steps on a visibly nonlinear cyclic field, against the
// quadrature chart.
TEST(Jordanize, CyclicThreeStepMatchesQuadrature) {
  CyclicSpec spec = CyclicSpec::from_theta(3, 1, true);
  Box box = Box::cube(3, -0.5, 0.5);
  EndoField a = cyclic_field(spec);
  JordanizerOptions opt;
  opt.step = 0.04;
  opt.grid = 3;
  opt.hk_samples = 8;
  JordanizeResult r = jordanize(a, cyclic_chart(3, box), opt, false, {50, 1, 1e-9, {}});
  ASSERT_TRUE(r.ok()) << r.message;
  EXPECT_LE(r.verification->deviation, 1e-5);
  ASSERT_EQ(r.induction.size(), 2u);
  EXPECT_LE(r.induction[1].clauses[3].residual, 1e-6);

  CyclicQuadratureChart oracle(spec, 1 << 8);
  double far = 0.0;
  for (const Vec& y : random_points(r.chart->domain(), 6, 2)) {
    Vec x = r.chart->forward(y);
    EXPECT_LE((oracle(x) - y).norm(), 1e-5);
    far = std::max(far, (x - y).norm());
  }
  EXPECT_GT(far, 1e-3);  // the chart is not a relabelling
}
