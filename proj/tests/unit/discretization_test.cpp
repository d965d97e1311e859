#include <gtest/gtest.h>

#include "psivar/discretization.hpp"

using namespace psivar;

namespace {

MatrixField trig_scalar(int q, std::vector<std::pair<std::vector<int>, Complex>> terms) {
  MatrixTrigPolynomial p{q, 1, 1, {}};
  for (auto& [k, c] : terms) p.terms.push_back({k, ComplexMatrix::Constant(1, 1, c)});
  return MatrixField::trig_polynomial(p);
}

// 0.3 + 0.1 cos y on the diagonal, 0.05 sin y off it
MatrixField smooth_action() {
  ComplexMatrix c0 = ComplexMatrix::Zero(2, 2), cp = ComplexMatrix::Zero(2, 2), cm;
  c0(0, 0) = 0.3;
  c0(1, 1) = -0.2;
  cp(0, 0) = 0.05;
  cp(0, 1) = Complex(0, -0.025);
  cp(1, 0) = Complex(0, -0.025);
  cm = cp;
  cm(0, 1) = Complex(0, 0.025);
  cm(1, 0) = Complex(0, 0.025);
  return MatrixField::trig_polynomial({1, 2, 2, {{{0}, c0}, {{1}, cp}, {{-1}, cm}}});
}

}  // namespace

TEST(Quantize, MultiplierIsDiagonal) {
  TruncatedOperator t = quantize(multiplier(1, 1.5, ComplexMatrix::Identity(1, 1)), 8);
  ASSERT_EQ(t.matrix.rows(), 17);
  ModeSet modes(1, 8);
  for (int i = 0; i < 17; ++i) {
    const double xi = modes.mode(i)[0];
    EXPECT_NEAR(std::abs(t.matrix(i, i) - std::pow(1 + xi * xi, 0.75)), 0, 1e-12 * std::pow(1 + xi * xi, 0.75));
  }
  ComplexMatrix off = t.matrix;
  off.diagonal().setZero();
  EXPECT_LT(off.norm(), 1e-12);
}

TEST(Quantize, ExponentialFieldShifts) {
  TwistedSymbol e(field_node(trig_scalar(1, {{{1}, 1.0}})), 0.0);
  TruncatedOperator t = quantize(e, 6);
  ComplexMatrix expect = ComplexMatrix::Zero(13, 13);
  for (int i = 0; i + 1 < 13; ++i) expect(i + 1, i) = 1.0;
  EXPECT_LT((t.matrix - expect).norm(), 1e-13);

  TwistedSymbol e2(field_node(trig_scalar(2, {{{1, -2}, 1.0}})), 0.0);
  TruncatedOperator t2 = quantize(e2, 4);
  ModeSet m(2, 4);
  for (int c = 0; c < m.size(); ++c)
    for (int r = 0; r < m.size(); ++r) {
      auto a = m.mode(r), b = m.mode(c);
      const double want = (a[0] == b[0] + 1 && a[1] == b[1] - 2) ? 1.0 : 0.0;
      EXPECT_NEAR(std::abs(t2.matrix(r, c) - want), 0, 1e-13);
    }
}

TEST(Quantize, MatchesPointwiseApplication) {
  // [[<eta>^{a(y)}]] with a trig action, applied to modes away from the truncation edge
  TwistedSymbol p = bracket_power(smooth_action());
  const int n = 12;
  TruncatedOperator t = quantize(p, n);
  GridSection u(1, n, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  ModeSet modes(1, n);
  for (int i = 0; i < modes.size(); ++i)
    if (modes.inf_norm(i) <= 4) u.coeffs.segment(i * 2, 2) << Complex(g(rng), g(rng)), Complex(g(rng), g(rng));
  GridSection out(1, n, 2);
  out.coeffs = t.matrix * u.coeffs;
  // the symbol's y-spectrum decays fast; modes reaching |xi'| > n are negligible
  for (double y : {0.0, 0.4, 1.9, 3.3, 5.1}) {
    std::vector<double> yy = {y};
    ComplexVector want = apply_pointwise(p, u, yy);
    EXPECT_LT((synthesize(out, yy) - want).norm(), 1e-10 * want.norm()) << y;
  }
}

TEST(Quantize, QuarterTorusMatchesPointwise) {
  TwistedSymbol p = pointwise_product(TwistedSymbol(field_node(trig_scalar(2, {{{0, 0}, 2.0}, {{1, 1}, 0.5}})), 0.0),
                                      multiplier(2, 1.0, ComplexMatrix::Identity(1, 1)));
  const int n = 5;
  TruncatedOperator t = quantize(p, n);
  GridSection u(2, n, 1);
  ModeSet modes(2, n);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (int i = 0; i < modes.size(); ++i)
    if (modes.inf_norm(i) <= 3) u.coeffs(i) = Complex(g(rng), g(rng));
  GridSection out(2, n, 1);
  out.coeffs = t.matrix * u.coeffs;
  for (auto y : std::vector<std::vector<double>>{{0.1, 0.2}, {2.0, 5.5}, {4.4, 1.0}}) {
    ComplexVector want = apply_pointwise(p, u, y);
    EXPECT_LT((synthesize(out, y) - want).norm(), 1e-10 * want.norm());
  }
}

TEST(Quantize, UnderResolvedSymbolIsRejected) {
  // frequency 16 is representable on 34 points but sits in the aliasing band
  TwistedSymbol p(field_node(trig_scalar(1, {{{0}, 1.0}, {{16}, 0.5}})), 0.0);
  try {
    quantize(p, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::resolution);
  }
  EXPECT_NO_THROW(quantize(p, 12));
}

TEST(Quantize, RepeatableAcrossThreadCounts) {
  TwistedSymbol p = bracket_power(smooth_action());
  setenv("PSIVAR_THREADS", "1", 1);
  ComplexMatrix a = quantize(p, 10).matrix;
  unsetenv("PSIVAR_THREADS");
  ComplexMatrix b = quantize(p, 10).matrix;
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SobolevNorm, ConstantExponentClosedForm) {
  const int n = 10;
  GridSection u = power_law_source(1, n, 2, -1.0, 7);
  MatrixField a = MatrixField::diagonal(1, {0.25, -0.5});
  const double s = 0.5;
  double want = 0;
  ModeSet modes(1, n);
  for (int i = 0; i < modes.size(); ++i) {
    const double b = 1.0 + std::pow(modes.mode(i)[0], 2);
    want += std::pow(b, s + 0.25) * std::norm(u.coeffs(2 * i)) + std::pow(b, s - 0.5) * std::norm(u.coeffs(2 * i + 1));
  }
  EXPECT_NEAR(sobolev_norm(u, s, a), std::sqrt(want), 1e-12 * std::sqrt(want));
}

TEST(SobolevNorm, SourcesAgreeOnLowModes) {
  GridSection a = power_law_source(1, 8, 2, -0.7, 11), b = power_law_source(1, 16, 2, -0.7, 11);
  EXPECT_LT((b.resized(8).coeffs - a.coeffs).norm(), 1e-15);
  EXPECT_GT((power_law_source(1, 8, 2, -0.7, 12).coeffs - a.coeffs).norm(), 0.1);
}

TEST(SobolevNorm, EmbeddingSingularValuesDecay) {
  // H^{s+a} into H^{t+a}, t < s: singular values of Lambda_t Lambda_s^{-1} fall like <xi>^{t-s}
  const int n = 16;
  MatrixField a = smooth_action();
  TruncatedOperator ls = sobolev_weight(a, 1.0, n), lt = sobolev_weight(a, 0.0, n);
  Eigen::VectorXd sv = singular_values(weighted(ComplexMatrix::Identity(ls.matrix.rows(), ls.matrix.rows()), lt, ls));
  EXPECT_LT(sv(sv.size() - 1), 0.1);
  EXPECT_LT(sv(0), 1.5);
  // roughly 2 singular values per mode pair at each |xi|
  EXPECT_LT(sv(sv.size() - 1) * n, 2.0);
}

TEST(MappingBound, BracketMultiplierIsContraction) {
  const int n = 16;
  TruncatedOperator p = quantize(multiplier(1, 2.0, ComplexMatrix::Identity(1, 1)), n);
  MappingBound b = mapping_bound(p, 0.5, 2.0, MatrixField::zero(1, 1), MatrixField::zero(1, 1));
  EXPECT_NEAR(b.norm, 1.0, 1e-10);
}

TEST(MappingBound, VariableOrderOperatorStableInN) {
  MatrixField a = smooth_action();
  TwistedSymbol p = bracket_power(a);
  std::vector<double> bounds;
  for (int n : {16, 32}) {
    TruncatedOperator t = quantize(p, n);
    bounds.push_back(mapping_bound(t, 0.3, 0.0, a, MatrixField::zero(1, 2), n / 2).norm);
  }
  EXPECT_LT(std::abs(bounds[1] - bounds[0]), 0.2 * bounds[0]);
}

TEST(Duality, ConstantOrderWeightsHaveUnitConstant) {
  const int n = 8;
  MatrixField z = MatrixField::zero(1, 1);
  DualityReport r = duality_constant(sobolev_weight(z, 1.5, n), sobolev_weight(z, -1.5, n), 200, 3);
  EXPECT_NEAR(r.constant, 1.0, 1e-12);
  EXPECT_LE(r.sampled_max, r.constant * (1 + 1e-12));
}

TEST(Duality, VariableOrderConstantBoundsSamples) {
  const int n = 8;
  MatrixField a = smooth_action();
  DualityReport r = duality_constant(sobolev_weight(a, 0.5, n), sobolev_weight(-a.adjoint(), -0.5, n), 300, 9);
  EXPECT_LE(r.sampled_max, r.constant * (1 + 1e-10));
  EXPECT_LT(r.constant, 3.0);
}

TEST(Duality, PairingIsSesquilinear) {
  GridSection u = power_law_source(1, 5, 2, 0.0, 1), v = power_law_source(1, 5, 2, 0.0, 2);
  Complex a = duality_pairing(u, v);
  GridSection u2 = u;
  u2.coeffs *= Complex(0, 2);
  EXPECT_LT(std::abs(duality_pairing(u2, v) - Complex(0, 2) * a), 1e-13);
  EXPECT_LT(std::abs(duality_pairing(v, u) - std::conj(a)), 1e-13);
}

TEST(Regularity, DistinguishesSourcesInsideAndOutside) {
  // P = <D>^2 on T^1: H^{s+2} -> H^s
  const double s = 0.5;
  auto family = [](int n) { return quantize(multiplier(1, 2.0, ComplexMatrix::Identity(1, 1)), n); };
  MatrixField z = MatrixField::zero(1, 1);
  auto inside = [&](int n) { return power_law_source(1, n, 1, -s - 0.5 - 0.6, 4); };
  auto outside = [&](int n) { return power_law_source(1, n, 1, -s - 0.5 + 0.4, 4); };
  RegularityReport in = regularity_probe(family, inside, s, 2.0, z, {16, 32, 64});
  RegularityReport out = regularity_probe(family, outside, s, 2.0, z, {16, 32, 64});
  EXPECT_EQ(in.verdict, "bounded");
  EXPECT_EQ(out.verdict, "diverging");
  EXPECT_GT(in.control_slope, 0.2);
}

TEST(Profile, FitsDiagonalOrder) {
  const int n = 64;
  TruncatedOperator t = quantize(multiplier(1, -2.0, ComplexMatrix::Identity(1, 1)), n);
  EXPECT_NEAR(column_profile_order(t.matrix, 1, n, 1, 1), -2.0, 0.02);
  EXPECT_NEAR(band_norm(t.matrix, 1, n, 1, 1, n / 4, n / 2), 1.0 / (1 + 16.0 * 16.0), 1e-12);
}
