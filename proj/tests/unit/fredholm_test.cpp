#include <gtest/gtest.h>

#include "psivar/fredholm_toeplitz.hpp"

using namespace psivar;

namespace {

MatrixField scalar_trig(std::vector<std::pair<int, Complex>> terms) {
  MatrixTrigPolynomial p{1, 1, 1, {}};
  for (auto& [k, c] : terms) p.terms.push_back({{k}, ComplexMatrix::Constant(1, 1, c)});
  return MatrixField::trig_polynomial(p);
}

TwistedSymbol field_symbol(const MatrixField& f) { return TwistedSymbol(field_node(f), 0.0); }

MatrixField rotation() {
  ComplexMatrix cp(2, 2), cm(2, 2);
  cp << 0.5, Complex(0, 0.5), Complex(0, -0.5), 0.5;
  cm << 0.5, Complex(0, -0.5), Complex(0, 0.5), 0.5;
  return MatrixField::trig_polynomial({1, 2, 2, {{{1}, cp}, {{-1}, cm}}});
}

TwistedSymbol hardy_shift(int k) {
  TwistedSymbol plus = hardy_projection(true);
  return toeplitz_completion(field_symbol(scalar_trig({{k, 1.0}})), plus, plus);
}

}  // namespace

TEST(HardyProjection, QuantizesToModeProjection) {
  TruncatedOperator p = quantize(hardy_projection(true), 8), m = quantize(hardy_projection(false), 8);
  ModeSet modes(1, 8);
  for (int i = 0; i < modes.size(); ++i) {
    EXPECT_NEAR(std::abs(p.matrix(i, i)), modes.mode(i)[0] >= 0 ? 1.0 : 0.0, 1e-14);
    EXPECT_NEAR(std::abs(m.matrix(i, i)), modes.mode(i)[0] >= 0 ? 0.0 : 1.0, 1e-14);
  }
}

TEST(Index, ShiftCalibration) {
  EXPECT_EQ(winding_index(hardy_shift(1)).index, -1);
  EXPECT_EQ(winding_index(hardy_shift(-2)).index, 2);
  IndexReport a = compression_index(hardy_shift(1), 16);
  EXPECT_EQ(a.index, -1);
  EXPECT_EQ(a.kernel_dim, 0);
  EXPECT_EQ(a.cokernel_dim, 1);
  IndexReport b = compression_index(hardy_shift(-2), 16);
  EXPECT_EQ(b.index, 2);
  EXPECT_TRUE(b.conclusive);
  EXPECT_GE(std::min(b.kernel_gap, b.cokernel_gap), 1e3);
  EXPECT_EQ(winding_index(hardy_shift(1)).calibration * raw_winding(hardy_shift(1)).index, -1);
}

TEST(Index, EllipticDifferentialOperatorHasIndexZero) {
  // D + (2 + cos y) i, order 1
  TwistedSymbol p = TwistedSymbol(monomial_node(1, {1}), 1.0) +
                    field_symbol(scalar_trig({{0, Complex(0, 2)}, {1, Complex(0, 0.5)}, {-1, Complex(0, 0.5)}}));
  p = p.with_order(1.0);
  EXPECT_EQ(winding_index(p).index, 0);
  EXPECT_EQ(compression_index(p, 16).index, 0);
  // D alone has kernel and cokernel spanned by constants
  TwistedSymbol d = (TwistedSymbol(monomial_node(1, {1}), 1.0) + multiplier(1, -1000.0, ComplexMatrix::Zero(1, 1)))
                        .with_order(1.0);
  IndexReport r = compression_index(d, 16);
  EXPECT_EQ(r.kernel_dim, 1);
  EXPECT_EQ(r.cokernel_dim, 1);
}

TEST(Index, BlockDiagonalAddsIndices) {
  TwistedSymbol a = hardy_shift(1), b = hardy_shift(-2);
  auto node = std::make_shared<AssembleNode>(1, std::vector<int>{1, 1}, std::vector<int>{1, 1},
                                             std::vector<std::vector<NodePtr>>{{a.node(), nullptr}, {nullptr, b.node()}});
  TwistedSymbol p(node, 0.0);
  EXPECT_EQ(winding_index(p).index, 1);
  EXPECT_EQ(compression_index(p, 16).index, 1);
}

TEST(Index, WindingNeedsTheCircle) {
  TwistedSymbol p(bracket_node(2, 1.0), 1.0);
  EXPECT_THROW(winding_index(p), Error);
}

TEST(Riesz, ProjectsOntoEnclosedEigenvalues) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  const int n = 12;
  ComplexMatrix v(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v(i, j) = Complex(g(rng), g(rng));
  ComplexVector d(n);
  for (int i = 0; i < n; ++i) d(i) = i < 4 ? Complex(0.1 * i, 0.05) : Complex(3.0 + i, -1.0);
  ComplexMatrix t = v * d.asDiagonal() * v.inverse();
  CalculusProjection r = riesz_projection(t, 1.0, 0.0);
  EXPECT_EQ(r.rank, 4);
  EXPECT_LT((r.projection * r.projection - r.projection).norm(), 1e-9 * r.projection.norm());
  ComplexVector mask = ComplexVector::Zero(n);
  mask.head(4).setOnes();
  ComplexMatrix want = v * mask.asDiagonal() * v.inverse();
  EXPECT_LT((r.projection - want).norm(), 1e-8 * want.norm());
  EXPECT_LT(r.idempotency, 1e-8);
  try {
    riesz_projection(t, 0.2, Complex(0.0, 0.05));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contour);
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
}

TEST(Riesz, MatchesSymbolProjectionForMultiplication) {
  // R(y) diag(1, -1) R(y)^T: the truncation's projection is the symbol's projection
  MatrixField r = rotation();
  MatrixField sym = r * MatrixField::diagonal(1, {1.0, -1.0}) * r.adjoint();
  TwistedSymbol p = field_symbol(sym);
  const int n = 16;
  TruncatedOperator t = quantize(p, n);
  CalculusProjection rp = riesz_projection(t.matrix, 0.5);
  ComplexMatrix ps = quantize(spectral_projection_symbol(p, 0.5), n).matrix;
  auto band = band_indices(1, n, 2, 0, n - 4);
  EXPECT_LT(submatrix(rp.projection - ps, band, band).norm(), 1e-8);
}

TEST(Toeplitz, ParametrixInvertsCompression) {
  TwistedSymbol sigma = field_symbol(scalar_trig({{0, 2.0}, {1, 0.5}, {-1, 0.5}}));
  TwistedSymbol plus = hardy_projection(true);
  const int n = 32;
  ComplexMatrix p = quantize(plus, n).matrix;
  std::vector<double> res;
  for (int j = 0; j <= 2; ++j) {
    ToeplitzParametrix tp = toeplitz_parametrix(sigma, plus, plus, j);
    EXPECT_GT(tp.restricted_min_singular, 0.9);
    ToeplitzResiduals r = toeplitz_residuals(sigma, tp, p, p, n);
    res.push_back(std::max(r.forward, r.mirror));
  }
  EXPECT_LT(res[0], 0.05);
  EXPECT_LE(res[2], res[0] + 1e-12);
}

TEST(Toeplitz, WeightedRankOneCompression) {
  // <eta> V diag(2 + cos y, 3) V^H with unit weight on the domain, compressed to V e1
  ComplexMatrix v(2, 2);
  v << 0.6, -0.8, 0.8, 0.6;
  ComplexMatrix e1 = ComplexMatrix::Zero(2, 2);
  e1(0, 0) = 1;
  TwistedSymbol proj = field_symbol(MatrixField::constant(1, v * e1 * v.adjoint()));
  ComplexMatrix c0 = ComplexMatrix::Zero(2, 2), c1 = ComplexMatrix::Zero(2, 2);
  c0(0, 0) = 2;
  c0(1, 1) = 3;
  c1(0, 0) = 0.5;
  MatrixField d = MatrixField::trig_polynomial({1, 2, 2, {{{0}, c0}, {{1}, c1}, {{-1}, c1}}});
  MatrixField sym = MatrixField::constant(1, v) * d * MatrixField::constant(1, v.adjoint());
  TwistedSymbol p = TwistedSymbol(product_node(field_node(sym), bracket_node(1, 1.0)), 0.0)
                        .with_actions(MatrixField::diagonal(1, {1.0, 1.0}), MatrixField::zero(1, 2));
  const int n = 32;
  ToeplitzParametrix tp = toeplitz_parametrix(p, proj, proj, 2);
  ComplexMatrix pm = quantize(proj, n).matrix;
  ToeplitzResiduals r = toeplitz_residuals(p, tp, pm, pm, n);
  EXPECT_LT(r.forward, 1e-2);
  EXPECT_LT(r.mirror, 1e-2);
}

TEST(Toeplitz, VanishingSymbolIsRejected) {
  TwistedSymbol sigma = field_symbol(scalar_trig({{1, 0.5}, {-1, 0.5}}));
  TwistedSymbol plus = hardy_projection(true);
  try {
    toeplitz_parametrix(sigma, plus, plus, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_invertible_on_subbundle);
  }
}

TEST(SpectralInvariance, InverseOfEllipticOperatorIsInClass) {
  TwistedSymbol p = pointwise_product(field_symbol(scalar_trig({{0, 2.0}, {1, 0.5}, {-1, 0.5}})),
                                      TwistedSymbol(bracket_node(1, 1.0), 1.0));
  SpectralInvarianceReport r = spectral_invariance_check(p, 32);
  EXPECT_TRUE(r.in_class) << r.inverse_order;
  EXPECT_LT(r.parametrix_distance, 1e-2);
  EXPECT_LT(r.spectrum_shift, 0);
  SpectralInvarianceReport z = spectral_invariance_check(field_symbol(scalar_trig({{0, 2.0}, {1, 0.5}, {-1, 0.5}})), 16);
  EXPECT_GE(z.spectrum_shift, 0);
  EXPECT_LT(z.spectrum_shift, 1e-8);
}
