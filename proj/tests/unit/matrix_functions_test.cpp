#include <gtest/gtest.h>

#include <random>

#include "psivar/matrix_functions.hpp"

using namespace psivar;

namespace {

ComplexMatrix mat2(Complex a, Complex b, Complex c, Complex d) {
  ComplexMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

ComplexMatrix random_matrix(std::mt19937_64& rng, int m, double radius) {
  std::normal_distribution<double> g;
  ComplexMatrix a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = Complex(g(rng), g(rng));
  double r = 0;
  for (Complex e : eigenvalues(a)) r = std::max(r, std::abs(e));
  return a * (radius / r);
}

}  // namespace

TEST(Resolvent, FrozenValues) {
  EXPECT_LT((resolvent(mat2(0, 0, 0, 1), 2.0) - mat2(0.5, 0, 0, 1)).norm(), 1e-15);
  EXPECT_LT((resolvent(ComplexMatrix::Zero(2, 2), 1.0) - ComplexMatrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_LT((resolvent(mat2(0, 1, 0, 0), 1.0) - mat2(1, 1, 0, 1)).norm(), 1e-14);
}

TEST(Resolvent, RejectsSpectrum) {
  try {
    resolvent(mat2(0, 0, 0, 1), 1.0 + 1e-12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singularity);
  }
}

TEST(GroupAction, FrozenValues) {
  const Contour g = Contour::circle(0.0, 2.0);
  std::mt19937_64 rng(1);
  ComplexMatrix d = mat2(0.5, 0, 0, -1.5);
  EXPECT_LT((group_action(d, 3.0, Contour::circle(0.0, 2.0, 128)) - mat2(std::pow(3.0, 0.5), 0, 0, std::pow(3.0, -1.5))).norm(),
            1e-12);
  EXPECT_LT((group_action(random_matrix(rng, 3, 1.0), 1.0, g) - ComplexMatrix::Identity(3, 3)).norm(),
            1e-12);
  // exp(ln(e) N) = I + N for nilpotent N
  EXPECT_LT((group_action(mat2(0, 1, 0, 0), std::exp(1.0), g) - mat2(1, 1, 0, 1)).norm(), 1e-12);
}

TEST(GroupAction, ContourChecks) {
  try {
    group_action(mat2(0, 0, 0, 1), 2.0, Contour::circle(0.0, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ill_conditioned_contour);
  }
  EXPECT_THROW(group_action(mat2(0, 0, 0, 3), 2.0, Contour::circle(0.0, 1.0)), Error);
}

TEST(GroupAction, LawsOnRandomMatrices) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.25, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    ComplexMatrix a = random_matrix(rng, 4, 2.0);
    const double r1 = u(rng), r2 = u(rng);
    ComplexMatrix lhs = group_action(a, r1 * r2);
    ComplexMatrix rhs = group_action(a, r1) * group_action(a, r2);
    EXPECT_LT((lhs - rhs).norm(), 1e-9);
    ComplexMatrix ref = eigen_power(a, r1);
    EXPECT_LT((group_action(a, r1) - ref).norm() / ref.norm(), 1e-8);
  }
}

TEST(GroupAction, QuadratureConverges) {
  ComplexMatrix a = mat2(0.3, 1.0, 0.0, -0.4);
  ComplexMatrix exact = mat2(std::pow(2.0, 0.3), (std::pow(2.0, 0.3) - std::pow(2.0, -0.4)) / 0.7, 0, std::pow(2.0, -0.4));
  double prev = 1e300;
  for (int n : {16, 32}) {
    const double err = (group_action(a, 2.0, Contour::circle(0.0, 3.0, n)) - exact).norm();
    if (prev < 1e-13) break;
    EXPECT_LT(err, prev / 10);
    prev = err;
  }
}

TEST(GroupAction, StadiumAgreesWithCircle) {
  ComplexMatrix a = mat2(-1.0, 0.5, 0.0, 1.0);
  ComplexMatrix c = group_action(a, 5.0, Contour::circle(0.0, 1.5, 128));
  ComplexMatrix s = group_action(a, 5.0, Contour::stadium(0.0, 1.0, 0.4, 0.0, 128));
  EXPECT_LT((c - s).norm(), 1e-10);
}

TEST(SpectralProjection, FrozenValues) {
  EXPECT_LT((spectral_projection(mat2(0, 0, 0, 5), Contour::circle(0.0, 0.4)) - mat2(1, 0, 0, 0)).norm(), 1e-13);
  EXPECT_LT((spectral_projection(mat2(0, 1, 0, 2), Contour::circle(0.0, 0.5)) - mat2(1, -0.5, 0, 0)).norm(), 1e-13);
}

TEST(SpectralProjection, Algebra) {
  std::mt19937_64 rng(3);
  ComplexMatrix d = ComplexMatrix::Zero(4, 4);
  d.diagonal() << 0.0, 0.1, 2.0, -2.0;
  ComplexMatrix s = random_matrix(rng, 4, 1.0) + ComplexMatrix::Identity(4, 4) * 3.0;
  ComplexMatrix a = s * d * s.inverse();
  std::vector<ComplexMatrix> p = {spectral_projection(a, Contour::circle(0.05, 0.5)),
                                  spectral_projection(a, Contour::circle(2.0, 0.5)),
                                  spectral_projection(a, Contour::circle(-2.0, 0.5))};
  ComplexMatrix sum = ComplexMatrix::Zero(4, 4);
  for (size_t j = 0; j < p.size(); ++j) {
    sum += p[j];
    EXPECT_LT((a * p[j] - p[j] * a).norm(), 1e-9);
    for (size_t k = 0; k < p.size(); ++k)
      EXPECT_LT((p[j] * p[k] - (j == k ? p[k] : ComplexMatrix(ComplexMatrix::Zero(4, 4)))).norm(), 1e-9);
  }
  EXPECT_LT((sum - ComplexMatrix::Identity(4, 4)).norm(), 1e-9);
}

TEST(EnclosingContour, SeparatesGroups) {
  std::vector<Complex> ev = {0.0, 0.1, 3.0, Complex(3.0, 0.05)};
  Contour g = enclosing_contour(ev);
  EXPECT_EQ(g.pieces().size(), 2u);
  for (Complex e : ev) EXPECT_EQ(g.winding_number(e), 1);
  EXPECT_EQ(g.winding_number(1.5), 0);
}

TEST(MatrixField, TrigPolynomialDerivatives) {
  MatrixTrigPolynomial p{1, 1, 1, {{{2}, ComplexMatrix::Constant(1, 1, 0.5)}, {{0}, ComplexMatrix::Constant(1, 1, 1.0)}}};
  MatrixField f = MatrixField::trig_polynomial(p);
  std::vector<double> y = {0.4};
  // d/dy 0.5 e^{2iy} = i e^{2iy}
  EXPECT_NEAR(std::abs(f.partial(y, {1})(0, 0) - Complex(0, 1) * std::polar(1.0, 0.8)), 0, 1e-14);
  std::vector<double> wrapped = {0.4 + 2 * kPi};
  EXPECT_LT((f(wrapped) - f(y)).norm(), 1e-13);
}

TEST(MatrixField, FiniteDifferenceFallback) {
  MatrixField f = MatrixField::from_function(1, 1, 1, [](std::span<const double> y) {
    return ComplexMatrix::Constant(1, 1, std::sin(y[0]));
  });
  std::vector<double> y = {0.7};
  EXPECT_NEAR(std::abs(f.partial(y, {1})(0, 0) - std::cos(0.7)), 0, 1e-8);
  EXPECT_NEAR(std::abs(f.partial(y, {2})(0, 0) + std::sin(0.7)), 0, 1e-6);
  EXPECT_THROW(f.partial(y, {3}), Error);
}
