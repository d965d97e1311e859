#pragma once

// Index computations, Riesz projections of truncations and Toeplitz
// compressions by pseudodifferential projections.

#include <algorithm>
#include <sstream>

#include "psivar/calculus.hpp"

namespace psivar {

struct IndexReport {
  int index = 0;
  std::string method;  // winding | compression
  bool conclusive = true;
  int kernel_dim = 0, cokernel_dim = 0;
  double kernel_gap = 0, cokernel_gap = 0;  // smallest retained over largest discarded singular value
  std::vector<double> kernel_singular_values, cokernel_singular_values;  // the few smallest
  int winding_plus = 0, winding_minus = 0;
  int calibration = 1;  // sign applied to w_- - w_+
  int N = 0, N_outer = 0;
};

// Riesz projection of a truncated operator
struct CalculusProjection {
  ComplexMatrix projection;
  int rank = 0;
  int nodes = 0;
  double distance = 0;     // nearest eigenvalue to the circle
  double idempotency = 0;  // ||Pi^2 - Pi||
};

namespace detail {

inline int winding_of(const std::function<Complex(double)>& f, int samples) {
  double total = 0;
  Complex prev = f(0.0);
  for (int j = 1; j <= samples; ++j) {
    const Complex cur = f(2 * kPi * j / samples);
    if (!(std::abs(cur) > 0) || !(std::abs(prev) > 0))
      throw Error(ErrorKind::not_elliptic, "determinant vanishes on the section");
    const double d = std::arg(cur / prev);
    if (std::abs(d) > kPi / 2)
      throw Error(ErrorKind::resolution, "determinant phase jumps between samples; raise the angle count");
    total += d;
    prev = cur;
  }
  return static_cast<int>(std::lround(total / (2 * kPi)));
}

struct GapCount {
  int zeros = 0;
  double gap = 0;
  std::vector<double> smallest;
};

// zero singular values are those below rel * scale; columns beyond the row
// count are kernel by dimension
inline GapCount count_zeros(const ComplexMatrix& a, double scale, double rel) {
  GapCount g;
  const int dim = static_cast<int>(a.cols());
  if (dim == 0) {
    g.gap = std::numeric_limits<double>::infinity();
    return g;
  }
  Eigen::VectorXd s = singular_values(a);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
  full.head(s.size()) = s;
  const double cut = rel * scale;
  for (int i = std::max(0, dim - 6); i < dim; ++i) g.smallest.push_back(full(i));
  int nz = 0;
  while (nz < dim && full(dim - 1 - nz) < cut) ++nz;
  g.zeros = nz;
  const double kept = nz < dim ? full(dim - 1 - nz) : scale;
  const double dropped = nz > 0 ? full(dim - nz) : cut;
  g.gap = dropped > 0 ? kept / dropped : std::numeric_limits<double>::infinity();
  return g;
}

/// orthonormal basis of the column space
inline ComplexMatrix orthonormal_range(const ComplexMatrix& x, double rel = 1e-8) {
  if (x.cols() == 0) return ComplexMatrix(x.rows(), 0);
  Eigen::BDCSVD<ComplexMatrix> svd(x, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  int r = 0;
  while (r < s.size() && s(r) > rel * std::max(1.0, s(0))) ++r;
  return svd.matrixU().leftCols(r);
}

inline ComplexMatrix low_mode_columns(const ComplexMatrix& x, int q, int big, int m, int n) {
  std::vector<int> all(x.rows());
  for (int i = 0; i < static_cast<int>(all.size()); ++i) all[i] = i;
  return submatrix(x, all, band_indices(q, big, m, 0, n));
}

inline MatrixField block_diagonal(const MatrixField& a, const MatrixField& b) {
  const int m = a.rows(), k = b.rows();
  return MatrixField(
      a.q(), m + k, m + k,
      [a, b, m, k](std::span<const double> y, int o) {
        MatrixJet ja = a.jet(y, o), jb = b.jet(y, o);
        MatrixJet r(a.q(), ja.order(), ComplexMatrix::Zero(m + k, m + k));
        for (int i = 0; i < r.size(); ++i) {
          r.coefficients()[i].topLeftCorner(m, m) = ja.coefficients()[i];
          r.coefficients()[i].bottomRightCorner(k, k) = jb.coefficients()[i];
        }
        return r;
      },
      std::min(a.max_order(), b.max_order()), a.is_constant() && b.is_constant());
}

}  // namespace detail

/// Lambda_{a2} T Lambda_{mu + a1}^{-1}: the truncation as an order-0 matrix with trivial actions
inline TruncatedOperator normalized_operator(const TwistedSymbol& p, int n) {
  TruncatedOperator t = quantize(p, n);
  t.matrix = weighted(t.matrix, sobolev_weight(p.range_action(), 0.0, n), sobolev_weight(p.domain_action(), p.order(), n));
  t.label = p.label() + ":normalized";
  return t;
}

/// uncalibrated w_- - w_+ of det p(y, -+rho) over n_angle samples of y (q = 1)
inline IndexReport raw_winding(const TwistedSymbol& p, int n_angle = 2048, double rho = 1048576.0) {
  if (p.q() != 1) throw Error(ErrorKind::input, "winding index is defined on the circle only");
  if (p.rows() != p.cols()) throw Error(ErrorKind::shape, "index of a non-square symbol");
  const SymbolEvaluator ev = p.evaluator();
  auto det_at = [&](double eta) {
    return [&, eta](double y) {
      const std::vector<double> yy = {y}, ee = {eta};
      return ev(yy, ee).value().determinant();
    };
  };
  IndexReport r;
  r.method = "winding";
  r.winding_plus = detail::winding_of(det_at(rho), n_angle);
  r.winding_minus = detail::winding_of(det_at(-rho), n_angle);
  r.index = r.winding_minus - r.winding_plus;
  return r;
}

// Rectangular compression from ran Pi1 restricted to modes |xi| <= n into
// ran Pi2 on all modes of the truncation, and the mirror built from the
// adjoint; index = dim ker - dim coker. Pass the normalized operator.
inline IndexReport compression_index(const TruncatedOperator& p, const ComplexMatrix& pi1, const ComplexMatrix& pi2,
                                     int n, double zero_rel = 1e-8, double min_gap = 1e3) {
  const int big = p.N, q = p.q;
  if (n >= big) throw Error(ErrorKind::input, "inner truncation must be below the operator's");
  if (pi1.rows() != p.matrix.cols() || pi2.rows() != p.matrix.rows())
    throw Error(ErrorKind::shape, "projection sizes differ from the operator");
  const ComplexMatrix u1_low = detail::orthonormal_range(detail::low_mode_columns(pi1, q, big, p.domain_size, n));
  const ComplexMatrix u2_low = detail::orthonormal_range(detail::low_mode_columns(pi2, q, big, p.range_size, n));
  const ComplexMatrix u1 = detail::orthonormal_range(pi1), u2 = detail::orthonormal_range(pi2);
  const ComplexMatrix a = u2.adjoint() * p.matrix * u1_low;
  const ComplexMatrix b = u1.adjoint() * p.matrix.adjoint() * u2_low;
  const double scale = std::max(largest_singular_value(a), largest_singular_value(b));
  const detail::GapCount ka = detail::count_zeros(a, scale, zero_rel), kb = detail::count_zeros(b, scale, zero_rel);
  IndexReport r;
  r.method = "compression";
  r.N = n;
  r.N_outer = big;
  r.kernel_dim = ka.zeros;
  r.cokernel_dim = kb.zeros;
  r.index = ka.zeros - kb.zeros;
  r.kernel_gap = ka.gap;
  r.cokernel_gap = kb.gap;
  r.kernel_singular_values = ka.smallest;
  r.cokernel_singular_values = kb.smallest;
  r.conclusive = ka.gap >= min_gap && kb.gap >= min_gap;
  return r;
}

/// full projections
inline IndexReport compression_index(const TruncatedOperator& p, int n) {
  return compression_index(p, ComplexMatrix::Identity(p.matrix.cols(), p.matrix.cols()),
                           ComplexMatrix::Identity(p.matrix.rows(), p.matrix.rows()), n);
}

/// symbol level: normalized truncation at n + k
inline IndexReport compression_index(const TwistedSymbol& p, int n, int k = 8) {
  return compression_index(normalized_operator(p, n + k), n);
}

inline TwistedSymbol hardy_projection(bool plus);
inline TwistedSymbol toeplitz_completion(const TwistedSymbol& sigma, const TwistedSymbol& p1, const TwistedSymbol& p2);

/// sign that makes the winding count agree with compression_index on the Hardy shift by e^{iy}
inline int winding_calibration() {
  static const int sign = [] {
    MatrixTrigPolynomial e{1, 1, 1, {{{1}, ComplexMatrix::Constant(1, 1, 1.0)}}};
    TwistedSymbol shift(field_node(MatrixField::trig_polynomial(e)), 0.0);
    TwistedSymbol plus = hardy_projection(true);
    const int oracle = compression_index(toeplitz_completion(shift, plus, plus), 8).index;
    const int raw = raw_winding(toeplitz_completion(shift, plus, plus)).index;
    if (raw == 0 || std::abs(raw) != std::abs(oracle))
      throw Error(ErrorKind::resolution, "winding calibration on the Hardy shift failed");
    return raw == oracle ? 1 : -1;
  }();
  return sign;
}

// q = 1: the calibrated winding of the determinant on the far sections
inline IndexReport winding_index(const TwistedSymbol& p, int n_angle = 2048) {
  IndexReport r = raw_winding(p, n_angle);
  r.calibration = winding_calibration();
  r.index *= r.calibration;
  return r;
}

// (1/2 pi i) contour integral of (z - T)^{-1} over the circle of the given
// radius about center; nodes doubled until successive results agree to 1e-10
inline CalculusProjection riesz_projection(const ComplexMatrix& t, double eps = 0.5, Complex center = 1.0) {
  if (t.rows() != t.cols()) throw Error(ErrorKind::shape, "Riesz projection of a non-square matrix");
  if (!(eps > 0)) throw Error(ErrorKind::input, "contour radius must be positive");
  Eigen::ComplexEigenSolver<ComplexMatrix> es(t, false);
  double dist = std::numeric_limits<double>::infinity();
  Complex nearest = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const double d = std::abs(std::abs(es.eigenvalues()(i) - center) - eps);
    if (d < dist) {
      dist = d;
      nearest = es.eigenvalues()(i);
    }
  }
  if (dist < 1e-6) {
    std::ostringstream os;
    os << "eigenvalue " << nearest.real() << (nearest.imag() < 0 ? "" : "+") << nearest.imag() << "i lies within "
       << dist << " of the projection contour";
    throw Error(ErrorKind::contour, os.str());
  }
  const int m = static_cast<int>(t.rows());
  auto integrate = [&](int nodes) {
    Contour g = Contour::circle(center, eps, nodes);
    std::vector<ComplexMatrix> parts(nodes);
    parallel_for(nodes, [&](int j) {
      ComplexMatrix z = -t;
      z.diagonal().array() += g.nodes()[j];
      parts[j] = g.weights()[j] * z.partialPivLu().inverse();
    });
    ComplexMatrix acc = ComplexMatrix::Zero(m, m);
    for (const auto& x : parts) acc += x;
    return acc;
  };
  CalculusProjection r;
  r.distance = dist;
  ComplexMatrix prev = integrate(32);
  for (int nodes = 64; nodes <= 1 << 14; nodes *= 2) {
    ComplexMatrix cur = integrate(nodes);
    if ((cur - prev).norm() <= 1e-10 * std::max(1.0, cur.norm())) {
      r.projection = std::move(cur);
      r.nodes = nodes;
      r.rank = static_cast<int>(std::lround(r.projection.trace().real()));
      r.idempotency = (r.projection * r.projection - r.projection).norm();
      return r;
    }
    prev = std::move(cur);
  }
  throw Error(ErrorKind::ill_conditioned_contour, "projection quadrature did not converge");
}

namespace detail {

/// smooth step in eta (q = 1): 0 for eta <= lo, 1 for eta >= hi
class StepNode : public SymbolNode {
 public:
  StepNode(double lo, double hi) : SymbolNode(1, 1, 1), lo_(lo), hi_(hi) {}
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    const double t = pt.eta[0];
    ScalarJet x = coordinate_jet(1, {0, order.eta}, 1, 0, t);
    ScalarJet s = lifted(compose(x, blend_derivatives(t, lo_, hi_)), order);
    return to_matrix(s);
  }

 private:
  double lo_, hi_;
};

/// pointwise (1/2 pi i) contour integral of (z - p(y, eta))^{-1} over a fixed circle
class ResolventProjectionNode : public SymbolNode {
 public:
  ResolventProjectionNode(NodePtr p, Complex center, double radius, int nodes = 128)
      : SymbolNode(p->q(), p->rows(), p->cols()), g_(Contour::circle(center, radius, nodes)), center_(center),
        radius_(radius) {
    if (p->rows() != p->cols()) throw Error(ErrorKind::shape, "projection of a non-square symbol");
    kids_ = {std::move(p)};
  }
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const override {
    const MatrixJet& p = kids[0];
    for (const Complex& e : eigenvalues(p.value()))
      if (std::abs(std::abs(e - center_) - radius_) < 1e-6)
        throw Error(ErrorKind::contour, "symbol eigenvalue on the projection contour");
    MatrixJet acc(q_, order, ComplexMatrix::Zero(rows_, cols_));
    for (int j = 0; j < g_.size(); ++j) {
      MatrixJet z = p.restricted(order) * Complex(-1.0);
      z.value().diagonal().array() += g_.nodes()[j];
      acc.add_scaled(inverse(z), g_.weights()[j]);
    }
    return acc;
  }

 private:
  Contour g_;
  Complex center_;
  double radius_;
};

}  // namespace detail

/// projection onto modes xi >= 0 (plus = true) or xi <= -1 on the circle
inline TwistedSymbol hardy_projection(bool plus) {
  NodePtr s = plus ? NodePtr(std::make_shared<detail::StepNode>(-1.0, 0.0))
                   : sum_node({constant_node(1, ComplexMatrix::Identity(1, 1)), std::make_shared<detail::StepNode>(-1.0, 0.0)},
                              {1.0, -1.0});
  return TwistedSymbol(s, 0.0).with_label(plus ? "hardy_plus" : "hardy_minus");
}

/// symbol-level spectral projection of an order-0 symbol onto the eigenvalues inside a circle
inline TwistedSymbol spectral_projection_symbol(const TwistedSymbol& p, double eps = 0.5, Complex center = 1.0) {
  if (p.order() != 0) throw Error(ErrorKind::order, "spectral projection needs an order-0 symbol");
  return TwistedSymbol(std::make_shared<detail::ResolventProjectionNode>(p.node(), center, eps), 0.0,
                       p.domain_action(), p.range_action(), p.delta(), "projection");
}

struct ToeplitzParametrix {
  TwistedSymbol block_symbol;  // [[1 - P1, X], [P2 p P1, 1 - P2]]
  Parametrix block_parametrix;
  TwistedSymbol symbol;        // Q, the upper-right block of the block parametrix
  double restricted_min_singular = 0;
};

// Compression P2 p P1 of a symbol of weighted order 0 (growth carried by the
// actions a1, a2). With W = <eta>^{a2} P2 p P1 <eta>^{-a1}, the upper-right
// block is X = <eta>^{-a1} W^* <eta>^{a2}, and the block symbol acts with
// diag(a1, a2) on both sides.
inline ToeplitzParametrix toeplitz_parametrix(const TwistedSymbol& p, const TwistedSymbol& pr1, const TwistedSymbol& pr2,
                                              int terms, double range = 1024) {
  if (p.order() != 0) throw Error(ErrorKind::order, "Toeplitz symbols carry their growth in the actions; order must be 0");
  const int q = p.q(), m1 = p.cols(), m2 = p.rows();
  if (pr1.rows() != m1 || pr1.cols() != m1 || pr2.rows() != m2 || pr2.cols() != m2)
    throw Error(ErrorKind::shape, "projection sizes differ from the symbol");
  const MatrixField a1 = p.domain_action(), a2 = p.range_action();
  NodePtr comp = product_node(product_node(pr2.node(), p.node()), pr1.node());
  NodePtr br = bracket_node(q, 1.0);
  NodePtr w = product_node(product_node(group_power_node(br, a2), comp), group_power_node(br, -a1));
  NodePtr x = product_node(product_node(group_power_node(br, -a1), adjoint_node(w)), group_power_node(br, a2));
  ToeplitzParametrix r;
  {
    // sigma_min of W from ran P1 to ran P2 on the far sphere
    Lattice lat = Lattice::standard(q, range, 0, range);
    const SymbolEvaluator ew = TwistedSymbol(w, 0.0).evaluator(), e1 = pr1.evaluator(), e2 = pr2.evaluator();
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& y : lat.ys)
      for (const auto& d : lat.directions) {
        std::vector<double> eta(d);
        for (double& v : eta) v *= range;
        const ComplexMatrix u1 = detail::orthonormal_range(e1(y, eta).value(), 1e-6);
        const ComplexMatrix u2 = detail::orthonormal_range(e2(y, eta).value(), 1e-6);
        if (u1.cols() != u2.cols()) {
          worst = 0;
          continue;
        }
        if (u1.cols() == 0) continue;
        worst = std::min(worst, singular_values(u2.adjoint() * ew(y, eta).value() * u1).minCoeff());
      }
    r.restricted_min_singular = worst;
    if (!(worst >= 1e-6)) {
      std::ostringstream os;
      os << "compressed principal symbol is not invertible between the ranges (sigma_min " << worst << ")";
      throw Error(ErrorKind::not_invertible_on_subbundle, os.str());
    }
  }
  NodePtr id1 = constant_node(q, ComplexMatrix::Identity(m1, m1)), id2 = constant_node(q, ComplexMatrix::Identity(m2, m2));
  NodePtr c11 = sum_node({id1, pr1.node()}, {1.0, -1.0});
  NodePtr c22 = sum_node({id2, pr2.node()}, {1.0, -1.0});
  auto block = std::make_shared<AssembleNode>(q, std::vector<int>{m1, m2}, std::vector<int>{m1, m2},
                                              std::vector<std::vector<NodePtr>>{{c11, x}, {comp, c22}});
  const MatrixField act = detail::block_diagonal(a1, a2);
  const double delta = std::max({p.delta(), pr1.delta(), pr2.delta()});
  r.block_symbol = TwistedSymbol(block, 0.0, act, act, delta, "toeplitz_block");
  try {
    r.block_parametrix = parametrix_symbol(r.block_symbol, terms, range);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::not_elliptic)
      throw Error(ErrorKind::not_invertible_on_subbundle, "block symbol of the compression is not elliptic");
    throw;
  }
  NodePtr q12 = std::make_shared<BlockNode>(r.block_parametrix.symbol.node(), 0, m1, m1, m2);
  r.symbol = TwistedSymbol(q12, 0.0, a2, a1, delta, "toeplitz_parametrix");
  return r;
}

struct ToeplitzResiduals {
  int N = 0;
  double forward = 0;  // (Pi2 P Pi1)(Pi1 Q Pi2) - Pi2
  double mirror = 0;   // (Pi1 Q Pi2)(Pi2 P Pi1) - Pi1
};

// residuals in the action-weighted norms, on the band N/4 <= |xi| <= N/2
inline ToeplitzResiduals toeplitz_residuals(const TwistedSymbol& p, const ToeplitzParametrix& tp,
                                            const ComplexMatrix& pi1, const ComplexMatrix& pi2, int n) {
  const ComplexMatrix pm = quantize(p, n).matrix, qm = quantize(tp.symbol, n).matrix;
  const ComplexMatrix tpp = pi2 * pm * pi1, tq = pi1 * qm * pi2;
  const TruncatedOperator l1 = sobolev_weight(p.domain_action(), 0.0, n);
  const TruncatedOperator l2 = sobolev_weight(p.range_action(), 0.0, n);
  ToeplitzResiduals r;
  r.N = n;
  r.forward = band_norm(weighted(tpp * tq - pi2, l2, l2), p.q(), n, p.rows(), p.rows(), n / 4, n / 2);
  r.mirror = band_norm(weighted(tq * tpp - pi1, l1, l1), p.q(), n, p.cols(), p.cols(), n / 4, n / 2);
  return r;
}

/// P2 s P1 + (1 - P2)(1 - P1): square, with the index of the compression when P1 = P2
inline TwistedSymbol toeplitz_completion(const TwistedSymbol& sigma, const TwistedSymbol& p1, const TwistedSymbol& p2) {
  const int q = sigma.q(), m = sigma.rows();
  if (sigma.cols() != m) throw Error(ErrorKind::shape, "completion needs a square symbol");
  NodePtr id = constant_node(q, ComplexMatrix::Identity(m, m));
  NodePtr comp = product_node(product_node(p2.node(), sigma.node()), p1.node());
  NodePtr rest = product_node(sum_node({id, p2.node()}, {1.0, -1.0}), sum_node({id, p1.node()}, {1.0, -1.0}));
  return TwistedSymbol(sum_node({comp, rest}, {1.0, 1.0}), 0.0, sigma.delta()).with_label("toeplitz_completion");
}

struct SpectralInvarianceReport {
  int N = 0;
  double inverse_order = 0;        // column-profile order of the normalized inverse
  double expected_order = 0;       // -mu
  double parametrix_distance = 0;  // band norm of the normalized T^{-1} - Q
  double conditioning = 0;         // sigma_min / sigma_max of T
  double spectrum_shift = -1;      // order 0: eigenvalue drift between the s = 0 and s = 1 similarity transforms
  bool in_class = false;
};

namespace detail {

/// greedy matching distance between two spectra of equal size
inline double spectrum_distance(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
  double worst = 0;
  std::vector<bool> used(b.size(), false);
  for (int i = 0; i < a.size(); ++i) {
    int best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.size(); ++j)
      if (!used[j] && std::abs(a(i) - b(j)) < d) {
        d = std::abs(a(i) - b(j));
        best = j;
      }
    used[best] = true;
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace detail

// Inverts the truncation of an elliptic symbol and checks that the inverse
// behaves like an operator of order -mu close to the quantized parametrix.
// For order 0 the spectrum must not move under Lambda_s similarity.
inline SpectralInvarianceReport spectral_invariance_check(const TwistedSymbol& p, int n, int terms = 2) {
  SpectralInvarianceReport r;
  r.N = n;
  TruncatedOperator t = quantize(p, n);
  Eigen::VectorXd sv = singular_values(t.matrix);
  r.conditioning = sv(sv.size() - 1) / sv(0);
  if (r.conditioning < 1e-13) throw Error(ErrorKind::conditioning, "truncation is numerically singular");
  ComplexMatrix inv = t.matrix.partialPivLu().inverse();
  Parametrix q = parametrix_symbol(p, terms);
  ComplexMatrix qm = quantize(q.symbol, n).matrix;
  // the inverse maps H^{s + a2} -> H^{s + mu + a1}
  TruncatedOperator ldom = sobolev_weight(p.domain_action(), 0.0, n);
  TruncatedOperator lrng = sobolev_weight(p.range_action(), 0.0, n);
  ComplexMatrix w = detail::solve_right(ldom.matrix * inv, lrng.matrix);
  ComplexMatrix wd = detail::solve_right(ldom.matrix * (inv - qm), lrng.matrix);
  r.inverse_order = column_profile_order(w, p.q(), n, p.cols(), p.rows());
  r.expected_order = -p.order();
  r.parametrix_distance = band_norm(wd, p.q(), n, p.cols(), p.rows(), n / 4, n / 2);
  r.in_class = std::abs(r.inverse_order - r.expected_order) <= 0.15;
  if (p.order() == 0 && p.rows() == p.cols()) {
    const TruncatedOperator l = sobolev_weight(p.range_action(), 1.0, n);
    const ComplexMatrix similar = weighted(t.matrix, l, l);
    Eigen::ComplexEigenSolver<ComplexMatrix> e0(t.matrix, false), e1(similar, false);
    r.spectrum_shift = detail::spectrum_distance(e0.eigenvalues(), e1.eigenvalues());
    r.in_class = r.in_class && r.spectrum_shift <= 1e-8 * std::max(1.0, sv(0));
  }
  return r;
}

}  // namespace psivar
