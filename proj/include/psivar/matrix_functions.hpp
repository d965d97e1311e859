#pragma once

// Resolvents, Dunford integrals for rho^a and spectral projections, and
// periodic matrix fields with Taylor-jet access.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psivar/errors.hpp"
#include "psivar/jet.hpp"

namespace psivar {

constexpr double kPi = 3.14159265358979323846;

/// eigenvalues from a complex Schur form
inline std::vector<Complex> eigenvalues(const ComplexMatrix& a) {
  if (a.rows() == 1) return {a(0, 0)};
  if (a.rows() == 2) {
    // closed form keeps the per-point symbol evaluation cheap
    const Complex tr = a(0, 0) + a(1, 1), det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const Complex disc = std::sqrt(tr * tr / 4.0 - det);
    return {tr / 2.0 + disc, tr / 2.0 - disc};
  }
  Eigen::ComplexSchur<ComplexMatrix> schur(a, /*computeU=*/false);
  const auto& t = schur.matrixT();
  std::vector<Complex> ev(a.rows());
  for (int i = 0; i < a.rows(); ++i) ev[i] = t(i, i);
  return ev;
}

inline double distance_to_spectrum(const ComplexMatrix& a, Complex s) {
  double d = std::numeric_limits<double>::infinity();
  for (Complex e : eigenvalues(a)) d = std::min(d, std::abs(s - e));
  return d;
}

// Closed curve built from circles or elongated components, sampled with the
// periodic trapezoid rule.  Weights already include the 1/(2 pi i) factor.
class Contour {
 public:
  struct Piece {
    Complex center;
    double radius = 0;       // semi-minor axis for elongated pieces
    double half_length = 0;  // 0 for a circle
    double angle = 0;
    int nodes = 64;
  };

  Contour() = default;

  static Contour circle(Complex center, double radius, int nodes = 64) {
    return from_piece({center, radius, 0.0, 0.0, nodes});
  }

  // smooth elongated curve around the segment center +- half_length e^{i angle};
  // an ellipse with semi-axes (half_length + radius, radius)
  static Contour stadium(Complex center, double half_length, double radius, double angle, int nodes = 64) {
    return from_piece({center, radius, half_length, angle, nodes});
  }

  static Contour join(const std::vector<Contour>& parts) {
    Contour c;
    for (const auto& p : parts) {
      c.pieces_.insert(c.pieces_.end(), p.pieces_.begin(), p.pieces_.end());
      c.nodes_.insert(c.nodes_.end(), p.nodes_.begin(), p.nodes_.end());
      c.weights_.insert(c.weights_.end(), p.weights_.begin(), p.weights_.end());
    }
    return c;
  }

  const std::vector<Complex>& nodes() const { return nodes_; }
  const std::vector<Complex>& weights() const { return weights_; }
  const std::vector<Piece>& pieces() const { return pieces_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  /// same curve with node counts multiplied by `factor`
  Contour refined(int factor = 2) const {
    std::vector<Contour> parts;
    for (const auto& p : pieces_) parts.push_back(from_piece({p.center, p.radius, p.half_length, p.angle, p.nodes * factor}));
    return join(parts);
  }

  double diameter() const {
    double d = 0;
    for (size_t i = 0; i < nodes_.size(); ++i)
      for (size_t j = i + 1; j < nodes_.size(); ++j) d = std::max(d, std::abs(nodes_[i] - nodes_[j]));
    return d;
  }

  int winding_number(Complex z) const {
    int w = 0;
    for (const auto& p : pieces_) w += inside(p, z) ? 1 : 0;
    return w;
  }

  /// distance from z to the curve
  double distance(Complex z) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& p : pieces_) {
      if (p.half_length == 0) {
        d = std::min(d, std::abs(std::abs(z - p.center) - p.radius));
      } else {
        const int n = 2048;
        for (int j = 0; j < n; ++j) d = std::min(d, std::abs(z - point(p, 2 * kPi * j / n)));
      }
    }
    return d;
  }

  /// sum_j w_j f(s_j) for scalar-valued f
  template <class F>
  auto integrate(F&& f) const {
    using R = decltype(f(Complex{}));
    R acc = f(nodes_[0]) * weights_[0];
    for (size_t j = 1; j < nodes_.size(); ++j) acc += f(nodes_[j]) * weights_[j];
    return acc;
  }

 private:
  static Complex point(const Piece& p, double t) {
    const double major = p.half_length + p.radius;
    return p.center + std::polar(1.0, p.angle) * Complex(major * std::cos(t), p.radius * std::sin(t));
  }
  static Complex tangent(const Piece& p, double t) {
    const double major = p.half_length + p.radius;
    return std::polar(1.0, p.angle) * Complex(-major * std::sin(t), p.radius * std::cos(t));
  }
  static bool inside(const Piece& p, Complex z) {
    const Complex w = std::polar(1.0, -p.angle) * (z - p.center);
    const double major = p.half_length + p.radius;
    const double u = w.real() / major, v = w.imag() / p.radius;
    return u * u + v * v < 1.0;
  }
  static Contour from_piece(const Piece& p) {
    if (p.nodes < 16) throw Error(ErrorKind::input, "contour needs at least 16 nodes");
    if (!(p.radius > 0) || p.half_length < 0) throw Error(ErrorKind::input, "contour radius must be positive");
    Contour c;
    c.pieces_.push_back(p);
    c.nodes_.resize(p.nodes);
    c.weights_.resize(p.nodes);
    for (int j = 0; j < p.nodes; ++j) {
      const double t = 2 * kPi * j / p.nodes;
      c.nodes_[j] = point(p, t);
      // dz / (2 pi i) with d t = 2 pi / n
      c.weights_[j] = tangent(p, t) / (Complex(0, 1) * double(p.nodes));
    }
    return c;
  }

  std::vector<Piece> pieces_;
  std::vector<Complex> nodes_, weights_;
};

/// circles around groups of nearby eigenvalues, each away from the rest
inline Contour enclosing_contour(const std::vector<Complex>& ev, int nodes = 64, double link = 0.5,
                                 double max_margin = 0.25) {
  const int n = static_cast<int>(ev.size());
  std::vector<int> group(n);
  std::iota(group.begin(), group.end(), 0);
  auto root = [&](int i) {
    while (group[i] != i) i = group[i] = group[group[i]];
    return i;
  };
  auto unite = [&](int i, int j) { group[root(i)] = root(j); };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::abs(ev[i] - ev[j]) < link) unite(i, j);
  for (;;) {
    std::vector<Contour> parts;
    bool merged = false;
    for (int g = 0; g < n && !merged; ++g) {
      if (root(g) != g) continue;
      double lo_re = 1e300, hi_re = -1e300, lo_im = 1e300, hi_im = -1e300;
      for (int i = 0; i < n; ++i) {
        if (root(i) != g) continue;
        lo_re = std::min(lo_re, ev[i].real());
        hi_re = std::max(hi_re, ev[i].real());
        lo_im = std::min(lo_im, ev[i].imag());
        hi_im = std::max(hi_im, ev[i].imag());
      }
      const Complex c(0.5 * (lo_re + hi_re), 0.5 * (lo_im + hi_im));
      double r_in = 0, d_out = std::numeric_limits<double>::infinity();
      int nearest = -1;
      for (int i = 0; i < n; ++i) {
        const double d = std::abs(ev[i] - c);
        if (root(i) == g) {
          r_in = std::max(r_in, d);
        } else if (d < d_out) {
          d_out = d;
          nearest = i;
        }
      }
      if (nearest >= 0 && d_out < 1.2 * r_in + 1e-3) {
        unite(nearest, g);
        merged = true;
        break;
      }
      const double margin = nearest < 0 ? max_margin : std::min(max_margin, 0.5 * (d_out - r_in));
      // trapezoid error decays like the worst of r_in / r and r / d_out per node;
      // double the nodes until that reaches round-off
      const double r = r_in + margin;
      const double ratio = std::max(r_in / r, nearest < 0 ? 0.0 : r / d_out);
      int count = nodes;
      while (ratio > 0 && count < 4096 && std::pow(ratio, count) > 1e-17) count *= 2;
      parts.push_back(Contour::circle(c, r, count));
    }
    if (!merged) return Contour::join(parts);
  }
}

namespace detail {
inline void check_contour(const ComplexMatrix& a, const Contour& g, bool require_all_inside) {
  for (Complex e : eigenvalues(a)) {
    if (g.distance(e) < 1e-8)
      throw Error(ErrorKind::ill_conditioned_contour, "contour passes within 1e-8 of an eigenvalue");
    if (require_all_inside && g.winding_number(e) != 1)
      throw Error(ErrorKind::contour, "contour does not enclose the spectrum with winding number 1");
  }
}

/// sum_j w_j f(s_j) (s_j - a)^{-1}
template <class F>
ComplexMatrix dunford(const ComplexMatrix& a, const Contour& g, F&& f) {
  const int m = static_cast<int>(a.rows());
  ComplexMatrix acc = ComplexMatrix::Zero(m, m);
  ComplexMatrix shifted(m, m);
  for (int j = 0; j < g.size(); ++j) {
    const Complex s = g.nodes()[j];
    shifted = -a;
    shifted.diagonal().array() += s;
    acc += (g.weights()[j] * f(s)) * shifted.partialPivLu().inverse();
  }
  return acc;
}
}  // namespace detail

/// (s - a)^{-1}
inline ComplexMatrix resolvent(const ComplexMatrix& a, Complex s) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::shape, "resolvent needs a square matrix");
  if (distance_to_spectrum(a, s) <= 1e-10) throw Error(ErrorKind::singularity, "point lies on the spectrum");
  ComplexMatrix shifted = -a;
  shifted.diagonal().array() += s;
  return shifted.partialPivLu().inverse();
}

/// b^a for b > 0 by the Dunford integral over g
inline ComplexMatrix group_action(const ComplexMatrix& a, double rho, const Contour& g) {
  if (!(rho > 0)) throw Error(ErrorKind::input, "group action needs rho > 0");
  detail::check_contour(a, g, true);
  const double l = std::log(rho);
  return detail::dunford(a, g, [l](Complex s) { return std::exp(s * l); });
}

inline ComplexMatrix group_action(const ComplexMatrix& a, double rho) {
  return group_action(a, rho, enclosing_contour(eigenvalues(a)));
}

/// b^a for a complex base off the negative axis, principal logarithm
inline ComplexMatrix base_power(const ComplexMatrix& a, Complex b, const Contour& g) {
  if (b.real() <= 0 && b.imag() == 0) throw Error(ErrorKind::positivity, "base lies on the branch cut");
  detail::check_contour(a, g, true);
  const Complex l = std::log(b);
  return detail::dunford(a, g, [l](Complex s) { return std::exp(s * l); });
}

inline ComplexMatrix spectral_projection(const ComplexMatrix& a, const Contour& g) {
  detail::check_contour(a, g, false);
  ComplexMatrix p = detail::dunford(a, g, [](Complex) { return Complex(1.0); });
  const Complex tr = p.trace();
  if (std::abs(tr - std::round(tr.real())) > 1e-6)
    throw Error(ErrorKind::separation, "trace of the projection is not an integer");
  return p;
}

/// eigendecomposition reference for diagonalizable a
inline ComplexMatrix eigen_power(const ComplexMatrix& a, double rho) {
  Eigen::ComplexEigenSolver<ComplexMatrix> es(a);
  ComplexVector d = es.eigenvalues().unaryExpr([rho](Complex e) { return std::exp(e * std::log(rho)); });
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().inverse();
}

// Trigonometric polynomial sum_k c_k e^{i k.y} with matrix coefficients.
struct MatrixTrigPolynomial {
  struct Term {
    std::vector<int> k;
    ComplexMatrix coef;
  };
  int q = 1;
  int rows = 1, cols = 1;
  std::vector<Term> terms;

  ComplexMatrix value(std::span<const double> y) const {
    ComplexMatrix v = ComplexMatrix::Zero(rows, cols);
    for (const auto& t : terms) {
      double ph = 0;
      for (int i = 0; i < q; ++i) ph += t.k[i] * y[i];
      v += std::polar(1.0, ph) * t.coef;
    }
    return v;
  }

  /// Taylor jet in y, coefficients (i k)^alpha / alpha! e^{i k.y} c_k
  MatrixJet jet(std::span<const double> y, int order) const {
    MatrixJet j(q, {order, 0}, ComplexMatrix::Zero(rows, cols));
    const auto& ix = j.y_indices();
    for (const auto& t : terms) {
      double ph = 0;
      for (int i = 0; i < q; ++i) ph += t.k[i] * y[i];
      const Complex base = std::polar(1.0, ph);
      for (int a = 0; a < ix.size(); ++a) {
        Complex w = base / ix.factorial(a);
        for (int i = 0; i < q; ++i) w *= std::pow(Complex(0, t.k[i]), ix[a][i]);
        if (w != Complex(0)) j.at(a, 0) += w * t.coef;
      }
    }
    return j;
  }

  int max_frequency() const {
    int m = 0;
    for (const auto& t : terms)
      for (int v : t.k) m = std::max(m, std::abs(v));
    return m;
  }
};

// Periodic matrix-valued field y -> C^{rows x cols} with y-jets.
class MatrixField {
 public:
  using JetFn = std::function<MatrixJet(std::span<const double>, int)>;
  static constexpr int kUnlimited = 1 << 20;

  MatrixField() = default;
  MatrixField(int q, int rows, int cols, JetFn fn, int max_order = kUnlimited, bool constant = false)
      : q_(q), rows_(rows), cols_(cols), max_order_(max_order), constant_(constant),
        fn_(std::make_shared<JetFn>(std::move(fn))) {}

  static MatrixField constant(int q, const ComplexMatrix& c) {
    return MatrixField(
        q, int(c.rows()), int(c.cols()),
        [q, c](std::span<const double>, int order) { return MatrixJet::constant(q, {order, 0}, c); }, kUnlimited,
        true);
  }
  static MatrixField zero(int q, int m) { return constant(q, ComplexMatrix::Zero(m, m)); }
  static MatrixField identity(int q, int m) { return constant(q, ComplexMatrix::Identity(m, m)); }
  static MatrixField diagonal(int q, const std::vector<double>& d) {
    ComplexMatrix c = ComplexMatrix::Zero(int(d.size()), int(d.size()));
    for (size_t i = 0; i < d.size(); ++i) c(i, i) = d[i];
    return constant(q, c);
  }

  static MatrixField trig_polynomial(MatrixTrigPolynomial p) {
    bool constant = true;
    for (const auto& t : p.terms)
      for (int v : t.k)
        if (v != 0) constant = false;
    auto sp = std::make_shared<MatrixTrigPolynomial>(std::move(p));
    MatrixField f(
        sp->q, sp->rows, sp->cols, [sp](std::span<const double> y, int order) { return sp->jet(y, order); },
        kUnlimited, constant);
    f.trig_ = sp;
    return f;
  }

  // centered differences with step 1e-5 of the period, orders <= 2
  static MatrixField from_function(int q, int rows, int cols,
                                   std::function<ComplexMatrix(std::span<const double>)> fn) {
    auto sp = std::make_shared<std::function<ComplexMatrix(std::span<const double>)>>(std::move(fn));
    return MatrixField(
        q, rows, cols,
        [q, rows, cols, sp](std::span<const double> y, int order) {
          if (order > 2) throw Error(ErrorKind::order, "finite-difference field supports derivatives up to order 2");
          const double h = 2 * kPi * 1e-5;
          const auto& f = *sp;
          std::vector<double> z(y.begin(), y.end());
          MatrixJet j(q, {order, 0}, ComplexMatrix::Zero(rows, cols));
          j.at(0, 0) = f(z);
          if (order == 0) return j;
          const auto& ix = j.y_indices();
          auto shifted = [&](int a, double da, int b, double db) {
            std::vector<double> w = z;
            w[a] += da;
            if (b >= 0) w[b] += db;
            return f(w);
          };
          for (int n = 1; n < ix.size(); ++n) {
            std::vector<int> dirs;
            for (int i = 0; i < q; ++i)
              for (int k = 0; k < ix[n][i]; ++k) dirs.push_back(i);
            if (dirs.size() == 1) {
              j.at(n, 0) = (shifted(dirs[0], h, -1, 0) - shifted(dirs[0], -h, -1, 0)) / (2 * h);
            } else if (dirs[0] == dirs[1]) {
              j.at(n, 0) = (shifted(dirs[0], h, -1, 0) - 2.0 * j.at(0, 0) + shifted(dirs[0], -h, -1, 0)) / (2 * h * h);
            } else {
              j.at(n, 0) = (shifted(dirs[0], h, dirs[1], h) - shifted(dirs[0], h, dirs[1], -h) -
                            shifted(dirs[0], -h, dirs[1], h) + shifted(dirs[0], -h, dirs[1], -h)) /
                           (4 * h * h);
            }
          }
          return j;
        },
        2, false);
  }

  int q() const { return q_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_; }
  int max_order() const { return max_order_; }
  bool is_constant() const { return constant_; }
  bool valid() const { return static_cast<bool>(fn_); }
  const MatrixTrigPolynomial* trig() const { return trig_.get(); }

  MatrixJet jet(std::span<const double> y, int order) const {
    if (order > max_order_) throw Error(ErrorKind::order, "field derivatives requested beyond the declared order");
    return (*fn_)(y, order);
  }
  ComplexMatrix operator()(std::span<const double> y) const { return jet(y, 0).value(); }
  ComplexMatrix operator()(std::initializer_list<double> y) const {
    std::vector<double> v(y);
    return (*this)(std::span<const double>(v));
  }
  /// real partial derivative d_y^alpha
  ComplexMatrix partial(std::span<const double> y, const MultiIndex& alpha) const {
    MatrixJet j = jet(y, degree(alpha));
    return j.at(j.y_indices().find(alpha), 0) * factorial(alpha);
  }

  MatrixField adjoint() const {
    auto self = *this;
    return MatrixField(
        q_, cols_, rows_, [self](std::span<const double> y, int o) { return self.jet(y, o).adjoint(); }, max_order_,
        constant_);
  }
  MatrixField scaled(Complex s) const {
    auto self = *this;
    return MatrixField(
        q_, rows_, cols_, [self, s](std::span<const double> y, int o) { return self.jet(y, o) * s; }, max_order_,
        constant_);
  }
  MatrixField operator-() const { return scaled(-1.0); }

  friend MatrixField operator+(const MatrixField& a, const MatrixField& b) {
    return MatrixField(
        a.q_, a.rows_, a.cols_, [a, b](std::span<const double> y, int o) { return a.jet(y, o) + b.jet(y, o); },
        std::min(a.max_order_, b.max_order_), a.constant_ && b.constant_);
  }
  friend MatrixField operator*(const MatrixField& a, const MatrixField& b) {
    if (a.cols_ != b.rows_) throw Error(ErrorKind::shape, "field product shape mismatch");
    return MatrixField(
        a.q_, a.rows_, b.cols_,
        [a, b](std::span<const double> y, int o) { return multiply(a.jet(y, o), b.jet(y, o)); },
        std::min(a.max_order_, b.max_order_), a.constant_ && b.constant_);
  }
  MatrixField inverse() const {
    auto self = *this;
    return MatrixField(
        q_, rows_, cols_, [self](std::span<const double> y, int o) { return psivar::inverse(self.jet(y, o)); },
        max_order_, constant_);
  }

 private:
  int q_ = 1, rows_ = 0, cols_ = 0;
  int max_order_ = kUnlimited;
  bool constant_ = false;
  std::shared_ptr<JetFn> fn_;
  std::shared_ptr<MatrixTrigPolynomial> trig_;
};

using EndomorphismField = MatrixField;

}  // namespace psivar
