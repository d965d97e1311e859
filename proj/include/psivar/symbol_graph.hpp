#pragma once

// Symbols as expression graphs. Every node returns the Taylor jet of its
// matrix value at a point (y, eta). Children are evaluated lazily and once per
// point, at the highest derivative order any parent needs.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "psivar/matrix_functions.hpp"

namespace psivar {

struct EvalPoint {
  std::span<const double> y, eta;
};

class KidJets {
 public:
  virtual ~KidJets() = default;
  virtual const MatrixJet& operator[](int i) const = 0;
};

class SymbolNode;
using NodePtr = std::shared_ptr<const SymbolNode>;

class SymbolNode {
 public:
  SymbolNode(int q, int rows, int cols) : q_(q), rows_(rows), cols_(cols) {}
  virtual ~SymbolNode() = default;

  int q() const { return q_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::vector<NodePtr>& children() const { return kids_; }

  /// orders the children must deliver so that this node can produce `order`
  virtual std::vector<JetOrder> child_orders(JetOrder order) const {
    return std::vector<JetOrder>(kids_.size(), order);
  }
  virtual MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const = 0;

 protected:
  int q_, rows_, cols_;
  std::vector<NodePtr> kids_;
};

class SymbolEvaluator {
 public:
  SymbolEvaluator(NodePtr root, JetOrder order) : root_(std::move(root)), order_(order) {
    std::map<const SymbolNode*, int> index;
    auto visit = [&](auto&& self, const SymbolNode* n) -> int {
      auto it = index.find(n);
      if (it != index.end()) return it->second;
      std::vector<int> kids;
      for (const auto& c : n->children()) kids.push_back(self(self, c.get()));
      const int id = static_cast<int>(nodes_.size());
      nodes_.push_back(n);
      kids_.push_back(std::move(kids));
      index[n] = id;
      return id;
    };
    visit(visit, root_.get());
    orders_.assign(nodes_.size(), JetOrder{-1, -1});
    orders_.back() = order;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const auto co = nodes_[i]->child_orders(orders_[i]);
      for (size_t k = 0; k < co.size(); ++k) {
        JetOrder& o = orders_[kids_[i][k]];
        o = o.y < 0 ? co[k] : psivar::max(o, co[k]);
      }
    }
  }

  JetOrder order() const { return order_; }

  MatrixJet operator()(std::span<const double> y, std::span<const double> eta) const {
    std::vector<std::optional<MatrixJet>> cache(nodes_.size());
    const EvalPoint pt{y, eta};
    return eval(static_cast<int>(nodes_.size()) - 1, pt, cache);
  }

 private:
  struct Access : KidJets {
    const SymbolEvaluator* self;
    int node;
    const EvalPoint* pt;
    std::vector<std::optional<MatrixJet>>* cache;
    const MatrixJet& operator[](int i) const override { return self->eval(self->kids_[node][i], *pt, *cache); }
  };

  const MatrixJet& eval(int i, const EvalPoint& pt, std::vector<std::optional<MatrixJet>>& cache) const {
    if (!cache[i]) {
      Access acc;
      acc.self = this;
      acc.node = i;
      acc.pt = &pt;
      acc.cache = &cache;
      cache[i] = nodes_[i]->evaluate(pt, orders_[i], acc);
    }
    return *cache[i];
  }

  NodePtr root_;
  JetOrder order_;
  std::vector<const SymbolNode*> nodes_;
  std::vector<std::vector<int>> kids_;
  std::vector<JetOrder> orders_;
};

// ---------------------------------------------------------------------------
// helpers

/// Taylor coefficients of the C^2 quintic step 0 -> 1 on [r0, r1] at t
inline std::vector<Complex> blend_derivatives(double t, double r0, double r1) {
  std::vector<Complex> d(6, 0.0);
  if (t <= r0) return d;
  if (t >= r1) {
    d[0] = 1.0;
    return d;
  }
  const double w = r1 - r0, x = (t - r0) / w;
  const double x2 = x * x, x3 = x2 * x, x4 = x3 * x, x5 = x4 * x;
  d[0] = 6 * x5 - 15 * x4 + 10 * x3;
  d[1] = (30 * x4 - 60 * x3 + 30 * x2) / w;
  d[2] = (120 * x3 - 180 * x2 + 60 * x) / (w * w);
  d[3] = (360 * x2 - 360 * x + 60) / (w * w * w);
  d[4] = (720 * x - 360) / (w * w * w * w);
  d[5] = 720 / (w * w * w * w * w);
  return d;
}

inline double blend(double t, double r0, double r1) { return blend_derivatives(t, r0, r1)[0].real(); }

inline double euclidean_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// jet of c + eta^T G eta in the eta block only
inline ScalarJet quadratic_jet(int q, int order_eta, std::span<const double> eta, double c, const Eigen::MatrixXd& g) {
  const JetOrder o{0, order_eta};
  ScalarJet acc = ScalarJet::constant(q, o, Complex(c));
  std::vector<ScalarJet> e;
  for (int i = 0; i < q; ++i) e.push_back(coordinate_jet(q, o, 1, i, eta[i]));
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      if (g(i, j) != 0) acc.add_scaled(multiply(e[i], e[j]), g(i, j));
  return acc;
}

/// |eta| as an eta-only jet; needs eta != 0
inline ScalarJet norm_jet(int q, int order_eta, std::span<const double> eta) {
  return pow(quadratic_jet(q, order_eta, eta, 0.0, Eigen::MatrixXd::Identity(q, q)), 0.5);
}

/// s(y, eta) * m(y) where m carries no eta dependence
inline MatrixJet multiply_by_field(const ScalarJet& s, const MatrixJet& m, JetOrder order) {
  order = psivar::min(order, s.order());
  order.y = std::min(order.y, m.order().y);
  MatrixJet r(s.q(), order, ComplexMatrix::Zero(m.value().rows(), m.value().cols()));
  const int nes = s.size_eta(), nem = m.size_eta();
  for (int ky = 0; ky < r.size_y(); ++ky)
    for (const auto& [i1, i2] : r.y_indices().split(ky))
      for (int ke = 0; ke < r.size_eta(); ++ke) r.at(ky, ke) += s.coefficients()[i1 * nes + ke] * m.coefficients()[i2 * nem];
  return r;
}

// ---------------------------------------------------------------------------
// leaves

/// y-dependent matrix field, constant in eta
class FieldNode : public SymbolNode {
 public:
  explicit FieldNode(MatrixField f) : SymbolNode(f.q(), f.rows(), f.cols()), f_(std::move(f)) {}
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    return lifted(f_.jet(pt.y, order.y), order);
  }
  const MatrixField& field() const { return f_; }

 private:
  MatrixField f_;
};

/// eta^gamma (c + eta^T G eta)^{s/2}, scalar
class EtaFunctionNode : public SymbolNode {
 public:
  EtaFunctionNode(int q, MultiIndex gamma, double c, Eigen::MatrixXd g, double s)
      : SymbolNode(q, 1, 1), gamma_(std::move(gamma)), c_(c), g_(std::move(g)), s_(s) {
    if (static_cast<int>(gamma_.size()) != q) throw Error(ErrorKind::input, "monomial dimension mismatch");
  }

  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    ScalarJet v = monomial(pt.eta, order.eta);
    if (s_ != 0) {
      ScalarJet base = quadratic_jet(q_, order.eta, pt.eta, c_, g_);
      if (!(base.value().real() > 0))
        throw Error(ErrorKind::evaluation, "eta function evaluated at a singular point");
      v = multiply(v, pow(base, 0.5 * s_));
    }
    return lifted(to_matrix(v), order);
  }

 private:
  ScalarJet monomial(std::span<const double> eta, int order_eta) const {
    ScalarJet m(q_, {0, order_eta}, Complex(0));
    const auto& ix = m.eta_indices();
    for (int k = 0; k < ix.size(); ++k) {
      double c = 1;
      for (int i = 0; i < q_ && c != 0; ++i) {
        const int g = gamma_[i], n = ix[k][i];
        if (n > g) {
          c = 0;
          break;
        }
        double binom = 1;
        for (int t = 0; t < n; ++t) binom = binom * (g - t) / (t + 1);
        c *= binom * std::pow(eta[i], g - n);
      }
      m.at(0, k) = c;
    }
    return m;
  }

  MultiIndex gamma_;
  double c_;
  Eigen::MatrixXd g_;
  double s_;
};

/// [eta]: equals <eta> for |eta| <= R/2 and |eta| for |eta| >= R, blended between
class SmoothedNormNode : public SymbolNode {
 public:
  SmoothedNormNode(int q, double r) : SymbolNode(q, 1, 1), r_(r) {}
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(q_, q_);
    ScalarJet br = pow(quadratic_jet(q_, order.eta, pt.eta, 1.0, id), 0.5);
    const double t = euclidean_norm(pt.eta);
    if (!std::isfinite(r_) || t <= r_ / 2) return lifted(to_matrix(br), order);
    ScalarJet nj = norm_jet(q_, order.eta, pt.eta);
    ScalarJet chi = compose(nj, blend_derivatives(t, r_ / 2, r_));
    ScalarJet one_minus = chi * Complex(-1.0);
    one_minus.value() += 1.0;
    ScalarJet v = multiply(chi, nj);
    v += multiply(one_minus, br);
    return lifted(to_matrix(v), order);
  }
  double crossover() const { return r_; }

 private:
  double r_;
};

/// opaque callback with finite-difference jets of total order <= 2
class CallbackNode : public SymbolNode {
 public:
  using Fn = std::function<ComplexMatrix(std::span<const double>, std::span<const double>)>;
  CallbackNode(int q, int rows, int cols, Fn f) : SymbolNode(q, rows, cols), f_(std::move(f)) {}

  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    if (order.y + order.eta > 2) throw Error(ErrorKind::order, "callback symbols provide derivatives of total order <= 2");
    std::vector<double> x(pt.y.begin(), pt.y.end());
    x.insert(x.end(), pt.eta.begin(), pt.eta.end());
    auto call = [&](const std::vector<double>& v) {
      return f_(std::span<const double>(v.data(), q_), std::span<const double>(v.data() + q_, q_));
    };
    MatrixJet j(q_, order, ComplexMatrix::Zero(rows_, cols_));
    const ComplexMatrix f0 = call(x);
    j.value() = f0;
    const double eta_scale = std::max(1.0, euclidean_norm(pt.eta));
    auto step = [&](int var, int total) {
      const double base = var < q_ ? 2 * kPi : eta_scale;
      return base * (total == 1 ? 1e-5 : 1e-4);
    };
    for (int iy = 0; iy < j.size_y(); ++iy) {
      for (int ie = 0; ie < j.size_eta(); ++ie) {
        if (iy == 0 && ie == 0) continue;
        std::vector<int> dirs;
        for (int i = 0; i < q_; ++i)
          for (int k = 0; k < j.y_indices()[iy][i]; ++k) dirs.push_back(i);
        for (int i = 0; i < q_; ++i)
          for (int k = 0; k < j.eta_indices()[ie][i]; ++k) dirs.push_back(q_ + i);
        const int tot = static_cast<int>(dirs.size());
        auto at = [&](std::initializer_list<std::pair<int, double>> shifts) {
          std::vector<double> v = x;
          for (auto [d, h] : shifts) v[d] += h;
          return call(v);
        };
        if (tot == 1) {
          const double h = step(dirs[0], 1);
          j.at(iy, ie) = (at({{dirs[0], h}}) - at({{dirs[0], -h}})) / (2 * h);
        } else if (dirs[0] == dirs[1]) {
          const double h = step(dirs[0], 2);
          j.at(iy, ie) = (at({{dirs[0], h}}) - 2.0 * f0 + at({{dirs[0], -h}})) / (2 * h * h);
        } else {
          const double h0 = step(dirs[0], 2), h1 = step(dirs[1], 2);
          j.at(iy, ie) = (at({{dirs[0], h0}, {dirs[1], h1}}) - at({{dirs[0], h0}, {dirs[1], -h1}}) -
                          at({{dirs[0], -h0}, {dirs[1], h1}}) + at({{dirs[0], -h0}, {dirs[1], -h1}})) /
                         (4 * h0 * h1);
        }
      }
    }
    return j;
  }

 private:
  Fn f_;
};

// ---------------------------------------------------------------------------
// composites

class SumNode : public SymbolNode {
 public:
  SumNode(std::vector<NodePtr> terms, std::vector<Complex> weights)
      : SymbolNode(terms.at(0)->q(), terms[0]->rows(), terms[0]->cols()), w_(std::move(weights)) {
    for (const auto& t : terms)
      if (t->rows() != rows_ || t->cols() != cols_) throw Error(ErrorKind::shape, "sum of symbols with different shapes");
    kids_ = std::move(terms);
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    MatrixJet acc(q_, order, ComplexMatrix::Zero(rows_, cols_));
    for (size_t i = 0; i < kids_.size(); ++i) acc.add_scaled(kids[static_cast<int>(i)], w_[i]);
    return acc;
  }

 private:
  std::vector<Complex> w_;
};

/// matrix product; 1x1 factors act as scalars
class ProductNode : public SymbolNode {
 public:
  ProductNode(NodePtr a, NodePtr b)
      : SymbolNode(a->q(), shape(*a, *b).first, shape(*a, *b).second) {
    kids_ = {std::move(a), std::move(b)};
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    const MatrixJet &a = kids[0], &b = kids[1];
    const bool sa = kids_[0]->rows() == 1 && kids_[0]->cols() == 1;
    const bool sb = kids_[1]->rows() == 1 && kids_[1]->cols() == 1;
    if (sa && !sb) return multiply(to_scalar(a), b, order);
    if (sb && !sa) return multiply(a, to_scalar(b), order);
    return multiply(a, b, order);
  }

 private:
  static std::pair<int, int> shape(const SymbolNode& a, const SymbolNode& b) {
    if (a.rows() == 1 && a.cols() == 1) return {b.rows(), b.cols()};
    if (b.rows() == 1 && b.cols() == 1) return {a.rows(), a.cols()};
    if (a.cols() != b.rows()) throw Error(ErrorKind::shape, "symbol product shape mismatch");
    return {a.rows(), b.cols()};
  }
};

/// D_y^alpha d_eta^beta of the child
class DerivativeNode : public SymbolNode {
 public:
  DerivativeNode(NodePtr p, MultiIndex alpha, MultiIndex beta)
      : SymbolNode(p->q(), p->rows(), p->cols()), alpha_(std::move(alpha)), beta_(std::move(beta)) {
    kids_ = {std::move(p)};
  }
  std::vector<JetOrder> child_orders(JetOrder o) const override {
    return {{o.y + degree(alpha_), o.eta + degree(beta_)}};
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    return kids[0].differentiated(alpha_, beta_).restricted(order);
  }

 private:
  MultiIndex alpha_, beta_;
};

/// pointwise conjugate transpose
class AdjointNode : public SymbolNode {
 public:
  explicit AdjointNode(NodePtr p) : SymbolNode(p->q(), p->cols(), p->rows()) { kids_ = {std::move(p)}; }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    return kids[0].restricted(order).adjoint();
  }
};

class BlockNode : public SymbolNode {
 public:
  BlockNode(NodePtr p, int r0, int c0, int rows, int cols) : SymbolNode(p->q(), rows, cols), r0_(r0), c0_(c0) {
    if (r0 < 0 || c0 < 0 || r0 + rows > p->rows() || c0 + cols > p->cols())
      throw Error(ErrorKind::shape, "block outside the symbol");
    kids_ = {std::move(p)};
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    MatrixJet k = kids[0].restricted(order);
    MatrixJet r(q_, k.order(), ComplexMatrix::Zero(rows_, cols_));
    for (int i = 0; i < r.size(); ++i) r.coefficients()[i] = k.coefficients()[i].block(r0_, c0_, rows_, cols_);
    return r;
  }

 private:
  int r0_, c0_;
};

/// block matrix assembled from a grid of children; null entries are zero
class AssembleNode : public SymbolNode {
 public:
  AssembleNode(int q, std::vector<int> row_sizes, std::vector<int> col_sizes, std::vector<std::vector<NodePtr>> grid)
      : SymbolNode(q, std::accumulate(row_sizes.begin(), row_sizes.end(), 0),
                   std::accumulate(col_sizes.begin(), col_sizes.end(), 0)),
        rs_(std::move(row_sizes)), cs_(std::move(col_sizes)) {
    for (size_t i = 0; i < rs_.size(); ++i) {
      for (size_t j = 0; j < cs_.size(); ++j) {
        const NodePtr& n = grid.at(i).at(j);
        if (!n) continue;
        if (n->rows() != rs_[i] || n->cols() != cs_[j]) throw Error(ErrorKind::shape, "block shape mismatch");
        slots_.push_back({static_cast<int>(i), static_cast<int>(j)});
        kids_.push_back(n);
      }
    }
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    MatrixJet r(q_, order, ComplexMatrix::Zero(rows_, cols_));
    for (size_t k = 0; k < slots_.size(); ++k) {
      const auto [bi, bj] = slots_[k];
      const int r0 = std::accumulate(rs_.begin(), rs_.begin() + bi, 0);
      const int c0 = std::accumulate(cs_.begin(), cs_.begin() + bj, 0);
      const MatrixJet& kj = kids[static_cast<int>(k)];
      for (int iy = 0; iy < r.size_y(); ++iy)
        for (int ie = 0; ie < r.size_eta(); ++ie) r.at(iy, ie).block(r0, c0, rs_[bi], cs_[bj]) = kj.at(iy, ie);
    }
    return r;
  }

 private:
  std::vector<int> rs_, cs_;
  std::vector<std::pair<int, int>> slots_;
};

// b(y, eta)^{a(y)} by the Dunford integral at every point, with circles around
// the local eigenvalue groups of a(y).
class GroupPowerNode : public SymbolNode {
 public:
  GroupPowerNode(NodePtr base, MatrixField a, int nodes = 64)
      : SymbolNode(base->q(), a.rows(), a.rows()), a_(std::move(a)), nodes_(nodes) {
    if (base->rows() != 1 || base->cols() != 1) throw Error(ErrorKind::shape, "base of a group power must be scalar");
    kids_ = {std::move(base)};
  }

  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const override {
    const MatrixJet& bj = kids[0];
    const Complex b0 = bj.value()(0, 0);
    if (!(b0.real() > 0) || std::abs(b0.imag()) > 1e-12 * std::abs(b0))
      throw Error(ErrorKind::positivity, "group-power base is not positive");
    const int m = a_.rows();
    MatrixJet aj = a_.jet(pt.y, order.y);
    const Contour g = enclosing_contour(eigenvalues(aj.value()), nodes_);
    if (order.y == 0 && order.eta == 0) {
      const double l = std::log(b0.real());
      ComplexMatrix acc = ComplexMatrix::Zero(m, m), shifted(m, m);
      for (int j = 0; j < g.size(); ++j) {
        const Complex s = g.nodes()[j];
        shifted = -aj.value();
        shifted.diagonal().array() += s;
        acc += (g.weights()[j] * std::exp(s * l)) * small_inverse(shifted);
      }
      return MatrixJet::constant(q_, order, acc);
    }
    ScalarJet l = log(to_scalar(bj).restricted(order));
    MatrixJet acc(q_, order, ComplexMatrix::Zero(m, m));
    for (int j = 0; j < g.size(); ++j) {
      const Complex s = g.nodes()[j];
      MatrixJet shifted = aj * Complex(-1.0);
      shifted.value().diagonal().array() += s;
      MatrixJet r = inverse(shifted);
      ScalarJet e = exp(l * s);
      acc.add_scaled(multiply_by_field(e, r, order), g.weights()[j]);
    }
    return acc;
  }

  const MatrixField& exponent() const { return a_; }

 private:
  static ComplexMatrix small_inverse(const ComplexMatrix& x) {
    if (x.rows() == 1) return ComplexMatrix::Constant(1, 1, 1.0 / x(0, 0));
    if (x.rows() == 2) {
      const Complex det = x(0, 0) * x(1, 1) - x(0, 1) * x(1, 0);
      ComplexMatrix r(2, 2);
      r << x(1, 1), -x(0, 1), -x(1, 0), x(0, 0);
      return r / det;
    }
    return x.partialPivLu().inverse();
  }

  MatrixField a_;
  int nodes_;
};

/// chi(|eta|) times the child, the child evaluated only where chi != 0
class ExcisionNode : public SymbolNode {
 public:
  ExcisionNode(NodePtr p, double r0, double r1) : SymbolNode(p->q(), p->rows(), p->cols()), r0_(r0), r1_(r1) {
    kids_ = {std::move(p)};
  }
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const override {
    const double t = euclidean_norm(pt.eta);
    if (t <= r0_) return MatrixJet(q_, order, ComplexMatrix::Zero(rows_, cols_));
    const MatrixJet& p = kids[0];
    if (t >= r1_) return p.restricted(order);
    ScalarJet chi = lifted(compose(norm_jet(q_, order.eta, pt.eta), blend_derivatives(t, r0_, r1_)), order);
    return multiply(chi, p, order);
  }

 private:
  double r0_, r1_;
};

/// chi_R(|eta|) p^{-1}, chi blending 0 at R to 1 at 2R
class CutoffInverseNode : public SymbolNode {
 public:
  CutoffInverseNode(NodePtr p, double r) : SymbolNode(p->q(), p->cols(), p->rows()), r_(r) {
    if (p->rows() != p->cols()) throw Error(ErrorKind::shape, "inverse of a non-square symbol");
    kids_ = {std::move(p)};
  }
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const override {
    const double t = euclidean_norm(pt.eta);
    if (t <= r_) return MatrixJet(q_, order, ComplexMatrix::Zero(rows_, cols_));
    MatrixJet inv = inverse(kids[0].restricted(order));
    if (t >= 2 * r_) return inv;
    ScalarJet chi = lifted(compose(norm_jet(q_, order.eta, pt.eta), blend_derivatives(t, r_, 2 * r_)), order);
    return multiply(chi, inv, order);
  }
  double radius() const { return r_; }

 private:
  double r_;
};

namespace detail {
/// jet of f(y, omega(eta)) from the jet of f at (y, omega0) and eta-only jets omega_i
inline MatrixJet compose_eta(const MatrixJet& f, const std::vector<ScalarJet>& omega, JetOrder order) {
  const int q = f.q();
  MatrixJet r(q, order, ComplexMatrix::Zero(f.value().rows(), f.value().cols()));
  std::vector<ScalarJet> d;
  for (const auto& w : omega) {
    ScalarJet x = w;
    x.value() = 0;
    d.push_back(x);
  }
  const auto& fe = f.eta_indices();
  for (int b = 0; b < fe.size(); ++b) {
    ScalarJet mono = ScalarJet::constant(q, {0, order.eta}, Complex(1.0));
    for (int i = 0; i < q; ++i)
      for (int k = 0; k < fe[b][i]; ++k) mono = multiply(mono, d[i]);
    for (int ke = 0; ke < r.size_eta(); ++ke) {
      const Complex c = mono.at(0, ke);
      if (c == Complex(0)) continue;
      for (int iy = 0; iy < r.size_y(); ++iy) r.at(iy, ke) += c * f.at(iy, b);
    }
  }
  return r;
}
}  // namespace detail

// h(y, eta / |eta|).  The child is evaluated on the unit sphere by its own
// evaluator, so it does not join the outer per-point cache.
class NormalizeEtaNode : public SymbolNode {
 public:
  explicit NormalizeEtaNode(NodePtr h) : SymbolNode(h->q(), h->rows(), h->cols()), h_(std::move(h)) {}

  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets&) const override {
    const double t = euclidean_norm(pt.eta);
    if (!(t > 0)) throw Error(ErrorKind::evaluation, "normalization at eta = 0");
    std::vector<double> w0(q_);
    for (int i = 0; i < q_; ++i) w0[i] = pt.eta[i] / t;
    MatrixJet f = evaluator(order)(pt.y, w0);
    if (order.eta == 0) return f;
    ScalarJet inv_norm = pow(quadratic_jet(q_, order.eta, pt.eta, 0.0, Eigen::MatrixXd::Identity(q_, q_)), -0.5);
    std::vector<ScalarJet> omega;
    for (int i = 0; i < q_; ++i) omega.push_back(multiply(coordinate_jet(q_, {0, order.eta}, 1, i, pt.eta[i]), inv_norm));
    return detail::compose_eta(f, omega, order);
  }

  const NodePtr& section() const { return h_; }

 private:
  const SymbolEvaluator& evaluator(JetOrder o) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto& slot = cache_[{o.y, o.eta}];
    if (!slot) slot = std::make_unique<SymbolEvaluator>(h_, o);
    return *slot;
  }

  NodePtr h_;
  mutable std::mutex mu_;
  mutable std::map<std::pair<int, int>, std::unique_ptr<SymbolEvaluator>> cache_;
};

}  // namespace psivar
