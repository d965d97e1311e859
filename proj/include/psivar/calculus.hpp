#pragma once

// Asymptotic composition, adjoints, parametrices, frame changes and order
// reductions for twisted symbols.

#include <map>
#include <mutex>

#include "psivar/discretization.hpp"

namespace psivar {

namespace detail {

inline const std::vector<MultiIndex>& indices_of_degree(int q, int d) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::vector<MultiIndex>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& v = cache[{q, d}];
  if (v.empty())
    for (const auto& g : multi_indices(q, d))
      if (degree(g) == d) v.push_back(g);
  return v;
}

/// sum_{|g| <= J} (1/g!) d_eta^g a  D_y^g b
class SharpProductNode : public SymbolNode {
 public:
  SharpProductNode(NodePtr a, NodePtr b, int terms)
      : SymbolNode(a->q(), a->rows(), b->cols()), terms_(terms) {
    if (a->cols() != b->rows()) throw Error(ErrorKind::shape, "composition shape mismatch");
    kids_ = {std::move(a), std::move(b)};
  }
  std::vector<JetOrder> child_orders(JetOrder o) const override {
    return {{o.y, o.eta + terms_}, {o.y + terms_, o.eta}};
  }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    const MatrixJet &a = kids[0], &b = kids[1];
    MatrixJet acc(q_, order, ComplexMatrix::Zero(rows_, cols_));
    const MultiIndex zero(q_, 0);
    for (int d = 0; d <= terms_; ++d)
      for (const auto& g : indices_of_degree(q_, d)) {
        MatrixJet da = a.differentiated(zero, g).restricted(order);
        MatrixJet db = b.differentiated(g, zero).restricted(order);
        acc.add_scaled(multiply(da, db, order), 1.0 / factorial(g));
      }
    return acc;
  }

 private:
  int terms_;
};

/// sum_{|g| <= J} (1/g!) D_y^g d_eta^g p^*
class AdjointExpansionNode : public SymbolNode {
 public:
  AdjointExpansionNode(NodePtr p, int terms) : SymbolNode(p->q(), p->cols(), p->rows()), terms_(terms) {
    kids_ = {std::move(p)};
  }
  std::vector<JetOrder> child_orders(JetOrder o) const override { return {{o.y + terms_, o.eta + terms_}}; }
  MatrixJet evaluate(const EvalPoint&, JetOrder order, const KidJets& kids) const override {
    const MatrixJet star = kids[0].adjoint();
    MatrixJet acc(q_, order, ComplexMatrix::Zero(rows_, cols_));
    for (int d = 0; d <= terms_; ++d)
      for (const auto& g : indices_of_degree(q_, d))
        acc.add_scaled(star.differentiated(g, g).restricted(order), 1.0 / factorial(g));
    return acc;
  }

 private:
  int terms_;
};

// Right parametrix q_0 + ... + q_J with q_0 = chi_R p^{-1} and
// q_g = -q_0 sum_{j < g, |c| = g - j} (1/c!) d_eta^c p D_y^c q_j.
class ParametrixNode : public SymbolNode {
 public:
  ParametrixNode(NodePtr p, double r, int terms) : SymbolNode(p->q(), p->cols(), p->rows()), r_(r), terms_(terms) {
    if (p->rows() != p->cols()) throw Error(ErrorKind::shape, "parametrix of a non-square symbol");
    kids_ = {std::move(p)};
  }
  std::vector<JetOrder> child_orders(JetOrder o) const override { return {{o.y + terms_, o.eta + terms_}}; }
  MatrixJet evaluate(const EvalPoint& pt, JetOrder order, const KidJets& kids) const override {
    const double t = euclidean_norm(pt.eta);
    if (t <= r_) return MatrixJet(q_, order, ComplexMatrix::Zero(rows_, cols_));
    const MatrixJet& p = kids[0];
    const int top = order.y + terms_;
    MatrixJet q0 = inverse(p.restricted({top, order.eta}));
    if (t < 2 * r_) {
      ScalarJet chi = lifted(compose(norm_jet(q_, order.eta, pt.eta), blend_derivatives(t, r_, 2 * r_)), {top, order.eta});
      q0 = multiply(chi, q0, {top, order.eta});
    }
    std::vector<MatrixJet> qs = {q0};
    const MultiIndex zero(q_, 0);
    for (int g = 1; g <= terms_; ++g) {
      const JetOrder og{top - g, order.eta};
      MatrixJet acc(q_, og, ComplexMatrix::Zero(rows_, cols_));
      for (int j = 0; j < g; ++j)
        for (const auto& c : indices_of_degree(q_, g - j)) {
          MatrixJet dp = p.differentiated(zero, c).restricted(og);
          MatrixJet dq = qs[j].differentiated(c, zero).restricted(og);
          acc.add_scaled(multiply(dp, dq, og), 1.0 / factorial(c));
        }
      MatrixJet qg = multiply(q0.restricted(og), acc, og);
      qg *= Complex(-1.0);
      qs.push_back(std::move(qg));
    }
    MatrixJet sum(q_, order, ComplexMatrix::Zero(rows_, cols_));
    for (const auto& x : qs) sum.add_scaled(x, 1.0);
    return sum;
  }

 private:
  double r_;
  int terms_;
};

inline bool same_field(const MatrixField& a, const MatrixField& b) {
  if (a.q() != b.q() || a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const Lattice lat = Lattice::standard(a.q(), 1.0, a.q() == 1 ? 8 : 4);
  for (const auto& y : lat.ys) {
    const ComplexMatrix x = a(y), z = b(y);
    if ((x - z).norm() > 1e-10 * std::max(1.0, x.norm())) return false;
  }
  return true;
}

}  // namespace detail

// p1 # p2 truncated after the terms of order |g| = J. The range action of p2
// must equal the domain action of p1.
inline TwistedSymbol sharp_product(const TwistedSymbol& p1, const TwistedSymbol& p2, int terms) {
  if (terms < 0) throw Error(ErrorKind::input, "negative expansion length");
  if (p1.q() != p2.q() || p1.cols() != p2.rows()) throw Error(ErrorKind::shape, "composition shape mismatch");
  if (!detail::same_field(p1.domain_action(), p2.range_action()))
    throw Error(ErrorKind::composition, "range action of the right factor differs from the domain action of the left");
  return TwistedSymbol(std::make_shared<detail::SharpProductNode>(p1.node(), p2.node(), terms), p1.order() + p2.order(),
                       p2.domain_action(), p1.range_action(), std::max(p1.delta(), p2.delta()), "sharp_product");
}

/// formal adjoint symbol, acting from -a2^* to -a1^*
inline TwistedSymbol adjoint_symbol(const TwistedSymbol& p, int terms) {
  if (terms < 0) throw Error(ErrorKind::input, "negative expansion length");
  return TwistedSymbol(std::make_shared<detail::AdjointExpansionNode>(p.node(), terms), p.order(),
                       -p.range_action().adjoint(), -p.domain_action().adjoint(), p.delta(), "adjoint");
}

struct Parametrix {
  TwistedSymbol symbol;
  double radius = 0;  // excision radius R
  EllipticityReport ellipticity;
};

inline Parametrix parametrix_symbol(const TwistedSymbol& p, int terms, double range = 1024) {
  if (terms < 0) throw Error(ErrorKind::input, "negative expansion length");
  EllipticityReport el = verify_ellipticity(p, range);
  if (!el.elliptic) throw Error(ErrorKind::not_elliptic, "symbol is not elliptic on the sampled lattice");
  const double r = std::max(1.0, el.radius);
  TwistedSymbol s(std::make_shared<detail::ParametrixNode>(p.node(), r, terms), -p.order(), p.range_action(),
                  p.domain_action(), p.delta(), "parametrix");
  return {s, r, el};
}

/// p # q - I for a square composite
inline TwistedSymbol composition_residual(const TwistedSymbol& p, const TwistedSymbol& q, int terms) {
  TwistedSymbol pq = sharp_product(p, q, terms);
  TwistedSymbol id(constant_node(p.q(), ComplexMatrix::Identity(pq.rows(), pq.cols())), 0.0, pq.domain_action(),
                   pq.range_action(), pq.delta());
  return (pq - id).with_label("residual");
}

struct OrderFit {
  double order = 0;
  std::vector<double> radii, values;
};

// slope of sup_y || <eta>^{a2} p <eta>^{-a1} || against |eta| over radii
// 2^lo .. 2^hi: the measured order of p
inline OrderFit fitted_order(const TwistedSymbol& p, int lo, int hi, int y_points = 0) {
  const int q = p.q();
  Lattice lat = Lattice::standard(q, std::ldexp(1.0, hi), y_points, std::ldexp(1.0, lo));
  const int nr = static_cast<int>(lat.radii.size()), ny = static_cast<int>(lat.ys.size());
  const SymbolEvaluator ev = p.evaluator();
  std::vector<std::vector<double>> part(ny, std::vector<double>(nr, 0.0));
  parallel_for(ny, [&](int iy) {
    const auto& y = lat.ys[iy];
    const ComplexMatrix a1 = p.domain_action()(y), a2 = p.range_action()(y);
    for (int ir = 0; ir < nr; ++ir) {
      const double br = std::sqrt(1 + lat.radii[ir] * lat.radii[ir]);
      const ComplexMatrix l = group_action(a2, br), r = group_action(-a1, br);
      for (const auto& dir : lat.directions) {
        std::vector<double> eta(q);
        for (int i = 0; i < q; ++i) eta[i] = lat.radii[ir] * dir[i];
        ComplexMatrix v = ev(y, eta).value();
        detail::require_finite(v, y, eta);
        part[iy][ir] = std::max(part[iy][ir], spectral_norm(l * v * r));
      }
    }
  });
  OrderFit f;
  f.radii = lat.radii;
  f.values.assign(nr, 0.0);
  for (int iy = 0; iy < ny; ++iy)
    for (int ir = 0; ir < nr; ++ir) f.values[ir] = std::max(f.values[ir], part[iy][ir]);
  std::vector<double> br;
  for (double r : f.radii) br.push_back(std::sqrt(1 + r * r));
  f.order = loglog_slope(br, f.values);
  return f;
}

// Theta2 Op(p) Theta1^{-1} for y-dependent frames; with target actions given,
// each frame is first certified against them.
inline TwistedSymbol frame_conjugate(const TwistedSymbol& p, const MatrixField& theta1, const MatrixField& theta2,
                                     int terms, const MatrixField* target1 = nullptr,
                                     const MatrixField* target2 = nullptr) {
  if (theta1.rows() != p.cols() || theta2.rows() != p.rows()) throw Error(ErrorKind::shape, "frame size mismatch");
  const int q = p.q();
  const MatrixField id1 = MatrixField::identity(q, p.cols()), id2 = MatrixField::identity(q, p.rows());
  const SampledRegion region = SampledRegion::torus(q, q == 1 ? 32 : 12);
  const std::vector<double> rhos = {1.0, 2.0, 8.0, 64.0, 1024.0};
  MatrixField b1 = theta1 * p.domain_action() * theta1.inverse();
  MatrixField b2 = theta2 * p.range_action() * theta2.inverse();
  if (target1) {
    if (!transition_homogeneity_check(id1, theta1, p.domain_action(), *target1, region, rhos).certified)
      throw Error(ErrorKind::frame, "domain frame does not intertwine the actions");
    b1 = *target1;
  }
  if (target2) {
    if (!transition_homogeneity_check(id2, theta2, p.range_action(), *target2, region, rhos).certified)
      throw Error(ErrorKind::frame, "range frame does not intertwine the actions");
    b2 = *target2;
  }
  NodePtr right = std::make_shared<detail::SharpProductNode>(p.node(), field_node(theta1.inverse()), terms);
  return TwistedSymbol(product_node(field_node(theta2), right), p.order(), b1, b2, p.delta(), "conjugated");
}

struct OrderReduction {
  TwistedSymbol symbol;
  double lambda = 0;
  std::vector<double> lambdas, conditioning;  // sigma_min / sigma_max per lambda tried
  TruncatedOperator op;
};

/// <eta, lambda>^mu <eta, lambda>^{-a2} <eta, lambda>^{a1}, actions (a1, a2)
inline TwistedSymbol reduction_symbol(const MatrixField& a1, const MatrixField& a2, double mu, double lambda) {
  if (a1.rows() != a2.rows()) throw Error(ErrorKind::shape, "order reduction needs equal fiber sizes");
  const int q = a1.q();
  NodePtr b = bracket_node(q, 1.0, lambda * lambda);
  NodePtr node = product_node(product_node(bracket_node(q, mu, lambda * lambda), group_power_node(b, -a2)),
                              group_power_node(b, a1));
  return TwistedSymbol(node, mu, a1, a2, 0.5, "order_reduction");
}

// Smallest lambda = 2^j (j <= 20) whose truncation at N has
// sigma_min / sigma_max >= 1e-6.
inline OrderReduction order_reduction(const MatrixField& a1, const MatrixField& a2, double mu, int n,
                                      double threshold = 1e-6) {
  OrderReduction r;
  for (int j = 0; j <= 20; ++j) {
    const double lambda = std::ldexp(1.0, j);
    TwistedSymbol s = reduction_symbol(a1, a2, mu, lambda);
    TruncatedOperator t = quantize(s, n);
    Eigen::VectorXd sv = singular_values(t.matrix);
    const double ratio = sv(sv.size() - 1) / sv(0);
    r.lambdas.push_back(lambda);
    r.conditioning.push_back(ratio);
    if (ratio >= threshold) {
      r.symbol = s;
      r.lambda = lambda;
      r.op = std::move(t);
      return r;
    }
  }
  throw Error(ErrorKind::no_order_reduction, "no lambda up to 2^20 gives an invertible truncation");
}

/// measured order of R^{-1} from the column profile of Lambda_{a1} R^{-1} Lambda_{a2}^{-1}
inline double inverse_profile_order(const OrderReduction& r, const MatrixField& a1, const MatrixField& a2) {
  const int n = r.op.N;
  ComplexMatrix inv = r.op.matrix.partialPivLu().inverse();
  ComplexMatrix w = detail::solve_right(sobolev_weight(a1, 0.0, n).matrix * inv, sobolev_weight(a2, 0.0, n).matrix);
  return column_profile_order(w, r.op.q, n, r.op.domain_size, r.op.range_size);
}

}  // namespace psivar
