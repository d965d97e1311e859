#pragma once

// Twisted symbols: matrix symbols with an order and a pair of fiberwise group
// actions, their constructors, and empirical seminorm and ellipticity checks.

#include <cmath>
#include <string>
#include <vector>

#include "psivar/admissibility.hpp"
#include "psivar/parallel.hpp"
#include "psivar/symbol_graph.hpp"

namespace psivar {

class TwistedSymbol {
 public:
  TwistedSymbol() = default;
  TwistedSymbol(NodePtr node, double order, MatrixField domain_action, MatrixField range_action, double delta = 0.5,
                std::string label = "")
      : node_(std::move(node)), order_(order), a1_(std::move(domain_action)), a2_(std::move(range_action)),
        delta_(delta), label_(std::move(label)) {
    if (a1_.rows() != node_->cols() || a2_.rows() != node_->rows())
      throw Error(ErrorKind::shape, "actions do not match the symbol shape");
  }
  /// trivial actions
  TwistedSymbol(NodePtr node, double order, double delta = 0.5)
      : TwistedSymbol(node, order, MatrixField::zero(node->q(), node->cols()), MatrixField::zero(node->q(), node->rows()),
                      delta) {}

  const NodePtr& node() const { return node_; }
  int q() const { return node_->q(); }
  int rows() const { return node_->rows(); }
  int cols() const { return node_->cols(); }
  double order() const { return order_; }
  double delta() const { return delta_; }
  const std::string& label() const { return label_; }
  /// a_1, acting on the domain fiber
  const MatrixField& domain_action() const { return a1_; }
  /// a_2, acting on the range fiber
  const MatrixField& range_action() const { return a2_; }

  TwistedSymbol with_order(double mu) const {
    auto s = *this;
    s.order_ = mu;
    return s;
  }
  TwistedSymbol with_actions(MatrixField a1, MatrixField a2) const {
    return TwistedSymbol(node_, order_, std::move(a1), std::move(a2), delta_, label_);
  }
  TwistedSymbol with_delta(double d) const {
    auto s = *this;
    s.delta_ = d;
    return s;
  }
  TwistedSymbol with_label(std::string l) const {
    auto s = *this;
    s.label_ = std::move(l);
    return s;
  }

  SymbolEvaluator evaluator(JetOrder order = {}) const { return SymbolEvaluator(node_, order); }
  MatrixJet jet(std::span<const double> y, std::span<const double> eta, JetOrder order) const {
    return evaluator(order)(y, eta);
  }
  ComplexMatrix operator()(std::span<const double> y, std::span<const double> eta) const {
    return jet(y, eta, {}).value();
  }
  /// D_y^alpha d_eta^beta p(y, eta)
  ComplexMatrix derivative(std::span<const double> y, std::span<const double> eta, const MultiIndex& alpha,
                           const MultiIndex& beta) const {
    return jet(y, eta, {degree(alpha), degree(beta)}).derivative(alpha, beta);
  }

 private:
  NodePtr node_;
  double order_ = 0;
  MatrixField a1_, a2_;
  double delta_ = 0.5;
  std::string label_;
};

// ---------------------------------------------------------------------------
// node builders

inline NodePtr field_node(const MatrixField& f) { return std::make_shared<FieldNode>(f); }
inline NodePtr constant_node(int q, const ComplexMatrix& c) { return field_node(MatrixField::constant(q, c)); }
/// <eta>^s scaled bracket (c + |eta|^2)^{s/2}
inline NodePtr bracket_node(int q, double s, double c = 1.0) {
  return std::make_shared<EtaFunctionNode>(q, MultiIndex(q, 0), c, Eigen::MatrixXd::Identity(q, q), s);
}
inline NodePtr eta_function_node(int q, MultiIndex gamma, double c, const Eigen::MatrixXd& g, double s) {
  return std::make_shared<EtaFunctionNode>(q, std::move(gamma), c, g, s);
}
inline NodePtr monomial_node(int q, MultiIndex gamma) {
  return eta_function_node(q, std::move(gamma), 1.0, Eigen::MatrixXd::Zero(q, q), 0.0);
}
inline NodePtr smoothed_norm_node(int q, double r) { return std::make_shared<SmoothedNormNode>(q, r); }
inline NodePtr product_node(NodePtr a, NodePtr b) { return std::make_shared<ProductNode>(std::move(a), std::move(b)); }
inline NodePtr sum_node(std::vector<NodePtr> t, std::vector<Complex> w) {
  return std::make_shared<SumNode>(std::move(t), std::move(w));
}
inline NodePtr derivative_node(NodePtr p, MultiIndex alpha, MultiIndex beta) {
  return std::make_shared<DerivativeNode>(std::move(p), std::move(alpha), std::move(beta));
}
inline NodePtr adjoint_node(NodePtr p) { return std::make_shared<AdjointNode>(std::move(p)); }
inline NodePtr group_power_node(NodePtr base, const MatrixField& a) {
  if (a.is_constant() && a.jet(std::vector<double>(a.q(), 0.0), 0).value().norm() == 0)
    return constant_node(a.q(), ComplexMatrix::Identity(a.rows(), a.rows()));
  return std::make_shared<GroupPowerNode>(std::move(base), a);
}

// ---------------------------------------------------------------------------
// symbol algebra

inline TwistedSymbol operator+(const TwistedSymbol& a, const TwistedSymbol& b) {
  return TwistedSymbol(sum_node({a.node(), b.node()}, {1.0, 1.0}), std::max(a.order(), b.order()), a.domain_action(),
                       a.range_action(), std::max(a.delta(), b.delta()));
}
inline TwistedSymbol operator-(const TwistedSymbol& a, const TwistedSymbol& b) {
  return TwistedSymbol(sum_node({a.node(), b.node()}, {1.0, -1.0}), std::max(a.order(), b.order()), a.domain_action(),
                       a.range_action(), std::max(a.delta(), b.delta()));
}
inline TwistedSymbol operator*(Complex s, const TwistedSymbol& a) {
  return TwistedSymbol(sum_node({a.node()}, {s}), a.order(), a.domain_action(), a.range_action(), a.delta());
}

/// pointwise product p1 p2, where p2 : (a1) -> (a2) and p1 : (a2) -> (a3)
/// (a 1x1 factor acts as a scalar and the other factor supplies both actions)
inline TwistedSymbol pointwise_product(const TwistedSymbol& p1, const TwistedSymbol& p2) {
  const bool s1 = p1.rows() == 1 && p1.cols() == 1, s2 = p2.rows() == 1 && p2.cols() == 1;
  const TwistedSymbol& dom = s2 && !s1 ? p1 : p2;
  const TwistedSymbol& rng = s1 && !s2 ? p2 : p1;
  return TwistedSymbol(product_node(p1.node(), p2.node()), p1.order() + p2.order(), dom.domain_action(),
                       rng.range_action(), std::max(p1.delta(), p2.delta()));
}

inline TwistedSymbol differentiate(const TwistedSymbol& p, const MultiIndex& alpha, const MultiIndex& beta) {
  return TwistedSymbol(derivative_node(p.node(), alpha, beta), p.order() - degree(beta) + p.delta() * degree(alpha),
                       p.domain_action(), p.range_action(), p.delta());
}

// ---------------------------------------------------------------------------
// constructors

/// <eta>^{a(y)} with actions (a, 0) and order 0
inline TwistedSymbol bracket_power(const MatrixField& a, double delta = 0.5) {
  return TwistedSymbol(group_power_node(bracket_node(a.q(), 1.0), a), 0.0, a, MatrixField::zero(a.q(), a.rows()), delta,
                       "bracket_power");
}

/// scalar Fourier multiplier <eta>^s (times a constant matrix)
inline TwistedSymbol multiplier(int q, double s, const ComplexMatrix& c) {
  return TwistedSymbol(product_node(bracket_node(q, s), constant_node(q, c)), s);
}

/// b(y, eta)^{a(y)} for a positive scalar symbol b of order 0
inline TwistedSymbol scalar_power_symbol(const TwistedSymbol& b, const MatrixField& a) {
  if (b.rows() != 1 || b.cols() != 1) throw Error(ErrorKind::shape, "base must be a scalar symbol");
  if (std::abs(b.order()) > 1e-12) throw Error(ErrorKind::construction, "base must have order 0");
  return TwistedSymbol(group_power_node(b.node(), a), 0.0, b.delta());
}

/// Douglis-Nirenberg matrix: entry (k, l) of order mu1[l] - mu2[k]
inline TwistedSymbol dn_symbol(const std::vector<std::vector<TwistedSymbol>>& entries, const std::vector<double>& mu1,
                               const std::vector<double>& mu2, double delta = 0.5) {
  const int m2 = static_cast<int>(mu2.size()), m1 = static_cast<int>(mu1.size());
  if (static_cast<int>(entries.size()) != m2) throw Error(ErrorKind::construction, "row count differs from range weights");
  const int q = entries.at(0).at(0).q();
  std::vector<std::vector<NodePtr>> grid(m2, std::vector<NodePtr>(m1));
  for (int k = 0; k < m2; ++k) {
    if (static_cast<int>(entries[k].size()) != m1)
      throw Error(ErrorKind::construction, "column count differs from domain weights");
    for (int l = 0; l < m1; ++l) {
      const auto& e = entries[k][l];
      if (e.rows() != 1 || e.cols() != 1) throw Error(ErrorKind::construction, "entries must be scalar symbols");
      if (std::abs(e.order() - (mu1[l] - mu2[k])) > 1e-12)
        throw Error(ErrorKind::construction, "entry (" + std::to_string(k) + "," + std::to_string(l) +
                                                 ") has order " + std::to_string(e.order()) + ", weights need " +
                                                 std::to_string(mu1[l] - mu2[k]));
      grid[k][l] = e.node();
    }
  }
  auto node = std::make_shared<AssembleNode>(q, std::vector<int>(m2, 1), std::vector<int>(m1, 1), grid);
  return TwistedSymbol(node, 0.0, MatrixField::diagonal(q, mu1), MatrixField::diagonal(q, mu2), delta, "dn");
}

// Sphere section h(y, omega) = sum_t T_t(y) omega^{gamma_t}; any node in (y, eta)
// can serve, it is only ever evaluated on |eta| = 1.
struct SphereTerm {
  MultiIndex gamma;
  MatrixField coefficient;
};

inline NodePtr sphere_section(int q, const std::vector<SphereTerm>& terms) {
  if (terms.empty()) throw Error(ErrorKind::input, "empty sphere section");
  std::vector<NodePtr> parts;
  for (const auto& t : terms) {
    if (static_cast<int>(t.gamma.size()) != q) throw Error(ErrorKind::input, "sphere term dimension mismatch");
    parts.push_back(product_node(monomial_node(q, t.gamma), field_node(t.coefficient)));
  }
  return sum_node(parts, std::vector<Complex>(parts.size(), 1.0));
}

/// |eta|^mu |eta|^{-a2} h(y, eta/|eta|) |eta|^{a1}, cut off smoothly on 1/2 <= |eta| <= 1
inline TwistedSymbol twisted_extend(const NodePtr& h, double mu, const MatrixField& a1, const MatrixField& a2,
                                    double delta = 0.5) {
  if (h->cols() != a1.rows() || h->rows() != a2.rows()) throw Error(ErrorKind::input, "section shape differs from actions");
  const int q = h->q();
  NodePtr norm = smoothed_norm_node(q, 1.0);  // |eta| exactly on |eta| >= 1
  NodePtr left = group_power_node(norm, -a2);
  NodePtr right = group_power_node(norm, a1);
  NodePtr scale = std::make_shared<EtaFunctionNode>(q, MultiIndex(q, 0), 0.0, Eigen::MatrixXd::Identity(q, q), mu);
  NodePtr core = product_node(product_node(product_node(scale, left), std::make_shared<NormalizeEtaNode>(h)), right);
  return TwistedSymbol(std::make_shared<ExcisionNode>(core, 0.5, 1.0), mu, a1, a2, delta, "twisted_extension");
}

// sampling lattice: radii 2^j, both signs for q = 1, 16 directions for q = 2
struct Lattice {
  std::vector<double> radii;
  std::vector<std::vector<double>> directions;
  std::vector<std::vector<double>> ys;

  static Lattice standard(int q, double range, int y_points = 0, double first_radius = 1.0) {
    Lattice l;
    for (double r = first_radius; r <= range * (1 + 1e-12); r *= 2) l.radii.push_back(r);
    if (q == 1) {
      l.directions = {{1.0}, {-1.0}};
    } else if (q == 2) {
      for (int k = 0; k < 16; ++k) l.directions.push_back({std::cos(2 * kPi * k / 16), std::sin(2 * kPi * k / 16)});
    } else {
      for (int i = 0; i < q; ++i)
        for (double s : {1.0, -1.0}) {
          std::vector<double> d(q, 0.0);
          d[i] = s;
          l.directions.push_back(d);
        }
    }
    if (y_points <= 0) y_points = q == 1 ? 16 : 6;
    l.ys.assign(1, std::vector<double>());
    for (int i = 0; i < q; ++i) {
      std::vector<std::vector<double>> next;
      for (const auto& p : l.ys)
        for (int j = 0; j < y_points; ++j) {
          auto v = p;
          v.push_back(2 * kPi * j / y_points);
          next.push_back(std::move(v));
        }
      l.ys = std::move(next);
    }
    return l;
  }
};

/// least-squares slope of log2(v) against log2(x)
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& v) {
  const int n = static_cast<int>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double lx = std::log2(x[i]), ly = std::log2(std::max(v[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// slope over the top two octaves of the radii
inline double top_octaves_slope(const std::vector<double>& radii, const std::vector<double>& v) {
  const size_t n = radii.size();
  const size_t k = std::min<size_t>(3, n);
  return loglog_slope(std::vector<double>(radii.end() - k, radii.end()), std::vector<double>(v.end() - k, v.end()));
}

struct SeminormEntry {
  MultiIndex alpha, beta;
  double sup = 0;
  double slope = 0;
  bool pass = true;
  std::vector<double> per_radius;
};

struct SeminormReport {
  double order = 0;
  double delta = 0;
  std::vector<double> radii;
  std::vector<SeminormEntry> entries;
  bool pass() const {
    for (const auto& e : entries)
      if (!e.pass) return false;
    return true;
  }
};

inline double spectral_norm(const ComplexMatrix& m) {
  if (m.size() == 0) return 0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  return Eigen::JacobiSVD<ComplexMatrix>(m).singularValues()(0);
}

namespace detail {
inline void require_finite(const ComplexMatrix& m, std::span<const double> y, std::span<const double> eta) {
  if (!m.allFinite()) {
    std::string where = "y=(";
    for (double v : y) where += std::to_string(v) + " ";
    where += ") eta=(";
    for (double v : eta) where += std::to_string(v) + " ";
    throw Error(ErrorKind::evaluation, "non-finite symbol value at " + where + ")");
  }
}
inline std::vector<std::pair<MultiIndex, MultiIndex>> index_pairs(int q, int max_alpha, int max_beta) {
  std::vector<std::pair<MultiIndex, MultiIndex>> out;
  for (const auto& a : multi_indices(q, max_alpha))
    for (const auto& b : multi_indices(q, max_beta)) out.push_back({a, b});
  return out;
}
}  // namespace detail

// sup of <eta>^{-mu + |beta| - delta |alpha|} || <eta>^{a2} D^alpha d^beta p <eta>^{-a1} ||
inline SeminormReport seminorm_estimate(const TwistedSymbol& p, int max_alpha, int max_beta, double range,
                                        int y_points = 0, double slope_tol = 0.05) {
  if (range < 32) throw Error(ErrorKind::input, "eta range must be at least 32");
  const int q = p.q();
  const Lattice lat = Lattice::standard(q, range, y_points);
  const auto pairs = detail::index_pairs(q, max_alpha, max_beta);
  const int nr = static_cast<int>(lat.radii.size());
  SeminormReport rep;
  rep.order = p.order();
  rep.delta = p.delta();
  rep.radii = lat.radii;
  std::vector<std::vector<double>> vals(pairs.size(), std::vector<double>(nr, 0.0));
  const SymbolEvaluator ev = p.evaluator({max_alpha, max_beta});
  const int ny = static_cast<int>(lat.ys.size());
  // one job per y point; maxima are reduced afterwards in a fixed order
  std::vector<std::vector<std::vector<double>>> partial(ny);
  parallel_for(ny, [&](int iy) {
    const auto& y = lat.ys[iy];
    auto& out = partial[iy];
    out.assign(pairs.size(), std::vector<double>(nr, 0.0));
    const ComplexMatrix a1 = p.domain_action()(y), a2 = p.range_action()(y);
    for (int ir = 0; ir < nr; ++ir) {
      for (const auto& dir : lat.directions) {
        std::vector<double> eta(q);
        for (int i = 0; i < q; ++i) eta[i] = lat.radii[ir] * dir[i];
        const double br = std::sqrt(1 + lat.radii[ir] * lat.radii[ir]);
        const ComplexMatrix left = group_action(a2, br), right = group_action(-a1, br);
        const MatrixJet j = ev(y, eta);
        for (size_t k = 0; k < pairs.size(); ++k) {
          const auto& [al, be] = pairs[k];
          ComplexMatrix d = j.derivative(al, be);
          detail::require_finite(d, y, eta);
          const double w = std::pow(br, -p.order() + degree(be) - p.delta() * degree(al));
          out[k][ir] = std::max(out[k][ir], w * spectral_norm(left * d * right));
        }
      }
    }
  });
  for (int iy = 0; iy < ny; ++iy)
    for (size_t k = 0; k < pairs.size(); ++k)
      for (int ir = 0; ir < nr; ++ir) vals[k][ir] = std::max(vals[k][ir], partial[iy][k][ir]);
  double scale = 0;
  for (const auto& v : vals)
    for (double x : v) scale = std::max(scale, x);
  for (size_t k = 0; k < pairs.size(); ++k) {
    SeminormEntry e;
    e.alpha = pairs[k].first;
    e.beta = pairs[k].second;
    e.per_radius = vals[k];
    e.sup = *std::max_element(vals[k].begin(), vals[k].end());
    const double top = *std::max_element(vals[k].end() - std::min(3, nr), vals[k].end());
    // entries at round-off level carry no growth information
    e.slope = top <= 1e-11 * std::max(scale, 1e-300) ? 0.0 : top_octaves_slope(lat.radii, vals[k]);
    e.pass = std::isfinite(e.sup) && e.slope <= slope_tol;
    rep.entries.push_back(e);
  }
  return rep;
}

struct DecayFit {
  double exponent = 0;
  std::vector<double> radii, values;
};

// fitted growth of || (D^{a1} d^{b1} <eta>^{a}) (D^{a2} d^{b2} <eta>^{-a}) ||
inline DecayFit bracket_derivative_decay(const MatrixField& a, const MultiIndex& alpha1, const MultiIndex& beta1,
                                         const MultiIndex& alpha2, const MultiIndex& beta2, double range,
                                         double delta = 0.5, int y_points = 0) {
  const int q = a.q();
  const Lattice lat = Lattice::standard(q, range, y_points);
  {
    SampledRegion grid = SampledRegion::torus(q, 8);
    cluster_eigenvalues(a, grid, delta);
  }
  auto plus = group_power_node(bracket_node(q, 1.0), a);
  auto minus = group_power_node(bracket_node(q, 1.0), -a);
  const SymbolEvaluator ep(plus, {degree(alpha1), degree(beta1)});
  const SymbolEvaluator em(minus, {degree(alpha2), degree(beta2)});
  DecayFit fit;
  fit.radii = lat.radii;
  fit.values.assign(lat.radii.size(), 0.0);
  const int ny = static_cast<int>(lat.ys.size());
  std::vector<std::vector<double>> partial(ny, std::vector<double>(lat.radii.size(), 0.0));
  parallel_for(ny, [&](int iy) {
    const auto& y = lat.ys[iy];
    for (size_t ir = 0; ir < lat.radii.size(); ++ir) {
      for (const auto& dir : lat.directions) {
        std::vector<double> eta(q);
        for (int i = 0; i < q; ++i) eta[i] = lat.radii[ir] * dir[i];
        ComplexMatrix v = ep(y, eta).derivative(alpha1, beta1) * em(y, eta).derivative(alpha2, beta2);
        detail::require_finite(v, y, eta);
        partial[iy][ir] = std::max(partial[iy][ir], spectral_norm(v));
      }
    }
  });
  for (int iy = 0; iy < ny; ++iy)
    for (size_t ir = 0; ir < lat.radii.size(); ++ir) fit.values[ir] = std::max(fit.values[ir], partial[iy][ir]);
  fit.exponent = top_octaves_slope(fit.radii, fit.values);
  return fit;
}

struct EllipticityReport {
  bool elliptic = false;
  double radius = 0;  // R
  double constant = 0;  // C
  std::vector<double> radii, bound;  // weighted inverse norm per radius (inf where singular)
};

// smallest lattice radius R beyond which p is invertible and
// || <eta>^{a1} p^{-1} <eta>^{-a2} || <= C <eta>^{-mu}
inline EllipticityReport verify_ellipticity(const TwistedSymbol& p, double range, int y_points = 0) {
  EllipticityReport rep;
  if (p.rows() != p.cols()) return rep;
  const int q = p.q();
  const Lattice lat = Lattice::standard(q, range, y_points);
  const int nr = static_cast<int>(lat.radii.size());
  rep.radii = lat.radii;
  rep.bound.assign(nr, 0.0);
  const SymbolEvaluator ev = p.evaluator();
  const double inf = std::numeric_limits<double>::infinity();
  const int ny = static_cast<int>(lat.ys.size());
  std::vector<std::vector<double>> partial(ny, std::vector<double>(nr, 0.0));
  parallel_for(ny, [&](int iy) {
    const auto& y = lat.ys[iy];
    const ComplexMatrix a1 = p.domain_action()(y), a2 = p.range_action()(y);
    for (int ir = 0; ir < nr; ++ir) {
      for (const auto& dir : lat.directions) {
        std::vector<double> eta(q);
        for (int i = 0; i < q; ++i) eta[i] = lat.radii[ir] * dir[i];
        const double br = std::sqrt(1 + lat.radii[ir] * lat.radii[ir]);
        ComplexMatrix v = ev(y, eta).value();
        Eigen::JacobiSVD<ComplexMatrix> svd(v);
        const auto& s = svd.singularValues();
        if (!v.allFinite() || s(s.size() - 1) <= 1e-10 * std::max(1.0, s(0))) {
          partial[iy][ir] = inf;
          continue;
        }
        ComplexMatrix w = group_action(a1, br) * v.inverse() * group_action(-a2, br);
        partial[iy][ir] = std::max(partial[iy][ir], std::pow(br, p.order()) * spectral_norm(w));
      }
    }
  });
  for (int iy = 0; iy < ny; ++iy)
    for (int ir = 0; ir < nr; ++ir) rep.bound[ir] = std::max(rep.bound[ir], partial[iy][ir]);
  // slope of the weighted inverse over the top octaves must be flat
  bool tail_ok = std::isfinite(rep.bound[nr - 1]) && top_octaves_slope(rep.radii, rep.bound) <= 0.05;
  if (!tail_ok) return rep;
  int start = nr - 1;
  while (start > 0 && std::isfinite(rep.bound[start - 1])) --start;
  rep.elliptic = true;
  rep.radius = rep.radii[start];
  rep.constant = *std::max_element(rep.bound.begin() + start, rep.bound.end());
  return rep;
}

}  // namespace psivar
