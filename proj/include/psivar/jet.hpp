#pragma once

// Truncated multivariate Taylor jets in (y, eta).
//
// A jet stores the Taylor coefficients c_{alpha,beta} of a function around a base
// point, truncated separately by total degree in the y block (|alpha| <= order.y)
// and in the eta block (|beta| <= order.eta).  Multi-indices of each block are
// enumerated graded-lexicographically, so a lower truncation is always a prefix.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

namespace psivar {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using MultiIndex = std::vector<int>;

inline int degree(const MultiIndex& a) {
  int d = 0;
  for (int v : a) d += v;
  return d;
}

inline double factorial(const MultiIndex& a) {
  double f = 1.0;
  for (int v : a)
    for (int k = 2; k <= v; ++k) f *= k;
  return f;
}

/// all multi-indices of `dim` entries with |alpha| <= order, graded lex
inline std::vector<MultiIndex> multi_indices(int dim, int order) {
  std::vector<MultiIndex> out;
  MultiIndex cur(dim, 0);
  for (int d = 0; d <= order; ++d) {
    // lexicographically descending within a degree
    auto rec = [&](auto&& self, int pos, int left) -> void {
      if (pos == dim - 1) {
        cur[pos] = left;
        out.push_back(cur);
        return;
      }
      for (int v = left; v >= 0; --v) {
        cur[pos] = v;
        self(self, pos + 1, left - v);
      }
    };
    if (dim == 0) {
      if (d == 0) out.push_back({});
    } else {
      rec(rec, 0, d);
    }
  }
  return out;
}

struct JetOrder {
  int y = 0;
  int eta = 0;
  bool operator==(const JetOrder& o) const { return y == o.y && eta == o.eta; }
};

inline JetOrder max(JetOrder a, JetOrder b) { return {std::max(a.y, b.y), std::max(a.eta, b.eta)}; }
inline JetOrder min(JetOrder a, JetOrder b) { return {std::min(a.y, b.y), std::min(a.eta, b.eta)}; }

// Shared lookup tables for one block of variables.
class MultiIndexSet {
 public:
  MultiIndexSet(int dim, int order) : dim_(dim), order_(order), idx_(multi_indices(dim, order)) {
    int stride = 1;
    for (int i = 0; i < dim; ++i) stride *= (order + 1);
    lookup_.assign(std::max(stride, 1), -1);
    deg_.resize(idx_.size());
    fact_.resize(idx_.size());
    degree_start_.assign(order + 2, 0);
    for (int i = 0; i < size(); ++i) {
      lookup_[key(idx_[i])] = i;
      deg_[i] = psivar::degree(idx_[i]);
      fact_[i] = psivar::factorial(idx_[i]);
    }
    for (int d = 0; d <= order + 1; ++d) {
      degree_start_[d] = static_cast<int>(
          std::find_if(deg_.begin(), deg_.end(), [&](int x) { return x >= d; }) - deg_.begin());
    }
    split_.resize(idx_.size());
    MultiIndex diff(dim);
    for (int k = 0; k < size(); ++k) {
      for (int i = 0; i < degree_start_[deg_[k] + 1]; ++i) {
        bool ok = true;
        for (int c = 0; c < dim; ++c) {
          diff[c] = idx_[k][c] - idx_[i][c];
          if (diff[c] < 0) ok = false;
        }
        if (ok) split_[k].push_back({i, find(diff)});
      }
    }
  }

  static const MultiIndexSet& get(int dim, int order) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::unique_ptr<MultiIndexSet>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{dim, order}];
    if (!slot) slot = std::make_unique<MultiIndexSet>(dim, order);
    return *slot;
  }

  int dim() const { return dim_; }
  int order() const { return order_; }
  int size() const { return static_cast<int>(idx_.size()); }
  const MultiIndex& operator[](int i) const { return idx_[i]; }
  int degree(int i) const { return deg_[i]; }
  double factorial(int i) const { return fact_[i]; }
  /// number of indices with degree <= d
  int count_up_to(int d) const { return degree_start_[std::min(d, order_) + 1]; }
  int first_of_degree(int d) const { return degree_start_[d]; }

  int find(const MultiIndex& a) const {
    if (static_cast<int>(a.size()) != dim_) return -1;
    if (psivar::degree(a) > order_) return -1;
    for (int v : a)
      if (v < 0) return -1;
    return lookup_[key(a)];
  }

  /// pairs (i, j) with idx[i] + idx[j] == idx[k]
  const std::vector<std::pair<int, int>>& split(int k) const { return split_[k]; }

 private:
  int key(const MultiIndex& a) const {
    int k = 0, s = 1;
    for (int c = 0; c < dim_; ++c) {
      k += a[c] * s;
      s *= (order_ + 1);
    }
    return k;
  }

  int dim_, order_;
  std::vector<MultiIndex> idx_;
  std::vector<int> lookup_, deg_, degree_start_;
  std::vector<double> fact_;
  std::vector<std::vector<std::pair<int, int>>> split_;
};

namespace detail {
inline Complex zero_like(const Complex&) { return Complex(0.0); }
inline ComplexMatrix zero_like(const ComplexMatrix& m) { return ComplexMatrix::Zero(m.rows(), m.cols()); }
inline Complex conj_transpose(const Complex& c) { return std::conj(c); }
inline ComplexMatrix conj_transpose(const ComplexMatrix& m) { return m.adjoint(); }
}  // namespace detail

template <class T>
class Jet {
 public:
  Jet() = default;
  Jet(int q, JetOrder order, const T& zero)
      : q_(q),
        order_(order),
        ys_(&MultiIndexSet::get(q, order.y)),
        es_(&MultiIndexSet::get(q, order.eta)),
        c_(static_cast<size_t>(ys_->size()) * es_->size(), detail::zero_like(zero)) {}

  static Jet constant(int q, JetOrder order, const T& value) {
    Jet j(q, order, value);
    j.c_[0] = value;
    return j;
  }

  int q() const { return q_; }
  JetOrder order() const { return order_; }
  int size_y() const { return ys_->size(); }
  int size_eta() const { return es_->size(); }
  int size() const { return static_cast<int>(c_.size()); }
  const MultiIndexSet& y_indices() const { return *ys_; }
  const MultiIndexSet& eta_indices() const { return *es_; }

  T& at(int iy, int ie) { return c_[static_cast<size_t>(iy) * es_->size() + ie]; }
  const T& at(int iy, int ie) const { return c_[static_cast<size_t>(iy) * es_->size() + ie]; }
  T& value() { return c_[0]; }
  const T& value() const { return c_[0]; }
  std::vector<T>& coefficients() { return c_; }
  const std::vector<T>& coefficients() const { return c_; }

  Jet restricted(JetOrder o) const {
    o = psivar::min(o, order_);
    if (o == order_) return *this;
    Jet r(q_, o, c_[0]);
    for (int iy = 0; iy < r.size_y(); ++iy)
      for (int ie = 0; ie < r.size_eta(); ++ie) r.at(iy, ie) = at(iy, ie);
    return r;
  }

  /// D_y^alpha d_eta^beta at the base point, D_y = -i d_y
  T derivative(const MultiIndex& alpha, const MultiIndex& beta) const {
    int iy = ys_->find(alpha), ie = es_->find(beta);
    if (iy < 0 || ie < 0) throw std::out_of_range("jet: derivative beyond truncation order");
    const Complex w = std::pow(Complex(0, -1), degree(alpha)) * ys_->factorial(iy) * es_->factorial(ie);
    return T(at(iy, ie) * w);
  }

  /// jet of D_y^alpha d_eta^beta f, of order reduced by (|alpha|, |beta|)
  Jet differentiated(const MultiIndex& alpha, const MultiIndex& beta) const {
    const int da = degree(alpha), db = degree(beta);
    if (da > order_.y || db > order_.eta) throw std::out_of_range("jet: differentiation beyond truncation order");
    Jet r(q_, {order_.y - da, order_.eta - db}, c_[0]);
    const Complex sign = std::pow(Complex(0, -1), da);
    MultiIndex sa(q_), sb(q_);
    for (int iy = 0; iy < r.size_y(); ++iy) {
      const MultiIndex& m = r.y_indices()[iy];
      for (int c = 0; c < q_; ++c) sa[c] = m[c] + alpha[c];
      const int jy = ys_->find(sa);
      const double fy = ys_->factorial(jy) / r.y_indices().factorial(iy);
      for (int ie = 0; ie < r.size_eta(); ++ie) {
        const MultiIndex& n = r.eta_indices()[ie];
        for (int c = 0; c < q_; ++c) sb[c] = n[c] + beta[c];
        const int je = es_->find(sb);
        const double fe = es_->factorial(je) / r.eta_indices().factorial(ie);
        r.at(iy, ie) = at(jy, je) * (sign * (fy * fe));
      }
    }
    return r;
  }

  Jet adjoint() const {
    Jet r(q_, order_, detail::conj_transpose(c_[0]));
    for (size_t i = 0; i < c_.size(); ++i) r.c_[i] = detail::conj_transpose(c_[i]);
    return r;
  }

  Jet& operator+=(const Jet& o) {
    check_same(o);
    for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    check_same(o);
    for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(Complex s) {
    for (auto& c : c_) c *= s;
    return *this;
  }
  /// adds `w * o`, where o may carry a higher truncation
  void add_scaled(const Jet& o, Complex w) {
    if (o.order_.y < order_.y || o.order_.eta < order_.eta)
      throw std::invalid_argument("jet: operand truncation too low");
    for (int iy = 0; iy < size_y(); ++iy)
      for (int ie = 0; ie < size_eta(); ++ie) at(iy, ie) += o.at(iy, ie) * w;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, Complex s) { return a *= s; }
  friend Jet operator*(Complex s, Jet a) { return a *= s; }

 private:
  void check_same(const Jet& o) const {
    if (!(o.order_ == order_) || o.q_ != q_) throw std::invalid_argument("jet: mismatched truncation");
  }

  int q_ = 0;
  JetOrder order_{};
  const MultiIndexSet* ys_ = nullptr;
  const MultiIndexSet* es_ = nullptr;
  std::vector<T> c_;
};

using ScalarJet = Jet<Complex>;
using MatrixJet = Jet<ComplexMatrix>;

/// jet of the coordinate function y_i (block 0) or eta_i (block 1)
inline ScalarJet coordinate_jet(int q, JetOrder order, int block, int i, double value) {
  ScalarJet j = ScalarJet::constant(q, order, Complex(value));
  MultiIndex e(q, 0);
  e[i] = 1;
  if (block == 0 && order.y >= 1) j.at(j.y_indices().find(e), 0) = 1.0;
  if (block == 1 && order.eta >= 1) j.at(0, j.eta_indices().find(e)) = 1.0;
  return j;
}

inline ScalarJet to_scalar(const MatrixJet& m) {
  ScalarJet s(m.q(), m.order(), Complex(0));
  for (int i = 0; i < m.size(); ++i) s.coefficients()[i] = m.coefficients()[i](0, 0);
  return s;
}

inline MatrixJet to_matrix(const ScalarJet& s) {
  MatrixJet m(s.q(), s.order(), ComplexMatrix::Zero(1, 1));
  for (int i = 0; i < s.size(); ++i) m.coefficients()[i](0, 0) = s.coefficients()[i];
  return m;
}

/// zero-pads a jet to a larger truncation
template <class T>
Jet<T> lifted(const Jet<T>& j, JetOrder order) {
  Jet<T> r(j.q(), order, j.value());
  for (int iy = 0; iy < std::min(j.size_y(), r.size_y()); ++iy)
    for (int ie = 0; ie < std::min(j.size_eta(), r.size_eta()); ++ie) r.at(iy, ie) = j.at(iy, ie);
  return r;
}

/// iterate (nu, mu, nu - mu) over the joint index; callback(k, i, j) with flat indices
template <class F>
void for_each_split(const MultiIndexSet& ys, const MultiIndexSet& es, int ky, int ke, F&& f) {
  const int ne = es.size();
  for (const auto& [i1, i2] : ys.split(ky))
    for (const auto& [j1, j2] : es.split(ke)) f(i1 * ne + j1, i2 * ne + j2);
}

namespace detail {
template <class R, class A, class B>
Jet<R> cauchy(const Jet<A>& a, const Jet<B>& b, JetOrder order, const R& zero) {
  order = psivar::min(order, psivar::min(a.order(), b.order()));
  Jet<R> r(a.q(), order, zero);
  const int nea = a.size_eta(), neb = b.size_eta();
  const MultiIndexSet& ys = r.y_indices();
  const MultiIndexSet& es = r.eta_indices();
  for (int ky = 0; ky < r.size_y(); ++ky) {
    for (int ke = 0; ke < r.size_eta(); ++ke) {
      R& out = r.at(ky, ke);
      for (const auto& [i1, i2] : ys.split(ky)) {
        for (const auto& [j1, j2] : es.split(ke)) {
          const A& x = a.coefficients()[static_cast<size_t>(i1) * nea + j1];
          const B& y = b.coefficients()[static_cast<size_t>(i2) * neb + j2];
          if constexpr (std::is_same_v<R, ComplexMatrix> && std::is_same_v<A, ComplexMatrix> &&
                        std::is_same_v<B, ComplexMatrix>) {
            out.noalias() += x * y;
          } else {
            out += x * y;
          }
        }
      }
    }
  }
  return r;
}
}  // namespace detail

inline MatrixJet multiply(const MatrixJet& a, const MatrixJet& b, JetOrder order = {1 << 20, 1 << 20}) {
  if (a.value().cols() != b.value().rows()) throw std::invalid_argument("jet: matrix shape mismatch");
  return detail::cauchy<ComplexMatrix>(a, b, order, ComplexMatrix::Zero(a.value().rows(), b.value().cols()));
}
inline MatrixJet multiply(const ScalarJet& a, const MatrixJet& b, JetOrder order = {1 << 20, 1 << 20}) {
  return detail::cauchy<ComplexMatrix>(a, b, order, detail::zero_like(b.value()));
}
inline MatrixJet multiply(const MatrixJet& a, const ScalarJet& b, JetOrder order = {1 << 20, 1 << 20}) {
  return detail::cauchy<ComplexMatrix>(a, b, order, detail::zero_like(a.value()));
}
inline ScalarJet multiply(const ScalarJet& a, const ScalarJet& b, JetOrder order = {1 << 20, 1 << 20}) {
  return detail::cauchy<Complex>(a, b, order, Complex(0));
}

// Recursions driven by the Euler operator sum_i x_i d/dx_i over both blocks;
// targets are visited by increasing total degree.
namespace detail {
template <class T, class Step>
void by_total_degree(Jet<T>& g, Step&& step) {
  const MultiIndexSet& ys = g.y_indices();
  const MultiIndexSet& es = g.eta_indices();
  const int total = g.order().y + g.order().eta;
  for (int t = 1; t <= total; ++t) {
    for (int dy = std::max(0, t - g.order().eta); dy <= std::min(t, g.order().y); ++dy) {
      const int de = t - dy;
      for (int ky = ys.first_of_degree(dy); ky < ys.count_up_to(dy); ++ky)
        for (int ke = es.first_of_degree(de); ke < es.count_up_to(de); ++ke) step(ky, ke, t);
    }
  }
}

inline int total_degree(const ScalarJet& j, int flat) {
  const int ne = j.size_eta();
  return j.y_indices().degree(flat / ne) + j.eta_indices().degree(flat % ne);
}
}  // namespace detail

/// matrix inverse of a square matrix jet
inline MatrixJet inverse(const MatrixJet& p) {
  Eigen::PartialPivLU<ComplexMatrix> lu(p.value());
  ComplexMatrix x0 = lu.inverse();
  MatrixJet x(p.q(), p.order(), x0);
  x.value() = x0;
  detail::by_total_degree(x, [&](int ky, int ke, int) {
    ComplexMatrix acc = ComplexMatrix::Zero(x0.rows(), x0.cols());
    for_each_split(x.y_indices(), x.eta_indices(), ky, ke, [&](int mu, int rest) {
      if (mu == 0) return;
      acc.noalias() += p.coefficients()[mu] * x.coefficients()[rest];
    });
    x.at(ky, ke).noalias() = -x0 * acc;
  });
  return x;
}

inline ScalarJet inverse(const ScalarJet& p) {
  const Complex x0 = 1.0 / p.value();
  ScalarJet x = ScalarJet::constant(p.q(), p.order(), x0);
  detail::by_total_degree(x, [&](int ky, int ke, int) {
    Complex acc = 0;
    for_each_split(x.y_indices(), x.eta_indices(), ky, ke, [&](int mu, int rest) {
      if (mu != 0) acc += p.coefficients()[mu] * x.coefficients()[rest];
    });
    x.at(ky, ke) = -x0 * acc;
  });
  return x;
}

inline ScalarJet exp(const ScalarJet& h) {
  ScalarJet g = ScalarJet::constant(h.q(), h.order(), std::exp(h.value()));
  detail::by_total_degree(g, [&](int ky, int ke, int t) {
    Complex acc = 0;
    for_each_split(g.y_indices(), g.eta_indices(), ky, ke, [&](int mu, int rest) {
      if (mu == 0) return;
      acc += double(detail::total_degree(h, mu)) * h.coefficients()[mu] * g.coefficients()[rest];
    });
    g.at(ky, ke) = acc / double(t);
  });
  return g;
}

inline ScalarJet log(const ScalarJet& f) {
  ScalarJet g = ScalarJet::constant(f.q(), f.order(), std::log(f.value()));
  const Complex f0 = f.value();
  detail::by_total_degree(g, [&](int ky, int ke, int t) {
    Complex acc = double(t) * f.at(ky, ke);
    for_each_split(g.y_indices(), g.eta_indices(), ky, ke, [&](int mu, int rest) {
      if (mu == 0) return;
      acc -= double(detail::total_degree(f, rest)) * f.coefficients()[mu] * g.coefficients()[rest];
    });
    g.at(ky, ke) = acc / (f0 * double(t));
  });
  return g;
}

/// f^s with the principal branch at the base value
inline ScalarJet pow(const ScalarJet& f, Complex s) {
  const Complex f0 = f.value();
  ScalarJet g = ScalarJet::constant(f.q(), f.order(), std::pow(f0, s));
  detail::by_total_degree(g, [&](int ky, int ke, int t) {
    Complex acc = 0;
    for_each_split(g.y_indices(), g.eta_indices(), ky, ke, [&](int mu, int rest) {
      if (mu == 0) return;
      const double dm = detail::total_degree(f, mu), dr = detail::total_degree(f, rest);
      acc += (s * dm - dr) * f.coefficients()[mu] * g.coefficients()[rest];
    });
    g.at(ky, ke) = acc / (f0 * double(t));
  });
  return g;
}

/// F(h) for a univariate F given its derivatives F^(n)(h0), n = 0..
inline ScalarJet compose(const ScalarJet& h, const std::vector<Complex>& derivs) {
  const int top = std::min<int>(static_cast<int>(derivs.size()) - 1, h.order().y + h.order().eta);
  ScalarJet dh = h;
  dh.value() = 0;
  double fact = 1;
  for (int n = 2; n <= top; ++n) fact *= n;
  ScalarJet r = ScalarJet::constant(h.q(), h.order(), derivs[top] / fact);
  for (int n = top - 1; n >= 0; --n) {
    fact /= (n + 1);
    r = multiply(r, dh);
    r.value() += derivs[n] / fact;
  }
  return r;
}

}  // namespace psivar
